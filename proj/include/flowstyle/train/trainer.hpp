#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowstyle/corpus/corpus.hpp"
#include "flowstyle/model/models.hpp"
#include "flowstyle/model/objectives.hpp"
#include "flowstyle/numerics/adam.hpp"

namespace flowstyle {

struct TrainConfig {
  int steps = 3000;
  int batch_size = 32;  // half source, half target
  double lr_generator = 1e-3;
  double lr_disc = 5e-4;
  double clip = 5.0;
  std::uint64_t seed = 42;
  LossWeights weights;
  bool disable_iaf = false;
  bool drop_adv = false;
  bool drop_dis = false;
  bool drop_cyc = false;
  bool drop_cls = false;
  bool saturating = false;
  /// D compares transfers with free-running T(r_t, z_t) instead of the
  /// teacher-forced target reconstruction.
  bool free_running_real = false;
  bool kl = false;
  double kl_weight = 0.01;
  int checkpoint_every = 500;

  /// Weights with dropped terms set to zero.
  LossWeights effective_weights() const;
  bool needs_ds() const { return !drop_dis; }
  bool needs_transfer() const { return !drop_adv || !drop_cyc; }
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep the values of `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// One training batch: P source utterances followed by P target ones.
struct PairBatch {
  std::vector<const corpus::Utterance*> utts;
  SeqBatch x;
  TokenBatch tokens;
  TokenBatch src_tokens;
  TokenBatch tgt_tokens;
  std::vector<int> styles;
  std::vector<int> speakers;
  std::vector<int> tgt_lengths;
  Matrix eps;  // D x 2P
  int pairs = 0;
};

PairBatch make_pair_batch(std::vector<const corpus::Utterance*> utts, Matrix eps);

/// Loss terms for one batch. Terms that are switched off stay invalid.
/// `generator` is the weighted quantity the generator minimises (with the
/// non-saturating adversarial surrogate unless saturating is set).
struct LossVars {
  Var rec, adv, adv_generator, dis, cyc, stycls, spkcls, kl;
  Var generator;
  Var z;  // S x 2P style embeddings
  DecodeVars transfer;
  DecodeVars real;  // free-running T(r_t, z_t), when requested
  Var target_reconstruction;
};

/// Values that enter the objective behind a stop-gradient.
struct Pinned {
  Matrix z_t;                    // S x P target style embeddings
  Matrix transfer_frames;        // free-running transfers
  Matrix target_reconstruction;  // reconstruction-pass targets
};

Pinned pin(const LossVars& v, int pairs);

/// Builds every enabled term of the objective on `g`. `ds_prob` is the
/// frozen domain model's p(x_s in target) per source (1 x P); it is only
/// read when the style distortion term is on. With `pinned`, stop-gradient
/// inputs take those fixed values instead of the ones computed on `g`,
/// which is what a finite-difference check has to hold constant.
LossVars build_losses(Graph& g, const Models& models, const ParamStore& ps, const PairBatch& batch,
                      const TrainConfig& cfg, const Matrix& ds_prob, const Pinned* pinned = nullptr);

/// p(x in target domain) for the sources of `batch`, 1 x P.
Matrix source_domain_prob(const Models& models, const ParamStore& ps, const PairBatch& batch);

/// Literal loss values of `v` with the total under cfg's effective weights.
LossBreakdown breakdown(const LossVars& v, const TrainConfig& cfg);

struct StepRecord {
  int step = 0;
  LossBreakdown losses;  // literal values, total per the weighted sum
  double d_loss = 0.0;
  double grad_norm = 0.0;
};

std::string metrics_header();
std::string metrics_row(const StepRecord& r);

/// Alternating optimisation of the full system. Each step draws
/// batch_size / 2 (source, target) pairs, computes the generator and
/// discriminator gradients from the same parameter snapshot, then applies
/// the discriminator update followed by the generator update.
class Trainer {
 public:
  /// `params` must hold every module the configuration uses (disc_Ds/ when
  /// the style distortion term is on). disc_Ds/ is never updated.
  Trainer(const Models& models, TrainConfig cfg, const corpus::Dataset& data, ParamStore params);

  StepRecord step();
  int current_step() const { return step_; }
  const ParamStore& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<StepRecord>& history() const { return history_; }

  /// Parameters plus optimiser state.
  ParamStore state() const;
  nlohmann::json state_meta() const;
  void save(const std::filesystem::path& path) const;
  /// Restores parameters, optimiser moments and the step counter.
  void restore(const std::filesystem::path& path);

 private:
  const Models& models_;
  TrainConfig cfg_;
  const corpus::Dataset& data_;
  std::vector<const corpus::Utterance*> pool_;
  ParamStore params_;
  Adam opt_g_;
  Adam opt_d_;
  int step_ = 0;
  std::vector<StepRecord> history_;
};

struct TrainResult {
  std::vector<StepRecord> history;
  ParamStore params;
  bool aborted = false;
  std::string error;
};

/// Runs cfg.steps steps, writing metrics.csv, ckpt_<step>.bin every
/// cfg.checkpoint_every steps and final.bin to `out_dir` when it is
/// non-empty. A non-finite loss stops training; the last checkpoint on disk
/// is kept and the result is flagged as aborted. With `resume` set, state
/// is restored from that checkpoint and training continues up to cfg.steps.
TrainResult train(const Models& models, const TrainConfig& cfg, const corpus::Dataset& data, ParamStore params,
                  const std::filesystem::path& out_dir, std::ostream* log = nullptr,
                  const std::filesystem::path& resume = {});

/// Applies disable_iaf to a model configuration.
ModelConfig apply_train_flags(ModelConfig mc, const TrainConfig& tc);

}  // namespace flowstyle
