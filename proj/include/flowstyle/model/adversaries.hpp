#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "flowstyle/corpus/corpus.hpp"
#include "flowstyle/model/style_encoder.hpp"

namespace flowstyle {

struct DiscConfig {
  int frame_dim = 16;
  int frame_hidden = 32;
  int hidden = 32;
};

nlohmann::json to_json(const DiscConfig& c);
DiscConfig disc_config_from_json(const nlohmann::json& j, DiscConfig base = {});

/// Real-target vs transferred discriminator: per-frame features of the
/// mean-removed frame and its first difference, averaged over time, then
/// two transforms and a sigmoid.
class Discriminator {
 public:
  explicit Discriminator(DiscConfig cfg = {}, std::string prefix = "disc_D/");

  const DiscConfig& config() const { return cfg_; }
  void init(ParamStore& ps, RngStream& rng) const;
  /// Logits, 1 x B.
  Var logits(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps) const;
  Var prob(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps) const;
  double discriminate(const ParamStore& ps, const Matrix& frames) const;

  std::string name(const std::string& local) const { return prefix_ + local; }

 private:
  DiscConfig cfg_;
  std::string prefix_;
};

/// Style-domain model: the style-encoder architecture with a single sigmoid
/// output, evaluated with eps = 0 so it is deterministic.
class DomainModel {
 public:
  explicit DomainModel(StyleConfig cfg = {}, std::string prefix = "disc_Ds/");

  const StyleEncoder& encoder() const { return enc_; }
  void init(ParamStore& ps, RngStream& rng) const { enc_.init(ps, rng); }
  Var logits(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps) const;
  Var prob(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps) const;
  /// p(x in target domain).
  double style_domain_prob(const ParamStore& ps, const Matrix& frames) const;

 private:
  StyleEncoder enc_;
};

struct PretrainOptions {
  double portion = 0.2;
  int steps = 600;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 7;
};

struct PretrainReport {
  double val_accuracy = 0.0;
  double train_loss = 0.0;
  int train_utterances = 0;
  int val_utterances = 0;
};

/// Trains D_s on `options.portion` of the training split (target domain
/// = 1) and reports accuracy on the validation split. Throws when the
/// portion lacks either domain.
PretrainReport pretrain_ds(const DomainModel& model, ParamStore& ps, const corpus::Dataset& data,
                           const PretrainOptions& options);

/// Fraction of `items` whose domain is predicted correctly at threshold 0.5.
double domain_accuracy(const DomainModel& model, const ParamStore& ps, const corpus::CorpusSpec& spec,
                       const std::vector<const corpus::Utterance*>& items);

}  // namespace flowstyle
