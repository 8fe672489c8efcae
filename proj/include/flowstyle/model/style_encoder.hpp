#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flowstyle/model/batch.hpp"
#include "flowstyle/numerics/rng.hpp"

namespace flowstyle {

struct StyleConfig {
  int frame_dim = 16;
  int frame_hidden = 32;  // per-frame affine width
  int gru = 32;
  int latent = 8;   // D
  int context = 16; // H
  int embed = 8;    // S
  int flow_steps = 4;  // K; 0 disables the flow
  int made_hidden = 32;
  int fc1 = 32;
  int fc2 = 32;
  int classes = 7;
};

nlohmann::json to_json(const StyleConfig& c);
StyleConfig style_config_from_json(const nlohmann::json& j, StyleConfig base = {});

/// Positivity map shared by every scale in the flow.
inline constexpr double kSigmaFloor = 1e-4;

/// Graph-level outputs for a batch; every quantity has one column per
/// example.
struct ReferenceVars {
  Var mu0, sigma0, h;  // D x B, D x B, H x B
};

struct FlowVars {
  Var eps;
  std::vector<Var> z;       // z_0 .. z_K
  std::vector<Var> mus;     // mu_1 .. mu_K
  std::vector<Var> sigmas;  // sigma_0 .. sigma_K
  Var log_q;                // 1 x B
};

struct ClassifierVars {
  Var embedding;  // S x B, third layer output
  Var logits;     // C x B
};

struct StyleVars {
  ReferenceVars ref;
  FlowVars flow;
  ClassifierVars cls;
};

/// Value-level records for one utterance.
struct ReferenceOutput {
  Eigen::VectorXd mu0, sigma0, h;
};

struct FlowTrace {
  Eigen::VectorXd eps;
  std::vector<Eigen::VectorXd> z;
  std::vector<Eigen::VectorXd> mus;
  std::vector<Eigen::VectorXd> sigmas;
  double log_q = 0.0;
};

struct StyleEmbedding {
  Eigen::VectorXd z;
  Eigen::VectorXd class_logits;
};

/// Reference encoder -> K-step inverse autoregressive flow -> three-layer
/// classifier. The reference encoder subtracts each utterance's mean frame
/// before a per-frame affine map and a GRU pass.
class StyleEncoder {
 public:
  explicit StyleEncoder(StyleConfig cfg = {}, std::string prefix = "style_encoder/");

  const StyleConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }
  void init(ParamStore& ps, RngStream& rng) const;

  ReferenceVars reference(Graph& g, const ParamStore& ps, const SeqBatch& x) const;
  ReferenceVars reference(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths,
                          int steps) const;
  /// (mu_k, sigma_k) in z order for flow step k in [1, K].
  std::pair<Var, Var> conditioner(Graph& g, const ParamStore& ps, int k, Var z_prev, Var h) const;
  FlowVars flow(Graph& g, const ParamStore& ps, const ReferenceVars& ref, const Matrix& eps) const;
  ClassifierVars classify(Graph& g, const ParamStore& ps, Var zk) const;
  /// Full composition; eps is D x B.
  StyleVars encode(Graph& g, const ParamStore& ps, const SeqBatch& x, const Matrix& eps) const;
  StyleVars encode(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps,
                   const Matrix& eps) const;

  /// Rows of the conditioner input in step-k order (reversed on even k).
  std::vector<int> step_order(int k) const;
  bool reversed(int k) const { return k % 2 == 0; }

  // Per-utterance value interface.
  ReferenceOutput reference_encode(const ParamStore& ps, const Matrix& frames) const;
  static Eigen::VectorXd iaf_init(const ReferenceOutput& ref, const Eigen::VectorXd& eps);
  struct StepResult {
    Eigen::VectorXd z, mu, sigma;
  };
  StepResult iaf_step(const ParamStore& ps, int k, const Eigen::VectorXd& z_prev, const Eigen::VectorXd& h) const;
  Eigen::VectorXd iaf_invert(const ParamStore& ps, int k, const Eigen::VectorXd& z_k, const Eigen::VectorXd& h) const;
  /// Runs the whole chain from a reference output.
  FlowTrace run_flow(const ParamStore& ps, const ReferenceOutput& ref, const Eigen::VectorXd& eps) const;
  StyleEmbedding style_classify(const ParamStore& ps, const Eigen::VectorXd& zk) const;
  std::pair<StyleEmbedding, FlowTrace> encode_style(const ParamStore& ps, const Matrix& frames, RngStream& rng) const;

  std::string name(const std::string& local) const { return prefix_ + local; }

 private:
  StyleConfig cfg_;
  std::string prefix_;
  Matrix mask_in_;   // made_hidden x D
  Matrix mask_out_;  // D x made_hidden
};

/// log q(z_K | x) = -sum_i (eps_i^2 / 2 + log(2 pi) / 2 + sum_k log sigma_k,i).
double log_density(const FlowTrace& trace);
/// Batched form over D x B columns; returns 1 x B.
Var log_density(const Var& eps, const std::vector<Var>& sigmas);

/// Draws a D x B standard normal matrix.
Matrix sample_eps(RngStream& rng, int dim, int batch);

}  // namespace flowstyle
