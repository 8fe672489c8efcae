#pragma once

#include <string>

#include "json.hpp"

#include "flowstyle/model/batch.hpp"
#include "flowstyle/numerics/rng.hpp"

namespace flowstyle {

struct SpeakerConfig {
  int frame_dim = 16;
  int lstm = 32;
  int layers = 2;
  int hidden = 32;  // the two transforms after the recurrent stack
  int fc1 = 32;
  int fc2 = 32;
  int embed = 16;  // R
  int classes = 7;
};

nlohmann::json to_json(const SpeakerConfig& c);
SpeakerConfig speaker_config_from_json(const nlohmann::json& j, SpeakerConfig base = {});

struct SpeakerVars {
  Var embedding;  // R x B
  Var logits;     // C x B
};

struct SpeakerEmbedding {
  Eigen::VectorXd r;
  Eigen::VectorXd class_logits;
};

/// Stacked LSTM over raw frames; the final state of the top layer passes
/// through two ReLU transforms and a three-layer classifier whose third
/// layer output is the embedding.
class SpeakerEncoder {
 public:
  explicit SpeakerEncoder(SpeakerConfig cfg = {}, std::string prefix = "speaker_encoder/");

  const SpeakerConfig& config() const { return cfg_; }
  void init(ParamStore& ps, RngStream& rng) const;

  SpeakerVars encode(Graph& g, const ParamStore& ps, const SeqBatch& x) const;
  SpeakerVars encode(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps) const;

  SpeakerEmbedding speaker_encode(const ParamStore& ps, const Matrix& frames) const;

  std::string name(const std::string& local) const { return prefix_ + local; }

 private:
  SpeakerConfig cfg_;
  std::string prefix_;
};

}  // namespace flowstyle
