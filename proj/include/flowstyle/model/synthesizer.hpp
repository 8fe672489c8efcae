#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "flowstyle/model/batch.hpp"
#include "flowstyle/numerics/rng.hpp"

namespace flowstyle {

struct SynthConfig {
  int frame_dim = 16;
  int vocab = 24;       // token ids are 1..vocab
  int token_embed = 32;
  int text_gru = 16;    // per direction; text states are 2 * text_gru wide
  int style_dim = 8;
  int speaker_dim = 16;
  int prenet = 32;
  int decoder = 64;
  int attention = 32;
  int loc_filters = 4;
  int loc_width = 5;
  int max_frames = 120;  // free-running cap
  double stop_threshold = 0.5;

  int text_dim() const { return 2 * text_gru; }
  int memory_dim() const { return text_dim() + style_dim + speaker_dim; }
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

struct TextVars {
  Var states;  // E x (L * B)
  std::vector<int> lengths;
  int steps = 0;
  int batch = 0;
};

struct DecodeVars {
  Var frames;       // F x (T * B)
  Var stop_logits;  // 1 x (T * B)
  std::vector<Matrix> alignments;  // per step, L x B
  std::vector<int> lengths;
  std::vector<bool> truncated;
  int steps = 0;
};

struct TextEncoding {
  Matrix states;  // L x E
};

struct DecodeResult {
  Matrix frames;       // T x F
  Eigen::VectorXd stop_probs;
  Matrix alignments;   // T x L
  bool truncated = false;
};

/// Attention sequence-to-sequence generator. Text states are concatenated
/// with the style and speaker embeddings to form the attention memory, and
/// the decoder's initial state is a function of both embeddings.
class Synthesizer {
 public:
  explicit Synthesizer(SynthConfig cfg = {}, std::string prefix = "synthesizer/");

  const SynthConfig& config() const { return cfg_; }
  void init(ParamStore& ps, RngStream& rng) const;

  TextVars encode_text(Graph& g, const ParamStore& ps, const TokenBatch& tokens) const;
  /// Teacher-forced when `teacher` is valid: step t reads teacher frame t-1
  /// and runs for `teacher_lengths`. Otherwise free-running up to max_frames.
  DecodeVars decode(Graph& g, const ParamStore& ps, const TextVars& text, Var z, Var r, Var teacher,
                    std::span<const int> teacher_lengths, int teacher_steps) const;
  DecodeVars decode(Graph& g, const ParamStore& ps, const TextVars& text, Var z, Var r, const SeqBatch& teacher) const {
    return decode(g, ps, text, z, r, g.constant(teacher.frames), teacher.lengths, teacher.steps);
  }
  DecodeVars generate(Graph& g, const ParamStore& ps, const TextVars& text, Var z, Var r) const {
    return decode(g, ps, text, z, r, Var{}, {}, 0);
  }

  TextEncoding encode_text(const ParamStore& ps, const std::vector<int>& tokens) const;
  DecodeResult decode(const ParamStore& ps, const std::vector<int>& tokens, const Eigen::VectorXd& z,
                      const Eigen::VectorXd& r, const Matrix* teacher_frames) const;

  std::string name(const std::string& local) const { return prefix_ + local; }

 private:
  void check_tokens(const TokenBatch& tokens) const;

  SynthConfig cfg_;
  std::string prefix_;
};

}  // namespace flowstyle
