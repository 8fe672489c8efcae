#pragma once

#include <vector>

#include "json.hpp"

#include "flowstyle/corpus/corpus.hpp"
#include "flowstyle/model/adversaries.hpp"
#include "flowstyle/model/speaker_encoder.hpp"
#include "flowstyle/model/style_encoder.hpp"
#include "flowstyle/model/synthesizer.hpp"

namespace flowstyle {

struct ModelConfig {
  StyleConfig style;
  SpeakerConfig speaker;
  SynthConfig synth;
  DiscConfig disc;
  StyleConfig ds;  // frozen domain model; flow flags never apply to it
};

/// Sizes tied to the corpus: frame width, vocabulary, class counts and a
/// free-running cap of twice the longest training utterance.
ModelConfig model_config_for(const corpus::Dataset& data);
/// Makes dependent sizes (frame width, embedding widths) consistent.
ModelConfig harmonize(ModelConfig c);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

/// Every network of the system. Parameters live in one ParamStore under
/// per-module prefixes.
struct Models {
  explicit Models(const ModelConfig& cfg);

  ModelConfig cfg;
  StyleEncoder style;
  SpeakerEncoder speaker;
  Synthesizer synth;
  Discriminator disc;
  DomainModel ds;

  /// style_encoder/, speaker_encoder/, synthesizer/ and disc_D/.
  void init(ParamStore& ps, std::uint64_t seed) const;
  void init_ds(ParamStore& ps, std::uint64_t seed) const;
};

/// Source content and speaker with the donor's style, decoded free-running
/// with eps = 0. Batched over the pairs; returns one T x F matrix each.
std::vector<Matrix> transfer_batch(const Models& m, const ParamStore& ps,
                                   const std::vector<const corpus::Utterance*>& sources,
                                   const std::vector<const corpus::Utterance*>& donors,
                                   std::vector<bool>* truncated = nullptr);
Matrix transfer(const Models& m, const ParamStore& ps, const corpus::Utterance& source,
                const corpus::Utterance& donor);

/// Speaker embeddings (R x N) and style embeddings (S x N, eps = 0).
Matrix speaker_embeddings(const Models& m, const ParamStore& ps, const std::vector<const Matrix*>& frames);
Matrix style_embeddings(const Models& m, const ParamStore& ps, const std::vector<const Matrix*>& frames);
Matrix speaker_logits(const Models& m, const ParamStore& ps, const std::vector<const Matrix*>& frames);

}  // namespace flowstyle
