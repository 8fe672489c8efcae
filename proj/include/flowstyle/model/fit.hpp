#pragma once

#include <cstdint>
#include <vector>

#include "flowstyle/model/style_encoder.hpp"

namespace flowstyle {

struct FitOptions {
  int steps = 600;
  int batch_size = 32;
  double lr = 1e-3;
  double clip = 5.0;
  std::uint64_t seed = 1;
};

struct LabeledFrames {
  const Matrix* frames = nullptr;
  int label = 0;
};

/// Trains a style-encoder-shaped classifier with eps = 0. One output class
/// means a binary model trained with logistic loss; otherwise softmax
/// cross-entropy. Returns the mean loss over the final 50 steps.
double fit_sequence_classifier(const StyleEncoder& model, ParamStore& ps, const std::vector<LabeledFrames>& items,
                               const FitOptions& options);

/// Logits for each frame matrix, C x N, evaluated in chunks with eps = 0.
Matrix classifier_logits(const StyleEncoder& model, const ParamStore& ps, const std::vector<const Matrix*>& frames);

/// Argmax class (or logit > 0 for a binary model) per column.
std::vector<int> predicted_labels(const Matrix& logits);

}  // namespace flowstyle
