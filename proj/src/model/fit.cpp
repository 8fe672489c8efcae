#include "flowstyle/model/fit.hpp"

#include <algorithm>

#include "flowstyle/model/objectives.hpp"
#include "flowstyle/numerics/adam.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/ops.hpp"

namespace flowstyle {

double fit_sequence_classifier(const StyleEncoder& model, ParamStore& ps, const std::vector<LabeledFrames>& items,
                               const FitOptions& options) {
  if (items.empty()) throw Error("fit_sequence_classifier: no training items");
  const int C = model.config().classes;
  const int D = model.config().latent;
  Adam opt({.lr = options.lr});
  RngStream rng(options.seed, 0x5eed);
  std::vector<double> losses;
  for (int step = 0; step < options.steps; ++step) {
    std::vector<const Matrix*> frames;
    std::vector<int> labels;
    for (int i = 0; i < options.batch_size; ++i) {
      const auto& it = items[rng.uniform_int(items.size())];
      frames.push_back(it.frames);
      labels.push_back(it.label);
    }
    const SeqBatch x = pack_frames(frames);
    Graph g;
    auto v = model.encode(g, ps, x, Matrix::Zero(D, x.batch));
    Var loss;
    if (C == 1) {
      Matrix y(1, x.batch);
      for (int b = 0; b < x.batch; ++b) y(0, b) = labels[b];
      Var l = v.cls.logits;
      loss = ad::mean(ad::sub(ad::softplus(l), ad::mul(l, g.constant(y))));
    } else {
      loss = ad::scale(loss_softmax(g.constant(one_hot(labels, C)), class_probs(v.cls.logits)), 1.0 / x.batch);
    }
    ParamStore grads = g.backward(loss);
    clip_global_norm(grads, options.clip);
    opt.step(ps, grads);
    losses.push_back(loss.scalar());
  }
  const std::size_t tail = std::min<std::size_t>(50, losses.size());
  double acc = 0.0;
  for (std::size_t i = losses.size() - tail; i < losses.size(); ++i) acc += losses[i];
  return tail ? acc / double(tail) : 0.0;
}

Matrix classifier_logits(const StyleEncoder& model, const ParamStore& ps, const std::vector<const Matrix*>& frames) {
  const int C = model.config().classes;
  Matrix out(C, static_cast<Eigen::Index>(frames.size()));
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < frames.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, frames.size() - start);
    const SeqBatch x = pack_frames(std::span<const Matrix* const>(frames.data() + start, n));
    Graph g(false);
    auto v = model.encode(g, ps, x, Matrix::Zero(model.config().latent, x.batch));
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = v.cls.logits.value();
  }
  return out;
}

std::vector<int> predicted_labels(const Matrix& logits) {
  std::vector<int> out(logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    if (logits.rows() == 1) {
      out[j] = logits(0, j) > 0.0 ? 1 : 0;
    } else {
      Eigen::Index arg = 0;
      logits.col(j).maxCoeff(&arg);
      out[j] = static_cast<int>(arg);
    }
  }
  return out;
}

}  // namespace flowstyle
