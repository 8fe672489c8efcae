#include "flowstyle/model/objectives.hpp"

#include <cmath>

#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/ops.hpp"

namespace flowstyle {

LossBreakdown loss_total(const LossBreakdown& p, const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {{"rec", p.rec},     {"adv", p.adv},       {"dis", p.dis},
                                                  {"cyc", p.cyc},     {"stycls", p.stycls}, {"spkcls", p.spkcls}};
  for (const auto& [n, v] : parts)
    if (!std::isfinite(v)) throw NonFiniteError(std::string("loss_total: L_") + n);
  for (double x : {w.alpha, w.beta, w.gamma, w.lambda, w.kappa, w.omega})
    if (!(x >= 0.0)) throw Error("loss_total: weights must be non-negative");
  LossBreakdown out = p;
  out.total = w.alpha * p.rec + w.beta * p.adv + w.gamma * p.dis + w.lambda * p.cyc + w.kappa * p.stycls +
              w.omega * p.spkcls;
  return out;
}

Var sequence_nll(Var pred_frames, Var stop_logits, const SeqBatch& target) {
  Graph& g = pred_frames.graph();
  const int B = target.batch;
  const int T = target.steps;
  const Eigen::Index F = target.frames.rows();
  if (pred_frames.rows() != F || pred_frames.cols() != Eigen::Index(T) * B)
    throw ShapeError("sequence_nll", "prediction does not match target length under teacher forcing");
  if (stop_logits.rows() != 1 || stop_logits.cols() != Eigen::Index(T) * B)
    throw ShapeError("sequence_nll", "stop logits do not match target length");
  Matrix w_mse = Matrix::Zero(1, Eigen::Index(T) * B);
  Matrix w_stop = Matrix::Zero(1, Eigen::Index(T) * B);
  Matrix last = Matrix::Zero(1, Eigen::Index(T) * B);
  for (int b = 0; b < B; ++b) {
    const int len = target.lengths[b];
    for (int t = 0; t < len; ++t) {
      w_mse(0, Eigen::Index(t) * B + b) = 1.0 / (double(len) * double(F));
      w_stop(0, Eigen::Index(t) * B + b) = 1.0 / double(len);
    }
    last(0, Eigen::Index(len - 1) * B + b) = 1.0;
  }
  Var sq = ad::sum_rows(ad::square(ad::sub(pred_frames, g.constant(target.frames))));
  Var mse = ad::sum_rows(ad::reshape(ad::mul(sq, g.constant(w_mse)), T, B));
  // Binary cross-entropy with logits: softplus(l) - y * l.
  Var bce = ad::sub(ad::softplus(stop_logits), ad::mul(stop_logits, g.constant(last)));
  Var stop = ad::sum_rows(ad::reshape(ad::mul(bce, g.constant(w_stop)), T, B));
  return ad::add(mse, stop);
}

Var mean_cols(Var row, int start, int count) {
  return ad::mean(ad::slice_cols(row, start, count));
}

Var loss_reconstruction(Var nll_source, Var nll_target) {
  return ad::add(ad::mean(nll_source), ad::mean(nll_target));
}

Var loss_adversarial(Var d_transfer, Var d_target) {
  Var fake = ad::log(ad::clamp(ad::add_scalar(ad::neg(d_transfer), 1.0), kDiscClamp, 1.0 - kDiscClamp));
  Var real = ad::log(ad::clamp(d_target, kDiscClamp, 1.0 - kDiscClamp));
  return ad::neg(ad::add(ad::mean(fake), ad::mean(real)));
}

Var loss_adversarial_generator(Var d_transfer) {
  return ad::neg(ad::mean(ad::log(ad::clamp(d_transfer, kDiscClamp, 1.0 - kDiscClamp))));
}

Var loss_style_distortion(Var z_s, Var z_t, Var p) {
  Var d2 = ad::sum_rows(ad::square(ad::sub(z_s, z_t)));
  return ad::mean(ad::mul(p, d2));
}

Var loss_softmax(Var onehot, Var probs) {
  return ad::neg(ad::sum(ad::mul(onehot, ad::log(ad::clamp(probs, kClassClamp, 1.0)))));
}

Var class_probs(Var logits) {
  std::vector<int> lens(logits.cols(), static_cast<int>(logits.rows()));
  return ad::softmax_cols(logits, lens);
}

Matrix one_hot(std::span<const int> labels, int classes) {
  Matrix y = Matrix::Zero(classes, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw Error("one_hot: label out of range");
    y(labels[i], static_cast<Eigen::Index>(i)) = 1.0;
  }
  return y;
}

double loss_style_distortion(const Eigen::VectorXd& z_s, const Eigen::VectorXd& z_t, double p) {
  if (z_s.size() != z_t.size()) throw ShapeError("loss_style_distortion", "dimension mismatch");
  if (p < 0.0 || p > 1.0) throw Error("loss_style_distortion: probability outside [0, 1]");
  return p * (z_s - z_t).squaredNorm();
}

double loss_softmax(const Matrix& onehot, const Matrix& probs) {
  if (onehot.rows() != probs.rows() || onehot.cols() != probs.cols())
    throw ShapeError("loss_softmax", "label and prediction shapes differ");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < onehot.size(); ++i)
    if (onehot.data()[i] != 0.0) acc -= onehot.data()[i] * std::log(std::max(probs.data()[i], kClassClamp));
  return acc;
}

double loss_reconstruction(const Matrix& pred, const Eigen::VectorXd& stop_probs, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || stop_probs.size() != target.rows())
    throw ShapeError("loss_reconstruction", "length mismatch under teacher forcing");
  const double mse = (pred - target).squaredNorm() / double(target.size());
  double bce = 0.0;
  const Eigen::Index T = target.rows();
  for (Eigen::Index t = 0; t < T; ++t) {
    const double p = std::clamp(stop_probs(t), kClassClamp, 1.0 - kClassClamp);
    bce -= t == T - 1 ? std::log(p) : std::log(1.0 - p);
  }
  return mse + bce / double(T);
}

}  // namespace flowstyle
