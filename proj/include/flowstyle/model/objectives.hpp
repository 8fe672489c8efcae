#pragma once

#include <span>
#include <string>

#include "flowstyle/model/batch.hpp"

namespace flowstyle {

inline constexpr double kDiscClamp = 1e-7;
inline constexpr double kClassClamp = 1e-12;

struct LossWeights {
  double alpha = 1.0;   // reconstruction
  double beta = 1.0;    // adversarial
  double gamma = 5.0;   // style distortion
  double lambda = 1.0;  // cycle
  double kappa = 1.0;   // style classification
  double omega = 1.0;   // speaker classification
};

struct LossBreakdown {
  double rec = 0.0, adv = 0.0, dis = 0.0, cyc = 0.0, stycls = 0.0, spkcls = 0.0, total = 0.0;
};

/// Weighted sum of the six parts; parts are echoed unchanged. Throws naming
/// the first non-finite part, or on a negative weight.
LossBreakdown loss_total(const LossBreakdown& parts, const LossWeights& w);

/// Per-example -log p_T(x | ...) under a unit-variance Gaussian (up to a
/// constant) plus stop-token cross-entropy: mean squared error over the
/// valid T_b x F entries plus mean binary cross-entropy of the stop logits
/// against the last-frame indicator. Returns 1 x B.
Var sequence_nll(Var pred_frames, Var stop_logits, const SeqBatch& target);

/// Mean of the columns of a 1 x B row selected by [start, start + count).
Var mean_cols(Var row, int start, int count);

/// Source term plus target term, each averaged over its examples.
Var loss_reconstruction(Var nll_source, Var nll_target);

/// -log(1 - D(transfer)) - log D(target), each batch-averaged; inputs are
/// probabilities, clamped to [1e-7, 1 - 1e-7].
Var loss_adversarial(Var d_transfer, Var d_target);
/// Non-saturating generator surrogate -log D(transfer).
Var loss_adversarial_generator(Var d_transfer);

/// p * ||z_s - z_t||^2 averaged over columns; p is 1 x B.
Var loss_style_distortion(Var z_s, Var z_t, Var p);

/// -sum_ij y_ij log yhat_ij with yhat clamped at 1e-12.
Var loss_softmax(Var onehot, Var probs);
/// Softmax over each column of C x B logits.
Var class_probs(Var logits);
Matrix one_hot(std::span<const int> labels, int classes);

// Value-level forms.
double loss_style_distortion(const Eigen::VectorXd& z_s, const Eigen::VectorXd& z_t, double p);
double loss_softmax(const Matrix& onehot, const Matrix& probs);
double loss_reconstruction(const Matrix& pred, const Eigen::VectorXd& stop_probs, const Matrix& target);

}  // namespace flowstyle
