#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flowstyle/numerics/graph.hpp"

namespace flowstyle {

/// Builds a scalar loss on a fresh graph, reading parameters from the store
/// the check was given (via Graph::param).
using LossBuilder = std::function<Var(Graph&)>;

struct GradCheckEntry {
  std::string name;
  double rel_error = 0.0;
  double max_abs_analytic = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  std::vector<std::string> failures() const;
  double worst() const;
  std::string summary() const;
};

ParamStore analytic_gradients(const LossBuilder& loss, const ParamStore& params);

/// Central differences, one parameter entry at a time. Only entries named
/// in `names` are perturbed; the store is restored bit-exactly afterwards.
ParamStore finite_difference_gradients(const LossBuilder& loss, ParamStore& params,
                                       const std::vector<std::string>& names, double step);

/// Per parameter tensor: max|g_ad - g_fd| / (max|g_ad| + max|g_fd| + 1e-12).
GradCheckReport compare_gradients(const ParamStore& analytic, const ParamStore& numeric,
                                  double tol);

/// Compares reverse-mode gradients against central differences for every
/// trainable parameter the loss reaches.
GradCheckReport check_gradients(const LossBuilder& loss, ParamStore& params, double step,
                                double tol);

}  // namespace flowstyle
