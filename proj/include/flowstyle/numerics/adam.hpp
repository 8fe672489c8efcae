#pragma once

#include <cstdint>

#include "flowstyle/numerics/param_store.hpp"

namespace flowstyle {

class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(Options opts) : opts_(opts) {}

  /// Updates every parameter named in `grads`.
  void step(ParamStore& params, const ParamStore& grads);

  std::int64_t steps() const { return t_; }
  const Options& options() const { return opts_; }

  /// Moments as "<prefix>m/<name>", "<prefix>v/<name>" plus "<prefix>t".
  ParamStore state(const std::string& prefix) const;
  void load_state(const ParamStore& store, const std::string& prefix);

 private:
  Options opts_;
  std::int64_t t_ = 0;
  ParamStore m_;
  ParamStore v_;
};

/// Scales `grads` in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(ParamStore& grads, double max_norm);

}  // namespace flowstyle
