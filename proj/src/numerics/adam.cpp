#include "flowstyle/numerics/adam.hpp"

#include <cmath>

#include "flowstyle/numerics/error.hpp"

namespace flowstyle {

void Adam::step(ParamStore& params, const ParamStore& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (!m_.contains(name)) {
      m_.set(name, Tensor(p.shape()));
      v_.set(name, Tensor(p.shape()));
    }
    Matrix& m = m_.at(name).matrix();
    Matrix& v = v_.at(name).matrix();
    m = opts_.beta1 * m + (1.0 - opts_.beta1) * g.matrix();
    v = opts_.beta2 * v + (1.0 - opts_.beta2) * g.matrix().cwiseAbs2();
    p.matrix().array() -=
        opts_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opts_.eps);
  }
}

ParamStore Adam::state(const std::string& prefix) const {
  ParamStore out;
  for (const auto& [name, t] : m_) out.set(prefix + "m/" + name, t);
  for (const auto& [name, t] : v_) out.set(prefix + "v/" + name, t);
  out.set(prefix + "t", Tensor({1}, std::vector<double>{static_cast<double>(t_)}));
  return out;
}

void Adam::load_state(const ParamStore& store, const std::string& prefix) {
  m_ = ParamStore();
  v_ = ParamStore();
  t_ = 0;
  for (const auto& [name, t] : store) {
    std::string_view n(name);
    if (!n.starts_with(prefix)) continue;
    n.remove_prefix(prefix.size());
    if (n == "t") {
      t_ = static_cast<std::int64_t>(t.data()[0]);
    } else if (n.starts_with("m/")) {
      m_.set(std::string(n.substr(2)), t);
    } else if (n.starts_with("v/")) {
      v_.set(std::string(n.substr(2)), t);
    }
  }
}

double clip_global_norm(ParamStore& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
  return norm;
}

}  // namespace flowstyle
