#include "flowstyle/numerics/gradcheck.hpp"

#include <algorithm>
#include <sstream>

#include "flowstyle/numerics/error.hpp"

namespace flowstyle {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const GradCheckEntry& e) { return e.passed; });
}

std::vector<std::string> GradCheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.passed) out.push_back(e.name);
  }
  return out;
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.rel_error);
  return w;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed() ? "pass" : "FAIL") << ": " << entries.size()
     << " parameters, worst relative error " << worst() << " (tol " << tolerance << ")";
  for (const auto& e : entries) {
    if (!e.passed) os << "\n  " << e.name << ": " << e.rel_error;
  }
  return os.str();
}

ParamStore analytic_gradients(const LossBuilder& loss, const ParamStore& params) {
  (void)params;
  Graph g;
  Var out = loss(g);
  return g.backward(out);
}

ParamStore finite_difference_gradients(const LossBuilder& loss, ParamStore& params,
                                       const std::vector<std::string>& names, double step) {
  if (!(step > 0.0)) throw Error("finite differences: step must be positive");
  auto evaluate = [&loss]() {
    Graph g(false);
    return loss(g).scalar();
  };
  ParamStore out;
  for (const auto& name : names) {
    Tensor& t = params.at(name);
    Tensor grad(t.shape());
    auto data = t.data();
    auto gdata = grad.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = evaluate();
      data[i] = saved - step;
      const double down = evaluate();
      data[i] = saved;
      gdata[i] = (up - down) / (2.0 * step);
    }
    out.set(name, std::move(grad));
  }
  return out;
}

GradCheckReport compare_gradients(const ParamStore& analytic, const ParamStore& numeric,
                                  double tol) {
  GradCheckReport report;
  report.tolerance = tol;
  for (const auto& [name, ad] : analytic) {
    const Tensor* fd = numeric.find(name);
    if (!fd) throw Error("gradient check: no numeric gradient for '" + name + "'");
    if (fd->shape() != ad.shape()) throw ShapeError("gradient check", "shape mismatch for " + name);
    const double diff = (ad.matrix() - fd->matrix()).cwiseAbs().maxCoeff();
    const double a = ad.matrix().cwiseAbs().maxCoeff();
    const double f = fd->matrix().cwiseAbs().maxCoeff();
    GradCheckEntry e;
    e.name = name;
    e.rel_error = diff / (a + f + 1e-12);
    e.max_abs_analytic = a;
    e.passed = e.rel_error <= tol;
    report.entries.push_back(std::move(e));
  }
  return report;
}

GradCheckReport check_gradients(const LossBuilder& loss, ParamStore& params, double step,
                                double tol) {
  ParamStore ad = analytic_gradients(loss, params);
  std::vector<std::string> names;
  for (const auto& [name, _] : ad) names.push_back(name);
  ParamStore fd = finite_difference_gradients(loss, params, names, step);
  return compare_gradients(ad, fd, tol);
}

}  // namespace flowstyle
