#include <cmath>
#include <limits>

#include "doctest.h"

#include "flowstyle/model/objectives.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/gradcheck.hpp"
#include "flowstyle/numerics/ops.hpp"
#include "flowstyle/numerics/rng.hpp"

using namespace flowstyle;
using Vec = Eigen::VectorXd;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

Vec perfect_stop(int T) {
  Vec s = Vec::Zero(T);
  s[T - 1] = 1.0;
  return s;
}

}  // namespace

TEST_CASE("reconstruction: perfect and constant-offset cases") {
  RngStream rng(1, 1);
  Matrix x(6, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  CHECK(loss_reconstruction(x, perfect_stop(6), x) < 1e-9);
  const double delta = 0.3;
  const Matrix shifted = x.array() + delta;
  CHECK(loss_reconstruction(shifted, perfect_stop(6), x) == doctest::Approx(delta * delta).epsilon(1e-9));
  CHECK_THROWS_AS(loss_reconstruction(x.topRows(5), perfect_stop(5), x), ShapeError);
}

TEST_CASE("sequence_nll agrees with the value form and rejects length mismatch") {
  RngStream rng(2, 2);
  Matrix a(5, 3), b(3, 3), pa(5, 3), pb(3, 3);
  for (Matrix* m : {&a, &b, &pa, &pb})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal();
  std::vector<const Matrix*> tgt{&a, &b}, prd{&pa, &pb};
  const SeqBatch x = pack_frames(tgt);
  const SeqBatch p = pack_frames(prd);
  Matrix logits(1, x.steps * 2);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
  Graph g;
  const Matrix nll = sequence_nll(g.constant(p.frames), g.constant(logits), x).value();
  for (int bi = 0; bi < 2; ++bi) {
    const int len = x.lengths[bi];
    Vec probs(len);
    for (int t = 0; t < len; ++t) probs[t] = 1.0 / (1.0 + std::exp(-logits(0, t * 2 + bi)));
    const double expected = loss_reconstruction(*prd[bi], probs, *tgt[bi]);
    CHECK(nll(0, bi) == doctest::Approx(expected).epsilon(1e-10));
  }
  CHECK_THROWS_AS(sequence_nll(g.constant(Matrix::Zero(3, 2)), g.constant(logits), x), ShapeError);
}

TEST_CASE("adversarial: closed forms and clamping") {
  Graph g;
  const double v = loss_adversarial(g.constant(row({0.5, 0.5})), g.constant(row({0.5, 0.5}))).scalar();
  CHECK(v == doctest::Approx(1.386294).epsilon(1e-6));
  const double opt = loss_adversarial(g.constant(row({0.0})), g.constant(row({1.0}))).scalar();
  CHECK(opt >= 0.0);
  CHECK(opt < 1e-6);
  const double worst = loss_adversarial(g.constant(row({1.0})), g.constant(row({0.0}))).scalar();
  CHECK(worst == doctest::Approx(-2.0 * std::log(1e-7)).epsilon(1e-6));
  CHECK(loss_adversarial_generator(g.constant(row({0.5}))).scalar() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("style distortion: closed forms, monotonicity, scaling") {
  Vec zs(2), zt(2);
  zs << 1, 0;
  zt << 0, 0;
  CHECK(loss_style_distortion(zs, zt, 0.5) == doctest::Approx(0.5));
  CHECK(loss_style_distortion(zs, zs, 0.9) == 0.0);
  CHECK(loss_style_distortion(zs, zt, 0.0) == 0.0);
  double prev = 0.0;
  for (double d = 0.0; d < 3.0; d += 0.25) {
    Vec z = zt;
    z[0] = d;
    const double l = loss_style_distortion(z, zt, 0.7);
    CHECK(l >= prev);
    prev = l;
  }
  CHECK(loss_style_distortion(zs, zt, 0.2) * 3.0 == doctest::Approx(loss_style_distortion(zs, zt, 0.6)));

  Graph g;
  Matrix a(2, 2), b = Matrix::Zero(2, 2);
  a << 1, 0, 0, 2;
  const double batched = loss_style_distortion(g.constant(a), g.constant(b), g.constant(row({0.5, 0.25}))).scalar();
  CHECK(batched == doctest::Approx((0.5 * 1.0 + 0.25 * 4.0) / 2.0));
}

TEST_CASE("softmax cross-entropy: closed forms") {
  const Matrix y = one_hot(std::vector<int>{2}, 7);
  CHECK(loss_softmax(y, y) == doctest::Approx(0.0));
  const Matrix uniform = Matrix::Constant(7, 1, 1.0 / 7.0);
  CHECK(loss_softmax(y, uniform) == doctest::Approx(1.945910).epsilon(1e-6));
  Matrix y2(3, 2), p2(3, 2);
  y2 << 1, 0, 0, 0, 0, 1;
  p2 << 0.7, 0.1, 0.2, 0.3, 0.1, 0.6;
  CHECK(loss_softmax(y2, p2) ==
        doctest::Approx(loss_softmax(y2.col(0), p2.col(0)) + loss_softmax(y2.col(1), p2.col(1))));
  Matrix zero = Matrix::Zero(3, 1);
  zero(1, 0) = 1.0;
  CHECK(loss_softmax(y2.col(0), zero) == doctest::Approx(-std::log(1e-12)));
  CHECK(loss_softmax(y2, p2) >= 0.0);
}

TEST_CASE("graph softmax cross-entropy matches the value form") {
  Graph g;
  Matrix logits(4, 3);
  logits << 1, 2, 3, 0, -1, 2, 0.5, 0.5, 0.5, -2, 1, 0;
  const std::vector<int> labels{0, 3, 1};
  const Var probs = class_probs(g.constant(logits));
  const double a = loss_softmax(g.constant(one_hot(labels, 4)), probs).scalar();
  CHECK(a == doctest::Approx(loss_softmax(one_hot(labels, 4), probs.value())).epsilon(1e-12));
  CHECK((probs.value().colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("loss_total: weighted sum, linearity and errors") {
  LossBreakdown ones{1, 1, 1, 1, 1, 1, 0};
  CHECK(loss_total(ones, LossWeights{}).total == 10.0);
  CHECK(loss_total(ones, LossWeights{0, 0, 0, 0, 0, 0}).total == 0.0);
  LossBreakdown dis{};
  dis.dis = 2.0;
  CHECK(loss_total(dis, LossWeights{0, 0, 5, 0, 0, 0}).total == 10.0);

  LossBreakdown parts{0.3, 1.2, 0.05, 0.4, 0.9, 0.2, 0};
  const LossBreakdown out = loss_total(parts, LossWeights{});
  CHECK(out.rec == parts.rec);
  CHECK(out.spkcls == parts.spkcls);
  LossWeights w1, w2;
  w2.lambda = 3.0;
  CHECK(loss_total(parts, w2).total - loss_total(parts, w1).total == doctest::Approx(2.0 * parts.cyc));

  LossBreakdown bad = parts;
  bad.cyc = std::numeric_limits<double>::quiet_NaN();
  try {
    loss_total(bad, LossWeights{});
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("L_cyc") != std::string::npos);
  }
  CHECK_THROWS_AS(loss_total(parts, LossWeights{-1, 1, 1, 1, 1, 1}), Error);
}

TEST_CASE("loss gradients with respect to their inputs") {
  RngStream rng(3, 3);
  ParamStore ps;
  auto add = [&](const std::string& n, int r, int c, double lo, double hi) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
    ps.add(n, Tensor::from_matrix(m));
  };
  add("d_tr", 1, 3, 0.1, 0.9);
  add("d_tg", 1, 3, 0.1, 0.9);
  add("zs", 4, 3, -1, 1);
  add("zt", 4, 3, -1, 1);
  add("p", 1, 3, 0.1, 0.9);
  add("logits", 5, 3, -2, 2);
  SUBCASE("adversarial") {
    auto loss = [&](Graph& g) { return loss_adversarial(g.param(ps, "d_tr"), g.param(ps, "d_tg")); };
    CHECK(check_gradients(loss, ps, 1e-6, 1e-6).passed());
  }
  SUBCASE("style distortion") {
    auto loss = [&](Graph& g) {
      return loss_style_distortion(g.param(ps, "zs"), g.param(ps, "zt"), g.param(ps, "p"));
    };
    CHECK(check_gradients(loss, ps, 1e-6, 1e-6).passed());
  }
  SUBCASE("softmax cross-entropy") {
    auto loss = [&](Graph& g) {
      return loss_softmax(g.constant(one_hot(std::vector<int>{0, 4, 2}, 5)), class_probs(g.param(ps, "logits")));
    };
    CHECK(check_gradients(loss, ps, 1e-6, 1e-6).passed());
  }
}
