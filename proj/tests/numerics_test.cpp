#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"

#include "flowstyle/numerics/adam.hpp"
#include "flowstyle/numerics/checkpoint.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/gradcheck.hpp"
#include "flowstyle/numerics/io.hpp"
#include "flowstyle/numerics/nn.hpp"
#include "flowstyle/numerics/ops.hpp"

using namespace flowstyle;

namespace {

Matrix random_matrix(RngStream& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

void add_param(ParamStore& ps, const std::string& name, const Matrix& m) {
  ps.add(name, Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, m));
}

// Contract every output entry with fixed random weights so the check sees
// all partial derivatives, not just the sum.
Var contract(Graph& g, Var y, std::uint64_t seed) {
  RngStream rng(seed, 99);
  Var w = g.constant(random_matrix(rng, y.rows(), y.cols()));
  return ad::sum(ad::mul(y, w));
}

}  // namespace

TEST_CASE("evaluate: closed-form values") {
  Graph g;
  Matrix x(2, 1);
  x << 1, 2;
  Var v = g.constant(x);
  CHECK(ad::add_scalar(v, 0.0).value() == x);

  Matrix three(1, 1);
  three << 3;
  CHECK(ad::sum(ad::square(g.constant(three))).scalar() == doctest::Approx(9.0));

  Var sm = ad::softmax_cols(g.constant(Matrix::Zero(3, 1)), std::vector<int>{3});
  for (int i = 0; i < 3; ++i) CHECK(sm.value()(i, 0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("evaluate: shape mismatch names the op") {
  Graph g;
  Var a = g.constant(Matrix::Zero(2, 1));
  Var b = g.constant(Matrix::Zero(3, 1));
  try {
    ad::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.op() == "add");
  }
  CHECK_THROWS_AS(ad::matmul(a, b), ShapeError);
  CHECK_THROWS_AS(ad::add_bias(a, b), ShapeError);
}

TEST_CASE("evaluate: checked mode rejects non-finite values") {
  Graph g;
  Matrix z = Matrix::Zero(1, 1);
  try {
    ad::log(g.constant(z));
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.op() == "log");
  }
}

TEST_CASE("backward: closed forms") {
  {
    Graph g;
    Matrix three(1, 1);
    three << 3;
    Var x = g.variable(three);
    g.backward(ad::square(x));
    CHECK(g.grad(x)(0, 0) == doctest::Approx(6.0));
  }
  {
    Graph g;
    Var x = g.variable(Matrix::Constant(4, 1, 0.7));
    g.backward(ad::sum(x));
    CHECK(g.grad(x) == Matrix::Ones(4, 1));
  }
  {
    Graph g;
    Var x = g.variable(Matrix::Zero(2, 1));
    CHECK_THROWS_AS(g.backward(x), ShapeError);
  }
}

TEST_CASE("backward: parameter gradients keyed by name, frozen prefixes skipped") {
  ParamStore ps;
  add_param(ps, "a/w", Matrix::Constant(1, 1, 2.0));
  add_param(ps, "b/w", Matrix::Constant(1, 1, 5.0));
  Graph g;
  g.freeze_prefix("b/");
  Var out = ad::mul(g.param(ps, "a/w"), g.param(ps, "b/w"));
  ParamStore grads = g.backward(out);
  CHECK(grads.size() == 1);
  CHECK(grads.at("a/w").data()[0] == doctest::Approx(5.0));
}

TEST_CASE("check_gradients: linear layer and sigmoid chain pass") {
  RngStream rng(7, 1);
  ParamStore ps;
  nn::Linear lin{"lin", 4, 3};
  lin.init(ps, rng, 0.1);
  const Matrix x = random_matrix(rng, 4, 5);
  auto linear_loss = [&](Graph& g) { return contract(g, lin(g, ps, g.constant(x)), 1); };
  auto rep = check_gradients(linear_loss, ps, 1e-5, 1e-4);
  CHECK_MESSAGE(rep.passed(), rep.summary());

  ParamStore chain;
  std::vector<nn::Linear> layers;
  for (int i = 0; i < 5; ++i) {
    layers.push_back({"chain" + std::to_string(i), 3, 3});
    layers.back().init(chain, rng, 0.05);
  }
  const Matrix x3 = random_matrix(rng, 3, 2);
  auto chain_loss = [&](Graph& g) {
    Var h = g.constant(x3);
    for (const auto& l : layers) h = ad::sigmoid(l(g, chain, h));
    return contract(g, h, 2);
  };
  auto rep2 = check_gradients(chain_loss, chain, 1e-5, 1e-4);
  CHECK_MESSAGE(rep2.passed(), rep2.summary());
}

TEST_CASE("check_gradients: corrupted gradient is reported by name") {
  RngStream rng(8, 1);
  ParamStore ps;
  nn::Linear lin{"lin", 3, 2};
  lin.init(ps, rng);
  const Matrix x = random_matrix(rng, 3, 4);
  auto loss = [&](Graph& g) { return contract(g, ad::tanh(lin(g, ps, g.constant(x))), 3); };
  ParamStore ad_grads = analytic_gradients(loss, ps);
  ad_grads.at("lin/b").data()[1] += 0.5;
  ParamStore fd = finite_difference_gradients(loss, ps, {"lin/W", "lin/b"}, 1e-5);
  auto rep = compare_gradients(ad_grads, fd, 1e-4);
  CHECK_FALSE(rep.passed());
  REQUIRE(rep.failures().size() == 1);
  CHECK(rep.failures()[0] == "lin/b");
}

TEST_CASE("every op matches central differences") {
  RngStream rng(11, 2);
  ParamStore ps;
  add_param(ps, "A", random_matrix(rng, 3, 4));
  add_param(ps, "B", random_matrix(rng, 4, 6));
  add_param(ps, "C", random_matrix(rng, 3, 6));
  add_param(ps, "bias", random_matrix(rng, 3, 1));
  add_param(ps, "row", random_matrix(rng, 1, 6));
  add_param(ps, "pos", (random_matrix(rng, 3, 6).array().abs() + 0.5).matrix());
  // Sequence layout: L = 3 steps, batch 2.
  add_param(ps, "logits", random_matrix(rng, 3, 2));
  add_param(ps, "mem", random_matrix(rng, 5, 6));
  add_param(ps, "kernel", random_matrix(rng, 4, 6));
  add_param(ps, "table", random_matrix(rng, 5, 3));

  using Builder = std::function<Var(Graph&)>;
  auto P = [&](Graph& g, const char* n) { return g.param(ps, n); };
  const std::vector<int> lens{3, 2};
  std::vector<std::pair<std::string, Builder>> cases = {
      {"matmul", [&](Graph& g) { return ad::matmul(P(g, "A"), P(g, "B")); }},
      {"add/sub/mul",
       [&](Graph& g) {
         return ad::mul(ad::sub(P(g, "C"), P(g, "pos")), ad::add(P(g, "C"), P(g, "pos")));
       }},
      {"add_bias", [&](Graph& g) { return ad::add_bias(P(g, "C"), P(g, "bias")); }},
      {"scale_cols", [&](Graph& g) { return ad::scale_cols(P(g, "C"), P(g, "row")); }},
      {"unary",
       [&](Graph& g) {
         Var c = P(g, "C");
         std::vector<Var> parts{ad::sigmoid(c), ad::tanh(c), ad::softplus(c), ad::exp(c),
                                ad::log(P(g, "pos")), ad::square(c), ad::scale(c, -2.5),
                                ad::add_scalar(c, 0.3), ad::clamp(c, -10.0, 10.0)};
         return ad::concat_rows(parts);
       }},
      {"reductions",
       [&](Graph& g) {
         Var c = P(g, "C");
         std::vector<Var> parts{ad::sum_rows(c), ad::tile_cols(ad::transpose(ad::sum_cols(c)), 2),
                                ad::tile_cols(ad::mean(c), 6)};
         return ad::concat_rows(parts);
       }},
      {"slicing",
       [&](Graph& g) {
         Var c = P(g, "C");
         std::vector<Var> cols{ad::slice_cols(c, 1, 3), ad::gather_cols(c, std::vector<int>{5, 0, 0})};
         Var x = ad::concat_cols(cols);
         std::vector<Var> rows{ad::slice_rows(x, 1, 2), ad::permute_rows(x, std::vector<int>{2, 0, 1})};
         return ad::reshape(ad::concat_rows(rows), 6, 5);
       }},
      {"select_cols",
       [&](Graph& g) {
         const std::vector<std::uint8_t> m{1, 0, 0, 1, 1, 0};
         return ad::select_cols(m, P(g, "C"), ad::tanh(P(g, "C")));
       }},
      {"softmax_cols", [&](Graph& g) { return ad::softmax_cols(P(g, "logits"), lens); }},
      {"masked_time_mean", [&](Graph& g) { return ad::masked_time_mean(P(g, "C"), lens); }},
      {"attend",
       [&](Graph& g) {
         return ad::attend(P(g, "mem"), ad::softmax_cols(P(g, "logits"), lens));
       }},
      {"location_conv",
       [&](Graph& g) {
         Var a = ad::softmax_cols(P(g, "logits"), lens);
         return ad::location_conv(a, ad::square(a), P(g, "kernel"));
       }},
      {"embedding",
       [&](Graph& g) { return ad::embedding(P(g, "table"), std::vector<int>{4, 1, 1, 0}); }},
  };
  std::uint64_t seed = 100;
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    auto loss = [&, s = seed++](Graph& g) { return contract(g, build(g), s); };
    auto rep = check_gradients(loss, ps, 1e-5, 1e-6);
    CHECK_MESSAGE(rep.passed(), rep.summary());
  }
}

TEST_CASE("masked ops ignore padding exactly") {
  Graph g;
  RngStream rng(3, 3);
  Matrix logits = random_matrix(rng, 4, 2);
  Var a = ad::softmax_cols(g.constant(logits), std::vector<int>{4, 2});
  CHECK(a.value()(2, 1) == 0.0);
  CHECK(a.value()(3, 1) == 0.0);
  CHECK(a.value().col(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.value().col(1).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rng streams are deterministic and independent") {
  RngStream a(42, 7), b(42, 7), c(42, 8);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    if (x != c.next_u64()) any_diff = true;
  }
  CHECK(any_diff);

  RngStream n(1, 1);
  double s = 0.0, s2 = 0.0;
  const int kDraws = 20000;
  for (int i = 0; i < kDraws; ++i) {
    const double v = n.normal();
    s += v;
    s2 += v * v;
  }
  CHECK(std::abs(s / kDraws) < 0.03);
  CHECK(std::abs(s2 / kDraws - 1.0) < 0.05);

  RngStream u(2, 2);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.uniform_int(5) < 5);
  }
  // split() does not advance the parent.
  RngStream p(5, 5);
  const auto before = p.counter();
  RngStream child = p.split(3);
  CHECK(p.counter() == before);
  CHECK(child.next_u64() == p.split(3).next_u64());
}

TEST_CASE("param store iterates in name order and fingerprints content") {
  ParamStore ps;
  ps.add("zeta", Tensor({1}, std::vector<double>{1.0}));
  ps.add("alpha", Tensor({2}, std::vector<double>{2.0, 3.0}));
  ps.add("mid/x", Tensor({1}, std::vector<double>{4.0}));
  std::vector<std::string> names;
  for (const auto& [n, _] : ps) names.push_back(n);
  CHECK(names == std::vector<std::string>{"alpha", "mid/x", "zeta"});
  CHECK_THROWS_AS(ps.add("alpha", Tensor({1})), Error);

  const auto f = ps.fingerprint();
  CHECK(f == ps.fingerprint());
  ps.at("alpha").data()[0] = 2.5;
  CHECK(f != ps.fingerprint());
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{0}), ShapeError);
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(t.matrix()(1, 0) == 4.0);
  CHECK(t.size() == 6);
}

TEST_CASE("checkpoint round trip and version check") {
  RngStream rng(9, 9);
  ParamStore ps;
  add_param(ps, "style_encoder/w", random_matrix(rng, 3, 2));
  ps.add("synthesizer/b", Tensor({4}, std::vector<double>{1.0, -0.0, 1e-300, -7.25}));
  nlohmann::json meta = {{"step", 12}};
  const std::string bytes = encode_checkpoint(ps, meta);
  Checkpoint ck = decode_checkpoint(bytes);
  CHECK(ck.params == ps);
  CHECK(ck.params.fingerprint() == ps.fingerprint());
  CHECK(ck.meta["step"] == 12);

  auto nl = bytes.find('\n');
  auto index = nlohmann::json::parse(bytes.substr(0, nl));
  CHECK(index["version"] == 1);
  CHECK(index["entries"][0]["name"] == "style_encoder/w");
  CHECK(index["entries"][0]["byte_offset"] == 0);
  CHECK(index["entries"][1]["byte_offset"] == 48);
  index["version"] = 2;
  std::string bad = index.dump() + bytes.substr(nl);
  CHECK_THROWS_AS(decode_checkpoint(bad), Error);

  const auto path = std::filesystem::temp_directory_path() / "flowstyle_ckpt_test.bin";
  save_checkpoint(path, ps, meta);
  CHECK(!std::filesystem::exists(path.string() + ".tmp"));
  CHECK(load_checkpoint(path).params == ps);
  std::filesystem::remove(path);
}

TEST_CASE("adam first step moves each coordinate by lr against the gradient sign") {
  ParamStore ps;
  ps.add("w", Tensor({3}, std::vector<double>{1.0, 2.0, 3.0}));
  ParamStore grads;
  grads.add("w", Tensor({3}, std::vector<double>{0.5, -4.0, 0.0}));
  Adam opt({.lr = 0.1});
  opt.step(ps, grads);
  CHECK(ps.at("w").data()[0] == doctest::Approx(0.9));
  CHECK(ps.at("w").data()[1] == doctest::Approx(2.1));
  CHECK(ps.at("w").data()[2] == doctest::Approx(3.0));

  Adam restored({.lr = 0.1});
  restored.load_state(opt.state("opt/"), "opt/");
  CHECK(restored.steps() == 1);
  CHECK(restored.state("opt/") == opt.state("opt/"));
}

TEST_CASE("global norm clipping") {
  ParamStore g;
  g.add("a", Tensor({2}, std::vector<double>{3.0, 4.0}));
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g.global_norm() == doctest::Approx(5.0));
  clip_global_norm(g, 1.0);
  CHECK(g.global_norm() == doctest::Approx(1.0));
}
