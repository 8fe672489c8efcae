#include <cmath>

#include "doctest.h"

#include "flowstyle/model/adversaries.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/gradcheck.hpp"
#include "flowstyle/numerics/ops.hpp"

using namespace flowstyle;

namespace {

Matrix random_frames(RngStream& rng, int t, int f) {
  Matrix m(t, f);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

StyleConfig small_style() {
  StyleConfig c;
  c.frame_dim = 16;
  c.frame_hidden = 8;
  c.gru = 8;
  c.latent = 4;
  c.context = 4;
  c.embed = 4;
  c.flow_steps = 2;
  c.made_hidden = 8;
  c.fc1 = 8;
  c.fc2 = 8;
  return c;
}

corpus::CorpusSpec small_corpus() {
  corpus::CorpusSpec s;
  s.utterances_per_style = 20;
  s.unseen_utterances = 6;
  s.split_fractions = {0.8, 0.1, 0.1};
  return s;
}

}  // namespace

TEST_CASE("discriminator: probability range, determinism, padding") {
  const Discriminator d(DiscConfig{4, 6, 5});
  ParamStore ps;
  RngStream init(1, 1);
  d.init(ps, init);
  RngStream rng(2, 2);
  const Matrix a = random_frames(rng, 7, 4);
  const Matrix b = random_frames(rng, 3, 4);
  const double p = d.discriminate(ps, a);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(d.discriminate(ps, a) == p);

  std::vector<const Matrix*> both{&a, &b};
  const SeqBatch x = pack_frames(both);
  Graph g(false);
  const Matrix probs = d.prob(g, ps, g.constant(x.frames), x.lengths, x.steps).value();
  REQUIRE(probs.cols() == 2);
  CHECK(std::abs(probs(0, 0) - p) < 1e-12);
  CHECK(std::abs(probs(0, 1) - d.discriminate(ps, b)) < 1e-12);
}

TEST_CASE("discriminator ignores a constant frame offset") {
  const Discriminator d(DiscConfig{4, 6, 5});
  ParamStore ps;
  RngStream init(3, 3);
  d.init(ps, init);
  RngStream rng(4, 4);
  const Matrix a = random_frames(rng, 6, 4);
  const Matrix shifted = a.rowwise() + Eigen::RowVector4d(0.5, -1.0, 2.0, 0.25);
  CHECK(std::abs(d.discriminate(ps, a) - d.discriminate(ps, shifted)) < 1e-12);
}

TEST_CASE("discriminator gradients with respect to parameters and frames") {
  const Discriminator d(DiscConfig{3, 4, 4});
  ParamStore ps;
  RngStream init(5, 5);
  d.init(ps, init);
  RngStream rng(6, 6);
  for (auto& [name, t] : ps.entries())
    for (double& v : t.data()) v += 0.1 * rng.normal();
  const Matrix a = random_frames(rng, 5, 3);
  const Matrix b = random_frames(rng, 4, 3);
  std::vector<const Matrix*> both{&a, &b};
  const SeqBatch x = pack_frames(both);
  ps.add("input/frames", Tensor::from_matrix(x.frames));
  auto loss = [&](Graph& g) {
    const Var p = d.prob(g, ps, g.param(ps, "input/frames"), x.lengths, x.steps);
    return ad::sum(ad::log(p));
  };
  const GradCheckReport rep = check_gradients(loss, ps, 1e-6, 1e-5);
  CHECK(rep.passed());
}

TEST_CASE("domain model: deterministic probability with a single output") {
  const DomainModel ds(small_style());
  CHECK(ds.encoder().config().classes == 1);
  ParamStore ps;
  RngStream init(7, 7);
  ds.init(ps, init);
  RngStream rng(8, 8);
  const Matrix a = random_frames(rng, 9, 16);
  const double p = ds.style_domain_prob(ps, a);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(ds.style_domain_prob(ps, a) == p);
}

TEST_CASE("pretrain_ds: subset size, report and determinism") {
  const corpus::Dataset data = corpus::generate_corpus(small_corpus());
  const DomainModel ds(small_style());
  PretrainOptions opt;
  opt.steps = 30;
  opt.batch_size = 8;

  auto run = [&] {
    ParamStore ps;
    RngStream init(9, 9);
    ds.init(ps, init);
    const PretrainReport rep = pretrain_ds(ds, ps, data, opt);
    return std::pair{rep, ps.fingerprint()};
  };
  const auto [rep, fp] = run();
  // 16 training utterances per style, 20% of each rounded.
  CHECK(rep.train_utterances == 7 * 3);
  CHECK(rep.val_utterances == 7 * 2);
  CHECK(rep.val_accuracy >= 0.0);
  CHECK(rep.val_accuracy <= 1.0);
  CHECK(std::isfinite(rep.train_loss));
  const auto [rep2, fp2] = run();
  CHECK(fp == fp2);
  CHECK(rep2.val_accuracy == rep.val_accuracy);
}

TEST_CASE("pretrain_ds rejects a subset with one domain") {
  corpus::Dataset data = corpus::generate_corpus(small_corpus());
  for (auto& u : data.utterances)
    if (data.spec.is_target(u.style_id)) u.split = corpus::Split::val;
  const DomainModel ds(small_style());
  ParamStore ps;
  RngStream init(10, 10);
  ds.init(ps, init);
  CHECK_THROWS_AS(pretrain_ds(ds, ps, data, PretrainOptions{}), Error);
}

TEST_CASE("domain accuracy on an empty list is zero") {
  const corpus::Dataset data = corpus::generate_corpus(small_corpus());
  const DomainModel ds(small_style());
  ParamStore ps;
  RngStream init(11, 11);
  ds.init(ps, init);
  CHECK(domain_accuracy(ds, ps, data.spec, {}) == 0.0);
}
