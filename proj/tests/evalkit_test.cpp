#include <cmath>
#include <sstream>

#include "doctest.h"

#include "flowstyle/eval/evalkit.hpp"
#include "flowstyle/numerics/error.hpp"

using namespace flowstyle;
using Vec = Eigen::VectorXd;

namespace {

const corpus::Dataset& small_data() {
  static const corpus::Dataset d = [] {
    corpus::CorpusSpec s;
    s.utterances_per_style = 30;
    s.unseen_utterances = 6;
    s.split_fractions = {0.8, 0.1, 0.1};
    return corpus::generate_corpus(s);
  }();
  return d;
}

StyleConfig oracle_arch() {
  StyleConfig c;
  c.frame_hidden = 16;
  c.gru = 16;
  c.latent = 6;
  c.context = 6;
  c.embed = 6;
  c.made_hidden = 12;
  c.fc1 = 16;
  c.fc2 = 16;
  return c;
}

const Oracle& small_oracle() {
  static const Oracle o = [] {
    OracleOptions opt;
    opt.steps = 600;
    return train_oracle_style_classifier(small_data(), oracle_arch(), opt);
  }();
  return o;
}

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("cosine closed forms") {
  CHECK(cosine(vec({1, 0}), vec({0, 1})) == doctest::Approx(0.0));
  CHECK(cosine(vec({1, 2}), vec({2, 4})) == doctest::Approx(1.0));
  CHECK(cosine(vec({1, 1}), vec({-1, -1})) == doctest::Approx(-1.0));
  CHECK(cosine(vec({1, 0}), vec({1, 1})) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK_THROWS_AS(cosine(vec({0, 0}), vec({1, 1})), Error);
  CHECK_THROWS_AS(cosine(vec({1, 0, 0}), vec({1, 1})), ShapeError);
}

TEST_CASE("speaker preservation: hand-built embeddings") {
  Matrix tr(2, 2), same(2, 2), a(2, 2), b(2, 2);
  tr << 1, 1, 0, 0;
  same << 1, 0, 0.1, 1;   // column 0 close, column 1 orthogonal
  a << 0, 1, 1, 0.2;      // column 1 beats the same-speaker reference
  b << -1, -1, 0, 0;
  const SpeakerPreservation sp = speaker_preservation(tr, same, {a, b});
  CHECK(sp.count == 2);
  CHECK(sp.ranking_rate == doctest::Approx(0.5));
  CHECK(sp.mean_same == doctest::Approx((cosine(vec({1, 0}), vec({1, 0.1})) + 0.0) / 2.0));
  const double cross = (0.0 + cosine(vec({1, 0}), vec({1, 0.2})) - 1.0 - 1.0) / 4.0;
  CHECK(sp.mean_cross == doctest::Approx(cross));
  CHECK(speaker_preservation(Matrix(2, 0), Matrix(2, 0), {}).count == 0);
}

TEST_CASE("cluster separation closed form") {
  Matrix e(2, 4);
  e << 0, 2, 10, 12, 0, 0, 0, 0;
  const auto [between, within] = cluster_separation(e, {0, 0, 1, 1});
  CHECK(between == doctest::Approx(10.0));
  CHECK(within == doctest::Approx(1.0));
}

TEST_CASE("pca projection recovers a dominant axis") {
  Matrix pts(3, 5);
  for (int i = 0; i < 5; ++i) pts.col(i) = vec({double(i), 2.0 * i, 0.01 * (i % 2)});
  const Matrix xy = pca_project(pts, pts);
  CHECK(xy.rows() == 2);
  CHECK(xy.row(0).cwiseAbs().maxCoeff() == doctest::Approx(2.0 * std::sqrt(5.0)));
  CHECK(xy.row(1).cwiseAbs().maxCoeff() < 0.01);
  CHECK(std::abs(xy.row(0).sum()) < 1e-9);
  CHECK_THROWS_AS(pca_project(pts, Matrix::Zero(2, 1)), ShapeError);
}

TEST_CASE("embedding export format") {
  std::vector<EmbeddingRow> rows;
  for (int i = 0; i < 4; ++i) rows.push_back({"u" + std::to_string(i), i % 2, i, i == 3, vec({double(i), 1.0, -i * 0.5})});
  std::istringstream in(export_embeddings_tsv(rows));
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("id\tstyle\tspeaker\tkind", 0) == 0);
  int n = 0;
  while (std::getline(in, line)) ++n;
  CHECK(n == 4);
  CHECK(export_embeddings_tsv({}).empty());
}

TEST_CASE("oracle learns real styles and ignores shuffled labels") {
  const Oracle& o = small_oracle();
  CHECK(o.val_accuracy > 1.0 / 7.0);

  std::vector<const Matrix*> frames;
  std::vector<int> labels;
  for (const auto* u : small_data().select(corpus::Split::test))
    if (u->style_id < small_data().spec.n_train_styles()) {
      frames.push_back(&u->frames);
      labels.push_back(u->style_id);
    }
  // Chance is 1/7; this corpus is too small for the full-size accuracy.
  CHECK(style_transfer_accuracy(o, frames, labels) >= 0.5);
  CHECK(oracle_predict(o, frames) == oracle_predict(o, frames));
  CHECK_THROWS_AS(style_transfer_accuracy(o, frames, {}), Error);
  CHECK_THROWS_AS(style_transfer_accuracy(o, {}, {}), Error);

  OracleOptions opt;
  opt.steps = 600;
  opt.shuffle_labels = true;
  const Oracle shuffled = train_oracle_style_classifier(small_data(), oracle_arch(), opt);
  CHECK(style_transfer_accuracy(shuffled, frames, labels) < 0.35);
}

TEST_CASE("evaluate an untrained system end to end") {
  const auto& d = small_data();
  ModelConfig mc = model_config_for(d);
  mc.style = oracle_arch();
  mc.ds = mc.style;
  mc.speaker.lstm = 8;
  mc.speaker.hidden = 8;
  mc.synth.decoder = 16;
  mc.synth.max_frames = 30;
  mc = harmonize(mc);
  const Models m(mc);
  ParamStore ps;
  m.init(ps, 1);
  EvalOptions opt;
  opt.max_unseen = 3;
  const EvalReport r = evaluate(m, ps, d, small_oracle(), opt);
  CHECK(r.seen_transfers > 0);
  CHECK(r.seen_transfers % 3 == 0);
  CHECK(r.unseen_transfers == 3 * 3);
  CHECK(r.style_accuracy.count("seen") == 1);
  CHECK(r.style_accuracy.count("unseen") == 1);
  for (const auto& [k, v] : r.style_accuracy) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(r.seen.count == r.seen_transfers);
  CHECK(r.reconstruction_mse > 0.0);
  CHECK(std::isfinite(r.frame_variance));
  const auto j = to_json(r);
  CHECK(j["counts"]["seen_transfers"] == r.seen_transfers);
  const EvalReport again = evaluate(m, ps, d, small_oracle(), opt);
  CHECK(to_json(again) == j);
}
