#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"

#include "flowstyle/numerics/checkpoint.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/train/trainer.hpp"

using namespace flowstyle;

namespace {

const corpus::Dataset& tiny_data() {
  static const corpus::Dataset d = [] {
    corpus::CorpusSpec s;
    s.utterances_per_style = 12;
    s.unseen_utterances = 4;
    s.split_fractions = {0.8, 0.1, 0.1};
    return corpus::generate_corpus(s);
  }();
  return d;
}

ModelConfig tiny_config() {
  ModelConfig c = model_config_for(tiny_data());
  c.style = {c.style.frame_dim, 6, 6, 4, 4, 4, 2, 6, 6, 6, c.style.classes};
  c.ds = c.style;
  c.speaker = {c.speaker.frame_dim, 6, 2, 6, 6, 6, 4, c.speaker.classes};
  c.synth.token_embed = 6;
  c.synth.text_gru = 4;
  c.synth.prenet = 6;
  c.synth.decoder = 8;
  c.synth.attention = 6;
  c.synth.loc_filters = 2;
  c.synth.loc_width = 3;
  c.disc = {c.disc.frame_dim, 6, 6};
  return harmonize(c);
}

TrainConfig tiny_train(int steps) {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = 4;
  t.seed = 5;
  t.checkpoint_every = 0;
  return t;
}

ParamStore initial(const Models& m) {
  ParamStore ps;
  m.init(ps, 3);
  m.init_ds(ps, 4);
  return ps;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("flowstyle_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("train config json round-trip and effective weights") {
  TrainConfig t = tiny_train(17);
  t.drop_cyc = true;
  t.weights.gamma = 2.5;
  const TrainConfig u = train_config_from_json(to_json(t));
  CHECK(to_json(u) == to_json(t));
  const LossWeights w = u.effective_weights();
  CHECK(w.lambda == 0.0);
  CHECK(w.gamma == 2.5);
  CHECK(w.alpha == 1.0);
  t.drop_cls = true;
  t.drop_adv = true;
  t.drop_dis = true;
  const LossWeights z = t.effective_weights();
  CHECK(z.beta == 0.0);
  CHECK(z.gamma == 0.0);
  CHECK(z.kappa == 0.0);
  CHECK(z.omega == 0.0);
  CHECK_FALSE(t.needs_ds());
  CHECK_FALSE(t.needs_transfer());
}

TEST_CASE("pair batch packs sources before targets") {
  const auto& d = tiny_data();
  const auto pool = d.select(corpus::Split::train);
  RngStream rng(1, 1);
  std::vector<const corpus::Utterance*> utts(4);
  for (int i = 0; i < 2; ++i) {
    auto [s, t] = corpus::sample_training_pair(pool, d.spec, rng);
    utts[i] = s;
    utts[2 + i] = t;
  }
  const PairBatch pb = make_pair_batch(utts, Matrix::Zero(4, 4));
  CHECK(pb.pairs == 2);
  CHECK(pb.x.batch == 4);
  CHECK(pb.src_tokens.batch == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(d.spec.is_source(pb.styles[i]));
    CHECK(d.spec.is_target(pb.styles[2 + i]));
    CHECK(pb.tgt_lengths[i] == utts[2 + i]->n_frames());
  }
  utts.pop_back();
  CHECK_THROWS_AS(make_pair_batch(utts, Matrix::Zero(4, 3)), Error);
}

TEST_CASE("losses at initialisation are finite and positive") {
  const Models m(tiny_config());
  Trainer tr(m, tiny_train(1), tiny_data(), initial(m));
  const StepRecord r = tr.step();
  const LossBreakdown& l = r.losses;
  for (double v : {l.rec, l.adv, l.dis, l.cyc, l.stycls, l.spkcls, l.total}) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  CHECK(l.rec > 0.0);
  CHECK(l.total > 0.0);
  CHECK(r.step == 1);
}

TEST_CASE("free-running real side changes the training trajectory") {
  const Models m(tiny_config());
  const ParamStore init = initial(m);
  TrainConfig t = tiny_train(2);
  t.free_running_real = true;
  const TrainResult r = train(m, t, tiny_data(), init, {});
  CHECK_FALSE(r.aborted);
  CHECK(std::isfinite(r.history.back().losses.adv));
  CHECK_FALSE(r.params == train(m, tiny_train(2), tiny_data(), init, {}).params);
}

TEST_CASE("zero steps leaves the initialisation untouched") {
  const Models m(tiny_config());
  const ParamStore init = initial(m);
  const auto dir = temp_dir("train_zero");
  const TrainResult res = train(m, tiny_train(0), tiny_data(), init, dir);
  CHECK_FALSE(res.aborted);
  CHECK(res.history.empty());
  CHECK(res.params == init);
  const Checkpoint ck = load_checkpoint(dir / "final.bin");
  CHECK(ck.meta["step"] == 0);
  for (const auto& [name, t] : init) CHECK(ck.params.at(name) == t);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training is bit-for-bit deterministic") {
  const Models m(tiny_config());
  const TrainResult a = train(m, tiny_train(3), tiny_data(), initial(m), {});
  const TrainResult b = train(m, tiny_train(3), tiny_data(), initial(m), {});
  CHECK(a.params == b.params);
  REQUIRE(a.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.history[i].losses.total == b.history[i].losses.total);
  TrainConfig other = tiny_train(3);
  other.seed = 6;
  const TrainResult c = train(m, other, tiny_data(), initial(m), {});
  CHECK_FALSE(a.params == c.params);
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  const Models m(tiny_config());
  const TrainResult straight = train(m, tiny_train(4), tiny_data(), initial(m), {});

  const auto dir = temp_dir("train_resume");
  TrainConfig first = tiny_train(2);
  first.checkpoint_every = 2;
  train(m, first, tiny_data(), initial(m), dir);
  REQUIRE(std::filesystem::exists(dir / "ckpt_2.bin"));
  const TrainResult resumed = train(m, tiny_train(4), tiny_data(), initial(m), dir, nullptr, dir / "ckpt_2.bin");
  CHECK(resumed.history.size() == 2);
  CHECK(resumed.params == straight.params);
  CHECK(resumed.history.back().losses.total == straight.history.back().losses.total);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dropped terms contribute no gradient") {
  const Models m(tiny_config());
  const ParamStore init = initial(m);
  auto changed = [&](const ParamStore& after, const std::string& prefix) {
    for (const auto& [name, t] : init.subset(prefix))
      if (!(after.at(name) == t)) return true;
    return false;
  };
  SUBCASE("classification") {
    TrainConfig t = tiny_train(2);
    t.drop_cls = true;
    const TrainResult r = train(m, t, tiny_data(), init, {});
    CHECK_FALSE(changed(r.params, "style_encoder/out/"));
    CHECK_FALSE(changed(r.params, "speaker_encoder/out/"));
    CHECK(r.history[0].losses.stycls == 0.0);
    const TrainResult full = train(m, tiny_train(2), tiny_data(), init, {});
    CHECK(changed(full.params, "style_encoder/out/"));
    CHECK(changed(full.params, "speaker_encoder/out/"));
  }
  SUBCASE("adversarial") {
    TrainConfig t = tiny_train(2);
    t.drop_adv = true;
    const TrainResult r = train(m, t, tiny_data(), init, {});
    CHECK_FALSE(changed(r.params, "disc_D/"));
    CHECK(r.history[0].losses.adv == 0.0);
  }
  SUBCASE("domain model is never updated") {
    const TrainResult r = train(m, tiny_train(2), tiny_data(), init, {});
    CHECK(r.params.subset("disc_Ds/").fingerprint() == init.subset("disc_Ds/").fingerprint());
    CHECK(changed(r.params, "disc_D/"));
    CHECK(changed(r.params, "synthesizer/"));
  }
}

TEST_CASE("a non-finite loss aborts training") {
  const Models m(tiny_config());
  ParamStore ps = initial(m);
  for (double& v : ps.at("synthesizer/stop_out/b").data()) v = std::numeric_limits<double>::quiet_NaN();
  const auto dir = temp_dir("train_nan");
  const TrainResult r = train(m, tiny_train(3), tiny_data(), ps, dir);
  CHECK(r.aborted);
  CHECK_FALSE(r.error.empty());
  CHECK_FALSE(std::filesystem::exists(dir / "final.bin"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("disable_iaf removes the flow but not from the domain model") {
  TrainConfig t;
  t.disable_iaf = true;
  const ModelConfig c = apply_train_flags(tiny_config(), t);
  CHECK(c.style.flow_steps == 0);
  CHECK(c.ds.flow_steps == tiny_config().ds.flow_steps);
}
