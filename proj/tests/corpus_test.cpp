#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"

#include "flowstyle/corpus/corpus.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/io.hpp"

using namespace flowstyle;
using namespace flowstyle::corpus;

namespace {

CorpusSpec small_spec() {
  CorpusSpec s;
  s.utterances_per_style = 20;
  s.unseen_utterances = 6;
  s.split_fractions = {0.8, 0.1, 0.1};
  return s;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("flowstyle_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("render: no noise is deterministic") {
  CorpusSpec spec;
  spec.noise = 0.0;
  const Factors f = make_factors(spec);
  const std::vector<int> tokens{3, 1, 7, 7, 24};
  CHECK(render_frames(spec, f, tokens, 2, 2, nullptr) == render_frames(spec, f, tokens, 2, 2, nullptr));
}

TEST_CASE("render: speakers differ only through offset and tilt") {
  CorpusSpec spec;
  spec.noise = 0.0;
  const Factors f = make_factors(spec);
  const std::vector<int> tokens{5, 9, 2};
  const int style = 1;
  const Matrix a = render_frames(spec, f, tokens, style, 0, nullptr);
  const Matrix b = render_frames(spec, f, tokens, style, 3, nullptr);
  REQUIRE(a.rows() == b.rows());
  const int per = frames_per_token(f.styles[style]);
  double worst = 0.0;
  for (int t = 0; t < a.rows(); ++t) {
    const int tok = tokens[t / per];
    for (int i = 0; i < spec.frame_dim; ++i) {
      const double base = f.base(tok - 1, i);
      const double expected = base * (f.speakers[3].tilt[i] - f.speakers[0].tilt[i]) + f.speakers[3].offset[i] -
                              f.speakers[0].offset[i];
      worst = std::max(worst, std::abs((b(t, i) - a(t, i)) - expected));
    }
  }
  CHECK(worst < 1e-5);  // frames are stored at f32 precision
}

TEST_CASE("render: styles differ only through the contour") {
  CorpusSpec spec;
  spec.noise = 0.0;
  const Factors f = make_factors(spec);
  // reading and game share tempo 1.0, hence length.
  const int sa = 0, sb = 6;
  REQUIRE(frames_per_token(f.styles[sa]) == frames_per_token(f.styles[sb]));
  const std::vector<int> tokens{1, 2, 3, 4, 5, 6};
  const Matrix a = render_frames(spec, f, tokens, sa, 0, nullptr);
  const Matrix b = render_frames(spec, f, tokens, sb, 0, nullptr);
  double worst = 0.0;
  for (int t = 0; t < a.rows(); ++t)
    for (int i = 0; i < spec.frame_dim; ++i) {
      const double expected = (contour(f.styles[sb], t) - contour(f.styles[sa], t)) * f.direction[i];
      worst = std::max(worst, std::abs((b(t, i) - a(t, i)) - expected));
    }
  CHECK(worst < 1e-5);
}

TEST_CASE("frames per token follow tempo") {
  CHECK(frames_per_token({"x", 0.1, 1.0, 1.0}) == 4);
  CHECK(frames_per_token({"x", 0.1, 1.0, 0.7}) == 3);
  CHECK(frames_per_token({"x", 0.1, 1.0, 1.5}) == 6);
}

TEST_CASE("generate: defaults and determinism") {
  const CorpusSpec spec;
  const Dataset a = generate_corpus(spec);
  const Dataset b = generate_corpus(spec);
  CHECK(a.utterances.size() == 7u * 200u + 40u);
  REQUIRE(a.utterances.size() == b.utterances.size());
  for (std::size_t i = 0; i < a.utterances.size(); ++i) {
    CHECK(a.utterances[i].frames == b.utterances[i].frames);
    CHECK(a.utterances[i].split == b.utterances[i].split);
  }
  for (const auto& u : a.utterances) {
    CHECK(u.n_frames() >= spec.min_frames);
    CHECK(u.n_frames() <= spec.max_frames);
    CHECK(u.frames.cols() == spec.frame_dim);
    for (int t : u.tokens) CHECK((t >= 1 && t <= spec.vocab));
  }
}

TEST_CASE("generate: a different seed changes frames") {
  CorpusSpec spec = small_spec();
  const Dataset a = generate_corpus(spec);
  spec.seed = 2;
  const Dataset b = generate_corpus(spec);
  CHECK_FALSE(a.utterances[0].frames == b.utterances[0].frames);
}

TEST_CASE("generate: zero utterances per style is rejected") {
  CorpusSpec spec;
  spec.utterances_per_style = 0;
  CHECK_THROWS_AS(generate_corpus(spec), Error);
}

TEST_CASE("generate: imbalance knob") {
  CorpusSpec spec = small_spec();
  spec.style_counts = {0, 0, 0, 0, 0, 10, 0};
  const Dataset d = generate_corpus(spec);
  std::map<int, int> counts;
  for (const auto& u : d.utterances) ++counts[u.style_id];
  CHECK(counts[5] == 10);
  CHECK(counts[0] == 20);
}

TEST_CASE("disjointness: one speaker per training style, unseen pair test-only") {
  const Dataset d = generate_corpus(CorpusSpec{});
  std::map<int, std::set<int>> speakers_of;
  std::set<int> speakers;
  for (const auto* u : d.select(Split::train)) {
    speakers_of[u->style_id].insert(u->speaker_id);
    CHECK(u->style_id != d.spec.unseen_style());
    CHECK(u->speaker_id != d.spec.unseen_style());
  }
  for (const auto& [style, s] : speakers_of) {
    CHECK(s.size() == 1);
    CHECK(speakers.insert(*s.begin()).second);
  }
  for (const auto& u : d.utterances)
    if (u.style_id == d.spec.unseen_style()) CHECK(u.split == Split::test);
}

TEST_CASE("split: 100 per style gives 90/5/5") {
  CorpusSpec spec;
  spec.utterances_per_style = 100;
  Dataset d = generate_corpus(spec);
  const SplitResult r = split(d, {0.90, 0.05, 0.05}, 3);
  for (int s = 0; s < spec.n_train_styles(); ++s) {
    int n[3] = {0, 0, 0};
    for (const auto& u : d.utterances)
      if (u.style_id == s) ++n[static_cast<int>(u.split)];
    CHECK(n[0] == 90);
    CHECK(n[1] == 5);
    CHECK(n[2] == 5);
  }
  CHECK(r.train.size() == 630);
}

TEST_CASE("split: degenerate fractions and determinism") {
  Dataset d = generate_corpus(small_spec());
  CHECK_THROWS_AS(split(d, {1.0, 0.0, 0.0}, 1), Error);
  CHECK_THROWS_AS(split(d, {0.5, 0.2, 0.2}, 1), Error);
  const auto ids = [](const std::vector<const Utterance*>& v) {
    std::vector<std::string> out;
    for (const auto* u : v) out.push_back(u->id);
    return out;
  };
  const auto a = ids(split(d, {0.8, 0.1, 0.1}, 9).val);
  const auto b = ids(split(d, {0.8, 0.1, 0.1}, 9).val);
  const auto c = ids(split(d, {0.8, 0.1, 0.1}, 10).val);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("sample_training_pair") {
  const Dataset d = generate_corpus(CorpusSpec{});
  const auto* s = &d.utterances[0];
  const Utterance* t = nullptr;
  for (const auto& u : d.utterances)
    if (d.spec.is_target(u.style_id)) {
      t = &u;
      break;
    }
  REQUIRE(t != nullptr);
  RngStream rng(4, 4);
  SUBCASE("single pair") {
    auto [a, b] = sample_training_pair({s, t}, d.spec, rng);
    CHECK(a == s);
    CHECK(b == t);
  }
  SUBCASE("empty domain") { CHECK_THROWS_AS(sample_training_pair({s}, d.spec, rng), Error); }
  SUBCASE("target styles uniform within 3 sigma") {
    const auto pool = d.select(Split::train);
    std::map<int, int> hits;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      auto [a, b] = sample_training_pair(pool, d.spec, rng);
      CHECK(d.spec.is_source(a->style_id));
      ++hits[b->style_id];
    }
    const double p = 1.0 / 3.0;
    const double sigma = std::sqrt(n * p * (1 - p));
    for (int st = 4; st < 7; ++st) CHECK(std::abs(hits[st] - n * p) < 3 * sigma);
  }
}

TEST_CASE("save/load round-trip is bit exact") {
  const Dataset d = generate_corpus(small_spec());
  const auto dir = temp_dir("corpus_rt");
  save_dataset(d, dir);
  const Dataset e = load_dataset(dir);
  REQUIRE(e.utterances.size() == d.utterances.size());
  for (std::size_t i = 0; i < d.utterances.size(); ++i) {
    const auto& a = d.utterances[i];
    const auto& b = e.utterances[i];
    CHECK(a.id == b.id);
    CHECK(a.tokens == b.tokens);
    CHECK(a.frames == b.frames);
    CHECK(a.style_id == b.style_id);
    CHECK(a.speaker_id == b.speaker_id);
    CHECK(a.split == b.split);
  }
  CHECK(e.spec.seed == d.spec.seed);

  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  std::int64_t next = 0;
  for (const auto& r : manifest["utterances"]) {
    CHECK(r["byte_offset"].get<std::int64_t>() == next);
    next += r["n_frames"].get<std::int64_t>() * d.spec.frame_dim * 4;
  }
  CHECK(std::filesystem::file_size(dir / "frames.bin") == static_cast<std::uintmax_t>(next));
  CHECK(manifest["utterances"].size() == d.utterances.size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("load rejects a truncated frame blob") {
  const Dataset d = generate_corpus(small_spec());
  const auto dir = temp_dir("corpus_trunc");
  save_dataset(d, dir);
  std::filesystem::resize_file(dir / "frames.bin", 100);
  CHECK_THROWS_AS(load_dataset(dir), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("spec json round-trip") {
  CorpusSpec s = small_spec();
  s.noise = 0.0;
  s.seed = 77;
  const CorpusSpec t = spec_from_json(spec_to_json(s));
  CHECK(spec_to_json(t) == spec_to_json(s));
}
