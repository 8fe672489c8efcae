#include "flowstyle/corpus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/io.hpp"

namespace flowstyle::corpus {

namespace {

constexpr std::uint64_t kFactorStream = 1;
constexpr std::uint64_t kUtteranceStream = 2;
constexpr std::uint64_t kSplitStream = 3;
constexpr int kOffsetRank = 3;
constexpr int kTiltRank = 2;

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error("unknown split '" + s + "'");
}

std::vector<StyleParams> default_styles() {
  return {
      {"reading", 0.05, 0.6, 1.0},          {"broadcasting", 0.10, 0.9, 0.8},
      {"talking", 0.15, 0.5, 1.3},          {"story", 0.08, 1.2, 1.2},
      {"customer-service", 0.20, 0.8, 0.7}, {"poetry", 0.04, 1.5, 1.5},
      {"game", 0.25, 1.4, 1.0},             {"unseen-reading", 0.12, 1.0, 1.1},
  };
}

int CorpusSpec::count_for(int style) const {
  if (style == unseen_style()) return unseen_utterances;
  if (style < static_cast<int>(style_counts.size()) && style_counts[style] > 0) return style_counts[style];
  return utterances_per_style;
}

void CorpusSpec::validate() const {
  if (n_source_styles < 1 || n_target_styles < 1) throw Error("corpus: need at least one source and one target style");
  if (frame_dim < 1 || vocab < 1) throw Error("corpus: frame_dim and vocab must be positive");
  if (min_frames < 1 || max_frames < min_frames) throw Error("corpus: bad frame range");
  if (noise < 0.0) throw Error("corpus: noise must be non-negative");
  for (int s = 0; s < n_train_styles(); ++s)
    if (count_for(s) <= 0) throw Error("corpus: zero utterances for style " + std::to_string(s));
  if (unseen_utterances < 0) throw Error("corpus: negative unseen count");
  if (!styles.empty() && static_cast<int>(styles.size()) != n_styles())
    throw Error("corpus: styles list must have " + std::to_string(n_styles()) + " entries");
  double total = 0.0;
  for (double f : split_fractions) {
    if (f < 0.0) throw Error("corpus: negative split fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("corpus: split fractions must sum to 1");
}

std::vector<const Utterance*> Dataset::select(Split s) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances)
    if (u.split == s) out.push_back(&u);
  return out;
}

const Utterance* Dataset::find(const std::string& id) const {
  for (const auto& u : utterances)
    if (u.id == id) return &u;
  return nullptr;
}

Factors make_factors(const CorpusSpec& spec) {
  const int F = spec.frame_dim;
  const int V = spec.vocab;
  RngStream rng(spec.seed, kFactorStream);
  Factors f;
  f.base.resize(V, F);
  for (Eigen::Index i = 0; i < f.base.size(); ++i) f.base.data()[i] = rng.normal();
  f.direction.resize(F);
  for (int i = 0; i < F; ++i)
    f.direction[i] = F == 1 ? 1.0 : std::cos(std::numbers::pi * i / (F - 1));
  f.styles = spec.styles.empty() ? default_styles() : spec.styles;
  if (static_cast<int>(f.styles.size()) < spec.n_styles()) {
    // More styles than the default table: synthesise the remainder.
    RngStream extra = rng.split(7);
    while (static_cast<int>(f.styles.size()) < spec.n_styles()) {
      StyleParams p;
      p.name = "style" + std::to_string(f.styles.size());
      p.rate = extra.uniform(0.03, 0.25);
      p.amp = extra.uniform(0.5, 1.5);
      p.tempo = extra.uniform(0.7, 1.5);
      f.styles.push_back(p);
    }
  }
  f.styles.resize(spec.n_styles());

  Matrix A(F, kOffsetRank), C(F, kTiltRank);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < C.size(); ++i) C.data()[i] = rng.normal();
  for (int s = 0; s < spec.n_styles(); ++s) {
    Eigen::VectorXd w(kOffsetRank), v(kTiltRank);
    for (int k = 0; k < kOffsetRank; ++k) w(k) = rng.normal();
    for (int k = 0; k < kTiltRank; ++k) v(k) = rng.normal();
    const Eigen::VectorXd off = spec.offset_scale * (A * w) / std::sqrt(double(kOffsetRank));
    const Eigen::VectorXd tilt = (spec.tilt_scale * (C * v)).array() + 1.0;
    f.speakers.push_back({std::vector<double>(off.data(), off.data() + F),
                          std::vector<double>(tilt.data(), tilt.data() + F)});
  }
  return f;
}

int frames_per_token(const StyleParams& style) {
  return std::max(1, static_cast<int>(std::lround(4.0 * style.tempo)));
}

double contour(const StyleParams& style, int t) {
  return style.amp * std::sin(2.0 * std::numbers::pi * style.rate * t);
}

Matrix render_frames(const CorpusSpec& spec, const Factors& factors, const std::vector<int>& tokens,
                     int style_id, int speaker_id, RngStream* noise_rng) {
  if (tokens.empty()) throw Error("render_frames: empty token sequence");
  const int F = spec.frame_dim;
  const StyleParams& st = factors.styles.at(style_id);
  const SpeakerParams& sp = factors.speakers.at(speaker_id);
  const int d = frames_per_token(st);
  const int T = d * static_cast<int>(tokens.size());
  Matrix frames(T, F);
  for (int t = 0; t < T; ++t) {
    const int tok = tokens[t / d];
    if (tok < 1 || tok > spec.vocab) throw Error("render_frames: token id out of range");
    const double c = contour(st, t);
    for (int i = 0; i < F; ++i) {
      double v = factors.base(tok - 1, i) * sp.tilt[i] + sp.offset[i] + c * factors.direction[i];
      if (noise_rng != nullptr && spec.noise > 0.0) v += spec.noise * noise_rng->normal();
      frames(t, i) = to_f32(v);
    }
  }
  return frames;
}

Dataset generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  Dataset data;
  data.spec = spec;
  data.factors = make_factors(spec);
  std::uint64_t index = 0;
  for (int s = 0; s < spec.n_styles(); ++s) {
    const StyleParams& st = data.factors.styles[s];
    const int d = frames_per_token(st);
    const int lo = std::max(1, (spec.min_frames + d - 1) / d);
    const int hi = std::max(lo, spec.max_frames / d);
    for (int n = 0; n < spec.count_for(s); ++n, ++index) {
      RngStream rng(spec.seed, kUtteranceStream + 16 * index);
      Utterance u;
      u.id = "s" + std::to_string(s) + "_" + std::to_string(n);
      u.style_id = s;
      u.speaker_id = s;
      const int L = lo + static_cast<int>(rng.uniform_int(hi - lo + 1));
      for (int j = 0; j < L; ++j) u.tokens.push_back(1 + static_cast<int>(rng.uniform_int(spec.vocab)));
      RngStream noise = rng.split(1);
      u.frames = render_frames(spec, data.factors, u.tokens, s, s, &noise);
      data.utterances.push_back(std::move(u));
    }
  }
  split(data, spec.split_fractions, spec.seed);
  return data;
}

SplitResult split(Dataset& data, const std::array<double, 3>& fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw Error("split: negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("split: fractions must sum to 1");
  const CorpusSpec& spec = data.spec;
  RngStream rng(seed, kSplitStream);
  for (int s = 0; s < spec.n_styles(); ++s) {
    std::vector<Utterance*> members;
    for (auto& u : data.utterances)
      if (u.style_id == s) members.push_back(&u);
    if (s == spec.unseen_style()) {
      for (auto* u : members) u->split = Split::test;
      continue;
    }
    // Fisher-Yates with the counter-based stream.
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.uniform_int(i)]);
    const auto n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::lround(fractions[0] * n));
    const auto n_val = std::min(members.size() - n_train, static_cast<std::size_t>(std::lround(fractions[1] * n)));
    const std::size_t n_test = members.size() - n_train - n_val;
    if (n_train == 0 || n_val == 0 || n_test == 0)
      throw Error("split: style " + std::to_string(s) + " leaves an empty split");
    for (std::size_t i = 0; i < members.size(); ++i)
      members[i]->split = i < n_train ? Split::train : i < n_train + n_val ? Split::val : Split::test;
  }
  SplitResult r;
  r.train = data.select(Split::train);
  r.val = data.select(Split::val);
  r.test = data.select(Split::test);
  return r;
}

std::pair<const Utterance*, const Utterance*> sample_training_pair(
    const std::vector<const Utterance*>& pool, const CorpusSpec& spec, RngStream& rng) {
  std::vector<const Utterance*> src, tgt;
  for (const auto* u : pool) {
    if (spec.is_source(u->style_id)) src.push_back(u);
    else if (spec.is_target(u->style_id)) tgt.push_back(u);
  }
  if (src.empty()) throw Error("sample_training_pair: no source-domain utterances");
  if (tgt.empty()) throw Error("sample_training_pair: no target-domain utterances");
  const auto* a = src[rng.uniform_int(src.size())];
  const auto* b = tgt[rng.uniform_int(tgt.size())];
  return {a, b};
}

nlohmann::json spec_to_json(const CorpusSpec& spec) {
  nlohmann::json styles = nlohmann::json::array();
  for (const auto& s : spec.styles) styles.push_back({{"name", s.name}, {"rate", s.rate}, {"amp", s.amp}, {"tempo", s.tempo}});
  return {{"n_source_styles", spec.n_source_styles},
          {"n_target_styles", spec.n_target_styles},
          {"frame_dim", spec.frame_dim},
          {"vocab", spec.vocab},
          {"utterances_per_style", spec.utterances_per_style},
          {"unseen_utterances", spec.unseen_utterances},
          {"style_counts", spec.style_counts},
          {"min_frames", spec.min_frames},
          {"max_frames", spec.max_frames},
          {"noise", spec.noise},
          {"offset_scale", spec.offset_scale},
          {"tilt_scale", spec.tilt_scale},
          {"split_fractions", spec.split_fractions},
          {"styles", styles},
          {"seed", spec.seed}};
}

CorpusSpec spec_from_json(const nlohmann::json& j) {
  CorpusSpec s;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n_source_styles", s.n_source_styles);
  get("n_target_styles", s.n_target_styles);
  get("frame_dim", s.frame_dim);
  get("vocab", s.vocab);
  get("utterances_per_style", s.utterances_per_style);
  get("unseen_utterances", s.unseen_utterances);
  get("style_counts", s.style_counts);
  get("min_frames", s.min_frames);
  get("max_frames", s.max_frames);
  get("noise", s.noise);
  get("offset_scale", s.offset_scale);
  get("tilt_scale", s.tilt_scale);
  get("split_fractions", s.split_fractions);
  get("seed", s.seed);
  if (j.contains("styles")) {
    for (const auto& e : j.at("styles")) {
      StyleParams p;
      p.name = e.value("name", std::string{});
      p.rate = e.value("rate", p.rate);
      p.amp = e.value("amp", p.amp);
      p.tempo = e.value("tempo", p.tempo);
      s.styles.push_back(p);
    }
  }
  return s;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::string blob;
  nlohmann::json records = nlohmann::json::array();
  const int F = data.spec.frame_dim;
  for (const auto& u : data.utterances) {
    if (u.frames.cols() != F) throw ShapeError("save_dataset", "frame width differs from frame_dim");
    records.push_back({{"id", u.id},
                       {"style_id", u.style_id},
                       {"speaker_id", u.speaker_id},
                       {"split", to_string(u.split)},
                       {"tokens", u.tokens},
                       {"n_frames", u.n_frames()},
                       {"byte_offset", blob.size()}});
    for (Eigen::Index i = 0; i < u.frames.size(); ++i) append_le_f32(blob, static_cast<float>(u.frames.data()[i]));
  }
  std::array<int, 3> counts{0, 0, 0};
  for (const auto& u : data.utterances) ++counts[static_cast<int>(u.split)];
  nlohmann::json manifest = {
      {"format", "flowstyle-corpus"},
      {"version", 1},
      {"spec", spec_to_json(data.spec)},
      {"counts", {{"total", data.utterances.size()}, {"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}}},
      {"frames_file", "frames.bin"},
      {"utterances", records}};
  write_file_atomic(dir / "frames.bin", blob);
  write_file_atomic(dir / "manifest.json", manifest.dump(1));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  if (manifest.value("version", 0) != 1) throw Error("load_dataset: unsupported manifest version");
  const std::string blob = read_file(dir / manifest.value("frames_file", std::string("frames.bin")));
  Dataset data;
  data.spec = spec_from_json(manifest.at("spec"));
  data.factors = make_factors(data.spec);
  const int F = data.spec.frame_dim;
  std::size_t expected_offset = 0;
  for (const auto& r : manifest.at("utterances")) {
    Utterance u;
    u.id = r.at("id").get<std::string>();
    u.style_id = r.at("style_id").get<int>();
    u.speaker_id = r.at("speaker_id").get<int>();
    u.split = split_from_string(r.at("split").get<std::string>());
    u.tokens = r.at("tokens").get<std::vector<int>>();
    const int T = r.at("n_frames").get<int>();
    const auto off = r.at("byte_offset").get<std::size_t>();
    if (off != expected_offset) throw Error("load_dataset: overlapping or non-contiguous frame offsets at " + u.id);
    const std::size_t bytes = std::size_t(T) * F * 4;
    if (off + bytes > blob.size()) throw Error("load_dataset: frames.bin truncated at " + u.id);
    u.frames.resize(T, F);
    for (Eigen::Index i = 0; i < u.frames.size(); ++i) u.frames.data()[i] = read_le_f32(blob.data() + off + 4 * i);
    expected_offset = off + bytes;
    data.utterances.push_back(std::move(u));
  }
  if (manifest.at("counts").at("total").get<std::size_t>() != data.utterances.size())
    throw Error("load_dataset: record count does not match header");
  return data;
}

}  // namespace flowstyle::corpus
