#include "flowstyle/model/models.hpp"

#include <algorithm>

#include "flowstyle/numerics/error.hpp"

namespace flowstyle {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::size_t kChunk = 32;

template <typename Fn>
Matrix chunked(std::size_t n, int rows, Fn&& fn) {
  Matrix out(rows, static_cast<Eigen::Index>(n));
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t len = std::min(kChunk, n - start);
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) = fn(start, len);
  }
  return out;
}

}  // namespace

ModelConfig harmonize(ModelConfig c) {
  const int F = c.synth.frame_dim;
  c.style.frame_dim = F;
  c.speaker.frame_dim = F;
  c.disc.frame_dim = F;
  c.ds.frame_dim = F;
  c.synth.style_dim = c.style.embed;
  c.synth.speaker_dim = c.speaker.embed;
  return c;
}

ModelConfig model_config_for(const corpus::Dataset& data) {
  ModelConfig c;
  c.synth.frame_dim = data.spec.frame_dim;
  c.synth.vocab = data.spec.vocab;
  c.style.classes = data.spec.n_train_styles();
  c.speaker.classes = data.spec.n_train_styles();
  int longest = 1;
  for (const auto& u : data.utterances)
    if (u.split == corpus::Split::train) longest = std::max(longest, u.n_frames());
  c.synth.max_frames = 2 * longest;
  return harmonize(c);
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"style", to_json(c.style)}, {"speaker", to_json(c.speaker)}, {"synth", to_json(c.synth)},
          {"disc", to_json(c.disc)}, {"ds", to_json(c.ds)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  if (j.contains("style")) c.style = style_config_from_json(j["style"], c.style);
  if (j.contains("speaker")) c.speaker = speaker_config_from_json(j["speaker"], c.speaker);
  if (j.contains("synth")) c.synth = synth_config_from_json(j["synth"], c.synth);
  if (j.contains("disc")) c.disc = disc_config_from_json(j["disc"], c.disc);
  if (j.contains("ds")) c.ds = style_config_from_json(j["ds"], c.ds);
  return harmonize(c);
}

Models::Models(const ModelConfig& c)
    : cfg(harmonize(c)), style(cfg.style), speaker(cfg.speaker), synth(cfg.synth), disc(cfg.disc), ds(cfg.ds) {}

void Models::init(ParamStore& ps, std::uint64_t seed) const {
  RngStream rng(seed, kInitStream);
  RngStream a = rng.split(1), b = rng.split(2), c = rng.split(3), d = rng.split(4);
  style.init(ps, a);
  speaker.init(ps, b);
  synth.init(ps, c);
  disc.init(ps, d);
}

void Models::init_ds(ParamStore& ps, std::uint64_t seed) const {
  RngStream rng = RngStream(seed, kInitStream).split(5);
  ds.init(ps, rng);
}

std::vector<Matrix> transfer_batch(const Models& m, const ParamStore& ps,
                                   const std::vector<const corpus::Utterance*>& sources,
                                   const std::vector<const corpus::Utterance*>& donors, std::vector<bool>* truncated) {
  if (sources.size() != donors.size()) throw Error("transfer_batch: sources and donors differ in count");
  std::vector<Matrix> out;
  if (truncated) truncated->clear();
  for (std::size_t start = 0; start < sources.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, sources.size() - start);
    std::vector<const Matrix*> src_frames, donor_frames;
    std::vector<const std::vector<int>*> tokens;
    for (std::size_t i = start; i < start + n; ++i) {
      src_frames.push_back(&sources[i]->frames);
      donor_frames.push_back(&donors[i]->frames);
      tokens.push_back(&sources[i]->tokens);
    }
    const SeqBatch xs = pack_frames(src_frames);
    const SeqBatch xd = pack_frames(donor_frames);
    Graph g(false);
    Var z = m.style.encode(g, ps, xd, Matrix::Zero(m.cfg.style.latent, xd.batch)).cls.embedding;
    Var r = m.speaker.encode(g, ps, xs).embedding;
    TextVars text = m.synth.encode_text(g, ps, pack_tokens(tokens));
    DecodeVars dv = m.synth.generate(g, ps, text, z, r);
    for (int b = 0; b < static_cast<int>(n); ++b) {
      out.push_back(unpack_frames(dv.frames.value(), static_cast<int>(n), b, dv.lengths[b]));
      if (truncated) truncated->push_back(dv.truncated[b]);
    }
  }
  return out;
}

Matrix transfer(const Models& m, const ParamStore& ps, const corpus::Utterance& source,
                const corpus::Utterance& donor) {
  return transfer_batch(m, ps, {&source}, {&donor}).front();
}

Matrix speaker_embeddings(const Models& m, const ParamStore& ps, const std::vector<const Matrix*>& frames) {
  return chunked(frames.size(), m.cfg.speaker.embed, [&](std::size_t s, std::size_t n) {
    Graph g(false);
    return Matrix(m.speaker.encode(g, ps, pack_frames(std::span<const Matrix* const>(frames.data() + s, n))).embedding.value());
  });
}

Matrix speaker_logits(const Models& m, const ParamStore& ps, const std::vector<const Matrix*>& frames) {
  return chunked(frames.size(), m.cfg.speaker.classes, [&](std::size_t s, std::size_t n) {
    Graph g(false);
    return Matrix(m.speaker.encode(g, ps, pack_frames(std::span<const Matrix* const>(frames.data() + s, n))).logits.value());
  });
}

Matrix style_embeddings(const Models& m, const ParamStore& ps, const std::vector<const Matrix*>& frames) {
  return chunked(frames.size(), m.cfg.style.embed, [&](std::size_t s, std::size_t n) {
    Graph g(false);
    const SeqBatch x = pack_frames(std::span<const Matrix* const>(frames.data() + s, n));
    return Matrix(m.style.encode(g, ps, x, Matrix::Zero(m.cfg.style.latent, x.batch)).cls.embedding.value());
  });
}

}  // namespace flowstyle
