#include "flowstyle/model/speaker_encoder.hpp"

#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/nn.hpp"
#include "flowstyle/numerics/ops.hpp"

namespace flowstyle {

nlohmann::json to_json(const SpeakerConfig& c) {
  return {{"frame_dim", c.frame_dim}, {"lstm", c.lstm}, {"layers", c.layers}, {"hidden", c.hidden},
          {"fc1", c.fc1},             {"fc2", c.fc2},   {"embed", c.embed},   {"classes", c.classes}};
}

SpeakerConfig speaker_config_from_json(const nlohmann::json& j, SpeakerConfig c) {
  c.frame_dim = j.value("frame_dim", c.frame_dim);
  c.lstm = j.value("lstm", c.lstm);
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.fc1 = j.value("fc1", c.fc1);
  c.fc2 = j.value("fc2", c.fc2);
  c.embed = j.value("embed", c.embed);
  c.classes = j.value("classes", c.classes);
  return c;
}

SpeakerEncoder::SpeakerEncoder(SpeakerConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {
  if (cfg_.layers < 1 || cfg_.lstm < 1 || cfg_.embed < 1 || cfg_.classes < 1)
    throw Error("SpeakerEncoder: invalid configuration");
}

void SpeakerEncoder::init(ParamStore& ps, RngStream& rng) const {
  const auto& c = cfg_;
  for (int l = 0; l < c.layers; ++l)
    nn::LstmCell{name("lstm" + std::to_string(l)), l == 0 ? c.frame_dim : c.lstm, c.lstm}.init(ps, rng);
  nn::Linear{name("proj1"), c.lstm, c.hidden}.init(ps, rng);
  nn::Linear{name("proj2"), c.hidden, c.hidden}.init(ps, rng);
  nn::Linear{name("fc1"), c.hidden, c.fc1}.init(ps, rng);
  nn::Linear{name("fc2"), c.fc1, c.fc2}.init(ps, rng);
  nn::Linear{name("fc3"), c.fc2, c.embed}.init(ps, rng);
  nn::Linear{name("out"), c.embed, c.classes}.init(ps, rng);
}

SpeakerVars SpeakerEncoder::encode(Graph& g, const ParamStore& ps, const SeqBatch& x) const {
  return encode(g, ps, g.constant(x.frames), x.lengths, x.steps);
}

SpeakerVars SpeakerEncoder::encode(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths,
                                   int steps) const {
  const auto& c = cfg_;
  if (frames.rows() != c.frame_dim) throw ShapeError("speaker_encode", "frame width mismatch");
  const int B = static_cast<int>(lengths.size());
  std::vector<std::uint8_t> mask(B);
  Var seq = frames;
  Var top;
  for (int l = 0; l < c.layers; ++l) {
    nn::LstmCell cell{name("lstm" + std::to_string(l)), l == 0 ? c.frame_dim : c.lstm, c.lstm};
    Var gx = cell.project_input(g, ps, seq);
    Var h = g.constant(Matrix::Zero(c.lstm, B));
    Var cs = h;
    std::vector<Var> outs;
    for (int t = 0; t < steps; ++t) {
      bool all = true;
      for (int b = 0; b < B; ++b) {
        mask[b] = t < lengths[b];
        all = all && mask[b];
      }
      auto [hn, cn] = cell.step_projected(g, ps, ad::slice_cols(gx, Eigen::Index(t) * B, B), h, cs);
      h = all ? hn : ad::select_cols(mask, hn, h);
      cs = all ? cn : ad::select_cols(mask, cn, cs);
      outs.push_back(h);
    }
    seq = ad::concat_cols(outs);
    top = h;
  }
  Var a = ad::relu(nn::Linear{name("proj1"), c.lstm, c.hidden}(g, ps, top));
  a = ad::relu(nn::Linear{name("proj2"), c.hidden, c.hidden}(g, ps, a));
  a = ad::relu(nn::Linear{name("fc1"), c.hidden, c.fc1}(g, ps, a));
  a = ad::relu(nn::Linear{name("fc2"), c.fc1, c.fc2}(g, ps, a));
  SpeakerVars v;
  v.embedding = ad::tanh(nn::Linear{name("fc3"), c.fc2, c.embed}(g, ps, a));
  v.logits = nn::Linear{name("out"), c.embed, c.classes}(g, ps, v.embedding);
  return v;
}

SpeakerEmbedding SpeakerEncoder::speaker_encode(const ParamStore& ps, const Matrix& frames) const {
  if (frames.rows() < 1) throw ShapeError("speaker_encode", "empty frame matrix");
  Graph g(false);
  auto v = encode(g, ps, pack_frames(frames));
  return {v.embedding.value().col(0), v.logits.value().col(0)};
}

}  // namespace flowstyle
