#include "flowstyle/model/synthesizer.hpp"

#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/nn.hpp"
#include "flowstyle/numerics/ops.hpp"

namespace flowstyle {

nlohmann::json to_json(const SynthConfig& c) {
  return {{"frame_dim", c.frame_dim},     {"vocab", c.vocab},
          {"token_embed", c.token_embed}, {"text_gru", c.text_gru},
          {"style_dim", c.style_dim},     {"speaker_dim", c.speaker_dim},
          {"prenet", c.prenet},           {"decoder", c.decoder},
          {"attention", c.attention},     {"loc_filters", c.loc_filters},
          {"loc_width", c.loc_width},     {"max_frames", c.max_frames},
          {"stop_threshold", c.stop_threshold}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c) {
  c.frame_dim = j.value("frame_dim", c.frame_dim);
  c.vocab = j.value("vocab", c.vocab);
  c.token_embed = j.value("token_embed", c.token_embed);
  c.text_gru = j.value("text_gru", c.text_gru);
  c.style_dim = j.value("style_dim", c.style_dim);
  c.speaker_dim = j.value("speaker_dim", c.speaker_dim);
  c.prenet = j.value("prenet", c.prenet);
  c.decoder = j.value("decoder", c.decoder);
  c.attention = j.value("attention", c.attention);
  c.loc_filters = j.value("loc_filters", c.loc_filters);
  c.loc_width = j.value("loc_width", c.loc_width);
  c.max_frames = j.value("max_frames", c.max_frames);
  c.stop_threshold = j.value("stop_threshold", c.stop_threshold);
  return c;
}

Synthesizer::Synthesizer(SynthConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {
  if (cfg_.loc_width % 2 != 1) throw Error("Synthesizer: location kernel width must be odd");
  if (cfg_.max_frames < 1 || cfg_.vocab < 1) throw Error("Synthesizer: invalid configuration");
}

void Synthesizer::init(ParamStore& ps, RngStream& rng) const {
  const auto& c = cfg_;
  ps.add(name("embedding"), nn::glorot(rng, c.vocab + 1, c.token_embed));
  nn::GruCell{name("text_fwd"), c.token_embed, c.text_gru}.init(ps, rng);
  nn::GruCell{name("text_bwd"), c.token_embed, c.text_gru}.init(ps, rng);
  nn::Linear{name("init"), c.style_dim + c.speaker_dim, c.decoder}.init(ps, rng);
  nn::Linear{name("prenet1"), c.frame_dim, c.prenet}.init(ps, rng);
  nn::Linear{name("prenet2"), c.prenet, c.prenet}.init(ps, rng);
  nn::GruCell{name("decoder"), c.prenet + c.memory_dim(), c.decoder}.init(ps, rng);
  ps.add(name("attn/query"), nn::glorot(rng, c.attention, c.decoder));
  ps.add(name("attn/memory"), nn::glorot(rng, c.attention, c.memory_dim()));
  ps.add(name("attn/location"), nn::glorot(rng, c.attention, c.loc_filters));
  ps.add(name("attn/kernel"), nn::glorot(rng, c.loc_filters, 2 * c.loc_width));
  ps.add(name("attn/b"), Tensor({static_cast<std::size_t>(c.attention)}));
  ps.add(name("attn/v"), nn::glorot(rng, 1, c.attention));
  nn::Linear{name("frame_out"), c.decoder + c.memory_dim(), c.frame_dim}.init(ps, rng);
  nn::Linear{name("stop_out"), c.decoder + c.memory_dim(), 1}.init(ps, rng);
}

void Synthesizer::check_tokens(const TokenBatch& tokens) const {
  for (int b = 0; b < tokens.batch; ++b)
    for (int t = 0; t < tokens.lengths[b]; ++t) {
      const int id = tokens.ids[std::size_t(t) * tokens.batch + b];
      if (id < 1 || id > cfg_.vocab) throw Error("encode_text: unknown token id " + std::to_string(id));
    }
}

TextVars Synthesizer::encode_text(Graph& g, const ParamStore& ps, const TokenBatch& tokens) const {
  check_tokens(tokens);
  const auto& c = cfg_;
  const int B = tokens.batch;
  const int L = tokens.steps;
  Var emb = ad::embedding(g.param(ps, name("embedding")), tokens.ids);
  auto run = [&](const std::string& cell_name, Var input) {
    nn::GruCell cell{name(cell_name), c.token_embed, c.text_gru};
    Var gx = cell.project_input(g, ps, input);
    auto states = scan(g.constant(Matrix::Zero(c.text_gru, B)), L, tokens.lengths, [&](int t, Var h) {
      return cell.step_projected(g, ps, ad::slice_cols(gx, Eigen::Index(t) * B, B), h);
    });
    return ad::concat_cols(states);
  };
  const auto rev = reversal_columns(tokens.lengths, L);
  Var fwd = run("text_fwd", emb);
  Var bwd = ad::gather_cols(run("text_bwd", ad::gather_cols(emb, rev)), rev);
  std::vector<Var> parts{fwd, bwd};
  return {ad::concat_rows(parts), tokens.lengths, L, B};
}

DecodeVars Synthesizer::decode(Graph& g, const ParamStore& ps, const TextVars& text, Var z, Var r, Var teacher,
                               std::span<const int> teacher_lengths, int teacher_steps) const {
  const auto& c = cfg_;
  const int B = text.batch;
  const int L = text.steps;
  if (z.rows() != c.style_dim || z.cols() != B) throw ShapeError("decode", "style embedding shape mismatch");
  if (r.rows() != c.speaker_dim || r.cols() != B) throw ShapeError("decode", "speaker embedding shape mismatch");
  const bool forced = teacher.valid();
  if (forced && (static_cast<int>(teacher_lengths.size()) != B || teacher.rows() != c.frame_dim))
    throw ShapeError("decode", "teacher batch does not match text batch");

  std::vector<Var> mem_parts{text.states, ad::tile_cols(z, L), ad::tile_cols(r, L)};
  Var memory = ad::concat_rows(mem_parts);
  Var keys = ad::matmul(g.param(ps, name("attn/memory")), memory);
  Var w_query = g.param(ps, name("attn/query"));
  Var w_loc = g.param(ps, name("attn/location"));
  Var kernel = g.param(ps, name("attn/kernel"));
  Var attn_b = g.param(ps, name("attn/b"));
  Var attn_v = g.param(ps, name("attn/v"));
  nn::Linear prenet1{name("prenet1"), c.frame_dim, c.prenet};
  nn::Linear prenet2{name("prenet2"), c.prenet, c.prenet};
  nn::GruCell cell{name("decoder"), c.prenet + c.memory_dim(), c.decoder};
  nn::Linear frame_out{name("frame_out"), c.decoder + c.memory_dim(), c.frame_dim};
  nn::Linear stop_out{name("stop_out"), c.decoder + c.memory_dim(), 1};

  std::vector<Var> zr{z, r};
  Var s = ad::tanh(nn::Linear{name("init"), c.style_dim + c.speaker_dim, c.decoder}(g, ps, ad::concat_rows(zr)));
  Var context = g.constant(Matrix::Zero(c.memory_dim(), B));
  Var prev_align = g.constant(Matrix::Zero(L, B));
  Var cum_align = prev_align;
  Var prev_frame = g.constant(Matrix::Zero(c.frame_dim, B));

  DecodeVars out;
  const int steps = forced ? teacher_steps : c.max_frames;
  std::vector<Var> frames, stops;
  std::vector<bool> done(B, false);
  out.lengths.assign(B, steps);
  out.truncated.assign(B, false);
  for (int t = 0; t < steps; ++t) {
    if (forced && t > 0) prev_frame = ad::slice_cols(teacher, Eigen::Index(t - 1) * B, B);
    Var p = ad::relu(prenet2(g, ps, ad::relu(prenet1(g, ps, prev_frame))));
    std::vector<Var> in{p, context};
    s = cell.step(g, ps, ad::concat_rows(in), s);
    Var loc = ad::matmul(w_loc, ad::location_conv(prev_align, cum_align, kernel));
    Var energy_in = ad::add(ad::add(ad::tile_cols(ad::matmul(w_query, s), L), keys), loc);
    Var energy = ad::reshape(ad::matmul(attn_v, ad::tanh(ad::add_bias(energy_in, attn_b))), L, B);
    Var align = ad::softmax_cols(energy, text.lengths);
    context = ad::attend(memory, align);
    std::vector<Var> sc{s, context};
    Var h = ad::concat_rows(sc);
    Var frame = frame_out(g, ps, h);
    Var stop = stop_out(g, ps, h);
    frames.push_back(frame);
    stops.push_back(stop);
    out.alignments.push_back(align.value());
    prev_align = align;
    cum_align = ad::add(cum_align, align);
    if (!forced) {
      prev_frame = frame;
      bool all_done = true;
      for (int b = 0; b < B; ++b) {
        if (!done[b] && 1.0 / (1.0 + std::exp(-stop.value()(0, b))) > c.stop_threshold) {
          done[b] = true;
          out.lengths[b] = t + 1;
        }
        all_done = all_done && done[b];
      }
      if (all_done) break;
    }
  }
  if (forced) {
    out.lengths.assign(teacher_lengths.begin(), teacher_lengths.end());
  } else {
    for (int b = 0; b < B; ++b) out.truncated[b] = !done[b];
  }
  out.steps = static_cast<int>(frames.size());
  if (!forced)
    for (int b = 0; b < B; ++b) out.lengths[b] = std::min(out.lengths[b], out.steps);
  out.frames = ad::concat_cols(frames);
  out.stop_logits = ad::concat_cols(stops);
  return out;
}

TextEncoding Synthesizer::encode_text(const ParamStore& ps, const std::vector<int>& tokens) const {
  const std::vector<int>* p = &tokens;
  TokenBatch tb = pack_tokens(std::span<const std::vector<int>* const>(&p, 1));
  Graph g(false);
  TextVars tv = encode_text(g, ps, tb);
  return {tv.states.value().transpose()};
}

DecodeResult Synthesizer::decode(const ParamStore& ps, const std::vector<int>& tokens, const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& r, const Matrix* teacher_frames) const {
  const std::vector<int>* p = &tokens;
  TokenBatch tb = pack_tokens(std::span<const std::vector<int>* const>(&p, 1));
  Graph g(false);
  TextVars tv = encode_text(g, ps, tb);
  Var zv = g.constant(Matrix(z));
  Var rv = g.constant(Matrix(r));
  DecodeVars dv = teacher_frames ? decode(g, ps, tv, zv, rv, pack_frames(*teacher_frames)) : generate(g, ps, tv, zv, rv);
  DecodeResult res;
  const int T = dv.lengths[0];
  res.frames = unpack_frames(dv.frames.value(), 1, 0, T);
  res.stop_probs.resize(T);
  res.alignments.resize(T, tv.steps);
  for (int t = 0; t < T; ++t) {
    res.stop_probs(t) = 1.0 / (1.0 + std::exp(-dv.stop_logits.value()(0, t)));
    res.alignments.row(t) = dv.alignments[t].col(0).transpose();
  }
  res.truncated = dv.truncated[0];
  return res;
}

}  // namespace flowstyle
