#include "flowstyle/model/style_encoder.hpp"

#include <cmath>
#include <numbers>

#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/nn.hpp"
#include "flowstyle/numerics/ops.hpp"

namespace flowstyle {

namespace {

// softplus(x) = 1 at this bias, so freshly initialised scales start near 1.
const double kUnitScaleBias = std::log(std::numbers::e - 1.0);

Eigen::VectorXd col(const Var& v, Eigen::Index j = 0) { return v.value().col(j); }

Matrix as_col(const Eigen::VectorXd& v) { return Matrix(v); }

}  // namespace

nlohmann::json to_json(const StyleConfig& c) {
  return {{"frame_dim", c.frame_dim}, {"frame_hidden", c.frame_hidden}, {"gru", c.gru},
          {"latent", c.latent},       {"context", c.context},           {"embed", c.embed},
          {"flow_steps", c.flow_steps}, {"made_hidden", c.made_hidden}, {"fc1", c.fc1},
          {"fc2", c.fc2},             {"classes", c.classes}};
}

StyleConfig style_config_from_json(const nlohmann::json& j, StyleConfig c) {
  c.frame_dim = j.value("frame_dim", c.frame_dim);
  c.frame_hidden = j.value("frame_hidden", c.frame_hidden);
  c.gru = j.value("gru", c.gru);
  c.latent = j.value("latent", c.latent);
  c.context = j.value("context", c.context);
  c.embed = j.value("embed", c.embed);
  c.flow_steps = j.value("flow_steps", c.flow_steps);
  c.made_hidden = j.value("made_hidden", c.made_hidden);
  c.fc1 = j.value("fc1", c.fc1);
  c.fc2 = j.value("fc2", c.fc2);
  c.classes = j.value("classes", c.classes);
  return c;
}

StyleEncoder::StyleEncoder(StyleConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {
  if (cfg_.latent < 1 || cfg_.context < 1 || cfg_.flow_steps < 0 || cfg_.classes < 1)
    throw Error("StyleEncoder: invalid configuration");
  const int D = cfg_.latent;
  const int M = cfg_.made_hidden;
  // MADE degrees: input i has degree i + 1, hidden units cycle through
  // 1 .. max(D - 1, 1), output i has degree i + 1.
  std::vector<int> hidden_deg(M);
  for (int j = 0; j < M; ++j) hidden_deg[j] = j % std::max(D - 1, 1) + 1;
  mask_in_ = Matrix::Zero(M, D);
  mask_out_ = Matrix::Zero(D, M);
  for (int j = 0; j < M; ++j)
    for (int i = 0; i < D; ++i) {
      mask_in_(j, i) = hidden_deg[j] >= i + 1 ? 1.0 : 0.0;
      mask_out_(i, j) = i + 1 > hidden_deg[j] ? 1.0 : 0.0;
    }
}

void StyleEncoder::init(ParamStore& ps, RngStream& rng) const {
  const auto& c = cfg_;
  nn::Linear{name("frame"), c.frame_dim, c.frame_hidden}.init(ps, rng);
  nn::GruCell{name("gru"), c.frame_hidden, c.gru}.init(ps, rng);
  nn::Linear{name("mu0"), 2 * c.gru, c.latent}.init(ps, rng);
  nn::Linear{name("sigma0"), 2 * c.gru, c.latent}.init(ps, rng, kUnitScaleBias);
  nn::Linear{name("context"), 2 * c.gru, c.context}.init(ps, rng);
  for (int k = 1; k <= c.flow_steps; ++k) {
    const std::string s = "flow" + std::to_string(k) + "/";
    nn::Linear{name(s + "in"), c.latent, c.made_hidden}.init(ps, rng);
    ps.add(name(s + "ctx"), nn::glorot(rng, c.made_hidden, c.context));
    nn::Linear{name(s + "mu"), c.made_hidden, c.latent}.init(ps, rng);
    nn::Linear{name(s + "sigma"), c.made_hidden, c.latent}.init(ps, rng, kUnitScaleBias);
  }
  nn::Linear{name("fc1"), c.latent, c.fc1}.init(ps, rng);
  nn::Linear{name("fc2"), c.fc1, c.fc2}.init(ps, rng);
  nn::Linear{name("fc3"), c.fc2, c.embed}.init(ps, rng);
  nn::Linear{name("out"), c.embed, c.classes}.init(ps, rng);
}

ReferenceVars StyleEncoder::reference(Graph& g, const ParamStore& ps, const SeqBatch& x) const {
  return reference(g, ps, g.constant(x.frames), x.lengths, x.steps);
}

ReferenceVars StyleEncoder::reference(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths,
                                      int steps) const {
  const auto& c = cfg_;
  if (frames.rows() != c.frame_dim) throw ShapeError("reference_encode", "frame width mismatch");
  const int B = static_cast<int>(lengths.size());
  Var mean = ad::masked_time_mean(frames, lengths);
  Var centred = ad::sub(frames, ad::tile_cols(mean, steps));
  Var a = ad::relu(nn::Linear{name("frame"), c.frame_dim, c.frame_hidden}(g, ps, centred));
  nn::GruCell gru{name("gru"), c.frame_hidden, c.gru};
  Var gx = gru.project_input(g, ps, a);
  auto states = scan(g.constant(Matrix::Zero(c.gru, B)), steps, lengths, [&](int t, Var h) {
    return gru.step_projected(g, ps, ad::slice_cols(gx, Eigen::Index(t) * B, B), h);
  });
  // Summary: final state stacked on the time-averaged states.
  std::vector<Var> parts{states.back(), ad::masked_time_mean(ad::concat_cols(states), lengths)};
  Var summary = ad::concat_rows(parts);
  ReferenceVars r;
  r.mu0 = nn::Linear{name("mu0"), 2 * c.gru, c.latent}(g, ps, summary);
  r.sigma0 = ad::add_scalar(ad::softplus(nn::Linear{name("sigma0"), 2 * c.gru, c.latent}(g, ps, summary)), kSigmaFloor);
  r.h = ad::tanh(nn::Linear{name("context"), 2 * c.gru, c.context}(g, ps, summary));
  return r;
}

std::vector<int> StyleEncoder::step_order(int k) const {
  std::vector<int> order(cfg_.latent);
  for (int i = 0; i < cfg_.latent; ++i) order[i] = reversed(k) ? cfg_.latent - 1 - i : i;
  return order;
}

std::pair<Var, Var> StyleEncoder::conditioner(Graph& g, const ParamStore& ps, int k, Var z_prev, Var h) const {
  const auto& c = cfg_;
  if (k < 1 || k > c.flow_steps) throw Error("conditioner: step out of range");
  const std::string s = "flow" + std::to_string(k) + "/";
  const auto order = step_order(k);
  Var zp = reversed(k) ? ad::permute_rows(z_prev, order) : z_prev;
  Var w_in = ad::mul(g.param(ps, name(s + "in/W")), g.constant(mask_in_));
  Var pre = ad::add(ad::matmul(w_in, zp), ad::matmul(g.param(ps, name(s + "ctx")), h));
  Var hid = ad::tanh(ad::add_bias(pre, g.param(ps, name(s + "in/b"))));
  Var w_mu = ad::mul(g.param(ps, name(s + "mu/W")), g.constant(mask_out_));
  Var w_sg = ad::mul(g.param(ps, name(s + "sigma/W")), g.constant(mask_out_));
  Var mu = ad::add_bias(ad::matmul(w_mu, hid), g.param(ps, name(s + "mu/b")));
  Var sg = ad::add_scalar(
      ad::softplus(ad::add_bias(ad::matmul(w_sg, hid), g.param(ps, name(s + "sigma/b")))), kSigmaFloor);
  if (reversed(k)) {
    mu = ad::permute_rows(mu, order);
    sg = ad::permute_rows(sg, order);
  }
  return {mu, sg};
}

FlowVars StyleEncoder::flow(Graph& g, const ParamStore& ps, const ReferenceVars& ref, const Matrix& eps) const {
  if (eps.rows() != cfg_.latent || eps.cols() != ref.mu0.cols()) throw ShapeError("iaf_init", "eps shape mismatch");
  FlowVars f;
  f.eps = g.constant(eps);
  f.z.push_back(ad::add(ref.mu0, ad::mul(ref.sigma0, f.eps)));
  f.sigmas.push_back(ref.sigma0);
  for (int k = 1; k <= cfg_.flow_steps; ++k) {
    auto [mu, sg] = conditioner(g, ps, k, f.z.back(), ref.h);
    f.z.push_back(ad::add(mu, ad::mul(sg, f.z.back())));
    f.mus.push_back(mu);
    f.sigmas.push_back(sg);
  }
  f.log_q = log_density(f.eps, f.sigmas);
  return f;
}

ClassifierVars StyleEncoder::classify(Graph& g, const ParamStore& ps, Var zk) const {
  const auto& c = cfg_;
  Var a = ad::relu(nn::Linear{name("fc1"), c.latent, c.fc1}(g, ps, zk));
  a = ad::relu(nn::Linear{name("fc2"), c.fc1, c.fc2}(g, ps, a));
  ClassifierVars out;
  out.embedding = ad::tanh(nn::Linear{name("fc3"), c.fc2, c.embed}(g, ps, a));
  out.logits = nn::Linear{name("out"), c.embed, c.classes}(g, ps, out.embedding);
  return out;
}

StyleVars StyleEncoder::encode(Graph& g, const ParamStore& ps, const SeqBatch& x, const Matrix& eps) const {
  return encode(g, ps, g.constant(x.frames), x.lengths, x.steps, eps);
}

StyleVars StyleEncoder::encode(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps,
                               const Matrix& eps) const {
  StyleVars v;
  v.ref = reference(g, ps, frames, lengths, steps);
  v.flow = flow(g, ps, v.ref, eps);
  v.cls = classify(g, ps, v.flow.z.back());
  return v;
}

ReferenceOutput StyleEncoder::reference_encode(const ParamStore& ps, const Matrix& frames) const {
  if (frames.rows() < 1) throw ShapeError("reference_encode", "empty frame matrix");
  Graph g(false);
  auto r = reference(g, ps, pack_frames(frames));
  return {col(r.mu0), col(r.sigma0), col(r.h)};
}

Eigen::VectorXd StyleEncoder::iaf_init(const ReferenceOutput& ref, const Eigen::VectorXd& eps) {
  if (eps.size() != ref.mu0.size()) throw ShapeError("iaf_init", "eps length mismatch");
  return ref.mu0.array() + ref.sigma0.array() * eps.array();
}

StyleEncoder::StepResult StyleEncoder::iaf_step(const ParamStore& ps, int k, const Eigen::VectorXd& z_prev,
                                                const Eigen::VectorXd& h) const {
  Graph g(false);
  auto [mu, sg] = conditioner(g, ps, k, g.constant(as_col(z_prev)), g.constant(as_col(h)));
  StepResult r{Eigen::VectorXd(), col(mu), col(sg)};
  if ((r.sigma.array() <= 0.0).any()) throw Error("iaf_step: non-positive scale");
  r.z = r.mu.array() + r.sigma.array() * z_prev.array();
  return r;
}

Eigen::VectorXd StyleEncoder::iaf_invert(const ParamStore& ps, int k, const Eigen::VectorXd& z_k,
                                         const Eigen::VectorXd& h) const {
  // Solve one coordinate at a time in the step's autoregressive order; the
  // conditioner output at position i only reads positions before it.
  const auto order = step_order(k);
  Eigen::VectorXd z_prev = Eigen::VectorXd::Zero(z_k.size());
  for (int i : order) {
    Graph g(false);
    auto [mu, sg] = conditioner(g, ps, k, g.constant(as_col(z_prev)), g.constant(as_col(h)));
    z_prev(i) = (z_k(i) - mu.value()(i, 0)) / sg.value()(i, 0);
  }
  return z_prev;
}

FlowTrace StyleEncoder::run_flow(const ParamStore& ps, const ReferenceOutput& ref, const Eigen::VectorXd& eps) const {
  FlowTrace t;
  t.eps = eps;
  t.z.push_back(iaf_init(ref, eps));
  t.sigmas.push_back(ref.sigma0);
  for (int k = 1; k <= cfg_.flow_steps; ++k) {
    auto s = iaf_step(ps, k, t.z.back(), ref.h);
    t.z.push_back(s.z);
    t.mus.push_back(s.mu);
    t.sigmas.push_back(s.sigma);
  }
  t.log_q = log_density(t);
  return t;
}

StyleEmbedding StyleEncoder::style_classify(const ParamStore& ps, const Eigen::VectorXd& zk) const {
  Graph g(false);
  auto c = classify(g, ps, g.constant(as_col(zk)));
  return {col(c.embedding), col(c.logits)};
}

std::pair<StyleEmbedding, FlowTrace> StyleEncoder::encode_style(const ParamStore& ps, const Matrix& frames,
                                                                RngStream& rng) const {
  const ReferenceOutput ref = reference_encode(ps, frames);
  Eigen::VectorXd eps(cfg_.latent);
  for (int i = 0; i < cfg_.latent; ++i) eps(i) = rng.normal();
  FlowTrace trace = run_flow(ps, ref, eps);
  StyleEmbedding emb = style_classify(ps, trace.z.back());
  return {std::move(emb), std::move(trace)};
}

double log_density(const FlowTrace& trace) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < trace.eps.size(); ++i) {
    acc += 0.5 * trace.eps(i) * trace.eps(i) + half_log_2pi;
    for (const auto& s : trace.sigmas) {
      if (!(s(i) > 0.0)) throw Error("log_density: non-positive scale");
      acc += std::log(s(i));
    }
  }
  return -acc;
}

Var log_density(const Var& eps, const std::vector<Var>& sigmas) {
  const double D = static_cast<double>(eps.rows());
  Var acc = ad::scale(ad::sum_rows(ad::square(eps)), 0.5);
  for (const Var& s : sigmas) acc = ad::add(acc, ad::sum_rows(ad::log(s)));
  return ad::neg(ad::add_scalar(acc, 0.5 * D * std::log(2.0 * std::numbers::pi)));
}

Matrix sample_eps(RngStream& rng, int dim, int batch) {
  Matrix e(dim, batch);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
  return e;
}

}  // namespace flowstyle
