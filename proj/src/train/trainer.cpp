#include "flowstyle/train/trainer.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "flowstyle/numerics/checkpoint.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/io.hpp"
#include "flowstyle/numerics/ops.hpp"

namespace flowstyle {

namespace {

constexpr std::uint64_t kStepStream = 0x7a11;
const std::string kOptG = "opt_g/";
const std::string kOptD = "opt_d/";

/// Columns of the sequences [start, start + count) out of a time-major
/// batch of width `batch`, for every step.
std::vector<int> half_columns(int steps, int batch, int start, int count) {
  std::vector<int> cols;
  cols.reserve(std::size_t(steps) * count);
  for (int t = 0; t < steps; ++t)
    for (int b = 0; b < count; ++b) cols.push_back(t * batch + start + b);
  return cols;
}

ParamStore without_prefix(const ParamStore& grads, const std::string& prefix) {
  ParamStore out;
  for (const auto& [n, t] : grads)
    if (n.rfind(prefix, 0) != 0) out.set(n, t);
  return out;
}

}  // namespace

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (drop_adv) w.beta = 0.0;
  if (drop_dis) w.gamma = 0.0;
  if (drop_cyc) w.lambda = 0.0;
  if (drop_cls) w.kappa = w.omega = 0.0;
  return w;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"batch_size", c.batch_size},
          {"lr_generator", c.lr_generator},
          {"lr_disc", c.lr_disc},
          {"clip", c.clip},
          {"seed", c.seed},
          {"weights",
           {{"alpha", c.weights.alpha},
            {"beta", c.weights.beta},
            {"gamma", c.weights.gamma},
            {"lambda", c.weights.lambda},
            {"kappa", c.weights.kappa},
            {"omega", c.weights.omega}}},
          {"disable_iaf", c.disable_iaf},
          {"drop_adv", c.drop_adv},
          {"drop_dis", c.drop_dis},
          {"drop_cyc", c.drop_cyc},
          {"drop_cls", c.drop_cls},
          {"saturating", c.saturating},
          {"free_running_real", c.free_running_real},
          {"kl", c.kl},
          {"kl_weight", c.kl_weight},
          {"checkpoint_every", c.checkpoint_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_generator = j.value("lr_generator", c.lr_generator);
  c.lr_disc = j.value("lr_disc", c.lr_disc);
  c.clip = j.value("clip", c.clip);
  c.seed = j.value("seed", c.seed);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    c.weights.alpha = w.value("alpha", c.weights.alpha);
    c.weights.beta = w.value("beta", c.weights.beta);
    c.weights.gamma = w.value("gamma", c.weights.gamma);
    c.weights.lambda = w.value("lambda", c.weights.lambda);
    c.weights.kappa = w.value("kappa", c.weights.kappa);
    c.weights.omega = w.value("omega", c.weights.omega);
  }
  c.disable_iaf = j.value("disable_iaf", c.disable_iaf);
  c.drop_adv = j.value("drop_adv", c.drop_adv);
  c.drop_dis = j.value("drop_dis", c.drop_dis);
  c.drop_cyc = j.value("drop_cyc", c.drop_cyc);
  c.drop_cls = j.value("drop_cls", c.drop_cls);
  c.saturating = j.value("saturating", c.saturating);
  c.free_running_real = j.value("free_running_real", c.free_running_real);
  c.kl = j.value("kl", c.kl);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  return c;
}

ModelConfig apply_train_flags(ModelConfig mc, const TrainConfig& tc) {
  if (tc.disable_iaf) mc.style.flow_steps = 0;
  return mc;
}

std::string metrics_header() { return "step,l_rec,l_adv,l_dis,l_cyc,l_stycls,l_spkcls,total\n"; }

std::string metrics_row(const StepRecord& r) {
  char buf[512];
  const auto& l = r.losses;
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, l.rec, l.adv, l.dis, l.cyc,
                l.stycls, l.spkcls, l.total);
  return buf;
}

Trainer::Trainer(const Models& models, TrainConfig cfg, const corpus::Dataset& data, ParamStore params)
    : models_(models),
      cfg_(cfg),
      data_(data),
      params_(std::move(params)),
      opt_g_({.lr = cfg.lr_generator}),
      opt_d_({.lr = cfg.lr_disc}) {
  if (cfg_.batch_size < 2) throw Error("train: batch_size must be at least 2 (one source/target pair)");
  for (const auto* u : data_.select(corpus::Split::train))
    if (u->style_id < data_.spec.n_train_styles()) pool_.push_back(u);
  if (cfg_.needs_ds() && params_.subset("disc_Ds/").empty())
    throw Error("train: the style distortion term needs a pretrained D_s");
}

PairBatch make_pair_batch(std::vector<const corpus::Utterance*> utts, Matrix eps) {
  if (utts.empty() || utts.size() % 2 != 0) throw Error("make_pair_batch: need an even, non-zero utterance count");
  PairBatch pb;
  pb.pairs = static_cast<int>(utts.size() / 2);
  pb.utts = std::move(utts);
  std::vector<const Matrix*> frames;
  std::vector<const std::vector<int>*> tokens;
  for (const auto* u : pb.utts) {
    frames.push_back(&u->frames);
    tokens.push_back(&u->tokens);
    pb.styles.push_back(u->style_id);
    pb.speakers.push_back(u->speaker_id);
  }
  pb.x = pack_frames(frames);
  pb.tokens = pack_tokens(tokens);
  pb.src_tokens = pack_tokens(std::span<const std::vector<int>* const>(tokens.data(), pb.pairs));
  pb.tgt_tokens = pack_tokens(std::span<const std::vector<int>* const>(tokens.data() + pb.pairs, pb.pairs));
  pb.tgt_lengths.assign(pb.x.lengths.begin() + pb.pairs, pb.x.lengths.end());
  if (eps.cols() != Eigen::Index(pb.utts.size())) throw ShapeError("make_pair_batch", "eps column count");
  pb.eps = std::move(eps);
  return pb;
}

Matrix source_domain_prob(const Models& models, const ParamStore& ps, const PairBatch& batch) {
  std::vector<const Matrix*> frames;
  for (int i = 0; i < batch.pairs; ++i) frames.push_back(&batch.utts[i]->frames);
  const SeqBatch xs = pack_frames(frames);
  Graph g(false);
  return models.ds.prob(g, ps, g.constant(xs.frames), xs.lengths, xs.steps).value();
}

Pinned pin(const LossVars& v, int pairs) {
  Pinned p;
  p.z_t = v.z.value().rightCols(pairs);
  if (v.transfer.frames.valid()) p.transfer_frames = v.transfer.frames.value();
  p.target_reconstruction = v.target_reconstruction.value();
  return p;
}

LossVars build_losses(Graph& g, const Models& m, const ParamStore& ps, const PairBatch& pb, const TrainConfig& cfg,
                      const Matrix& ds_prob, const Pinned* pinned) {
  auto held = [&](const Var& x, const Matrix Pinned::*field) {
    return pinned ? g.constant(pinned->*field) : ad::detach(x);
  };
  const int P = pb.pairs;
  const int B = 2 * P;
  const SeqBatch& x = pb.x;
  const LossWeights w = cfg.effective_weights();
  LossVars v;

  auto sty = m.style.encode(g, ps, x, pb.eps);
  auto spk = m.speaker.encode(g, ps, x);
  Var z = sty.cls.embedding;
  Var r = spk.embedding;
  v.z = z;
  TextVars text = m.synth.encode_text(g, ps, pb.tokens);
  DecodeVars rec = m.synth.decode(g, ps, text, z, r, x);
  Var nll = sequence_nll(rec.frames, rec.stop_logits, x);
  v.rec = loss_reconstruction(ad::slice_cols(nll, 0, P), ad::slice_cols(nll, P, P));
  v.generator = ad::scale(v.rec, w.alpha);
  v.target_reconstruction = ad::gather_cols(rec.frames, half_columns(x.steps, B, P, P));

  if (cfg.needs_transfer()) {
    TextVars text_s = m.synth.encode_text(g, ps, pb.src_tokens);
    v.transfer = m.synth.generate(g, ps, text_s, ad::slice_cols(z, P, P), ad::slice_cols(r, 0, P));
  }

  if (!cfg.drop_adv) {
    Var d_tr = m.disc.prob(g, ps, v.transfer.frames, v.transfer.lengths, v.transfer.steps);
    Var d_tg;
    if (cfg.free_running_real) {
      TextVars text_t = m.synth.encode_text(g, ps, pb.tgt_tokens);
      v.real = m.synth.generate(g, ps, text_t, ad::slice_cols(z, P, P), ad::slice_cols(r, P, P));
      d_tg = m.disc.prob(g, ps, v.real.frames, v.real.lengths, v.real.steps);
    } else {
      d_tg = m.disc.prob(g, ps, v.target_reconstruction, pb.tgt_lengths, x.steps);
    }
    v.adv = loss_adversarial(d_tr, d_tg);
    v.adv_generator = cfg.saturating ? ad::neg(v.adv) : loss_adversarial_generator(d_tr);
    v.generator = ad::add(v.generator, ad::scale(v.adv_generator, w.beta));
  }

  if (!cfg.drop_dis) {
    if (ds_prob.rows() != 1 || ds_prob.cols() != P) throw ShapeError("build_losses", "domain probability shape");
    v.dis = loss_style_distortion(ad::slice_cols(z, 0, P), held(ad::slice_cols(z, P, P), &Pinned::z_t), g.constant(ds_prob));
    v.generator = ad::add(v.generator, ad::scale(v.dis, w.gamma));
  }

  if (!cfg.drop_cyc) {
    Var r_s = m.speaker.encode(g, ps, held(v.transfer.frames, &Pinned::transfer_frames), v.transfer.lengths, v.transfer.steps).embedding;
    Var r_t = m.speaker.encode(g, ps, held(v.target_reconstruction, &Pinned::target_reconstruction), pb.tgt_lengths, x.steps).embedding;
    std::vector<Var> rc{r_s, r_t};
    DecodeVars cyc = m.synth.decode(g, ps, text, z, ad::concat_cols(rc), x);
    Var nll_c = sequence_nll(cyc.frames, cyc.stop_logits, x);
    v.cyc = loss_reconstruction(ad::slice_cols(nll_c, 0, P), ad::slice_cols(nll_c, P, P));
    v.generator = ad::add(v.generator, ad::scale(v.cyc, w.lambda));
  }

  if (!cfg.drop_cls) {
    v.stycls = ad::scale(
        loss_softmax(g.constant(one_hot(pb.styles, m.cfg.style.classes)), class_probs(sty.cls.logits)), 1.0 / P);
    v.spkcls = ad::scale(
        loss_softmax(g.constant(one_hot(pb.speakers, m.cfg.speaker.classes)), class_probs(spk.logits)), 1.0 / P);
    v.generator = ad::add(v.generator, ad::add(ad::scale(v.stycls, w.kappa), ad::scale(v.spkcls, w.omega)));
  }

  if (cfg.kl) {
    // log q(z_K | x) - log N(z_K; 0, I), averaged over the batch.
    Var zk = sty.flow.z.back();
    Var log_prior = ad::neg(ad::add_scalar(ad::scale(ad::sum_rows(ad::square(zk)), 0.5),
                                           0.5 * double(zk.rows()) * std::log(2.0 * std::numbers::pi)));
    v.kl = ad::mean(ad::sub(sty.flow.log_q, log_prior));
    v.generator = ad::add(v.generator, ad::scale(v.kl, cfg.kl_weight));
  }
  return v;
}

LossBreakdown breakdown(const LossVars& v, const TrainConfig& cfg) {
  auto val = [](const Var& x) { return x.valid() ? x.scalar() : 0.0; };
  LossBreakdown parts;
  parts.rec = val(v.rec);
  parts.adv = val(v.adv);
  parts.dis = val(v.dis);
  parts.cyc = val(v.cyc);
  parts.stycls = val(v.stycls);
  parts.spkcls = val(v.spkcls);
  return loss_total(parts, cfg.effective_weights());
}

StepRecord Trainer::step() {
  const auto& m = models_;
  const int P = cfg_.batch_size / 2;
  RngStream rng = RngStream(cfg_.seed, kStepStream).split(static_cast<std::uint64_t>(step_));
  std::vector<const corpus::Utterance*> utts(2 * P);
  for (int i = 0; i < P; ++i) {
    auto [s, t] = corpus::sample_training_pair(pool_, data_.spec, rng);
    utts[i] = s;
    utts[P + i] = t;
  }
  const PairBatch pb = make_pair_batch(std::move(utts), sample_eps(rng, m.cfg.style.latent, 2 * P));
  const Matrix p = cfg_.needs_ds() ? source_domain_prob(m, params_, pb) : Matrix();

  Graph g;
  g.freeze_prefix("disc_D/");
  g.freeze_prefix("disc_Ds/");
  LossVars v = build_losses(g, m, params_, pb, cfg_, p);
  StepRecord out;
  out.losses = breakdown(v, cfg_);
  ParamStore grads_g = without_prefix(g.backward(v.generator), "disc_");
  if (!grads_g.all_finite()) throw NonFiniteError("train: generator gradient");

  ParamStore grads_d;
  if (!cfg_.drop_adv) {
    Graph gd;
    Var d_tr = m.disc.prob(gd, params_, gd.constant(v.transfer.frames.value()), v.transfer.lengths, v.transfer.steps);
    Var d_tg = cfg_.free_running_real
                   ? m.disc.prob(gd, params_, gd.constant(v.real.frames.value()), v.real.lengths, v.real.steps)
                   : m.disc.prob(gd, params_, gd.constant(v.target_reconstruction.value()), pb.tgt_lengths, pb.x.steps);
    Var l_d = loss_adversarial(d_tr, d_tg);
    out.d_loss = l_d.scalar();
    grads_d = gd.backward(l_d).subset("disc_D/");
    if (!grads_d.all_finite()) throw NonFiniteError("train: discriminator gradient");
    clip_global_norm(grads_d, cfg_.clip);
  }
  out.grad_norm = clip_global_norm(grads_g, cfg_.clip);

  if (!grads_d.empty()) opt_d_.step(params_, grads_d);
  opt_g_.step(params_, grads_g);
  ++step_;
  out.step = step_;
  history_.push_back(out);
  return out;
}

ParamStore Trainer::state() const {
  ParamStore s = params_;
  s.merge(opt_g_.state(kOptG));
  s.merge(opt_d_.state(kOptD));
  return s;
}

nlohmann::json Trainer::state_meta() const {
  return {{"step", step_}, {"train_config", to_json(cfg_)}, {"model_config", to_json(models_.cfg)}};
}

void Trainer::save(const std::filesystem::path& path) const { save_checkpoint(path, state(), state_meta()); }

void Trainer::restore(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  ParamStore params;
  for (const auto& [n, t] : ck.params)
    if (n.rfind("opt_", 0) != 0) params.set(n, t);
  params_ = std::move(params);
  opt_g_ = Adam({.lr = cfg_.lr_generator});
  opt_d_ = Adam({.lr = cfg_.lr_disc});
  opt_g_.load_state(ck.params, kOptG);
  opt_d_.load_state(ck.params, kOptD);
  step_ = ck.meta.value("step", 0);
}

TrainResult train(const Models& models, const TrainConfig& cfg, const corpus::Dataset& data, ParamStore params,
                  const std::filesystem::path& out_dir, std::ostream* log, const std::filesystem::path& resume) {
  Trainer trainer(models, cfg, data, std::move(params));
  const bool write = !out_dir.empty();
  std::string csv = metrics_header();
  if (!resume.empty()) {
    trainer.restore(resume);
    // Keep the rows already logged up to the restored step.
    if (write && std::filesystem::exists(out_dir / "metrics.csv")) {
      std::istringstream in(read_file(out_dir / "metrics.csv"));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line))
        if (!line.empty() && std::stoi(line) <= trainer.current_step()) csv += line + "\n";
    }
  }
  TrainResult result;
  auto flush_metrics = [&] {
    if (write) write_file_atomic(out_dir / "metrics.csv", csv);
  };
  try {
    while (trainer.current_step() < cfg.steps) {
      const StepRecord r = trainer.step();
      csv += metrics_row(r);
      if (log && (r.step % 100 == 0 || r.step == 1)) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "step %5d  total %.4f  rec %.4f  adv %.4f  dis %.4f  cyc %.4f  cls %.4f/%.4f\n",
                      r.step, r.losses.total, r.losses.rec, r.losses.adv, r.losses.dis, r.losses.cyc, r.losses.stycls,
                      r.losses.spkcls);
        *log << buf << std::flush;
      }
      if (write && cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0) {
        trainer.save(out_dir / ("ckpt_" + std::to_string(r.step) + ".bin"));
        flush_metrics();
      }
    }
    if (write) trainer.save(out_dir / "final.bin");
  } catch (const NonFiniteError& e) {
    result.aborted = true;
    result.error = e.what();
  }
  flush_metrics();
  result.history = trainer.history();
  result.params = trainer.params();
  return result;
}

}  // namespace flowstyle
