#include "flowstyle/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "flowstyle/numerics/gradcheck.hpp"
#include "flowstyle/numerics/ops.hpp"
#include "flowstyle/train/trainer.hpp"

namespace flowstyle::selftest {

namespace {

using Vec = Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

Vec normal_vec(RngStream& rng, int n, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

/// A style encoder whose flow weights are large enough that every
/// conditioner output depends visibly on its inputs.
StyleEncoder random_flow(int latent, int steps, int context, RngStream& rng, ParamStore& ps) {
  StyleConfig c;
  c.frame_dim = 4;
  c.latent = latent;
  c.flow_steps = steps;
  c.context = context;
  c.made_hidden = 12;
  StyleEncoder enc(c, "flow_test/");
  enc.init(ps, rng);
  for (auto& [name, t] : ps.entries())
    if (name.find("/flow") != std::string::npos)
      for (double& v : t.data()) v += 0.5 * rng.normal();
  return enc;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

SuiteResult iaf_invertibility(std::uint64_t seed, int draws) {
  const auto t0 = Clock::now();
  RngStream rng(seed, 0x1af);
  ParamStore ps;
  const int D = 8, K = 4, H = 16;
  StyleEncoder enc = random_flow(D, K, H, rng, ps);
  double worst_step = 0.0, worst_chain = 0.0;
  for (int n = 0; n < draws; ++n) {
    const Vec h = normal_vec(rng, H);
    const Vec z0 = normal_vec(rng, D, 2.0);
    Vec z = z0;
    for (int k = 1; k <= K; ++k) {
      const Vec next = enc.iaf_step(ps, k, z, h).z;
      worst_step = std::max(worst_step, (enc.iaf_invert(ps, k, next, h) - z).cwiseAbs().maxCoeff());
      z = next;
    }
    for (int k = K; k >= 1; --k) z = enc.iaf_invert(ps, k, z, h);
    worst_chain = std::max(worst_chain, (z - z0).cwiseAbs().maxCoeff());
  }
  SuiteResult r{.name = "iaf_invertibility", .passed = false, .measured = std::max(worst_step, worst_chain), .threshold = 1e-6, .seconds = 0.0, .detail = {}};
  r.passed = r.measured < r.threshold;
  r.seconds = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d draws, D=%d K=%d, per-step %.3g, chain %.3g", draws, D, K, worst_step,
                worst_chain);
  r.detail = buf;
  return r;
}

SuiteResult log_density_check(std::uint64_t seed, int trials) {
  const auto t0 = Clock::now();
  RngStream rng(seed, 0x10d);
  double worst = 0.0;
  for (int n = 0; n < trials; ++n) {
    const int D = 1 + static_cast<int>(rng.uniform_int(4));
    const int K = 1 + static_cast<int>(rng.uniform_int(3));
    ParamStore ps;
    StyleEncoder enc = random_flow(D, K, 5, rng, ps);
    ReferenceOutput ref;
    ref.mu0 = normal_vec(rng, D);
    ref.sigma0 = (normal_vec(rng, D, 0.3)).array().exp();
    ref.h = normal_vec(rng, 5);
    const Vec eps = normal_vec(rng, D);
    const FlowTrace trace = enc.run_flow(ps, ref, eps);

    const double step = 1e-5;
    Matrix J(D, D);
    for (int j = 0; j < D; ++j) {
      Vec ep = eps, em = eps;
      ep[j] += step;
      em[j] -= step;
      J.col(j) = (enc.run_flow(ps, ref, ep).z.back() - enc.run_flow(ps, ref, em).z.back()) / (2 * step);
    }
    const double log_n = -0.5 * eps.squaredNorm() - 0.5 * D * std::log(2.0 * std::numbers::pi);
    const double expected = log_n - std::log(std::abs(J.determinant()));
    const double got = log_density(trace);
    worst = std::max(worst, std::abs(got - expected) / std::max(1.0, std::abs(expected)));
  }
  SuiteResult r{.name = "log_density", .passed = false, .measured = worst, .threshold = 1e-5, .seconds = 0.0, .detail = {}};
  r.passed = worst <= r.threshold;
  r.seconds = seconds_since(t0);
  r.detail = std::to_string(trials) + " random flows, D<=4, K<=3";
  return r;
}

SuiteResult masking_check(std::uint64_t seed, int inputs) {
  const auto t0 = Clock::now();
  RngStream rng(seed, 0x3a5);
  const int D = 8, K = 4, H = 16;
  ParamStore ps;
  StyleEncoder enc = random_flow(D, K, H, rng, ps);
  double worst = 0.0;
  const double step = 1e-4;
  for (int n = 0; n < inputs; ++n) {
    const Vec h = normal_vec(rng, H);
    const Vec z = normal_vec(rng, D, 2.0);
    for (int k = 1; k <= K; ++k) {
      const std::vector<int> order = enc.step_order(k);
      Matrix jmu(D, D), jsig(D, D);
      for (int j = 0; j < D; ++j) {
        Vec zp = z, zm = z;
        zp[j] += step;
        zm[j] -= step;
        const auto a = enc.iaf_step(ps, k, zp, h);
        const auto b = enc.iaf_step(ps, k, zm, h);
        jmu.col(j) = (a.mu - b.mu) / (2 * step);
        jsig.col(j) = (a.sigma - b.sigma) / (2 * step);
      }
      // Output position i may only see input positions before i.
      for (int i = 0; i < D; ++i)
        for (int j = i; j < D; ++j)
          worst = std::max({worst, std::abs(jmu(order[i], order[j])), std::abs(jsig(order[i], order[j]))});
    }
  }
  SuiteResult r{.name = "autoregressive_mask", .passed = false, .measured = worst, .threshold = 1e-10, .seconds = 0.0, .detail = {}};
  r.passed = worst < r.threshold;
  r.seconds = seconds_since(t0);
  r.detail = std::to_string(inputs) + " inputs, D=8 K=4";
  return r;
}

std::vector<SuiteResult> gradient_oracle(std::uint64_t seed) {
  ModelConfig mc;
  mc.synth.frame_dim = 3;
  mc.synth.vocab = 4;
  mc.synth.token_embed = 4;
  mc.synth.text_gru = 3;
  mc.synth.prenet = 4;
  mc.synth.decoder = 5;
  mc.synth.attention = 4;
  mc.synth.loc_filters = 2;
  mc.synth.loc_width = 3;
  mc.synth.max_frames = 6;
  mc.style = {3, 4, 4, 3, 3, 3, 2, 4, 4, 4, 2};
  mc.speaker = {3, 3, 2, 4, 4, 4, 3, 2};
  mc.disc = {3, 4, 4};
  const Models models(mc);

  RngStream rng(seed, 0x9c);
  ParamStore ps;
  models.init(ps, seed);
  // Move off zero biases so no unit sits exactly on a ReLU kink.
  for (auto& [name, t] : ps.entries())
    for (double& x : t.data()) x += 0.1 * rng.normal();

  std::vector<corpus::Utterance> utts(4);
  const int lengths[4] = {4, 3, 5, 4};
  for (int i = 0; i < 4; ++i) {
    auto& u = utts[i];
    u.id = "g" + std::to_string(i);
    u.style_id = u.speaker_id = i / 2;
    u.frames = Matrix(lengths[i], 3);
    for (int t = 0; t < lengths[i]; ++t)
      for (int f = 0; f < 3; ++f) u.frames(t, f) = rng.normal();
    for (int n = 0; n < 2 + i % 2; ++n) u.tokens.push_back(1 + static_cast<int>(rng.uniform_int(4)));
  }
  std::vector<const corpus::Utterance*> ptrs{&utts[0], &utts[1], &utts[2], &utts[3]};
  const PairBatch batch = make_pair_batch(ptrs, sample_eps(rng, mc.style.latent, 4));
  Matrix p(1, 2);
  p << 0.3, 0.8;

  TrainConfig cfg;
  cfg.kl = true;
  const LossWeights w = cfg.effective_weights();

  struct Term {
    const char* name;
    std::function<Var(const LossVars&)> pick;
  };
  const std::vector<Term> terms{
      {"L_rec", [](const LossVars& v) { return v.rec; }},
      {"L_adv", [](const LossVars& v) { return v.adv; }},
      {"L_dis", [](const LossVars& v) { return v.dis; }},
      {"L_cyc", [](const LossVars& v) { return v.cyc; }},
      {"L_stycls", [](const LossVars& v) { return v.stycls; }},
      {"L_spkcls", [](const LossVars& v) { return v.spkcls; }},
      {"L_total",
       [w](const LossVars& v) {
         Var t = ad::scale(v.rec, w.alpha);
         t = ad::add(t, ad::scale(v.adv, w.beta));
         t = ad::add(t, ad::scale(v.dis, w.gamma));
         t = ad::add(t, ad::scale(v.cyc, w.lambda));
         t = ad::add(t, ad::scale(v.stycls, w.kappa));
         return ad::add(t, ad::scale(v.spkcls, w.omega));
       }},
      {"L_generator", [](const LossVars& v) { return v.generator; }},
  };

  Pinned pinned;
  {
    Graph g(false);
    pinned = pin(build_losses(g, models, ps, batch, cfg, p), batch.pairs);
  }

  std::vector<SuiteResult> out;
  for (const auto& term : terms) {
    const auto t0 = Clock::now();
    LossBuilder loss = [&](Graph& g) { return term.pick(build_losses(g, models, ps, batch, cfg, p, &pinned)); };
    GradCheckReport rep = check_gradients(loss, ps, 1e-5, 1e-4);
    SuiteResult r{.name = std::string("gradcheck ") + term.name,
                  .passed = rep.passed(),
                  .measured = rep.worst(),
                  .threshold = 1e-4,
                  .seconds = 0.0,
                  .detail = {}};
    r.seconds = seconds_since(t0);
    r.detail = std::to_string(rep.entries.size()) + " tensors";
    if (!rep.passed()) r.detail += "; failing: " + rep.summary();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
  std::vector<SuiteResult> out{iaf_invertibility(seed), log_density_check(seed), masking_check(seed)};
  for (auto& r : gradient_oracle(seed)) out.push_back(std::move(r));
  return out;
}

std::string format(const SuiteResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s %-22s worst %.3e (limit %.0e)  %.2fs  %s", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.measured, r.threshold, r.seconds, r.detail.c_str());
  return buf;
}

}  // namespace flowstyle::selftest
