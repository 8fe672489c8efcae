#include "flowstyle/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "flowstyle/corpus/corpus.hpp"
#include "flowstyle/eval/evalkit.hpp"
#include "flowstyle/model/adversaries.hpp"
#include "flowstyle/model/models.hpp"
#include "flowstyle/numerics/checkpoint.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/io.hpp"
#include "flowstyle/selftest.hpp"
#include "flowstyle/train/trainer.hpp"

namespace flowstyle {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kPrecedence =
    "Settings resolve as: command-line flag, then the --config JSON file, then the built-in default.\n"
    "Config sections: \"corpus\", \"pretrain\", \"model\", \"train\", \"oracle\".";

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("config: " + path + " is not a JSON object");
  return j;
}

json section(const json& cfg, const char* name) { return cfg.contains(name) ? cfg[name] : json::object(); }

/// Applies a flag value only when it was given on the command line.
template <typename T, typename U>
void override_with(const CLI::Option* opt, const T& value, U& target) {
  if (opt->count() > 0) target = value;
}

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw CLI::RequiredError(what);
  if (!fs::exists(path)) throw Error(what + ": " + path + " does not exist");
}

ParamStore model_params(const Checkpoint& ck) {
  ParamStore ps;
  for (const auto& [n, t] : ck.params)
    if (n.rfind("opt_", 0) != 0) ps.set(n, t);
  return ps;
}

struct Loaded {
  Models models;
  ParamStore params;
};

Loaded load_trained(const std::string& ckpt) {
  Checkpoint ck = load_checkpoint(ckpt);
  if (!ck.meta.contains("model_config")) throw Error("checkpoint " + ckpt + " has no model_config");
  return {Models(model_config_from_json(ck.meta["model_config"])), model_params(ck)};
}

std::string frames_csv(const Matrix& m) {
  std::string s;
  char buf[40];
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (Eigen::Index f = 0; f < m.cols(); ++f) {
      std::snprintf(buf, sizeof buf, f ? ",%.9g" : "%.9g", m(t, f));
      s += buf;
    }
    s += '\n';
  }
  return s;
}

std::string frames_f32(const Matrix& m) {
  std::string s;
  s.reserve(static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index t = 0; t < m.rows(); ++t)
    for (Eigen::Index f = 0; f < m.cols(); ++f) append_le_f32(s, static_cast<float>(m(t, f)));
  return s;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"flowstyle: disentangled style and speaker transfer on a synthetic corpus"};
  app.footer(kPrecedence);
  app.require_subcommand(1);
  app.get_formatter()->column_width(34);

  // gen-data
  corpus::CorpusSpec spec_default;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic multi-style corpus");
  std::uint64_t gen_seed = spec_default.seed;
  std::string gen_out = "data", gen_config, gen_spec;
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Corpus seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();
  gen->add_option("--spec", gen_spec, "Corpus spec JSON (overrides the config's \"corpus\" section)");
  gen->add_option("--config", gen_config, "JSON config file (section \"corpus\")");

  // pretrain-ds
  PretrainOptions pre_default;
  auto* pre = app.add_subcommand("pretrain-ds", "Pretrain the frozen target-domain model D_s");
  std::string pre_data = "data", pre_out = "ds.bin", pre_config;
  std::uint64_t pre_seed = pre_default.seed;
  int pre_steps = pre_default.steps, pre_batch = pre_default.batch_size;
  pre->add_option("--data", pre_data, "Corpus directory")->capture_default_str();
  pre->add_option("--out", pre_out, "Output checkpoint")->capture_default_str();
  auto* pre_seed_opt = pre->add_option("--seed", pre_seed, "Seed")->capture_default_str();
  auto* pre_steps_opt = pre->add_option("--steps", pre_steps, "Optimisation steps")->capture_default_str();
  auto* pre_batch_opt = pre->add_option("--batch-size", pre_batch, "Batch size")->capture_default_str();
  pre->add_option("--config", pre_config, "JSON config file (sections \"pretrain\", \"model\")");

  // train
  TrainConfig tr_default;
  auto* tr = app.add_subcommand("train", "Train the full system");
  std::string tr_data = "data", tr_ds, tr_out = "run", tr_config, tr_ckpt;
  TrainConfig tv = tr_default;
  tr->add_option("--data", tr_data, "Corpus directory")->capture_default_str();
  tr->add_option("--ds-ckpt", tr_ds, "Pretrained D_s checkpoint (needed unless --drop-dis)");
  tr->add_option("--out", tr_out, "Run directory")->capture_default_str();
  tr->add_option("--config", tr_config, "JSON config file (sections \"train\", \"model\")");
  tr->add_option("--ckpt", tr_ckpt, "Resume from this training checkpoint");
  auto* tr_seed = tr->add_option("--seed", tv.seed, "Seed")->capture_default_str();
  auto* tr_steps = tr->add_option("--steps", tv.steps, "Training steps")->capture_default_str();
  auto* tr_batch = tr->add_option("--batch-size", tv.batch_size, "Utterances per step")->capture_default_str();
  auto* tr_iaf = tr->add_flag("--disable-iaf", tv.disable_iaf, "Remove the flow (K = 0)")->capture_default_str();
  auto* tr_adv = tr->add_flag("--drop-adv", tv.drop_adv, "Drop the adversarial loss")->capture_default_str();
  auto* tr_dis = tr->add_flag("--drop-dis", tv.drop_dis, "Drop the style distortion loss")->capture_default_str();
  auto* tr_cyc = tr->add_flag("--drop-cyc", tv.drop_cyc, "Drop the cycle loss")->capture_default_str();
  auto* tr_cls = tr->add_flag("--drop-cls", tv.drop_cls, "Drop both classification losses")->capture_default_str();
  auto* tr_sat = tr->add_flag("--saturating", tv.saturating, "Saturating generator objective")->capture_default_str();
  auto* tr_kl = tr->add_flag("--kl", tv.kl, "Add the flow KL regulariser")->capture_default_str();

  // transfer
  auto* xf = app.add_subcommand("transfer", "Render a source utterance in a donor's style");
  std::string xf_ckpt, xf_data = "data", xf_source, xf_donor, xf_out = "frames.bin";
  std::uint64_t xf_seed = 0;
  xf->add_option("--ckpt", xf_ckpt, "Trained checkpoint")->required();
  xf->add_option("--data", xf_data, "Corpus directory")->capture_default_str();
  xf->add_option("--source", xf_source, "Source utterance id")->required();
  xf->add_option("--donor", xf_donor, "Style donor utterance id")->required();
  xf->add_option("--out", xf_out, "Output frames: raw little-endian f32, row-major T x F; CSV when the name ends in .csv")->capture_default_str();
  xf->add_option("--seed", xf_seed, "Seed (decoding is deterministic)")->capture_default_str();

  // eval
  OracleOptions or_default;
  EvalOptions ev_default;
  auto* ev = app.add_subcommand("eval", "Objective evaluation of a trained checkpoint");
  std::string ev_ckpt, ev_data = "data", ev_out = "report.json", ev_config;
  std::uint64_t ev_seed = ev_default.seed;
  int ev_oracle_steps = or_default.steps;
  ev->add_option("--ckpt", ev_ckpt, "Trained checkpoint")->required();
  ev->add_option("--data", ev_data, "Corpus directory")->capture_default_str();
  ev->add_option("--out", ev_out, "Report JSON")->capture_default_str();
  auto* ev_seed_opt = ev->add_option("--seed", ev_seed, "Donor sampling seed")->capture_default_str();
  auto* ev_steps_opt = ev->add_option("--steps", ev_oracle_steps, "Oracle training steps")->capture_default_str();
  ev->add_option("--config", ev_config, "JSON config file (section \"oracle\")");

  // export-embeddings
  auto* ex = app.add_subcommand("export-embeddings", "Style embeddings with a 2-D projection as TSV");
  std::string ex_ckpt, ex_data = "data", ex_out = "emb.tsv";
  std::uint64_t ex_seed = 5;
  bool ex_transfers = false;
  ex->add_option("--ckpt", ex_ckpt, "Trained checkpoint")->required();
  ex->add_option("--data", ex_data, "Corpus directory")->capture_default_str();
  ex->add_option("--out", ex_out, "Output TSV")->capture_default_str();
  ex->add_option("--seed", ex_seed, "Donor sampling seed")->capture_default_str();
  ex->add_flag("--with-transfers", ex_transfers, "Also embed transferred utterances")->capture_default_str();

  // selftest
  auto* st = app.add_subcommand("selftest", "Flow invertibility, log-density, masking and gradient suites");
  std::uint64_t st_seed = 1;
  st->add_option("--seed", st_seed, "Seed")->capture_default_str();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*gen) {
      const json cfg = read_config(gen_config);
      corpus::CorpusSpec spec = cfg.contains("corpus") ? corpus::spec_from_json(cfg["corpus"]) : spec_default;
      if (!gen_spec.empty()) {
        require_file("--spec", gen_spec);
        spec = corpus::spec_from_json(json::parse(read_file(gen_spec)));
      }
      override_with(gen_seed_opt, gen_seed, spec.seed);
      spec.validate();
      const corpus::Dataset data = corpus::generate_corpus(spec);
      corpus::save_dataset(data, gen_out);
      int counts[3] = {0, 0, 0};
      for (const auto& u : data.utterances) ++counts[static_cast<int>(u.split)];
      out << "wrote " << data.utterances.size() << " utterances (train " << counts[0] << ", val " << counts[1]
          << ", test " << counts[2] << ") to " << gen_out << "\n";
    } else if (*pre) {
      const json cfg = read_config(pre_config);
      const json pj = section(cfg, "pretrain");
      PretrainOptions opt = pre_default;
      opt.portion = pj.value("portion", opt.portion);
      opt.steps = pj.value("steps", opt.steps);
      opt.batch_size = pj.value("batch_size", opt.batch_size);
      opt.lr = pj.value("lr", opt.lr);
      opt.seed = pj.value("seed", opt.seed);
      override_with(pre_seed_opt, pre_seed, opt.seed);
      override_with(pre_steps_opt, pre_steps, opt.steps);
      override_with(pre_batch_opt, pre_batch, opt.batch_size);
      const corpus::Dataset data = corpus::load_dataset(pre_data);
      const ModelConfig mc = model_config_from_json(section(cfg, "model"), model_config_for(data));
      const Models models(mc);
      ParamStore ps;
      models.init_ds(ps, opt.seed);
      const PretrainReport rep = pretrain_ds(models.ds, ps, data, opt);
      json meta = {{"ds_config", to_json(mc.ds)},
                   {"val_accuracy", rep.val_accuracy},
                   {"train_utterances", rep.train_utterances},
                   {"val_utterances", rep.val_utterances},
                   {"fingerprint", hex64(ps.fingerprint())}};
      save_checkpoint(pre_out, ps, meta);
      char buf[160];
      std::snprintf(buf, sizeof buf, "D_s validation accuracy %.4f on %d utterances (trained on %d), hash %s\n",
                    rep.val_accuracy, rep.val_utterances, rep.train_utterances, hex64(ps.fingerprint()).c_str());
      out << buf;
    } else if (*tr) {
      const json cfg = read_config(tr_config);
      TrainConfig tc = train_config_from_json(section(cfg, "train"), tr_default);
      override_with(tr_seed, tv.seed, tc.seed);
      override_with(tr_steps, tv.steps, tc.steps);
      override_with(tr_batch, tv.batch_size, tc.batch_size);
      override_with(tr_iaf, tv.disable_iaf, tc.disable_iaf);
      override_with(tr_adv, tv.drop_adv, tc.drop_adv);
      override_with(tr_dis, tv.drop_dis, tc.drop_dis);
      override_with(tr_cyc, tv.drop_cyc, tc.drop_cyc);
      override_with(tr_cls, tv.drop_cls, tc.drop_cls);
      override_with(tr_sat, tv.saturating, tc.saturating);
      override_with(tr_kl, tv.kl, tc.kl);
      if (tc.steps < 0) throw CLI::ValidationError("--steps", "must be non-negative");
      if (tc.batch_size < 2 || tc.batch_size % 2 != 0)
        throw CLI::ValidationError("--batch-size", "must be an even number of at least 2");

      const corpus::Dataset data = corpus::load_dataset(tr_data);
      ModelConfig mc = model_config_from_json(section(cfg, "model"), model_config_for(data));
      ParamStore ds_params;
      if (tc.needs_ds()) {
        require_file("--ds-ckpt", tr_ds);
        Checkpoint ds = load_checkpoint(tr_ds);
        if (ds.meta.contains("ds_config")) mc.ds = style_config_from_json(ds.meta["ds_config"], mc.ds);
        ds_params = ds.params.subset("disc_Ds/");
        if (ds_params.empty()) throw Error("--ds-ckpt: " + tr_ds + " holds no disc_Ds/ parameters");
      }
      mc = apply_train_flags(mc, tc);
      const Models models(mc);
      ParamStore ps;
      models.init(ps, tc.seed);
      ps.merge(ds_params);
      fs::create_directories(tr_out);
      write_file_atomic(fs::path(tr_out) / "config.json",
                        json{{"train", to_json(tc)}, {"model", to_json(models.cfg)}}.dump(2) + "\n");
      const TrainResult res = train(models, tc, data, std::move(ps), tr_out, &out, tr_ckpt);
      if (res.aborted) {
        err << "training aborted: " << res.error << "\n";
        return kExitFailure;
      }
      const auto& h = res.history;
      if (!h.empty()) out << "finished at step " << h.back().step << ", total loss " << h.back().losses.total << "\n";
      out << "wrote " << (fs::path(tr_out) / "final.bin").string() << "\n";
    } else if (*xf) {
      const corpus::Dataset data = corpus::load_dataset(xf_data);
      const Loaded m = load_trained(xf_ckpt);
      const auto* src = data.find(xf_source);
      const auto* donor = data.find(xf_donor);
      if (!src) throw CLI::ValidationError("--source", "unknown utterance id " + xf_source);
      if (!donor) throw CLI::ValidationError("--donor", "unknown utterance id " + xf_donor);
      const Matrix frames = transfer(m.models, m.params, *src, *donor);
      write_file_atomic(xf_out, fs::path(xf_out).extension() == ".csv" ? frames_csv(frames) : frames_f32(frames));
      out << "wrote " << frames.rows() << " frames to " << xf_out << "\n";
    } else if (*ev) {
      const json cfg = read_config(ev_config);
      const json oj = section(cfg, "oracle");
      OracleOptions oo = or_default;
      oo.steps = oj.value("steps", oo.steps);
      oo.batch_size = oj.value("batch_size", oo.batch_size);
      oo.lr = oj.value("lr", oo.lr);
      oo.seed = oj.value("seed", oo.seed);
      override_with(ev_steps_opt, ev_oracle_steps, oo.steps);
      EvalOptions eo = ev_default;
      override_with(ev_seed_opt, ev_seed, eo.seed);
      const corpus::Dataset data = corpus::load_dataset(ev_data);
      const Loaded m = load_trained(ev_ckpt);
      StyleConfig arch = m.models.cfg.style;
      arch.flow_steps = StyleConfig{}.flow_steps;
      const Oracle oracle = train_oracle_style_classifier(data, arch, oo);
      const EvalReport rep = evaluate(m.models, m.params, data, oracle, eo);
      write_file_atomic(ev_out, to_json(rep).dump(2) + "\n");
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "oracle val %.4f | style acc seen %.4f unseen %.4f | speaker ranking seen %.4f unseen %.4f\n",
                    rep.oracle_val_accuracy, rep.style_accuracy.at("seen"), rep.style_accuracy.at("unseen"),
                    rep.seen.ranking_rate, rep.unseen.ranking_rate);
      out << buf << "wrote " << ev_out << "\n";
    } else if (*ex) {
      const corpus::Dataset data = corpus::load_dataset(ex_data);
      const Loaded m = load_trained(ex_ckpt);
      const auto rows = collect_embeddings(m.models, m.params, data, ex_transfers, ex_seed);
      write_file_atomic(ex_out, export_embeddings_tsv(rows));
      out << "wrote " << rows.size() << " rows to " << ex_out << "\n";
    } else if (*st) {
      bool ok = true;
      for (const auto& r : selftest::run_all(st_seed)) {
        out << selftest::format(r) << "\n" << std::flush;
        ok = ok && r.passed;
      }
      out << (ok ? "selftest passed\n" : "selftest FAILED\n");
      return ok ? kExitOk : kExitFailure;
    }
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace flowstyle
