#include "flowstyle/eval/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "flowstyle/model/fit.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/ops.hpp"

namespace flowstyle {

namespace {

std::vector<const Matrix*> frames_of(const std::vector<const corpus::Utterance*>& us) {
  std::vector<const Matrix*> out;
  for (const auto* u : us) out.push_back(&u->frames);
  return out;
}

std::vector<const Matrix*> pointers(const std::vector<Matrix>& ms) {
  std::vector<const Matrix*> out;
  for (const auto& m : ms) out.push_back(&m);
  return out;
}

struct TransferSet {
  std::vector<const corpus::Utterance*> sources;
  std::vector<const corpus::Utterance*> donors;
  std::vector<Matrix> frames;
  std::vector<bool> truncated;
};

/// Every source paired with one random donor of each target style.
TransferSet make_transfers(const Models& models, const ParamStore& ps, const corpus::Dataset& data,
                           const std::vector<const corpus::Utterance*>& sources, RngStream& rng) {
  const auto& spec = data.spec;
  std::map<int, std::vector<const corpus::Utterance*>> donors;
  for (const auto* u : data.select(corpus::Split::test))
    if (spec.is_target(u->style_id)) donors[u->style_id].push_back(u);
  TransferSet set;
  for (const auto* s : sources)
    for (int ts = spec.n_source_styles; ts < spec.n_train_styles(); ++ts) {
      const auto& pool = donors.at(ts);
      set.sources.push_back(s);
      set.donors.push_back(pool[rng.uniform_int(pool.size())]);
    }
  set.frames = transfer_batch(models, ps, set.sources, set.donors, &set.truncated);
  return set;
}

}  // namespace

Oracle train_oracle_style_classifier(const corpus::Dataset& data, const StyleConfig& arch,
                                     const OracleOptions& options) {
  StyleConfig cfg = arch;
  cfg.classes = data.spec.n_train_styles();
  cfg.frame_dim = data.spec.frame_dim;
  if (cfg.classes < 2) throw Error("train_oracle_style_classifier: need at least two classes");
  Oracle oracle{StyleEncoder(cfg, "oracle/"), {}, 0.0};
  RngStream init(options.seed, 0x0a);
  oracle.model.init(oracle.params, init);
  std::vector<LabeledFrames> items;
  for (const auto* u : data.select(corpus::Split::train))
    if (u->style_id < cfg.classes) items.push_back({&u->frames, u->style_id});
  if (options.shuffle_labels) {
    RngStream rng(options.seed, 0x5f);
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1].label, items[rng.uniform_int(i)].label);
  }
  fit_sequence_classifier(oracle.model, oracle.params, items,
                          {.steps = options.steps, .batch_size = options.batch_size, .lr = options.lr,
                           .seed = options.seed});
  std::vector<const corpus::Utterance*> val;
  for (const auto* u : data.select(corpus::Split::val))
    if (u->style_id < cfg.classes) val.push_back(u);
  const auto pred = oracle_predict(oracle, frames_of(val));
  int correct = 0;
  for (std::size_t i = 0; i < val.size(); ++i) correct += pred[i] == val[i]->style_id;
  oracle.val_accuracy = val.empty() ? 0.0 : double(correct) / double(val.size());
  return oracle;
}

std::vector<int> oracle_predict(const Oracle& oracle, const std::vector<const Matrix*>& frames) {
  if (frames.empty()) return {};
  return predicted_labels(classifier_logits(oracle.model, oracle.params, frames));
}

double style_transfer_accuracy(const Oracle& oracle, const std::vector<const Matrix*>& transfers,
                               const std::vector<int>& donor_styles) {
  if (transfers.empty()) throw Error("style_transfer_accuracy: empty transfer set");
  if (transfers.size() != donor_styles.size()) throw Error("style_transfer_accuracy: label count mismatch");
  const auto pred = oracle_predict(oracle, transfers);
  int hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == donor_styles[i];
  return double(hit) / double(pred.size());
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ShapeError("cosine", "dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error("cosine: zero-norm input");
  return a.dot(b) / (na * nb);
}

SpeakerPreservation speaker_preservation(const Matrix& transferred, const Matrix& same_ref,
                                         const std::vector<Matrix>& other_refs) {
  SpeakerPreservation sp;
  const Eigen::Index n = transferred.cols();
  sp.count = static_cast<int>(n);
  if (n == 0) return sp;
  int ranked = 0;
  double cross_sum = 0.0;
  int cross_n = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double same = cosine(transferred.col(i), same_ref.col(i));
    sp.mean_same += same;
    bool best = true;
    for (const auto& o : other_refs) {
      const double c = cosine(transferred.col(i), o.col(i));
      cross_sum += c;
      ++cross_n;
      best = best && same > c;
    }
    ranked += best;
  }
  sp.mean_same /= double(n);
  sp.mean_cross = cross_n ? cross_sum / cross_n : 0.0;
  sp.ranking_rate = double(ranked) / double(n);
  return sp;
}

std::pair<double, double> cluster_separation(const Matrix& emb, const std::vector<int>& labels) {
  std::map<int, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
  std::vector<Eigen::VectorXd> centroids;
  double within = 0.0;
  for (const auto& [label, idx] : groups) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(emb.rows());
    for (auto i : idx) c += emb.col(i);
    c /= double(idx.size());
    for (auto i : idx) within += (emb.col(i) - c).norm();
    centroids.push_back(c);
  }
  within /= double(labels.size());
  double between = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < centroids.size(); ++a)
    for (std::size_t b = a + 1; b < centroids.size(); ++b, ++pairs) between += (centroids[a] - centroids[b]).norm();
  return {pairs ? between / pairs : 0.0, within};
}

EvalReport evaluate(const Models& models, const ParamStore& ps, const corpus::Dataset& data, const Oracle& oracle,
                    const EvalOptions& options) {
  const auto& spec = data.spec;
  const auto& styles = data.factors.styles;
  RngStream rng(options.seed, 0xe7a1);
  const auto test = data.select(corpus::Split::test);
  std::vector<const corpus::Utterance*> seen_src, unseen_src;
  std::map<int, std::vector<const corpus::Utterance*>> by_speaker;
  for (const auto* u : test) {
    if (spec.is_source(u->style_id)) seen_src.push_back(u);
    if (u->style_id == spec.unseen_style() && static_cast<int>(unseen_src.size()) < options.max_unseen)
      unseen_src.push_back(u);
    by_speaker[u->speaker_id].push_back(u);
  }

  EvalReport rep;
  rep.oracle_val_accuracy = oracle.val_accuracy;

  // Speaker embeddings of every test utterance, used as ground-truth references.
  const Matrix test_r = speaker_embeddings(models, ps, frames_of(test));
  std::map<const corpus::Utterance*, Eigen::Index> test_col;
  for (std::size_t i = 0; i < test.size(); ++i) test_col[test[i]] = static_cast<Eigen::Index>(i);

  auto score = [&](const std::vector<const corpus::Utterance*>& sources, const std::string& tag,
                   SpeakerPreservation& sp) -> int {
    if (sources.empty()) return 0;
    TransferSet set = make_transfers(models, ps, data, sources, rng);
    const auto ptrs = pointers(set.frames);
    std::vector<int> donor_styles;
    for (const auto* d : set.donors) donor_styles.push_back(d->style_id);
    const auto pred = oracle_predict(oracle, ptrs);
    std::map<int, std::pair<int, int>> per_style;
    int hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool ok = pred[i] == donor_styles[i];
      hit += ok;
      auto& ps_ = per_style[donor_styles[i]];
      ps_.first += ok;
      ps_.second += 1;
    }
    rep.style_accuracy[tag] = double(hit) / double(pred.size());
    for (const auto& [s, c] : per_style)
      rep.style_accuracy[tag + "->" + styles[s].name] = double(c.first) / double(c.second);
    for (bool t : set.truncated) rep.truncated += t;

    const Matrix r = speaker_embeddings(models, ps, ptrs);
    Matrix same(r.rows(), r.cols());
    std::vector<Matrix> others;
    const int n_spk = spec.n_styles();
    for (int k = 0; k < n_spk - 1; ++k) others.emplace_back(r.rows(), r.cols());
    for (std::size_t i = 0; i < set.sources.size(); ++i) {
      const int spk = set.sources[i]->speaker_id;
      const auto& own = by_speaker.at(spk);
      const corpus::Utterance* ref = own[rng.uniform_int(own.size())];
      if (own.size() > 1)
        while (ref == set.sources[i]) ref = own[rng.uniform_int(own.size())];
      same.col(static_cast<Eigen::Index>(i)) = test_r.col(test_col.at(ref));
      int slot = 0;
      for (int k = 0; k < n_spk; ++k) {
        if (k == spk) continue;
        const auto& pool = by_speaker.at(k);
        others[slot++].col(static_cast<Eigen::Index>(i)) = test_r.col(test_col.at(pool[rng.uniform_int(pool.size())]));
      }
    }
    sp = speaker_preservation(r, same, others);

    if (tag == "seen") {
      const auto pred_spk = predicted_labels(speaker_logits(models, ps, ptrs));
      int ok = 0;
      for (std::size_t i = 0; i < pred_spk.size(); ++i) ok += pred_spk[i] == set.sources[i]->speaker_id;
      rep.speaker_accuracy = double(ok) / double(pred_spk.size());
    }
    return static_cast<int>(set.frames.size());
  };
  rep.seen_transfers = score(seen_src, "seen", rep.seen);
  rep.unseen_transfers = score(unseen_src, "unseen", rep.unseen);

  // Teacher-forced reconstruction error on seen-speaker test utterances.
  double se = 0.0, sum = 0.0, sum2 = 0.0;
  long count = 0;
  std::vector<const corpus::Utterance*> seen_test;
  for (const auto* u : test)
    if (u->style_id < spec.n_train_styles()) seen_test.push_back(u);
  for (std::size_t start = 0; start < seen_test.size(); start += 32) {
    const std::size_t n = std::min<std::size_t>(32, seen_test.size() - start);
    std::vector<const Matrix*> fr;
    std::vector<const std::vector<int>*> tok;
    for (std::size_t i = start; i < start + n; ++i) {
      fr.push_back(&seen_test[i]->frames);
      tok.push_back(&seen_test[i]->tokens);
    }
    const SeqBatch x = pack_frames(fr);
    Graph g(false);
    Var z = models.style.encode(g, ps, x, Matrix::Zero(models.cfg.style.latent, x.batch)).cls.embedding;
    Var r = models.speaker.encode(g, ps, x).embedding;
    DecodeVars dv = models.synth.decode(g, ps, models.synth.encode_text(g, ps, pack_tokens(tok)), z, r, x);
    for (int b = 0; b < x.batch; ++b) {
      const Matrix pred = unpack_frames(dv.frames.value(), x.batch, b, x.lengths[b]);
      se += (pred - *fr[b]).squaredNorm();
      sum += fr[b]->sum();
      sum2 += fr[b]->squaredNorm();
      count += fr[b]->size();
    }
  }
  if (count > 0) {
    rep.reconstruction_mse = se / double(count);
    const double mean = sum / double(count);
    rep.frame_variance = sum2 / double(count) - mean * mean;
  }

  std::vector<int> labels;
  for (const auto* u : test) labels.push_back(u->style_id);
  const auto [between, within] = cluster_separation(style_embeddings(models, ps, frames_of(test)), labels);
  rep.cluster_between = between;
  rep.cluster_within = within;
  return rep;
}

nlohmann::json to_json(const EvalReport& r) {
  auto sp = [](const SpeakerPreservation& s) {
    return nlohmann::json{{"mean_same_cosine", s.mean_same},
                          {"mean_cross_cosine", s.mean_cross},
                          {"ranking_rate", s.ranking_rate},
                          {"count", s.count}};
  };
  return {{"style_accuracy", r.style_accuracy},
          {"speaker_accuracy", r.speaker_accuracy},
          {"speaker_preservation", {{"seen", sp(r.seen)}, {"unseen", sp(r.unseen)}}},
          {"oracle_val_accuracy", r.oracle_val_accuracy},
          {"reconstruction_mse", r.reconstruction_mse},
          {"frame_variance", r.frame_variance},
          {"cluster", {{"between", r.cluster_between}, {"within", r.cluster_within}}},
          {"counts", {{"seen_transfers", r.seen_transfers}, {"unseen_transfers", r.unseen_transfers},
                      {"truncated", r.truncated}}}};
}

Matrix pca_project(const Matrix& fit, const Matrix& x) {
  if (fit.rows() != x.rows()) throw ShapeError("pca_project", "dimension mismatch");
  const Eigen::VectorXd mean = fit.rowwise().mean();
  const Eigen::MatrixXd centred = fit.colwise() - mean;
  const Eigen::MatrixXd cov = centred * centred.transpose() / std::max<double>(1.0, double(fit.cols()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index d = fit.rows();
  Eigen::MatrixXd axes(d, 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = k < d ? Eigen::VectorXd(solver.eigenvectors().col(d - 1 - k)) : Eigen::VectorXd::Zero(d);
    // Fix the sign so the largest-magnitude component is positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(k) = v;
  }
  return axes.transpose() * (x.colwise() - mean);
}

std::vector<EmbeddingRow> collect_embeddings(const Models& models, const ParamStore& ps, const corpus::Dataset& data,
                                             bool include_transfers, std::uint64_t seed) {
  const auto test = data.select(corpus::Split::test);
  const Matrix real = style_embeddings(models, ps, frames_of(test));
  std::vector<EmbeddingRow> rows;
  for (std::size_t i = 0; i < test.size(); ++i)
    rows.push_back({test[i]->id, test[i]->style_id, test[i]->speaker_id, false, real.col(static_cast<Eigen::Index>(i))});
  if (include_transfers) {
    RngStream rng(seed, 0xe7a1);
    std::vector<const corpus::Utterance*> sources;
    for (const auto* u : test)
      if (!data.spec.is_target(u->style_id)) sources.push_back(u);
    TransferSet set = make_transfers(models, ps, data, sources, rng);
    const Matrix emb = style_embeddings(models, ps, pointers(set.frames));
    for (std::size_t i = 0; i < set.frames.size(); ++i)
      rows.push_back({set.sources[i]->id + ">" + set.donors[i]->id, set.donors[i]->style_id,
                      set.sources[i]->speaker_id, true, emb.col(static_cast<Eigen::Index>(i))});
  }
  return rows;
}

std::string export_embeddings_tsv(const std::vector<EmbeddingRow>& rows) {
  if (rows.empty()) return "";
  const Eigen::Index d = rows[0].embedding.size();
  std::vector<Eigen::Index> real_idx;
  Matrix all(d, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    all.col(static_cast<Eigen::Index>(i)) = rows[i].embedding;
    if (!rows[i].transferred) real_idx.push_back(static_cast<Eigen::Index>(i));
  }
  Matrix fit(d, static_cast<Eigen::Index>(real_idx.size()));
  for (std::size_t i = 0; i < real_idx.size(); ++i) fit.col(static_cast<Eigen::Index>(i)) = all.col(real_idx[i]);
  const Matrix xy = pca_project(fit.cols() > 0 ? fit : all, all);
  std::ostringstream out;
  out << "id\tstyle\tspeaker\tkind";
  for (Eigen::Index k = 0; k < d; ++k) out << "\te" << k;
  out << "\tpc1\tpc2\n";
  char buf[64];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << r.id << '\t' << r.style << '\t' << r.speaker << '\t' << (r.transferred ? "transferred" : "real");
    for (Eigen::Index k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, "\t%.9g", r.embedding(k));
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "\t%.9g\t%.9g\n", xy(0, Eigen::Index(i)), xy(1, Eigen::Index(i)));
    out << buf;
  }
  return out.str();
}

}  // namespace flowstyle
