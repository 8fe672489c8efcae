#include "flowstyle/model/adversaries.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "flowstyle/model/fit.hpp"
#include "flowstyle/numerics/error.hpp"
#include "flowstyle/numerics/nn.hpp"
#include "flowstyle/numerics/ops.hpp"

namespace flowstyle {

nlohmann::json to_json(const DiscConfig& c) {
  return {{"frame_dim", c.frame_dim}, {"frame_hidden", c.frame_hidden}, {"hidden", c.hidden}};
}

DiscConfig disc_config_from_json(const nlohmann::json& j, DiscConfig c) {
  c.frame_dim = j.value("frame_dim", c.frame_dim);
  c.frame_hidden = j.value("frame_hidden", c.frame_hidden);
  c.hidden = j.value("hidden", c.hidden);
  return c;
}

Discriminator::Discriminator(DiscConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {}

void Discriminator::init(ParamStore& ps, RngStream& rng) const {
  nn::Linear{name("frame"), 2 * cfg_.frame_dim, cfg_.frame_hidden}.init(ps, rng);
  nn::Linear{name("hidden1"), cfg_.frame_hidden, cfg_.hidden}.init(ps, rng);
  nn::Linear{name("hidden2"), cfg_.hidden, cfg_.hidden}.init(ps, rng);
  nn::Linear{name("out"), cfg_.hidden, 1}.init(ps, rng);
}

Var Discriminator::logits(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps) const {
  if (frames.rows() != cfg_.frame_dim) throw ShapeError("discriminate", "frame width mismatch");
  const int B = static_cast<int>(lengths.size());
  Var centred = ad::sub(frames, ad::tile_cols(ad::masked_time_mean(frames, lengths), steps));
  Var delta = ad::scale(frames, 0.0);
  if (steps > 1) {
    std::vector<Var> parts{ad::slice_cols(frames, 0, B), ad::slice_cols(frames, 0, Eigen::Index(steps - 1) * B)};
    delta = ad::sub(frames, ad::concat_cols(parts));
  }
  std::vector<Var> feats{centred, delta};
  Var f = ad::relu(nn::Linear{name("frame"), 2 * cfg_.frame_dim, cfg_.frame_hidden}(g, ps, ad::concat_rows(feats)));
  Var pooled = ad::masked_time_mean(f, lengths);
  Var a = ad::relu(nn::Linear{name("hidden1"), cfg_.frame_hidden, cfg_.hidden}(g, ps, pooled));
  a = ad::relu(nn::Linear{name("hidden2"), cfg_.hidden, cfg_.hidden}(g, ps, a));
  return nn::Linear{name("out"), cfg_.hidden, 1}(g, ps, a);
}

Var Discriminator::prob(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps) const {
  return ad::sigmoid(logits(g, ps, frames, lengths, steps));
}

double Discriminator::discriminate(const ParamStore& ps, const Matrix& frames) const {
  Graph g(false);
  const SeqBatch x = pack_frames(frames);
  return prob(g, ps, g.constant(x.frames), x.lengths, x.steps).scalar();
}

DomainModel::DomainModel(StyleConfig cfg, std::string prefix)
    : enc_([&] {
        cfg.classes = 1;
        return cfg;
      }(),
           std::move(prefix)) {}

Var DomainModel::logits(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps) const {
  const Matrix eps = Matrix::Zero(enc_.config().latent, static_cast<Eigen::Index>(lengths.size()));
  return enc_.encode(g, ps, frames, lengths, steps, eps).cls.logits;
}

Var DomainModel::prob(Graph& g, const ParamStore& ps, Var frames, std::span<const int> lengths, int steps) const {
  return ad::sigmoid(logits(g, ps, frames, lengths, steps));
}

double DomainModel::style_domain_prob(const ParamStore& ps, const Matrix& frames) const {
  Graph g(false);
  const SeqBatch x = pack_frames(frames);
  return prob(g, ps, g.constant(x.frames), x.lengths, x.steps).scalar();
}

double domain_accuracy(const DomainModel& model, const ParamStore& ps, const corpus::CorpusSpec& spec,
                       const std::vector<const corpus::Utterance*>& items) {
  if (items.empty()) return 0.0;
  std::vector<const Matrix*> frames;
  for (const auto* u : items) frames.push_back(&u->frames);
  const auto pred = predicted_labels(classifier_logits(model.encoder(), ps, frames));
  int correct = 0;
  for (std::size_t i = 0; i < items.size(); ++i) correct += pred[i] == (spec.is_target(items[i]->style_id) ? 1 : 0);
  return double(correct) / double(items.size());
}

PretrainReport pretrain_ds(const DomainModel& model, ParamStore& ps, const corpus::Dataset& data,
                           const PretrainOptions& options) {
  const auto& spec = data.spec;
  std::map<int, std::vector<const corpus::Utterance*>> by_style;
  for (const auto* u : data.select(corpus::Split::train))
    if (u->style_id < spec.n_train_styles()) by_style[u->style_id].push_back(u);
  RngStream rng(options.seed, 0xd5);
  std::vector<LabeledFrames> items;
  bool has_src = false, has_tgt = false;
  for (auto& [style, members] : by_style) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.uniform_int(i)]);
    const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(options.portion * members.size())));
    for (std::size_t i = 0; i < std::min(take, members.size()); ++i) {
      const bool tgt = spec.is_target(style);
      items.push_back({&members[i]->frames, tgt ? 1 : 0});
      has_src = has_src || !tgt;
      has_tgt = has_tgt || tgt;
    }
  }
  if (!has_src || !has_tgt) throw Error("pretrain_ds: subset must contain both domains");
  PretrainReport rep;
  rep.train_utterances = static_cast<int>(items.size());
  rep.train_loss = fit_sequence_classifier(
      model.encoder(), ps, items,
      {.steps = options.steps, .batch_size = options.batch_size, .lr = options.lr, .seed = options.seed});
  std::vector<const corpus::Utterance*> val;
  for (const auto* u : data.select(corpus::Split::val))
    if (u->style_id < spec.n_train_styles()) val.push_back(u);
  rep.val_utterances = static_cast<int>(val.size());
  rep.val_accuracy = domain_accuracy(model, ps, spec, val);
  return rep;
}

}  // namespace flowstyle
