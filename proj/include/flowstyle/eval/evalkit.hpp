#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowstyle/corpus/corpus.hpp"
#include "flowstyle/model/models.hpp"

namespace flowstyle {

struct OracleOptions {
  int steps = 800;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 11;
  /// Negative control: train on labels permuted across utterances.
  bool shuffle_labels = false;
};

/// Independent style classifier with the style-encoder architecture,
/// trained only on real training utterances and frozen afterwards.
struct Oracle {
  StyleEncoder model;
  ParamStore params;
  double val_accuracy = 0.0;
};

Oracle train_oracle_style_classifier(const corpus::Dataset& data, const StyleConfig& arch, const OracleOptions& options);
std::vector<int> oracle_predict(const Oracle& oracle, const std::vector<const Matrix*>& frames);

/// Fraction of transfers the oracle assigns to the donor's style.
double style_transfer_accuracy(const Oracle& oracle, const std::vector<const Matrix*>& transfers,
                               const std::vector<int>& donor_styles);

/// a.b / (|a| |b|); throws on a zero-norm input.
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct SpeakerPreservation {
  double mean_same = 0.0;   // cosine to a same-speaker ground-truth utterance
  double mean_cross = 0.0;  // cosine to other speakers' utterances
  double ranking_rate = 0.0;
  int count = 0;
};

/// For every transfer embedding (column of `transferred`), compares its
/// cosine to `same_ref` against the cosines to each column of `other_refs`.
SpeakerPreservation speaker_preservation(const Matrix& transferred, const Matrix& same_ref,
                                         const std::vector<Matrix>& other_refs);

struct EvalOptions {
  std::uint64_t seed = 5;
  int max_unseen = 40;
};

struct EvalReport {
  std::map<std::string, double> style_accuracy;  // "seen", "unseen", "seen->customer-service", ...
  double speaker_accuracy = 0.0;
  SpeakerPreservation seen;
  SpeakerPreservation unseen;
  double oracle_val_accuracy = 0.0;
  double reconstruction_mse = 0.0;
  double frame_variance = 0.0;
  double cluster_between = 0.0;
  double cluster_within = 0.0;
  int seen_transfers = 0;
  int unseen_transfers = 0;
  int truncated = 0;
};

nlohmann::json to_json(const EvalReport& r);

/// Transfers every seen-style test source and up to max_unseen held-out
/// sources to each target style (donor drawn from that style's test
/// utterances) and scores them.
EvalReport evaluate(const Models& models, const ParamStore& ps, const corpus::Dataset& data, const Oracle& oracle,
                    const EvalOptions& options = {});

/// Mean distance between style centroids and mean distance of embeddings
/// to their own centroid.
std::pair<double, double> cluster_separation(const Matrix& embeddings, const std::vector<int>& labels);

struct EmbeddingRow {
  std::string id;
  int style = 0;
  int speaker = 0;
  bool transferred = false;
  Eigen::VectorXd embedding;
};

/// Rows with a 2-D principal-component projection fitted on the real rows.
std::string export_embeddings_tsv(const std::vector<EmbeddingRow>& rows);
std::vector<EmbeddingRow> collect_embeddings(const Models& models, const ParamStore& ps, const corpus::Dataset& data,
                                             bool include_transfers, std::uint64_t seed);
/// 2 x N projection of `x` (D x N) onto the top two principal axes of `fit`.
Matrix pca_project(const Matrix& fit, const Matrix& x);

}  // namespace flowstyle
