#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "flowstyle/numerics/rng.hpp"
#include "flowstyle/numerics/tensor.hpp"

namespace flowstyle::corpus {

enum class Split { train, val, test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct StyleParams {
  std::string name;
  double rate = 0.1;   // contour cycles per frame
  double amp = 1.0;    // contour amplitude
  double tempo = 1.0;  // frames per token = round(4 * tempo)
};

/// Ground truth for one speaker: frames are base * tilt + offset.
struct SpeakerParams {
  std::vector<double> offset;
  std::vector<double> tilt;
};

/// Generator settings. Styles [0, n_source_styles) form the source domain,
/// the next n_target_styles the target domain, and one extra style/speaker
/// pair (index n_source_styles + n_target_styles) is held out for testing.
struct CorpusSpec {
  int n_source_styles = 4;
  int n_target_styles = 3;
  int frame_dim = 16;
  int vocab = 24;
  int utterances_per_style = 200;
  int unseen_utterances = 40;
  /// Optional per-style override of utterances_per_style (0 = no override).
  std::vector<int> style_counts;
  int min_frames = 20;
  int max_frames = 60;
  double noise = 0.05;
  double offset_scale = 0.6;
  double tilt_scale = 0.1;
  std::array<double, 3> split_fractions{0.90, 0.05, 0.05};
  std::vector<StyleParams> styles;  // empty = defaults
  std::uint64_t seed = 1;

  int n_train_styles() const { return n_source_styles + n_target_styles; }
  int unseen_style() const { return n_train_styles(); }
  int n_styles() const { return n_train_styles() + 1; }
  bool is_source(int style) const { return style < n_source_styles; }
  bool is_target(int style) const { return style >= n_source_styles && style < n_train_styles(); }
  int count_for(int style) const;
  /// Throws if the settings cannot produce a valid corpus.
  void validate() const;
};

std::vector<StyleParams> default_styles();

struct Utterance {
  std::string id;
  std::vector<int> tokens;  // ids in [1, V]
  Matrix frames;            // T x F
  int style_id = 0;
  int speaker_id = 0;
  Split split = Split::train;

  int n_frames() const { return static_cast<int>(frames.rows()); }
};

/// Fixed factors shared by every utterance of a corpus.
struct Factors {
  Matrix base;  // V x F, row v-1 is the template of token v
  std::vector<double> direction;
  std::vector<StyleParams> styles;
  std::vector<SpeakerParams> speakers;  // speaker i records style i
};

struct Dataset {
  CorpusSpec spec;
  Factors factors;
  std::vector<Utterance> utterances;

  std::vector<const Utterance*> select(Split s) const;
  const Utterance* find(const std::string& id) const;
};

Factors make_factors(const CorpusSpec& spec);

int frames_per_token(const StyleParams& style);
double contour(const StyleParams& style, int t);

/// Frames for a token sequence under the given factors. Noise is drawn
/// from `noise_rng` when it is non-null and spec.noise > 0.
Matrix render_frames(const CorpusSpec& spec, const Factors& factors, const std::vector<int>& tokens,
                     int style_id, int speaker_id, RngStream* noise_rng);

/// Deterministic given spec.seed. Utterances are assigned to splits with
/// split() using spec.split_fractions.
Dataset generate_corpus(const CorpusSpec& spec);

struct SplitResult {
  std::vector<const Utterance*> train, val, test;
};

/// Stratified per style; the held-out style goes entirely to test. Updates
/// each utterance's split field.
SplitResult split(Dataset& data, const std::array<double, 3>& fractions, std::uint64_t seed);

/// Independent uniform draws of a source-domain and a target-domain
/// utterance from `pool`.
std::pair<const Utterance*, const Utterance*> sample_training_pair(
    const std::vector<const Utterance*>& pool, const CorpusSpec& spec, RngStream& rng);

/// manifest.json + frames.bin (little-endian f32, row-major T x F).
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json spec_to_json(const CorpusSpec& spec);
/// Missing keys keep their defaults.
CorpusSpec spec_from_json(const nlohmann::json& j);

}  // namespace flowstyle::corpus
