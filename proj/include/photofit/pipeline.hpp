// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "photofit/decoder.hpp"
#include "photofit/encoder.hpp"
#include "photofit/scorer.hpp"
#include "photofit/trial.hpp"

namespace photofit {

inline constexpr double kScoreFloor = 1e-6;

/// Aggregated features for one trial. `sliders` holds every slider (fixed
/// ones copied from the target); values are not clamped.
struct Reconstruction {
  std::string method;             // "ours", "ours-argmax" or "baseline"
  SliderVector sliders;
  std::vector<int> selected;      // argmax face per feature (argmax only)
  std::vector<int> fallback;      // features that fell back to uniform weights
};

/// Relevance-weighted mean of per-face features. features and scores are
/// [6,K] over the reconstructable sliders.
Reconstruction reconstruct_weighted(const Tensor& features, const Tensor& scores, const SliderVector& fixed_from,
                                    const SliderSchema& schema = default_schema());
/// Per feature, the value from the best-scoring face (lowest index on ties).
Reconstruction reconstruct_argmax(const Tensor& features, const Tensor& scores, const SliderVector& fixed_from,
                                  const SliderSchema& schema = default_schema());
std::vector<int> argmax_faces(const Tensor& scores);
/// Mean of the six ground-truth auxiliary slider vectors.
Reconstruction mean_baseline(const TrialFaces& faces, const SliderSchema& schema = default_schema());

/// Mean absolute slider distance over reconstructable sliders.
double masd(const SliderVector& pred, const SliderVector& target, const SliderSchema& schema = default_schema());
double masd_group(const SliderVector& pred, const SliderVector& target, Group g,
                  const SliderSchema& schema = default_schema());
double masd_values(std::span<const float> pred, std::span<const float> target);

/// Clamped copy for rendering.
SliderVector clamped(const SliderVector& s);

/// [6,K] probabilities for one trial. Faces without any fixation score 0.
struct TrialScores {
  Tensor scores;
  Tensor attention;  // [6*K,B], empty without attention
};
std::vector<TrialScores> score_trials(Scorer& scorer, std::span<const Trial> trials,
                                      std::span<const TrialEncoding> encodings);

struct TrialResult {
  int trial = 0;
  double masd_ours = 0.0;
  double masd_argmax = 0.0;
  double masd_baseline = 0.0;
  int correct = 0;
  int fallback = 0;
};

struct EvalReport {
  std::string variant;
  int trials = 0;
  double accuracy = 0.0;
  std::array<double, 4> group_accuracy{};
  double masd = 0.0;
  std::array<double, 4> group_masd{};
  double masd_argmax = 0.0;
  double masd_baseline = 0.0;
  std::array<double, 4> group_masd_baseline{};
  double win_rate = 0.0;  // trials where ours beats the baseline
  int fallback_features = 0;
  std::array<std::array<double, kAuxFaces>, 4> confusion{};  // group x face, rows sum to 1
  std::vector<std::array<double, kAuxFaces>> feature_confusion;  // K x face
  std::vector<double> attention_profile;                         // mean alpha per bin
  std::vector<TrialResult> per_trial;
};

/// Scores in, report out. Attention may be empty.
EvalReport summarize(std::string variant, std::span<const Trial> trials, std::span<const TrialEncoding> encodings,
                     std::span<const TrialScores> scores);
EvalReport evaluate(Scorer& scorer, std::string variant, std::span<const Trial> trials,
                    std::span<const TrialEncoding> encodings);

/// Seconds per bin spent on each face role (eyes, nose, mouth, jaw carriers,
/// then distractors), averaged over trials. [B][5].
std::vector<std::array<double, 5>> fixation_profile(std::span<const Trial> trials, double bin_ms);

struct ExperimentConfig {
  std::uint64_t seed = 1;        // trials and scorer
  std::uint64_t model_seed = 1;  // encoder and decoder data and init
  int image_size = 64;
  int face_train = 20000;
  int face_val = 2000;
  int encoder_epochs = 6;
  int decoder_epochs = 40;
  int scorer_epochs = 8;
  int batch_size = 32;
  TrialConfig trials;
  std::vector<ScorerVariant> variants{kScorerVariants.begin(), kScorerVariants.end()};
  std::filesystem::path out = "photofit-out";
  std::filesystem::path model_dir;  // defaults to out/models
  bool plots = true;

  std::filesystem::path models() const { return model_dir.empty() ? out / "models" : model_dir; }
  /// Applies one key=value setting; throws ConfigError on unknown keys.
  void set(const std::string& key, const std::string& value);
  void load(const std::filesystem::path& file);
};

using Logger = std::function<void(const std::string&)>;

/// The contiguous run of split `s` in trials ordered train, val, test.
std::span<const Trial> split_range(std::span<const Trial> all, Split s, std::size_t* offset = nullptr);

/// Trains or loads (by checkpoint) the encoder and decoder under cfg.models().
/// Training logs are written next to the checkpoints as CSV.
void ensure_encoder(const ExperimentConfig& cfg, Encoder& enc, const Logger& log = {});
void ensure_decoder(const ExperimentConfig& cfg, Decoder& dec, const Logger& log = {});
/// Trains or loads the scorer of one variant for cfg.seed.
void ensure_scorer(const ExperimentConfig& cfg, ScorerVariant v, Scorer& scorer, std::span<const Trial> trials,
                   std::span<const TrialEncoding> encodings, const Logger& log = {});
std::filesystem::path scorer_checkpoint(const ExperimentConfig& cfg, ScorerVariant v);

struct ExperimentResult {
  std::vector<EvalReport> reports;  // one per variant, then the baseline
};

/// Full ablation: models, trials, every variant and the baseline. Writes
/// results.csv (variant, group, accuracy, masd), confusion and attention CSVs,
/// per-trial CSVs and PNG plots into cfg.out.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Logger& log = {});

void write_results_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);
/// confusion_<v>.csv, confusion_features_<v>.csv, trials_<v>.csv and attention_<v>.csv.
void write_report_files(const std::filesystem::path& dir, const EvalReport& r);

}  // namespace photofit
