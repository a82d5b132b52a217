// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "photofit/encoder.hpp"
#include "photofit/model.hpp"
#include "photofit/trial.hpp"

namespace photofit {

enum class ScorerVariant { kFull, k5s, k30s, kNoAtt };
std::string_view variant_name(ScorerVariant v);
ScorerVariant variant_from_name(std::string_view name);
inline constexpr std::array<ScorerVariant, 4> kScorerVariants = {
    ScorerVariant::kFull, ScorerVariant::k5s, ScorerVariant::k30s, ScorerVariant::kNoAtt};

struct ScorerConfig {
  int bins = 30;
  int resolution = 16;
  bool attention = true;
  int kernel = 4;
  std::array<int, 3> widths{10, 14, 16};
  int hidden = 30;

  static ScorerConfig for_variant(ScorerVariant v, double trial_ms = 30000.0, int resolution = 16);
  double bin_ms(double trial_ms) const { return trial_ms / bins; }
};

/// Per bin: the fixation and activation maps stacked as [R,R,2] go through
/// three [conv -> relu -> batchnorm] blocks (strides 1,2,2) and GAP. The bin
/// sequence feeds a GRU, then attention pooling (or the last hidden state) and
/// a zero-initialised logistic head. forward() returns logits.
class Scorer final : public Model {
 public:
  explicit Scorer(ScorerConfig cfg = {});

  const ScorerConfig& config() const { return cfg_; }
  void reset_parameters(Rng& rng);

  std::string kind() const override { return "scorer"; }
  Tensor forward(const Tensor& x, Mode mode) override;  // [N,B,R,R,2] -> [N,1]
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter<float>*> parameters() override;
  std::vector<NamedBuffer<float>> buffers() override;
  std::vector<NamedTensor> meta() const override;

  /// [N,B] attention from the last forward; uniform-free empty tensor for NoAtt.
  const Tensor& attention() const;

 private:
  ScorerConfig cfg_;
  Sequential<float> frames_;  // [N*B,R,R,2] -> [N*B,C]
  Sequential<float> temporal_;
  AttentionPool<float>* pool_ = nullptr;
  Dense<float>* head_ = nullptr;
  Tensor empty_;
  int batch_ = 0;
};

/// Encoder outputs for the six faces of a trial.
struct TrialEncoding {
  Tensor features;  // [6,K]
  Tensor maps;      // [6,K,R,R], each map standardized
};

/// Zero mean, unit variance, guarded for flat maps.
void standardize(std::span<float> map);
TrialEncoding encode_trial(Encoder& enc, const Trial& t);

/// Mirrors each R x R plane left to right.
void flip_planes(std::span<float> planes, int resolution);

enum SampleFlip : std::uint8_t { kFlipNone = 0, kFlipFixation = 1, kFlipActivation = 2, kFlipBoth = 3 };

struct SampleRef {
  int trial = 0;
  int face = 0;
  int feature = 0;
  std::uint8_t label = 0;
  std::uint8_t flips = kFlipNone;
  std::size_t fix_block = 0;  // into SampleSet::fix_pool, B*R*R floats
  std::size_t act_block = 0;  // into SampleSet::act_pool, R*R floats
};

/// Scorer inputs. Map storage is shared between samples of one face so the
/// 96 samples of a trial hold one fixation stack per face.
struct SampleSet {
  int bins = 0;
  int resolution = 0;
  int features = 0;
  std::vector<SampleRef> samples;
  std::vector<float> fix_pool;
  std::vector<float> act_pool;

  std::size_t size() const { return samples.size(); }
  std::size_t plane() const { return std::size_t(resolution) * resolution; }
  /// Fixation stack [B,R,R] and activation map [R,R] of one sample, flips applied.
  void maps(std::size_t i, std::span<float> fix, std::span<float> act) const;
  /// [n,B,R,R,2]: channel 0 fixation, channel 1 activation (replicated per bin).
  Tensor batch(std::span<const int> idx) const;
  Tensor labels(std::span<const int> idx) const;  // [n,1]
  int positives() const;
};

struct SampleOptions {
  MapConfig maps;       // bin length must match the scorer
  bool augment = false; // add the three flips of every positive
};

SampleSet build_samples(std::span<const Trial> trials, std::span<const TrialEncoding> encodings,
                        const SampleOptions& opt);

/// Binary cache: u32 B, R, K; then per sample a label byte and two B*R*R f32
/// blocks (fixation, activation). index.json lists trial/face/feature/flips.
void write_sample_cache(const std::filesystem::path& dir, const SampleSet& s);
SampleSet read_sample_cache(const std::filesystem::path& dir);

struct ScorerTrainOptions {
  int epochs = 8;
  int batch_size = 32;
  AdamOptions adam;
  std::uint64_t seed = 1;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Binary cross-entropy with Adam; keeps the best validation-loss weights.
TrainHistory train_scorer(Scorer& m, const SampleSet& train, const SampleSet& val,
                          const ScorerTrainOptions& opt);

struct ScoreOutput {
  std::vector<float> probability;  // per sample
  Tensor attention;                // [n,B], empty for NoAtt
};
ScoreOutput score_samples(Scorer& m, const SampleSet& s, int batch_size = 128);

/// Mean BCE and accuracy at 0.5 of precomputed probabilities.
double mean_bce(std::span<const float> p, const SampleSet& s);
double accuracy_at_half(std::span<const float> p, const SampleSet& s);

/// Area under the ROC curve via the rank statistic; ties count one half.
double roc_auc(std::span<const float> scores, std::span<const std::uint8_t> labels);

}  // namespace photofit
