// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "photofit/pipeline.hpp"

namespace photofit {

namespace {

void check_matrix(const Tensor& features, const Tensor& scores, const SliderSchema& schema) {
  require_rank(features, 2, "face features");
  require_rank(scores, 2, "score matrix");
  if (features.dims() != scores.dims()) {
    throw ConfigError("features " + dims_to_string(features.dims()) + " and scores " +
                      dims_to_string(scores.dims()) + " differ");
  }
  if (features.dim(1) != schema.reconstructable_count()) {
    throw ConfigError("expected " + std::to_string(schema.reconstructable_count()) + " features per face");
  }
}

SliderVector with_fixed(const SliderVector& fixed_from, const SliderSchema& schema) {
  if (fixed_from.values.size() != std::size_t(schema.size())) throw ConfigError("fixed slider source has wrong length");
  SliderVector out;
  out.schema_id = schema.id();
  out.values.assign(std::size_t(schema.size()), 0.0f);
  for (int j : schema.indices(Group::kFixed)) out.values[std::size_t(j)] = fixed_from.values[std::size_t(j)];
  return out;
}

}  // namespace

Reconstruction reconstruct_weighted(const Tensor& features, const Tensor& scores, const SliderVector& fixed_from,
                                    const SliderSchema& schema) {
  check_matrix(features, scores, schema);
  const int n = features.dim(0), k = features.dim(1);
  Reconstruction r;
  r.method = "ours";
  r.sliders = with_fixed(fixed_from, schema);
  for (int f = 0; f < k; ++f) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
      const double s = scores[std::size_t(i * k + f)];
      if (s < 0.0) throw ConfigError("negative relevance score");
      num += s * features[std::size_t(i * k + f)];
      den += s;
    }
    if (den < kScoreFloor) {
      r.fallback.push_back(f);
      num = 0.0;
      for (int i = 0; i < n; ++i) num += features[std::size_t(i * k + f)];
      den = n;
    }
    r.sliders.values[std::size_t(schema.reconstructable()[std::size_t(f)])] = float(num / den);
  }
  return r;
}

std::vector<int> argmax_faces(const Tensor& scores) {
  require_rank(scores, 2, "score matrix");
  const int n = scores.dim(0), k = scores.dim(1);
  std::vector<int> out(static_cast<std::size_t>(k), 0);
  for (int f = 0; f < k; ++f) {
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (scores[std::size_t(i * k + f)] > scores[std::size_t(best * k + f)]) best = i;
    out[std::size_t(f)] = best;
  }
  return out;
}

Reconstruction reconstruct_argmax(const Tensor& features, const Tensor& scores, const SliderVector& fixed_from,
                                  const SliderSchema& schema) {
  check_matrix(features, scores, schema);
  const int k = features.dim(1);
  Reconstruction r;
  r.method = "ours-argmax";
  r.sliders = with_fixed(fixed_from, schema);
  r.selected = argmax_faces(scores);
  for (int f = 0; f < k; ++f) {
    r.sliders.values[std::size_t(schema.reconstructable()[std::size_t(f)])] =
        features[std::size_t(r.selected[std::size_t(f)] * k + f)];
  }
  return r;
}

Reconstruction mean_baseline(const TrialFaces& faces, const SliderSchema& schema) {
  Reconstruction r;
  r.method = "baseline";
  r.sliders = mean_sliders(schema);
  std::fill(r.sliders.values.begin(), r.sliders.values.end(), 0.0f);
  for (int j = 0; j < schema.size(); ++j) {
    double sum = 0.0;
    for (const auto& s : faces.faces) sum += s.values.at(std::size_t(j));
    r.sliders.values[std::size_t(j)] = float(sum / kAuxFaces);
  }
  return r;
}

double masd_values(std::span<const float> pred, std::span<const float> target) {
  if (pred.size() != target.size() || pred.empty()) throw ConfigError("masd: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(double(pred[i]) - double(target[i]));
  return s / double(pred.size());
}

namespace {

double masd_over(const SliderVector& pred, const SliderVector& target, const std::vector<int>& idx) {
  if (pred.values.size() != target.values.size()) throw ConfigError("masd: schema mismatch");
  double s = 0.0;
  for (int j : idx) s += std::abs(double(pred.values[std::size_t(j)]) - double(target.values[std::size_t(j)]));
  return s / double(idx.size());
}

}  // namespace

double masd(const SliderVector& pred, const SliderVector& target, const SliderSchema& schema) {
  return masd_over(pred, target, schema.reconstructable());
}

double masd_group(const SliderVector& pred, const SliderVector& target, Group g, const SliderSchema& schema) {
  if (g == Group::kFixed) throw ConfigError("fixed sliders are not scored");
  return masd_over(pred, target, schema.indices(g));
}

SliderVector clamped(const SliderVector& s) {
  SliderVector out = s;
  for (float& v : out.values) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::vector<TrialScores> score_trials(Scorer& scorer, std::span<const Trial> trials,
                                      std::span<const TrialEncoding> encodings) {
  const auto& sc = scorer.config();
  std::vector<TrialScores> out;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    SampleOptions opt;
    opt.maps.bin_ms = sc.bin_ms(trials[t].scanpath.trial_ms);
    opt.maps.resolution = sc.resolution;
    const SampleSet s = build_samples(trials.subspan(t, 1), encodings.subspan(t, 1), opt);
    ScoreOutput o = score_samples(scorer, s);
    TrialScores ts;
    ts.scores = Tensor({kAuxFaces, s.features});
    // A face nobody looked at carries no gaze evidence.
    std::array<bool, kAuxFaces> seen{};
    for (const auto& f : trials[t].scanpath.fixations) seen[std::size_t(f.face)] = true;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& r = s.samples[i];
      ts.scores[std::size_t(r.face * s.features + r.feature)] = seen[std::size_t(r.face)] ? o.probability[i] : 0.0f;
    }
    ts.attention = std::move(o.attention);
    out.push_back(std::move(ts));
  }
  return out;
}

}  // namespace photofit
