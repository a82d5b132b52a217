// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "photofit/pipeline.hpp"

namespace photofit {

EvalReport summarize(std::string variant, std::span<const Trial> trials, std::span<const TrialEncoding> encodings,
                     std::span<const TrialScores> scores) {
  if (trials.empty()) throw ConfigError("evaluate: empty split");
  if (trials.size() != encodings.size() || trials.size() != scores.size()) {
    throw ConfigError("evaluate: trials, encodings and scores must align");
  }
  const SliderSchema& schema = default_schema();
  const int k = schema.reconstructable_count();
  EvalReport rep;
  rep.variant = std::move(variant);
  rep.trials = int(trials.size());
  rep.feature_confusion.assign(std::size_t(k), {});
  std::array<int, 4> group_hits{}, group_total{};
  std::vector<int> group_of(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    group_of[std::size_t(f)] = int(schema.at(schema.reconstructable()[std::size_t(f)]).group);
  }
  int hits = 0, wins = 0;
  std::size_t alpha_rows = 0;

  for (std::size_t t = 0; t < trials.size(); ++t) {
    const Trial& trial = trials[t];
    const Tensor& feats = encodings[t].features;
    const Tensor& s = scores[t].scores;
    const Reconstruction ours = reconstruct_weighted(feats, s, trial.target);
    const Reconstruction arg = reconstruct_argmax(feats, s, trial.target);
    const Reconstruction base = mean_baseline(trial.faces);

    TrialResult tr;
    tr.trial = trial.id;
    tr.masd_ours = masd(ours.sliders, trial.target);
    tr.masd_argmax = masd(arg.sliders, trial.target);
    tr.masd_baseline = masd(base.sliders, trial.target);
    tr.fallback = int(ours.fallback.size());
    for (int f = 0; f < k; ++f) {
      const int face = arg.selected[std::size_t(f)];
      const int g = group_of[std::size_t(f)];
      const bool ok = trial.faces.labels[std::size_t(face)][std::size_t(f)] != 0;
      tr.correct += ok;
      group_hits[std::size_t(g)] += ok;
      ++group_total[std::size_t(g)];
      rep.confusion[std::size_t(g)][std::size_t(face)] += 1.0;
      rep.feature_confusion[std::size_t(f)][std::size_t(face)] += 1.0;
    }
    for (int g = 0; g < 4; ++g) {
      rep.group_masd[std::size_t(g)] += masd_group(ours.sliders, trial.target, Group(g));
      rep.group_masd_baseline[std::size_t(g)] += masd_group(base.sliders, trial.target, Group(g));
    }
    hits += tr.correct;
    wins += tr.masd_ours < tr.masd_baseline;
    rep.masd += tr.masd_ours;
    rep.masd_argmax += tr.masd_argmax;
    rep.masd_baseline += tr.masd_baseline;
    rep.fallback_features += tr.fallback;

    const Tensor& a = scores[t].attention;
    if (!a.empty()) {
      const int rows = a.dim(0), bins = a.dim(1);
      if (rep.attention_profile.empty()) rep.attention_profile.assign(std::size_t(bins), 0.0);
      for (int r = 0; r < rows; ++r)
        for (int b = 0; b < bins; ++b) rep.attention_profile[std::size_t(b)] += a[std::size_t(r * bins + b)];
      alpha_rows += std::size_t(rows);
    }
    rep.per_trial.push_back(tr);
  }

  const double n = double(trials.size());
  rep.accuracy = double(hits) / (n * k);
  for (int g = 0; g < 4; ++g) {
    rep.group_accuracy[std::size_t(g)] = double(group_hits[std::size_t(g)]) / group_total[std::size_t(g)];
    rep.group_masd[std::size_t(g)] /= n;
    rep.group_masd_baseline[std::size_t(g)] /= n;
    for (double& c : rep.confusion[std::size_t(g)]) c /= group_total[std::size_t(g)];
  }
  for (auto& row : rep.feature_confusion)
    for (double& c : row) c /= n;
  rep.masd /= n;
  rep.masd_argmax /= n;
  rep.masd_baseline /= n;
  rep.win_rate = wins / n;
  for (double& a : rep.attention_profile) a /= double(alpha_rows);
  return rep;
}

EvalReport evaluate(Scorer& scorer, std::string variant, std::span<const Trial> trials,
                    std::span<const TrialEncoding> encodings) {
  const auto scores = score_trials(scorer, trials, encodings);
  return summarize(std::move(variant), trials, encodings, scores);
}

std::vector<std::array<double, 5>> fixation_profile(std::span<const Trial> trials, double bin_ms) {
  if (trials.empty()) throw ConfigError("fixation_profile: no trials");
  const double trial_ms = trials[0].scanpath.trial_ms;
  const int bins = int(std::lround(trial_ms / bin_ms));
  std::vector<std::array<double, 5>> out(static_cast<std::size_t>(bins), std::array<double, 5>{});
  for (const Trial& t : trials) {
    for (const Fixation& f : t.scanpath.fixations) {
      const auto& c = t.faces.carries[std::size_t(f.face)];
      const std::size_t role = c ? std::size_t(*c) : 4;
      for (int b = 0; b < bins; ++b) {
        const double lo = std::max(f.onset_ms, b * bin_ms), hi = std::min(f.end_ms(), (b + 1) * bin_ms);
        if (hi > lo) out[std::size_t(b)][role] += (hi - lo) / 1000.0;
      }
    }
  }
  for (auto& row : out)
    for (double& v : row) v /= double(trials.size());
  return out;
}

}  // namespace photofit
