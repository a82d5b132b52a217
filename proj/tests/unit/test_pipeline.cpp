// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/aggregation_props.hpp"
#include "photofit/pipeline.hpp"

using namespace photofit;
using photofit::testing::random_matrix;

namespace {

const int K = default_schema().reconstructable_count();

Tensor column_matrix(int rows, std::initializer_list<float> col0) {
  Tensor t({rows, K}, 0.5f);
  int i = 0;
  for (float v : col0) t[std::size_t(i++ * K)] = v;
  return t;
}

float feature0(const Reconstruction& r) { return r.sliders.values[std::size_t(default_schema().reconstructable()[0])]; }

// Trials with ground-truth faces but no scanpath; enough for summarize().
void fake_trials(int n, std::uint64_t seed, std::vector<Trial>& trials, std::vector<TrialEncoding>& enc) {
  Rng rng(seed);
  for (int t = 0; t < n; ++t) {
    Trial tr;
    tr.id = t;
    tr.split = Split::kTest;
    tr.target = sample_sliders(rng);
    tr.faces = compose_trial_faces(tr.target, rng);
    TrialEncoding e;
    e.features = random_matrix(rng, kAuxFaces, K, 0.0, 1.0);
    trials.push_back(std::move(tr));
    enc.push_back(std::move(e));
  }
}

TrialScores label_scores(const Trial& t) {
  TrialScores s;
  s.scores = Tensor({kAuxFaces, K});
  for (int i = 0; i < kAuxFaces; ++i)
    for (int f = 0; f < K; ++f) s.scores[std::size_t(i * K + f)] = t.faces.labels[std::size_t(i)][std::size_t(f)];
  return s;
}

}  // namespace

TEST_CASE("weighted mean hand example") {
  const Tensor feats = column_matrix(2, {1.0f, 0.0f});
  const Tensor scores = column_matrix(2, {0.2f, 0.6f});
  const auto r = reconstruct_weighted(feats, scores, mean_sliders());
  CHECK(feature0(r) == doctest::Approx(0.25).epsilon(1e-7));
  CHECK(r.fallback.empty());
  CHECK(r.method == "ours");
}

TEST_CASE("equal scores give the plain mean and sub-floor sums fall back") {
  Rng rng(3);
  const Tensor feats = random_matrix(rng, kAuxFaces, K, 0.0, 1.0);
  Tensor equal({kAuxFaces, K}, 0.37f);
  Tensor zero({kAuxFaces, K}, 0.0f);
  const auto a = reconstruct_weighted(feats, equal, mean_sliders());
  const auto b = reconstruct_weighted(feats, zero, mean_sliders());
  CHECK(b.fallback.size() == std::size_t(K));
  for (int f = 0; f < K; ++f) {
    double mean = 0.0;
    for (int i = 0; i < kAuxFaces; ++i) mean += feats[std::size_t(i * K + f)];
    mean /= kAuxFaces;
    const auto j = std::size_t(default_schema().reconstructable()[std::size_t(f)]);
    CHECK(a.sliders.values[j] == doctest::Approx(mean).epsilon(1e-6));
    CHECK(b.sliders.values[j] == doctest::Approx(mean).epsilon(1e-6));
  }
  Tensor tiny({kAuxFaces, K}, 1e-8f);
  CHECK(reconstruct_weighted(feats, tiny, mean_sliders()).fallback.size() == std::size_t(K));
  Tensor neg = equal;
  neg[0] = -0.1f;
  CHECK_THROWS_AS(reconstruct_weighted(feats, neg, mean_sliders()), ConfigError);
}

TEST_CASE("fixed sliders come from the session target") {
  Rng rng(4);
  const SliderVector target = sample_sliders(rng);
  const Tensor feats = random_matrix(rng, kAuxFaces, K, 0.0, 1.0);
  const Tensor scores = random_matrix(rng, kAuxFaces, K, 0.1, 1.0);
  for (const auto& r : {reconstruct_weighted(feats, scores, target), reconstruct_argmax(feats, scores, target)})
    for (int j : default_schema().indices(Group::kFixed)) CHECK(r.sliders.values[std::size_t(j)] == target.values[std::size_t(j)]);
}

TEST_CASE("argmax selection and tie-break") {
  Tensor feats({kAuxFaces, K});
  for (int i = 0; i < kAuxFaces; ++i)
    for (int f = 0; f < K; ++f) feats[std::size_t(i * K + f)] = float(i) / 10.0f;
  Tensor scores({kAuxFaces, K}, 0.1f);
  scores[std::size_t(3 * K + 0)] = 0.9f;  // face 3 dominates feature 0
  scores[std::size_t(1 * K + 1)] = 0.8f;  // faces 1 and 4 tie on feature 1
  scores[std::size_t(4 * K + 1)] = 0.8f;
  const auto r = reconstruct_argmax(feats, scores, mean_sliders());
  CHECK(r.selected[0] == 3);
  CHECK(r.selected[1] == 1);
  CHECK(r.selected[2] == 0);  // all equal
  CHECK(feature0(r) == doctest::Approx(0.3));
}

TEST_CASE("masd hand example and identity") {
  const std::vector<float> pred{0.1f, 0.2f, 0.3f, 0.4f}, target{0.2f, 0.2f, 0.2f, 0.6f};
  CHECK(masd_values(pred, target) == doctest::Approx(0.1).epsilon(1e-6));
  Rng rng(5);
  const SliderVector s = sample_sliders(rng);
  CHECK(masd(s, s) == 0.0);
  CHECK_THROWS_AS(masd_group(s, s, Group::kFixed), ConfigError);
  // Fixed sliders never count.
  SliderVector t = s;
  for (int j : default_schema().indices(Group::kFixed)) t.values[std::size_t(j)] = 1.0f - t.values[std::size_t(j)];
  CHECK(masd(s, t) == 0.0);
}

TEST_CASE("mean baseline of identical faces is that face") {
  Rng rng(6);
  const SliderVector s = sample_sliders(rng);
  TrialFaces faces;
  faces.faces.fill(s);
  const auto r = mean_baseline(faces);
  for (std::size_t j = 0; j < s.values.size(); ++j) CHECK(r.sliders.values[j] == doctest::Approx(s.values[j]).epsilon(1e-7));
}

TEST_CASE("aggregation algebra on random inputs") {
  const auto c = photofit::testing::check_aggregation_properties(1000, 99);
  CHECK(c.rescale_fail == 0);
  CHECK(c.permute_fail == 0);
  CHECK(c.monotone_fail == 0);
  CHECK(c.metric_fail == 0);
}

TEST_CASE("oracle scores select carriers exactly") {
  std::vector<Trial> trials;
  std::vector<TrialEncoding> enc;
  fake_trials(50, 7, trials, enc);
  std::vector<TrialScores> scores;
  for (const auto& t : trials) scores.push_back(label_scores(t));
  const auto rep = summarize("oracle", trials, enc, scores);
  CHECK(rep.accuracy == 1.0);
  for (double a : rep.group_accuracy) CHECK(a == 1.0);
  // Each group row of the confusion matrix sits on its carrier face.
  for (int g = 0; g < 4; ++g) CHECK(rep.confusion[std::size_t(g)][std::size_t(g)] == 1.0);
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const auto r = reconstruct_argmax(enc[t].features, scores[t].scores, trials[t].target);
    for (int f = 0; f < K; ++f) {
      const int face = r.selected[std::size_t(f)];
      CHECK(trials[t].faces.labels[std::size_t(face)][std::size_t(f)] == 1);
      CHECK(r.sliders.values[std::size_t(default_schema().reconstructable()[std::size_t(f)])] ==
            enc[t].features[std::size_t(face * K + f)]);
    }
  }
}

TEST_CASE("random scores sit at chance") {
  std::vector<Trial> trials;
  std::vector<TrialEncoding> enc;
  fake_trials(2000, 8, trials, enc);
  Rng rng(9);
  std::vector<TrialScores> scores;
  for (std::size_t t = 0; t < trials.size(); ++t) scores.push_back({random_matrix(rng, kAuxFaces, K, 0.0, 1.0), {}});
  const auto rep = summarize("random", trials, enc, scores);
  // 32k Bernoulli(1/6) draws: sd 0.002.
  CHECK(rep.accuracy == doctest::Approx(1.0 / 6.0).epsilon(0.06));
  for (const auto& row : rep.confusion) {
    double sum = 0.0;
    for (double v : row) sum += v;
    CHECK(sum == doctest::Approx(1.0));
  }
  std::vector<Trial> none;
  CHECK_THROWS_AS(summarize("x", none, {}, {}), ConfigError);
}

TEST_CASE("scores are invariant to a monotone transform in the report") {
  std::vector<Trial> trials;
  std::vector<TrialEncoding> enc;
  fake_trials(30, 10, trials, enc);
  Rng rng(11);
  std::vector<TrialScores> a, b;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    a.push_back({random_matrix(rng, kAuxFaces, K, 0.0, 1.0), {}});
    b.push_back({photofit::testing::rank_transform(a.back().scores), {}});
  }
  const auto ra = summarize("a", trials, enc, a), rb = summarize("b", trials, enc, b);
  CHECK(ra.accuracy == rb.accuracy);
  CHECK(ra.confusion == rb.confusion);
  CHECK(ra.masd_argmax == rb.masd_argmax);
}

TEST_CASE("results csv layout") {
  EvalReport r;
  r.variant = "full";
  r.accuracy = 0.5;
  r.masd = 0.25;
  r.group_accuracy = {0.1, 0.2, 0.3, 0.4};
  r.group_masd = {0.01, 0.02, 0.03, 0.04};
  const auto path = std::filesystem::temp_directory_path() / "photofit_results_test.csv";
  write_results_csv(path, std::span<const EvalReport>(&r, 1));
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() ==
        "variant,group,accuracy,masd\n"
        "full,eyes,0.100000,0.010000\n"
        "full,nose,0.200000,0.020000\n"
        "full,mouth,0.300000,0.030000\n"
        "full,jaw,0.400000,0.040000\n"
        "full,all,0.500000,0.250000\n");
  std::filesystem::remove(path);
}

TEST_CASE("experiment config keys") {
  ExperimentConfig c;
  c.set("seed", "7");
  c.set("variants", "full,30s");
  c.set("observer.accuracy", "0.5");
  CHECK(c.seed == 7);
  CHECK(c.variants.size() == 2);
  CHECK(c.variants[1] == ScorerVariant::k30s);
  CHECK(c.trials.observer.accuracy == 0.5);
  CHECK_THROWS_AS(c.set("no_such_key", "1"), ConfigError);
  CHECK(c.models() == c.out / "models");
}
