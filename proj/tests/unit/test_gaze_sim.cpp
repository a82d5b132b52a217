// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "photofit/gaze.hpp"

using namespace photofit;

namespace {

struct TrialSetup {
  SliderVector target;
  TrialFaces faces;
};

TrialSetup make_trial(std::uint64_t seed) {
  Rng rng(seed);
  TrialSetup t;
  t.target = sample_sliders(rng);
  t.faces = compose_trial_faces(t.target, rng);
  return t;
}

int carrier(const TrialFaces& t, Group g) {
  for (int i = 0; i < kAuxFaces; ++i)
    if (t.carries[std::size_t(i)] == g) return i;
  return -1;
}

// Midpoint-rule integral of the isotropic Gaussian over [a0,a1] x [b0,b1].
double numeric_mass(double mx, double my, double sigma, double a0, double a1, double b0, double b1) {
  const int n = 400;
  auto axis = [&](double mu, double lo, double hi) {
    const double h = (hi - lo) / n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = (lo + (i + 0.5) * h - mu) / sigma;
      s += std::exp(-0.5 * z * z);
    }
    return s * h / (sigma * std::sqrt(2.0 * M_PI));
  };
  return axis(mx, a0, a1) * axis(my, b0, b1);
}

std::vector<Fixation> dwell(int face, double x, double y, double onset, double length, double step,
                            double drift = 0.0) {
  std::vector<Fixation> out;
  for (double t = onset; t < onset + length - 1e-9; t += step) {
    const double k = (t - onset) / step;
    out.push_back({face, x + drift * k, y, t, std::min(step, onset + length - t)});
  }
  return out;
}

}  // namespace

TEST_CASE("a perfectly accurate eyes-only observer only looks at the eyes carrier") {
  ObserverConfig cfg;
  cfg.accuracy = 1.0;
  cfg.group_weights = {1.0, 0.0, 0.0, 0.0};
  cfg.switch_ms = cfg.trial_ms;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto t = make_trial(seed);
    Rng rng(seed * 7);
    const auto s = simulate_scanpath(t.faces, t.target, cfg, rng);
    REQUIRE(!s.fixations.empty());
    for (const auto& f : s.fixations) {
      CHECK(f.face == carrier(t.faces, Group::kEyes));
      CHECK(region_of(Group::kEyes).dilated(0.2, 0.2).contains(f.x, f.y));
    }
  }
}

TEST_CASE("phase-1 time favours heavier groups over 1000 trials") {
  ObserverConfig cfg;
  double eyes = 0.0, jaw = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto t = make_trial(1000 + seed);
    Rng rng(seed);
    const auto s = simulate_scanpath(t.faces, t.target, cfg, rng);
    for (const auto& f : s.fixations) {
      if (f.onset_ms >= cfg.switch_ms) continue;
      if (f.face == carrier(t.faces, Group::kEyes)) eyes += f.duration_ms;
      if (f.face == carrier(t.faces, Group::kJaw)) jaw += f.duration_ms;
    }
  }
  CHECK(eyes > jaw);
}

TEST_CASE("phase 2 favours distractors at the configured rate") {
  ObserverConfig cfg;
  int on_distractor = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto t = make_trial(5000 + seed);
    Rng rng(seed);
    for (const auto& f : simulate_scanpath(t.faces, t.target, cfg, rng).fixations) {
      if (f.onset_ms < cfg.switch_ms) continue;
      ++total;
      if (!t.faces.carries[std::size_t(f.face)]) ++on_distractor;
    }
  }
  const double share = double(on_distractor) / total;
  CHECK(share == doctest::Approx(0.6).epsilon(0.05));
}

TEST_CASE("similarity observer prefers carriers in phase 1") {
  ObserverConfig cfg;
  cfg.mode = ObserverMode::kSimilarity;
  int hits = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto t = make_trial(9000 + seed);
    Rng rng(seed);
    for (const auto& f : simulate_scanpath(t.faces, t.target, cfg, rng).fixations) {
      if (f.onset_ms >= cfg.switch_ms) continue;
      ++total;
      if (t.faces.carries[std::size_t(f.face)]) ++hits;
    }
  }
  CHECK(double(hits) / total > 0.7);
}

TEST_CASE("scanpaths stay legal across 10^4 random observer configs") {
  Rng cfg_rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    ObserverConfig cfg;
    double w[4], sum = 0.0;
    for (double& x : w) sum += (x = u(cfg_rng) + 1e-3);
    for (int i = 0; i < 4; ++i) cfg.group_weights[std::size_t(i)] = w[i] / sum;
    cfg.group_weights[3] = 1.0 - cfg.group_weights[0] - cfg.group_weights[1] - cfg.group_weights[2];
    cfg.accuracy = u(cfg_rng);
    cfg.distractor_bias = u(cfg_rng);
    cfg.switch_ms = std::floor(u(cfg_rng) * cfg.trial_ms);
    cfg.min_duration_ms = 60 + int(u(cfg_rng) * 200);
    cfg.max_duration_ms = cfg.min_duration_ms + int(u(cfg_rng) * 300);
    cfg.mode = trial % 2 ? ObserverMode::kSimilarity : ObserverMode::kOracleSchedule;
    auto t = make_trial(std::uint64_t(trial));
    Rng rng(std::uint64_t(trial) + 1);
    const auto s = simulate_scanpath(t.faces, t.target, cfg, rng);
    REQUIRE_NOTHROW(check_scanpath(s));
    REQUIRE(s.total_ms() <= cfg.trial_ms);
    REQUIRE(s.total_ms() >= cfg.trial_ms - cfg.max_duration_ms);
    for (const auto& f : s.fixations) {
      REQUIRE(gaze_area().contains(f.x, f.y));
      REQUIRE(f.duration_ms >= cfg.min_duration_ms);
    }
  }
}

TEST_CASE("default observer spends between T - 0.4 s and T fixating") {
  ObserverConfig cfg;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto t = make_trial(seed);
    Rng rng(seed);
    const auto s = simulate_scanpath(t.faces, t.target, cfg, rng);
    CHECK(s.total_ms() >= cfg.trial_ms - 400.0);
    CHECK(s.total_ms() <= cfg.trial_ms);
  }
}

TEST_CASE("simulation is seed-deterministic and already canonical") {
  auto t = make_trial(3);
  ObserverConfig cfg;
  Rng a(5), b(5);
  const auto s1 = simulate_scanpath(t.faces, t.target, cfg, a);
  const auto s2 = simulate_scanpath(t.faces, t.target, cfg, b);
  CHECK(s1 == s2);
  CHECK(detect_fixations(s1.fixations, s1.trial_ms) == s1);
}

TEST_CASE("observer config validation") {
  ObserverConfig cfg;
  cfg.group_weights = {0.5, 0.5, 0.5, 0.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.accuracy = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.max_duration_ms = 100;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("fixation maps conserve time times in-frame mass") {
  auto t = make_trial(11);
  ObserverConfig cfg;
  Rng rng(11);
  const auto s = simulate_scanpath(t.faces, t.target, cfg, rng);
  for (int r : {8, 16, 32}) {
    MapConfig mc;
    mc.resolution = r;
    const auto m = build_fixation_maps(s, mc);
    double expect = 0.0;
    for (const auto& f : s.fixations)
      expect += f.duration_ms / 1000.0 * numeric_mass(f.x, f.y, mc.sigma, 0, 1, 0, 1);
    CHECK(std::abs(m.total() - expect) < 1e-5 * expect);
  }
  CHECK(gaussian_mass_in_frame(0.5, 0.5, 0.125) ==
        doctest::Approx(numeric_mass(0.5, 0.5, 0.125, 0, 1, 0, 1)).epsilon(1e-7));
}

TEST_CASE("map cells hold duration times the Gaussian mass over the cell") {
  Scanpath s;
  s.fixations = {{2, 0.3, 0.6, 900.0, 400.0}};
  MapConfig mc;
  mc.resolution = 4;
  mc.sigma = 0.2;
  const auto m = build_fixation_maps(s, mc);
  REQUIRE(m.bins == 30);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double mass = numeric_mass(0.3, 0.6, 0.2, x / 4.0, (x + 1) / 4.0, y / 4.0, (y + 1) / 4.0);
      CHECK(m.at(2, 0, y, x) == doctest::Approx(0.1 * mass).epsilon(1e-7));
      CHECK(m.at(2, 1, y, x) == doctest::Approx(0.3 * mass).epsilon(1e-7));
      CHECK(m.at(2, 2, y, x) == 0.0);
      CHECK(m.at(1, 0, y, x) == 0.0);
    }
}

TEST_CASE("bin refinement is consistent") {
  auto t = make_trial(12);
  ObserverConfig cfg;
  Rng rng(12);
  const auto s = simulate_scanpath(t.faces, t.target, cfg, rng);
  MapConfig one, five, whole;
  five.bin_ms = 5000.0;
  whole.bin_ms = 30000.0;
  const auto m1 = build_fixation_maps(s, one);
  const auto m5 = build_fixation_maps(s, five);
  const auto m30 = build_fixation_maps(s, whole);
  REQUIRE(m1.bins == 30);
  REQUIRE(m5.bins == 6);
  REQUIRE(m30.bins == 1);
  const auto agg5 = m1.coarsened(5);
  const auto agg30 = m1.coarsened(30);
  for (std::size_t i = 0; i < m5.raw.size(); ++i) CHECK(std::abs(agg5.raw[i] - m5.raw[i]) < 1e-9);
  for (std::size_t i = 0; i < m30.raw.size(); ++i) CHECK(std::abs(agg30.raw[i] - m30.raw[i]) < 1e-9);
  CHECK_THROWS_AS(m1.coarsened(7), ConfigError);
  MapConfig bad;
  bad.bin_ms = 7000.0;
  CHECK_THROWS_AS(build_fixation_maps(s, bad), ConfigError);
}

TEST_CASE("normalized maps peak at one per non-empty bin") {
  Scanpath s;
  s.fixations = {{0, 0.5, 0.5, 0.0, 300.0}, {0, 0.2, 0.3, 2000.0, 200.0}};
  const auto m = build_fixation_maps(s, MapConfig{});
  const Tensor n = m.normalized(0);
  REQUIRE(n.dims() == std::vector<int>{30, 16, 16});
  for (int b = 0; b < 30; ++b) {
    float peak = 0.0f;
    for (int i = 0; i < 256; ++i) peak = std::max(peak, n[std::size_t(b) * 256 + std::size_t(i)]);
    CHECK(peak == ((b == 0 || b == 2) ? 1.0f : 0.0f));
  }
  CHECK_THROWS_AS(m.normalized(6), ConfigError);
}

TEST_CASE("detector: one 300 ms dwell of hover samples") {
  auto ev = dwell(3, 0.5, 0.4, 1000.0, 300.0, 15.0, 0.001);
  const auto s = detect_fixations(ev, 30000.0);
  REQUIRE(s.fixations.size() == 1);
  CHECK(s.fixations[0].face == 3);
  CHECK(s.fixations[0].onset_ms == 1000.0);
  CHECK(s.fixations[0].duration_ms == doctest::Approx(300.0));
  CHECK(s.fixations[0].x == 0.5);
}

TEST_CASE("detector: a rapid sweep yields nothing") {
  auto ev = dwell(1, 0.2, 0.5, 0.0, 400.0, 16.0, 0.025);
  CHECK(detect_fixations(ev, 30000.0).fixations.empty());
}

TEST_CASE("detector: two dwells give two fixations with correct onsets") {
  auto ev = dwell(1, 0.3, 0.3, 500.0, 200.0, 10.0);
  auto b = dwell(4, 0.6, 0.7, 700.0, 250.0, 10.0);
  ev.insert(ev.end(), b.begin(), b.end());
  const auto s = detect_fixations(ev, 30000.0);
  REQUIRE(s.fixations.size() == 2);
  CHECK(s.fixations[0].onset_ms == 500.0);
  CHECK(s.fixations[0].duration_ms == doctest::Approx(200.0));
  CHECK(s.fixations[1].face == 4);
  CHECK(s.fixations[1].onset_ms == 700.0);
  CHECK(s.fixations[1].duration_ms == doctest::Approx(250.0));
}

TEST_CASE("detector: short fragments dropped, trial end clips") {
  std::vector<Fixation> ev = {{0, 0.5, 0.5, 0.0, 40.0}, {0, 0.9, 0.9, 29900.0, 300.0}};
  const auto s = detect_fixations(ev, 30000.0);
  REQUIRE(s.fixations.size() == 1);
  CHECK(s.fixations[0].duration_ms == 100.0);
}

TEST_CASE("detector rejects out-of-order batches with the offending index") {
  std::vector<Fixation> ev = {{0, 0.5, 0.5, 0.0, 100.0}, {0, 0.5, 0.5, 100.0, 100.0},
                              {1, 0.5, 0.5, 150.0, 100.0}};
  try {
    detect_fixations(ev, 30000.0);
    FAIL("expected OutOfOrderEvents");
  } catch (const OutOfOrderEvents& e) {
    CHECK(e.index() == 2);
  }
  CHECK_THROWS_AS(check_events(std::vector<Fixation>{{0, 0.5, 0.5, 10.0, 5.0}}, 20.0), OutOfOrderEvents);
  CHECK_THROWS_AS(check_events(std::vector<Fixation>{{6, 0.5, 0.5, 0.0, 5.0}}), ConfigError);
  CHECK_THROWS_AS(check_events(std::vector<Fixation>{{0, 1.5, 0.5, 0.0, 5.0}}), ConfigError);
}

TEST_CASE("scanpath JSONL round trip") {
  auto t = make_trial(21);
  ObserverConfig cfg;
  Rng rng(21);
  const auto s = simulate_scanpath(t.faces, t.target, cfg, rng);
  const auto back = scanpath_from_jsonl(scanpath_to_jsonl(s));
  CHECK(back == s);
  const auto path = std::filesystem::temp_directory_path() / "photofit_scanpath_test.jsonl";
  write_scanpath(path, s);
  CHECK(read_scanpath(path) == s);
  std::filesystem::remove(path);
  CHECK_THROWS(scanpath_from_jsonl("{\"face\": 1}\n"));
  CHECK_THROWS_AS(scanpath_from_jsonl("{\"face\":9,\"x\":0.5,\"y\":0.5,\"onset_ms\":0,\"duration_ms\":10}\n"),
                  ConfigError);
}
