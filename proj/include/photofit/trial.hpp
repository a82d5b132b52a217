// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "photofit/gaze.hpp"

namespace photofit {

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

/// One simulated memorize-then-search trial.
struct Trial {
  int id = 0;
  Split split = Split::kTrain;
  SliderVector target;
  TrialFaces faces;
  Scanpath scanpath;
};

struct TrialConfig {
  int train = 220;
  int val = 40;
  int test = 40;
  ObserverConfig observer;

  int total() const { return train + val + test; }
};

/// Independent per-trial stream derived from (seed, id).
Rng trial_rng(std::uint64_t seed, int id);

/// Trials 0..train-1 are training, then validation, then test. Each trial
/// depends only on (seed, id), so subsets can be regenerated on their own.
std::vector<Trial> simulate_trials(const TrialConfig& cfg, std::uint64_t seed);
Trial simulate_trial(int id, Split split, const ObserverConfig& observer, std::uint64_t seed);

/// Bundle directory: target.png, face0..5.png, sliders.json, scanpath.jsonl, labels.json.
void write_trial_bundle(const std::filesystem::path& dir, const Trial& t, int image_size = 64);
Trial read_trial_bundle(const std::filesystem::path& dir);

}  // namespace photofit
