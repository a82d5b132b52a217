// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "photofit/face.hpp"

namespace photofit {

/// One dwell on one collage face. Times are milliseconds from trial start.
struct Fixation {
  int face = 0;
  double x = 0.5, y = 0.5;  // normalized face coordinates
  double onset_ms = 0.0;
  double duration_ms = 0.0;

  double end_ms() const { return onset_ms + duration_ms; }
  bool operator==(const Fixation&) const = default;
};

/// Time-ordered fixations over all six faces of one trial.
struct Scanpath {
  std::vector<Fixation> fixations;
  double trial_ms = 30000.0;

  double total_ms() const;
  /// Fixations on one face, in order.
  std::vector<Fixation> on_face(int face) const;
  bool operator==(const Scanpath&) const = default;
};

/// Throws ConfigError unless fixations are time-ordered, non-overlapping,
/// inside [0,1]^2, on faces 0..5 and within the trial.
void check_scanpath(const Scanpath& s);

enum class ObserverMode { kOracleSchedule, kSimilarity };

struct ObserverConfig {
  double trial_ms = 30000.0;
  double switch_ms = 15000.0;
  std::array<double, 4> group_weights{0.35, 0.20, 0.25, 0.20};  // eyes, nose, mouth, jaw
  double accuracy = 0.8;                                       // rho
  int min_duration_ms = 150;
  int max_duration_ms = 400;
  double jitter_fraction = 0.25;  // landing sigma as a fraction of region extent
  double distractor_bias = 0.6;
  ObserverMode mode = ObserverMode::kOracleSchedule;

  void validate() const;
};

/// Generates fixations until the trial budget is spent. The result is passed
/// through detect_fixations, so re-ingesting it is a no-op.
Scanpath simulate_scanpath(const TrialFaces& trial, const SliderVector& target,
                           const ObserverConfig& cfg, Rng& rng);

struct DetectorConfig {
  double radius = 0.03;      // merge radius around the first sample
  double min_duration_ms = 50.0;
  double max_gap_ms = 0.5;   // samples further apart in time start a new fixation
};

class OutOfOrderEvents : public std::runtime_error {
 public:
  OutOfOrderEvents(std::size_t index, const std::string& what)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// Throws OutOfOrderEvents naming the first event that starts before its
/// predecessor ends, and ConfigError for events outside the face or collage.
/// `after_ms` is the end of the previously accepted event.
void check_events(std::span<const Fixation> events, double after_ms = -1e300);

/// Dispersion-style detection over raw gaze samples: consecutive samples on
/// one face, within `radius` of the first and contiguous in time, coalesce;
/// fragments shorter than the minimum are dropped. Events past the trial end
/// are clipped.
Scanpath detect_fixations(std::span<const Fixation> events, double trial_ms,
                          const DetectorConfig& cfg = {});

/// Duration-weighted Gaussian fixation maps, one R x R grid per face and time bin.
struct FixationMaps {
  int faces = kAuxFaces;
  int bins = 0;
  int resolution = 0;
  double bin_ms = 0.0;
  std::vector<double> raw;  // [face][bin][y][x], seconds x Gaussian mass

  double& at(int face, int bin, int y, int x) {
    return raw[((std::size_t(face) * bins + bin) * resolution + y) * resolution + x];
  }
  double at(int face, int bin, int y, int x) const {
    return raw[((std::size_t(face) * bins + bin) * resolution + y) * resolution + x];
  }
  double total() const;
  /// Per-bin max-normalized maps of one face, [B,R,R].
  Tensor normalized(int face) const;
  /// Sums consecutive groups of `factor` bins.
  FixationMaps coarsened(int factor) const;
};

struct MapConfig {
  double bin_ms = 1000.0;
  double sigma = 0.125;
  int resolution = 16;
};

FixationMaps build_fixation_maps(const Scanpath& s, const MapConfig& cfg);

/// Mass of an isotropic Gaussian at (x,y) falling inside the unit square.
double gaussian_mass_in_frame(double x, double y, double sigma);

/// Scanpath files: one JSON object per line {face, x, y, onset_ms, duration_ms}.
std::string scanpath_to_jsonl(const Scanpath& s);
Scanpath scanpath_from_jsonl(const std::string& text, double trial_ms = 30000.0);
void write_scanpath(const std::filesystem::path& path, const Scanpath& s);
Scanpath read_scanpath(const std::filesystem::path& path, double trial_ms = 30000.0);

}  // namespace photofit
