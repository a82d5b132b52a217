// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "photofit/layers.hpp"

namespace photofit {

enum class Group { kEyes, kNose, kMouth, kJaw, kFixed };

inline constexpr std::array<Group, 4> kFeatureGroups = {Group::kEyes, Group::kNose, Group::kMouth,
                                                        Group::kJaw};

std::string_view group_name(Group g);
/// Throws ConfigError on unknown names.
Group group_from_name(std::string_view name);

struct SliderSpec {
  std::string name;
  Group group;
};

class SliderSchema {
 public:
  SliderSchema(std::string id, std::vector<SliderSpec> sliders);

  const std::string& id() const { return id_; }
  int size() const { return int(sliders_.size()); }
  const SliderSpec& at(int i) const { return sliders_.at(std::size_t(i)); }
  const std::vector<SliderSpec>& sliders() const { return sliders_; }

  /// Slider indices of a group, ascending.
  const std::vector<int>& indices(Group g) const { return groups_.at(std::size_t(g)); }
  /// Every slider outside the fixed group, ascending.
  const std::vector<int>& reconstructable() const { return reconstructable_; }
  int reconstructable_count() const { return int(reconstructable_.size()); }
  int index_of(std::string_view name) const;

 private:
  std::string id_;
  std::vector<SliderSpec> sliders_;
  std::array<std::vector<int>, 5> groups_;
  std::vector<int> reconstructable_;
};

/// The 18-slider face schema (16 reconstructable + skin tone + hair darkness).
const SliderSchema& default_schema();

struct SliderVector {
  std::string schema_id;
  std::vector<float> values;

  bool operator==(const SliderVector&) const = default;
};

/// Throws ConfigError naming the first slider outside [0,1] or a length mismatch.
void validate(const SliderVector& s, const SliderSchema& schema = default_schema());

SliderVector mean_sliders(const SliderSchema& schema = default_schema());

struct FaceImage {
  int width = 0, height = 0;
  std::vector<float> rgb;  // row-major, 3 channels, values in [0,1]

  float at(int x, int y, int c) const { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
  bool operator==(const FaceImage&) const = default;
};

/// Axis-aligned box in normalized face coordinates (u right, v down).
struct Region {
  double u0, v0, u1, v1;

  bool contains(double u, double v) const { return u >= u0 && u <= u1 && v >= v0 && v <= v1; }
  double center_u() const { return 0.5 * (u0 + u1); }
  double center_v() const { return 0.5 * (v0 + v1); }
  double area() const { return (u1 - u0) * (v1 - v0); }
  Region dilated(double du, double dv) const { return {u0 - du, v0 - dv, u1 + du, v1 + dv}; }
};

/// Throws ConfigError for the fixed group.
Region region_of(Group g);
/// Bounding box of the head outline over every slider setting.
Region face_box();
/// Where the simulated observer may land: the face minus the hair line.
Region gaze_area();

FaceImage render_face(const SliderVector& sliders, int size = 64);

/// Uniform[0,1] per slider; any engaged override is copied verbatim.
SliderVector sample_sliders(Rng& rng, std::span<const std::optional<float>> overrides = {},
                            const SliderSchema& schema = default_schema());

inline constexpr int kAuxFaces = 6;

struct TrialFaces {
  std::array<SliderVector, kAuxFaces> faces;
  /// Group copied from the target, nullopt for the two distractors.
  std::array<std::optional<Group>, kAuxFaces> carries;
  /// labels[face][j] for reconstructable slider j: 1 iff equal to the target's value.
  std::array<std::vector<std::uint8_t>, kAuxFaces> labels;

  int positives() const;
};

/// Faces 0..3 copy the eyes, nose, mouth and jaw groups of the target; faces 4
/// and 5 are fully random. All six share the target's fixed sliders.
TrialFaces compose_trial_faces(const SliderVector& target, Rng& rng,
                               const SliderSchema& schema = default_schema());

}  // namespace photofit
