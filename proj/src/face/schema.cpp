// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "photofit/face.hpp"

namespace photofit {

std::string_view group_name(Group g) {
  switch (g) {
    case Group::kEyes: return "eyes";
    case Group::kNose: return "nose";
    case Group::kMouth: return "mouth";
    case Group::kJaw: return "jaw";
    case Group::kFixed: return "fixed";
  }
  return "?";
}

Group group_from_name(std::string_view name) {
  for (Group g : {Group::kEyes, Group::kNose, Group::kMouth, Group::kJaw, Group::kFixed}) {
    if (group_name(g) == name) return g;
  }
  throw ConfigError("unknown feature group '" + std::string(name) + "'");
}

SliderSchema::SliderSchema(std::string id, std::vector<SliderSpec> sliders)
    : id_(std::move(id)), sliders_(std::move(sliders)) {
  for (int i = 0; i < size(); ++i) {
    const SliderSpec& s = sliders_[std::size_t(i)];
    for (int j = 0; j < i; ++j) {
      if (sliders_[std::size_t(j)].name == s.name) throw ConfigError("duplicate slider " + s.name);
    }
    groups_[std::size_t(s.group)].push_back(i);
    if (s.group != Group::kFixed) reconstructable_.push_back(i);
  }
}

int SliderSchema::index_of(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (sliders_[std::size_t(i)].name == name) return i;
  }
  throw ConfigError("unknown slider '" + std::string(name) + "'");
}

const SliderSchema& default_schema() {
  static const SliderSchema schema("face18-v1", {
                                                    {"eye_spacing", Group::kEyes},
                                                    {"eye_size", Group::kEyes},
                                                    {"eye_height", Group::kEyes},
                                                    {"eyebrow_angle", Group::kEyes},
                                                    {"eyebrow_thickness", Group::kEyes},
                                                    {"iris_darkness", Group::kEyes},
                                                    {"nose_width", Group::kNose},
                                                    {"nose_length", Group::kNose},
                                                    {"nose_bridge", Group::kNose},
                                                    {"mouth_width", Group::kMouth},
                                                    {"lip_thickness", Group::kMouth},
                                                    {"mouth_height", Group::kMouth},
                                                    {"lip_darkness", Group::kMouth},
                                                    {"jaw_width", Group::kJaw},
                                                    {"chin_length", Group::kJaw},
                                                    {"cheek_fullness", Group::kJaw},
                                                    {"skin_tone", Group::kFixed},
                                                    {"hair_darkness", Group::kFixed},
                                                });
  return schema;
}

void validate(const SliderVector& s, const SliderSchema& schema) {
  if (!s.schema_id.empty() && s.schema_id != schema.id()) {
    throw ConfigError("slider vector schema '" + s.schema_id + "' is not '" + schema.id() + "'");
  }
  if (int(s.values.size()) != schema.size()) {
    throw ConfigError("expected " + std::to_string(schema.size()) + " slider values, got " +
                      std::to_string(s.values.size()));
  }
  for (int i = 0; i < schema.size(); ++i) {
    const float v = s.values[std::size_t(i)];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ConfigError("slider " + schema.at(i).name + " out of range: " + std::to_string(v));
    }
  }
}

SliderVector mean_sliders(const SliderSchema& schema) {
  return {schema.id(), std::vector<float>(std::size_t(schema.size()), 0.5f)};
}

Region region_of(Group g) {
  switch (g) {
    case Group::kEyes: return {0.18, 0.19, 0.82, 0.45};
    case Group::kNose: return {0.40, 0.46, 0.60, 0.63};
    case Group::kMouth: return {0.28, 0.64, 0.72, 0.80};
    case Group::kJaw: return {0.25, 0.81, 0.75, 0.97};
    case Group::kFixed: break;
  }
  throw ConfigError("no region for group '" + std::string(group_name(g)) + "'");
}

Region face_box() { return {0.18, 0.16, 0.82, 0.97}; }

Region gaze_area() { return {0.20, 0.20, 0.80, 0.96}; }

SliderVector sample_sliders(Rng& rng, std::span<const std::optional<float>> overrides,
                            const SliderSchema& schema) {
  if (!overrides.empty() && int(overrides.size()) != schema.size()) {
    throw ConfigError("override list must have one entry per slider");
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SliderVector s{schema.id(), std::vector<float>(std::size_t(schema.size()))};
  for (int i = 0; i < schema.size(); ++i) {
    const float drawn = float(u(rng));
    const std::size_t k = std::size_t(i);
    s.values[k] = (!overrides.empty() && overrides[k]) ? *overrides[k] : drawn;
  }
  return s;
}

int TrialFaces::positives() const {
  int n = 0;
  for (const auto& l : labels) n += int(std::count(l.begin(), l.end(), std::uint8_t{1}));
  return n;
}

TrialFaces compose_trial_faces(const SliderVector& target, Rng& rng, const SliderSchema& schema) {
  validate(target, schema);
  TrialFaces t;
  for (int i = 0; i < kAuxFaces; ++i) {
    SliderVector s = sample_sliders(rng, {}, schema);
    for (int j : schema.indices(Group::kFixed)) s.values[std::size_t(j)] = target.values[std::size_t(j)];
    if (i < 4) {
      const Group g = kFeatureGroups[std::size_t(i)];
      for (int j : schema.indices(g)) s.values[std::size_t(j)] = target.values[std::size_t(j)];
      t.carries[std::size_t(i)] = g;
    }
    auto& labels = t.labels[std::size_t(i)];
    for (int j : schema.reconstructable()) {
      labels.push_back(s.values[std::size_t(j)] == target.values[std::size_t(j)] ? 1 : 0);
    }
    t.faces[std::size_t(i)] = std::move(s);
  }
  return t;
}

}  // namespace photofit
