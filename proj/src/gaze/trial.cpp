// SPDX-License-Identifier: Apache-2.0
#include "photofit/trial.hpp"

#include "photofit/image_io.hpp"
#include "photofit/json_io.hpp"

namespace photofit {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

Rng trial_rng(std::uint64_t seed, int id) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(id), 0x7431u};
  return Rng(seq);
}

Trial simulate_trial(int id, Split split, const ObserverConfig& observer, std::uint64_t seed) {
  Rng rng = trial_rng(seed, id);
  Trial t;
  t.id = id;
  t.split = split;
  t.target = sample_sliders(rng);
  t.faces = compose_trial_faces(t.target, rng);
  t.scanpath = simulate_scanpath(t.faces, t.target, observer, rng);
  return t;
}

std::vector<Trial> simulate_trials(const TrialConfig& cfg, std::uint64_t seed) {
  cfg.observer.validate();
  if (cfg.train < 0 || cfg.val < 0 || cfg.test < 0) throw ConfigError("negative split size");
  std::vector<Trial> out;
  out.reserve(std::size_t(cfg.total()));
  for (int id = 0; id < cfg.total(); ++id) {
    const Split s = id < cfg.train ? Split::kTrain : id < cfg.train + cfg.val ? Split::kVal : Split::kTest;
    out.push_back(simulate_trial(id, s, cfg.observer, seed));
  }
  return out;
}

namespace {

void write_json(const std::filesystem::path& p, const Json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file(p, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Json read_json(const std::filesystem::path& p) {
  const auto bytes = read_file(p);
  return Json::parse(bytes.begin(), bytes.end());
}

}  // namespace

void write_trial_bundle(const std::filesystem::path& dir, const Trial& t, int image_size) {
  std::filesystem::create_directories(dir);
  write_png(dir / "target.png", render_face(t.target, image_size));
  Json faces = Json::array();
  Json carries = Json::array();
  Json labels = Json::array();
  for (int i = 0; i < kAuxFaces; ++i) {
    const auto& s = t.faces.faces[std::size_t(i)];
    write_png(dir / ("face" + std::to_string(i) + ".png"), render_face(s, image_size));
    faces.push_back(sliders_to_json(s));
    const auto& c = t.faces.carries[std::size_t(i)];
    carries.push_back(c ? Json(std::string(group_name(*c))) : Json(nullptr));
    labels.push_back(t.faces.labels[std::size_t(i)]);
  }
  write_json(dir / "sliders.json", {{"target", sliders_to_json(t.target)}, {"faces", faces}});
  write_json(dir / "labels.json", {{"id", t.id},
                                   {"split", std::string(split_name(t.split))},
                                   {"trial_ms", t.scanpath.trial_ms},
                                   {"carries", carries},
                                   {"labels", labels}});
  write_scanpath(dir / "scanpath.jsonl", t.scanpath);
}

Trial read_trial_bundle(const std::filesystem::path& dir) {
  Trial t;
  const Json sliders = read_json(dir / "sliders.json");
  const Json meta = read_json(dir / "labels.json");
  t.id = meta.at("id").get<int>();
  t.split = split_from_name(meta.at("split").get<std::string>());
  t.target = sliders_from_json(sliders.at("target"));
  const Json& faces = sliders.at("faces");
  if (faces.size() != std::size_t(kAuxFaces) || meta.at("labels").size() != std::size_t(kAuxFaces)) {
    throw ConfigError(dir.string() + ": a trial needs exactly six faces");
  }
  for (int i = 0; i < kAuxFaces; ++i) {
    t.faces.faces[std::size_t(i)] = sliders_from_json(faces[std::size_t(i)]);
    const Json& c = meta.at("carries")[std::size_t(i)];
    if (!c.is_null()) t.faces.carries[std::size_t(i)] = group_from_name(c.get<std::string>());
    t.faces.labels[std::size_t(i)] = meta.at("labels")[std::size_t(i)].get<std::vector<std::uint8_t>>();
  }
  t.scanpath = read_scanpath(dir / "scanpath.jsonl", meta.at("trial_ms").get<double>());
  return t;
}

}  // namespace photofit
