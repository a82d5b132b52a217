// SPDX-License-Identifier: Apache-2.0
#include "photofit/gaze.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "photofit/image_io.hpp"
#include "photofit/json_io.hpp"

namespace photofit {

double Scanpath::total_ms() const {
  double t = 0.0;
  for (const auto& f : fixations) t += f.duration_ms;
  return t;
}

std::vector<Fixation> Scanpath::on_face(int face) const {
  std::vector<Fixation> out;
  for (const auto& f : fixations)
    if (f.face == face) out.push_back(f);
  return out;
}

namespace {

void check_one(const Fixation& f, std::size_t i) {
  if (f.face < 0 || f.face >= kAuxFaces) {
    throw ConfigError("fixation " + std::to_string(i) + ": face " + std::to_string(f.face) +
                      " outside 0..5");
  }
  if (!(f.x >= 0.0 && f.x <= 1.0 && f.y >= 0.0 && f.y <= 1.0)) {
    throw ConfigError("fixation " + std::to_string(i) + ": position outside [0,1]^2");
  }
  if (!(f.duration_ms > 0.0) || !std::isfinite(f.onset_ms) || f.onset_ms < 0.0) {
    throw ConfigError("fixation " + std::to_string(i) + ": needs onset >= 0 and duration > 0");
  }
}

}  // namespace

void check_scanpath(const Scanpath& s) {
  double prev_end = 0.0;
  for (std::size_t i = 0; i < s.fixations.size(); ++i) {
    const Fixation& f = s.fixations[i];
    check_one(f, i);
    if (f.onset_ms < prev_end) throw ConfigError("fixation " + std::to_string(i) + " overlaps its predecessor");
    if (f.end_ms() > s.trial_ms) throw ConfigError("fixation " + std::to_string(i) + " ends after the trial");
    prev_end = f.end_ms();
  }
}

void ObserverConfig::validate() const {
  const double sum = std::accumulate(group_weights.begin(), group_weights.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("observer group weights must sum to 1");
  for (double w : group_weights)
    if (w < 0.0) throw ConfigError("observer group weights must be non-negative");
  if (accuracy < 0.0 || accuracy > 1.0) throw ConfigError("observer accuracy must lie in [0,1]");
  if (distractor_bias < 0.0 || distractor_bias > 1.0) throw ConfigError("distractor bias must lie in [0,1]");
  if (min_duration_ms <= 0 || max_duration_ms < min_duration_ms) throw ConfigError("bad fixation duration range");
  if (trial_ms <= 0.0 || switch_ms < 0.0) throw ConfigError("bad trial timing");
}

namespace {

double group_distance(const SliderVector& a, const SliderVector& b, Group g) {
  const auto& idx = default_schema().indices(g);
  double d = 0.0;
  for (int j : idx) d += std::abs(double(a.values[std::size_t(j)]) - b.values[std::size_t(j)]);
  return d / double(idx.size());
}

double overall_distance(const SliderVector& a, const SliderVector& b) {
  const auto& idx = default_schema().reconstructable();
  double d = 0.0;
  for (int j : idx) d += std::abs(double(a.values[std::size_t(j)]) - b.values[std::size_t(j)]);
  return d / double(idx.size());
}

}  // namespace

Scanpath simulate_scanpath(const TrialFaces& trial, const SliderVector& target,
                           const ObserverConfig& cfg, Rng& rng) {
  cfg.validate();
  std::uniform_int_distribution<int> duration(cfg.min_duration_ms, cfg.max_duration_ms);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> any_face(0, kAuxFaces - 1);
  std::discrete_distribution<int> pick_group(cfg.group_weights.begin(), cfg.group_weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  const Region area = gaze_area();

  std::vector<int> carriers, distractors;
  for (int i = 0; i < kAuxFaces; ++i) (trial.carries[std::size_t(i)] ? carriers : distractors).push_back(i);

  auto carrier_of = [&](Group g) {
    for (int i = 0; i < kAuxFaces; ++i)
      if (trial.carries[std::size_t(i)] == g) return i;
    return any_face(rng);
  };

  std::vector<Fixation> raw;
  double t = 0.0;
  while (true) {
    const int d = duration(rng);
    if (t + d > cfg.trial_ms) break;
    Fixation f;
    f.onset_ms = t;
    f.duration_ms = d;
    if (t < cfg.switch_ms) {
      const Group g = kFeatureGroups[std::size_t(pick_group(rng))];
      const bool on_target = unit(rng) < cfg.accuracy;
      if (cfg.mode == ObserverMode::kOracleSchedule) {
        f.face = on_target ? carrier_of(g) : any_face(rng);
      } else {
        // Noisy nearest face by this group's sliders.
        int best = 0;
        double best_d = 1e300;
        for (int i = 0; i < kAuxFaces; ++i) {
          const double dist = group_distance(trial.faces[std::size_t(i)], target, g) + 0.05 * std::abs(normal(rng));
          if (dist < best_d) {
            best_d = dist;
            best = i;
          }
        }
        f.face = on_target ? best : any_face(rng);
      }
      const Region r = region_of(g);
      const double sx = cfg.jitter_fraction * (r.u1 - r.u0);
      const double sy = cfg.jitter_fraction * (r.v1 - r.v0);
      f.x = std::clamp(r.center_u() + sx * normal(rng), area.u0, area.u1);
      f.y = std::clamp(r.center_v() + sy * normal(rng), area.v0, area.v1);
    } else {
      if (cfg.mode == ObserverMode::kOracleSchedule) {
        const bool distract = !distractors.empty() && unit(rng) < cfg.distractor_bias;
        const auto& pool = distract || carriers.empty() ? distractors : carriers;
        f.face = pool[std::size_t(std::uniform_int_distribution<int>(0, int(pool.size()) - 1)(rng))];
      } else {
        std::array<double, kAuxFaces> w{};
        for (int i = 0; i < kAuxFaces; ++i) w[std::size_t(i)] = 1e-6 + overall_distance(trial.faces[std::size_t(i)], target);
        f.face = std::discrete_distribution<int>(w.begin(), w.end())(rng);
      }
      f.x = area.u0 + (area.u1 - area.u0) * unit(rng);
      f.y = area.v0 + (area.v1 - area.v0) * unit(rng);
    }
    raw.push_back(f);
    t += d;
  }
  return detect_fixations(raw, cfg.trial_ms);
}

void check_events(std::span<const Fixation> events, double after_ms) {
  double prev_end = after_ms;
  for (std::size_t i = 0; i < events.size(); ++i) {
    check_one(events[i], i);
    if (events[i].onset_ms < prev_end) {
      throw OutOfOrderEvents(i, "event " + std::to_string(i) + " at " + std::to_string(events[i].onset_ms) +
                                    " ms starts before the previous event ends (" +
                                    std::to_string(prev_end) + " ms)");
    }
    prev_end = events[i].end_ms();
  }
}

Scanpath detect_fixations(std::span<const Fixation> events, double trial_ms, const DetectorConfig& cfg) {
  check_events(events);
  Scanpath out;
  out.trial_ms = trial_ms;
  bool open = false;
  Fixation cur;
  auto close = [&] {
    if (open && cur.duration_ms >= cfg.min_duration_ms) out.fixations.push_back(cur);
    open = false;
  };
  for (const Fixation& raw : events) {
    if (raw.onset_ms >= trial_ms) break;
    Fixation e = raw;
    e.duration_ms = std::min(e.duration_ms, trial_ms - e.onset_ms);
    const bool merge = open && e.face == cur.face &&
                       std::hypot(e.x - cur.x, e.y - cur.y) <= cfg.radius &&
                       e.onset_ms - cur.end_ms() <= cfg.max_gap_ms;
    if (merge) {
      cur.duration_ms = e.end_ms() - cur.onset_ms;
    } else {
      close();
      cur = e;
      open = true;
    }
  }
  close();
  return out;
}

double FixationMaps::total() const { return std::accumulate(raw.begin(), raw.end(), 0.0); }

Tensor FixationMaps::normalized(int face) const {
  if (face < 0 || face >= faces) throw ConfigError("no fixation maps for face " + std::to_string(face));
  const std::size_t cell = std::size_t(resolution) * resolution;
  Tensor out({bins, resolution, resolution});
  for (int b = 0; b < bins; ++b) {
    const double* src = raw.data() + (std::size_t(face) * bins + b) * cell;
    const double peak = *std::max_element(src, src + cell);
    float* dst = out.data() + std::size_t(b) * cell;
    if (peak > 0.0)
      for (std::size_t i = 0; i < cell; ++i) dst[i] = float(src[i] / peak);
  }
  return out;
}

FixationMaps FixationMaps::coarsened(int factor) const {
  if (factor <= 0 || bins % factor != 0) throw ConfigError("coarsening factor must divide the bin count");
  FixationMaps out;
  out.faces = faces;
  out.bins = bins / factor;
  out.resolution = resolution;
  out.bin_ms = bin_ms * factor;
  out.raw.assign(std::size_t(faces) * out.bins * resolution * resolution, 0.0);
  for (int f = 0; f < faces; ++f)
    for (int b = 0; b < bins; ++b)
      for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x) out.at(f, b / factor, y, x) += at(f, b, y, x);
  return out;
}

namespace {

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Gaussian mass over each of the R cells along one axis.
std::vector<double> axis_mass(double mu, double sigma, int r) {
  std::vector<double> m(static_cast<std::size_t>(r));
  double lo = phi((0.0 - mu) / sigma);
  for (int i = 0; i < r; ++i) {
    const double hi = phi((double(i + 1) / r - mu) / sigma);
    m[std::size_t(i)] = hi - lo;
    lo = hi;
  }
  return m;
}

}  // namespace

double gaussian_mass_in_frame(double x, double y, double sigma) {
  return (phi((1.0 - x) / sigma) - phi(-x / sigma)) * (phi((1.0 - y) / sigma) - phi(-y / sigma));
}

FixationMaps build_fixation_maps(const Scanpath& s, const MapConfig& cfg) {
  if (!(cfg.sigma > 0.0)) throw ConfigError("fixation map sigma must be positive");
  if (cfg.resolution <= 0) throw ConfigError("fixation map resolution must be positive");
  const double bins_exact = s.trial_ms / cfg.bin_ms;
  const int bins = int(std::lround(bins_exact));
  if (bins <= 0 || std::abs(bins_exact - bins) > 1e-9) {
    throw ConfigError("bin length " + std::to_string(cfg.bin_ms) + " ms does not divide the trial");
  }
  check_scanpath(s);
  FixationMaps m;
  m.bins = bins;
  m.resolution = cfg.resolution;
  m.bin_ms = cfg.bin_ms;
  m.raw.assign(std::size_t(m.faces) * bins * cfg.resolution * cfg.resolution, 0.0);
  for (const Fixation& f : s.fixations) {
    const auto mx = axis_mass(f.x, cfg.sigma, cfg.resolution);
    const auto my = axis_mass(f.y, cfg.sigma, cfg.resolution);
    const int first = std::max(0, int(std::floor(f.onset_ms / cfg.bin_ms)));
    for (int b = first; b < bins; ++b) {
      const double lo = std::max(f.onset_ms, b * cfg.bin_ms);
      const double hi = std::min(f.end_ms(), (b + 1) * cfg.bin_ms);
      if (hi <= lo) break;
      const double seconds = (hi - lo) / 1000.0;
      for (int y = 0; y < cfg.resolution; ++y)
        for (int x = 0; x < cfg.resolution; ++x)
          m.at(f.face, b, y, x) += seconds * my[std::size_t(y)] * mx[std::size_t(x)];
    }
  }
  return m;
}

std::string scanpath_to_jsonl(const Scanpath& s) {
  std::string out;
  for (const auto& f : s.fixations) {
    Json j = {{"face", f.face}, {"x", f.x}, {"y", f.y}, {"onset_ms", f.onset_ms}, {"duration_ms", f.duration_ms}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

Scanpath scanpath_from_jsonl(const std::string& text, double trial_ms) {
  Scanpath s;
  s.trial_ms = trial_ms;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const Json j = Json::parse(line);
    Fixation f;
    f.face = j.at("face").get<int>();
    f.x = j.at("x").get<double>();
    f.y = j.at("y").get<double>();
    f.onset_ms = j.at("onset_ms").get<double>();
    f.duration_ms = j.at("duration_ms").get<double>();
    s.fixations.push_back(f);
  }
  check_scanpath(s);
  return s;
}

void write_scanpath(const std::filesystem::path& path, const Scanpath& s) {
  const std::string text = scanpath_to_jsonl(s);
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Scanpath read_scanpath(const std::filesystem::path& path, double trial_ms) {
  const auto bytes = read_file(path);
  return scanpath_from_jsonl(std::string(bytes.begin(), bytes.end()), trial_ms);
}

}  // namespace photofit
