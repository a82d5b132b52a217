// SPDX-License-Identifier: Apache-2.0
#include "photofit/session.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "photofit/image_io.hpp"

namespace photofit {

std::string_view state_name(SessionState s) {
  switch (s) {
    case SessionState::kCreated: return "created";
    case SessionState::kMemorizing: return "memorizing";
    case SessionState::kViewing: return "viewing";
    case SessionState::kReconstructed: return "reconstructed";
  }
  return "?";
}

Json fixation_to_json(const Fixation& f) {
  return {{"face", f.face}, {"x", f.x}, {"y", f.y}, {"onset_ms", f.onset_ms}, {"duration_ms", f.duration_ms}};
}

Fixation fixation_from_json(const Json& j) {
  Fixation f;
  f.face = j.at("face").get<int>();
  f.x = j.at("x").get<double>();
  f.y = j.at("y").get<double>();
  f.onset_ms = j.at("onset_ms").get<double>();
  f.duration_ms = j.at("duration_ms").get<double>();
  return f;
}

SessionManager::SessionManager(ModelBundle& models, SessionConfig cfg, Clock clock)
    : models_(models), cfg_(std::move(cfg)), clock_(std::move(clock)) {
  if (!clock_) {
    clock_ = [] {
      using namespace std::chrono;
      return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
    };
  }
  if (!cfg_.journal_dir.empty()) std::filesystem::create_directories(cfg_.journal_dir);
}

SessionManager::Session& SessionManager::find(const std::string& id) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionNotFound("no session '" + id + "'");
  return *it->second;
}

std::string SessionManager::store_image(const FaceImage& img) {
  const std::string hash = image_hash(img);
  auto png = encode_png(img);
  std::lock_guard<std::mutex> lock(mutex_);
  images_.emplace(hash, std::move(png));
  return "/faces/" + hash + ".png";
}

std::optional<std::vector<std::uint8_t>> SessionManager::image(const std::string& hash) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = images_.find(hash);
  if (it == images_.end()) return std::nullopt;
  return it->second;
}

void SessionManager::journal(const Session& s, const Json& entry) {
  if (cfg_.journal_dir.empty()) return;
  std::ofstream out(cfg_.journal_dir / (s.id + ".jsonl"), std::ios::app);
  out << entry.dump() << "\n";
  if (!out) throw std::runtime_error("cannot append to session journal for " + s.id);
}

std::shared_ptr<SessionManager::Session> SessionManager::open(const std::string& id, std::uint64_t seed, int trial) {
  auto s = std::make_shared<Session>();
  s->id = id;
  s->seed = seed;
  s->trial_index = trial;
  ObserverConfig obs;
  obs.trial_ms = cfg_.trial_ms;
  obs.switch_ms = std::min(obs.switch_ms, cfg_.trial_ms);
  s->trial = simulate_trial(trial, Split::kTest, obs, seed);
  s->trial.scanpath = Scanpath{{}, cfg_.trial_ms};
  s->state = SessionState::kMemorizing;
  std::lock_guard<std::mutex> lock(mutex_);
  if (!sessions_.emplace(id, s).second) throw ConfigError("session '" + id + "' already exists");
  return s;
}

CreateResult SessionManager::create(std::optional<std::uint64_t> seed, int trial) {
  if (trial < 0) throw ConfigError("trial index must be non-negative");
  std::string id;
  std::uint64_t use_seed = 0;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    id = "s" + std::to_string(++counter_);
    use_seed = seed ? *seed : std::random_device{}() ^ (++seed_counter_ << 32);
  }
  auto s = open(id, use_seed, trial);
  journal(*s, {{"op", "create"}, {"seed", use_seed}, {"trial", trial}});
  return {id, store_image(render_face(s->trial.target, cfg_.image_size)), cfg_.memorize_ms};
}

void SessionManager::do_start(Session& s, bool replay) {
  if (s.state != SessionState::kMemorizing) {
    throw SessionStateError("cannot start viewing in state " + std::string(state_name(s.state)), s.state);
  }
  {
    std::lock_guard<std::mutex> lock(models_.mutex);
    s.encoding = encode_trial(models_.encoder, s.trial);
  }
  s.started_at = clock_();
  s.state = SessionState::kViewing;
  if (!replay) journal(s, {{"op", "start"}});
}

StartResult SessionManager::start(const std::string& id) {
  Session& s = find(id);
  std::lock_guard<std::mutex> lock(s.mutex);
  do_start(s, false);
  StartResult r;
  for (int i = 0; i < kAuxFaces; ++i) {
    r.face_urls[std::size_t(i)] = store_image(render_face(s.trial.faces.faces[std::size_t(i)], cfg_.image_size));
    const int col = i % 3, row = i / 3;
    r.layout[std::size_t(i)] = {col / 3.0 + 0.01, row / 2.0 + 0.01, 1.0 / 3.0 - 0.02, 0.5 - 0.02};
  }
  r.duration_ms = cfg_.trial_ms;
  r.bin_ms = models_.scorer.config().bin_ms(cfg_.trial_ms);
  return r;
}

IngestResult SessionManager::do_ingest(Session& s, const std::vector<Fixation>& events, bool replay) {
  if (s.state != SessionState::kViewing) {
    throw SessionStateError("fixations are only accepted while viewing (state " + std::string(state_name(s.state)) + ")",
                            s.state);
  }
  const double elapsed = replay ? 0.0 : clock_() - s.started_at;
  if (!replay && elapsed > cfg_.trial_ms + cfg_.grace_ms) {
    throw SessionStateError("viewing window closed " + std::to_string(elapsed - cfg_.trial_ms) + " ms ago", s.state);
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].onset_ms >= cfg_.trial_ms) {
      throw SessionStateError("event " + std::to_string(i) + " starts after the " + std::to_string(cfg_.trial_ms) +
                                  " ms viewing window",
                              s.state);
    }
  }
  check_events(events, s.events.empty() ? 0.0 : s.events.back().end_ms());
  s.events.insert(s.events.end(), events.begin(), events.end());
  if (!replay) {
    Json arr = Json::array();
    for (const auto& e : events) arr.push_back(fixation_to_json(e));
    journal(s, {{"op", "fixations"}, {"events", arr}});
  }
  return {events.size(), elapsed};
}

IngestResult SessionManager::ingest(const std::string& id, const std::vector<Fixation>& events) {
  Session& s = find(id);
  std::lock_guard<std::mutex> lock(s.mutex);
  return do_ingest(s, events, false);
}

const SessionReconstruction& SessionManager::do_reconstruct(Session& s, bool replay) {
  if (s.state == SessionState::kReconstructed) return *s.result;
  if (s.state != SessionState::kViewing) {
    throw SessionStateError("cannot reconstruct in state " + std::string(state_name(s.state)), s.state);
  }
  s.trial.scanpath = detect_fixations(s.events, cfg_.trial_ms);
  SessionReconstruction r;
  FaceImage photofit;
  {
    std::lock_guard<std::mutex> lock(models_.mutex);
    const auto scores = score_trials(models_.scorer, std::span<const Trial>(&s.trial, 1),
                                     std::span<const TrialEncoding>(&*s.encoding, 1));
    r.scores = scores[0].scores;
    r.ours = reconstruct_weighted(s.encoding->features, r.scores, s.trial.target);
    photofit = models_.decoder.decode(r.ours.sliders);
  }
  r.baseline = mean_baseline(s.trial.faces);
  r.photofit_png_url = store_image(photofit);
  r.rendered_png_url = store_image(render_face(clamped(r.ours.sliders), cfg_.image_size));
  r.baseline_png_url = store_image(render_face(clamped(r.baseline.sliders), cfg_.image_size));
  s.result = std::move(r);
  s.state = SessionState::kReconstructed;
  if (!replay) journal(s, {{"op", "reconstruct"}});
  return *s.result;
}

const SessionReconstruction& SessionManager::reconstruct(const std::string& id) {
  Session& s = find(id);
  std::lock_guard<std::mutex> lock(s.mutex);
  return do_reconstruct(s, false);
}

RevealResult SessionManager::reveal(const std::string& id) {
  Session& s = find(id);
  std::lock_guard<std::mutex> lock(s.mutex);
  if (s.state != SessionState::kReconstructed) {
    throw SessionStateError("reveal needs a reconstruction first (state " + std::string(state_name(s.state)) + ")",
                            s.state);
  }
  RevealResult r;
  r.target_png_url = store_image(render_face(s.trial.target, cfg_.image_size));
  r.masd_ours = masd(s.result->ours.sliders, s.trial.target);
  r.masd_baseline = masd(s.result->baseline.sliders, s.trial.target);
  return r;
}

SessionState SessionManager::state(const std::string& id) {
  Session& s = find(id);
  std::lock_guard<std::mutex> lock(s.mutex);
  return s.state;
}

Scanpath SessionManager::scanpath(const std::string& id) {
  Session& s = find(id);
  std::lock_guard<std::mutex> lock(s.mutex);
  return detect_fixations(s.events, cfg_.trial_ms);
}

int SessionManager::recover() {
  if (cfg_.journal_dir.empty()) return 0;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(cfg_.journal_dir))
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  int restored = 0;
  for (const auto& path : files) {
    const std::string id = path.stem().string();
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (sessions_.count(id)) continue;
    }
    std::ifstream in(path);
    std::string line;
    std::shared_ptr<Session> s;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      const std::string op = j.at("op").get<std::string>();
      if (op == "create") {
        s = open(id, j.at("seed").get<std::uint64_t>(), j.at("trial").get<int>());
      } else if (!s) {
        throw ConfigError(path.string() + ": journal does not start with create");
      } else if (op == "start") {
        do_start(*s, true);
      } else if (op == "fixations") {
        std::vector<Fixation> ev;
        for (const auto& e : j.at("events")) ev.push_back(fixation_from_json(e));
        do_ingest(*s, ev, true);
      } else if (op == "reconstruct") {
        do_reconstruct(*s, true);
      }
    }
    if (s) ++restored;
    // Keep fresh ids clear of recovered ones.
    if (id.size() > 1 && id[0] == 's') {
      try {
        const std::uint64_t n = std::stoull(id.substr(1));
        std::lock_guard<std::mutex> lock(mutex_);
        counter_ = std::max(counter_, n);
      } catch (const std::exception&) {
      }
    }
  }
  return restored;
}

}  // namespace photofit
