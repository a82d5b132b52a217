// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "photofit/json_io.hpp"
#include "photofit/pipeline.hpp"

namespace photofit {

enum class SessionState { kCreated, kMemorizing, kViewing, kReconstructed };
std::string_view state_name(SessionState s);

class SessionNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation not allowed in the session's current state.
class SessionStateError : public std::runtime_error {
 public:
  SessionStateError(const std::string& what, SessionState s) : std::runtime_error(what), state_(s) {}
  SessionState state() const { return state_; }

 private:
  SessionState state_;
};

/// Trained models shared by every session. Layers cache activations, so
/// inference is serialised through `mutex`.
struct ModelBundle {
  Encoder encoder;
  Decoder decoder;
  Scorer scorer;
  std::mutex mutex;

  ModelBundle(EncoderConfig ec, DecoderConfig dc, ScorerConfig sc) : encoder(ec), decoder(dc), scorer(sc) {}
};

struct SessionConfig {
  double memorize_ms = 10000.0;
  double trial_ms = 30000.0;
  double grace_ms = 2000.0;  // wall-clock slack after the viewing window
  int image_size = 64;
  std::filesystem::path journal_dir;  // empty: no journal
};

struct Rect {
  double x, y, w, h;
};

struct CreateResult {
  std::string id;
  std::string target_png_url;
  double memorize_ms = 0.0;
};

struct StartResult {
  std::array<std::string, kAuxFaces> face_urls;
  std::array<Rect, kAuxFaces> layout;
  double duration_ms = 0.0;
  double bin_ms = 0.0;
};

struct IngestResult {
  std::size_t accepted = 0;
  double elapsed_ms = 0.0;
};

struct SessionReconstruction {
  Reconstruction ours;
  Reconstruction baseline;
  Tensor scores;  // [6,K]
  std::string photofit_png_url;
  std::string rendered_png_url;
  std::string baseline_png_url;
};

struct RevealResult {
  std::string target_png_url;
  double masd_ours = 0.0;
  double masd_baseline = 0.0;
};

/// In-memory session store. Every session is a trial built exactly as the
/// offline pipeline builds trial `trial` of `seed`; replaying that trial's
/// scanpath therefore reproduces the offline reconstruction.
class SessionManager {
 public:
  using Clock = std::function<double()>;  // milliseconds, monotonic

  SessionManager(ModelBundle& models, SessionConfig cfg, Clock clock = {});

  CreateResult create(std::optional<std::uint64_t> seed = std::nullopt, int trial = 0);
  StartResult start(const std::string& id);
  IngestResult ingest(const std::string& id, const std::vector<Fixation>& events);
  const SessionReconstruction& reconstruct(const std::string& id);
  RevealResult reveal(const std::string& id);

  SessionState state(const std::string& id);
  /// Scanpath detected from everything ingested so far.
  Scanpath scanpath(const std::string& id);
  /// PNG bytes by content hash, if this service rendered them.
  std::optional<std::vector<std::uint8_t>> image(const std::string& hash) const;

  /// Rebuilds sessions from journal files; returns how many were restored.
  int recover();

 private:
  struct Session {
    std::mutex mutex;
    std::string id;
    std::uint64_t seed = 0;
    int trial_index = 0;
    SessionState state = SessionState::kCreated;
    Trial trial;
    std::optional<TrialEncoding> encoding;
    double started_at = 0.0;
    std::vector<Fixation> events;
    std::optional<SessionReconstruction> result;
  };

  Session& find(const std::string& id);
  std::string store_image(const FaceImage& img);
  void journal(const Session& s, const Json& entry);
  std::shared_ptr<Session> open(const std::string& id, std::uint64_t seed, int trial);
  void do_start(Session& s, bool replay);
  IngestResult do_ingest(Session& s, const std::vector<Fixation>& events, bool replay);
  const SessionReconstruction& do_reconstruct(Session& s, bool replay);

  ModelBundle& models_;
  SessionConfig cfg_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::vector<std::uint8_t>> images_;
  std::uint64_t counter_ = 0;
  std::uint64_t seed_counter_ = 0;
};

Json fixation_to_json(const Fixation& f);
Fixation fixation_from_json(const Json& j);

}  // namespace photofit
