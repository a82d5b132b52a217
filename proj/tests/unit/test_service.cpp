// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <filesystem>
#include <random>
#include <thread>

#include "httplib.h"
#include "photofit/http_service.hpp"
#include "photofit/image_io.hpp"
#include "photofit/session.hpp"

using namespace photofit;

namespace {

// Untrained models with random heads so scores and features vary per face.
struct Models {
  ModelBundle bundle{EncoderConfig{}, DecoderConfig{}, ScorerConfig::for_variant(ScorerVariant::k5s)};

  Models() {
    Rng rng(11);
    bundle.encoder.reset_parameters(rng);
    bundle.decoder.reset_parameters(rng);
    bundle.scorer.reset_parameters(rng);
    std::normal_distribution<float> n(0.0f, 0.3f);
    for (float& w : bundle.encoder.head().weights().value.storage()) w = n(rng);
    for (float& w : bundle.scorer.parameters().back()->value.storage()) w = n(rng);
  }
};

struct FakeClock {
  double now = 0.0;
  SessionManager::Clock fn() {
    return [this] { return now; };
  }
};

std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  return d;
}

// The batch pipeline's sliders for trial `id` of `seed`.
SliderVector offline_sliders(ModelBundle& m, std::uint64_t seed, int id) {
  const Trial t = simulate_trial(id, Split::kTest, ObserverConfig{}, seed);
  const TrialEncoding e = encode_trial(m.encoder, t);
  const auto s = score_trials(m.scorer, std::span<const Trial>(&t, 1), std::span<const TrialEncoding>(&e, 1));
  return reconstruct_weighted(e.features, s[0].scores, t.target).sliders;
}

}  // namespace

TEST_CASE("session state machine") {
  Models m;
  FakeClock clock;
  SessionManager sm(m.bundle, SessionConfig{}, clock.fn());
  const auto c = sm.create(5);
  CHECK(sm.state(c.id) == SessionState::kMemorizing);
  CHECK(c.memorize_ms == 10000.0);
  CHECK(c.target_png_url.rfind("/faces/", 0) == 0);

  CHECK_THROWS_AS(sm.ingest(c.id, {}), SessionStateError);
  CHECK_THROWS_AS(sm.reconstruct(c.id), SessionStateError);
  CHECK_THROWS_AS(sm.reveal(c.id), SessionStateError);
  CHECK_THROWS_AS(sm.state("nope"), SessionNotFound);
  CHECK_THROWS_AS(sm.start("nope"), SessionNotFound);

  const auto st = sm.start(c.id);
  CHECK(sm.state(c.id) == SessionState::kViewing);
  CHECK(st.duration_ms == 30000.0);
  CHECK(st.bin_ms == 5000.0);
  for (const auto& u : st.face_urls) CHECK(sm.image(u.substr(7, u.size() - 11)).has_value());
  CHECK_THROWS_AS(sm.start(c.id), SessionStateError);
  try {
    sm.start(c.id);
  } catch (const SessionStateError& e) {
    CHECK(e.state() == SessionState::kViewing);
  }

  clock.now = 1000.0;
  const auto in = sm.ingest(c.id, {{0, 0.5, 0.3, 100.0, 300.0}, {2, 0.5, 0.7, 500.0, 250.0}});
  CHECK(in.accepted == 2);
  CHECK(in.elapsed_ms == 1000.0);
  // Out of order relative to what was already accepted.
  try {
    sm.ingest(c.id, {{1, 0.5, 0.5, 600.0, 200.0}});
    FAIL("expected OutOfOrderEvents");
  } catch (const OutOfOrderEvents& e) {
    CHECK(e.index() == 0);
  }
  CHECK_THROWS_AS(sm.ingest(c.id, {{1, 0.5, 0.5, 30000.0, 100.0}}), SessionStateError);
  CHECK(sm.scanpath(c.id).fixations.size() == 2);

  const auto& r1 = sm.reconstruct(c.id);
  CHECK(sm.state(c.id) == SessionState::kReconstructed);
  const auto& r2 = sm.reconstruct(c.id);
  CHECK(&r1 == &r2);
  CHECK(r1.ours.sliders.values == r2.ours.sliders.values);
  CHECK(r1.scores.dims() == std::vector<int>{kAuxFaces, 16});
  CHECK_THROWS_AS(sm.ingest(c.id, {}), SessionStateError);

  const auto rv = sm.reveal(c.id);
  CHECK(rv.masd_ours >= 0.0);
  CHECK(rv.masd_baseline >= 0.0);
  CHECK(rv.target_png_url == c.target_png_url);
}

TEST_CASE("ingestion closes after the viewing window") {
  Models m;
  FakeClock clock;
  SessionManager sm(m.bundle, SessionConfig{}, clock.fn());
  const auto c = sm.create(5);
  sm.start(c.id);
  clock.now = 31000.0;  // inside the grace period
  CHECK(sm.ingest(c.id, {{0, 0.5, 0.5, 29000.0, 500.0}}).accepted == 1);
  clock.now = 32500.0;
  CHECK_THROWS_AS(sm.ingest(c.id, {{0, 0.5, 0.5, 29600.0, 100.0}}), SessionStateError);
}

TEST_CASE("no fixations falls back to the uniform feature mean") {
  Models m;
  SessionManager sm(m.bundle, SessionConfig{});
  const auto c = sm.create(9, 2);
  sm.start(c.id);
  const auto& r = sm.reconstruct(c.id);
  CHECK(r.ours.fallback.size() == 16u);
  for (float s : r.scores.storage()) CHECK(s == 0.0f);
  const Trial t = simulate_trial(2, Split::kTest, ObserverConfig{}, 9);
  const TrialEncoding e = encode_trial(m.bundle.encoder, t);
  const auto& schema = default_schema();
  for (int f = 0; f < 16; ++f) {
    double mean = 0.0;
    for (int i = 0; i < kAuxFaces; ++i) mean += e.features[std::size_t(i * 16 + f)];
    CHECK(r.ours.sliders.values[std::size_t(schema.reconstructable()[std::size_t(f)])] ==
          doctest::Approx(mean / kAuxFaces).epsilon(1e-6));
  }
}

TEST_CASE("replayed scanpath matches the batch pipeline exactly") {
  Models m;
  SessionManager sm(m.bundle, SessionConfig{});
  for (int id : {0, 3}) {
    const Trial t = simulate_trial(id, Split::kTest, ObserverConfig{}, 21);
    const auto c = sm.create(21, id);
    sm.start(c.id);
    // Stream the scanpath in batches of four, as a client would.
    const auto& fx = t.scanpath.fixations;
    for (std::size_t i = 0; i < fx.size(); i += 4) {
      const std::vector<Fixation> batch(fx.begin() + long(i), fx.begin() + long(std::min(fx.size(), i + 4)));
      sm.ingest(c.id, batch);
    }
    CHECK(sm.scanpath(c.id) == t.scanpath);
    const auto& r = sm.reconstruct(c.id);
    CHECK(r.ours.sliders.values == offline_sliders(m.bundle, 21, id).values);
  }
}

TEST_CASE("journal recovery restores sessions") {
  Models m;
  SessionConfig cfg;
  cfg.journal_dir = fresh_dir("photofit_journal_test");
  std::string done, viewing;
  std::vector<float> sliders;
  {
    SessionManager sm(m.bundle, cfg);
    const Trial t = simulate_trial(1, Split::kTest, ObserverConfig{}, 4);
    done = sm.create(4, 1).id;
    sm.start(done);
    sm.ingest(done, t.scanpath.fixations);
    sliders = sm.reconstruct(done).ours.sliders.values;
    viewing = sm.create(4, 0).id;
    sm.start(viewing);
    sm.ingest(viewing, {{3, 0.4, 0.4, 10.0, 200.0}});
  }
  SessionManager back(m.bundle, cfg);
  CHECK(back.recover() == 2);
  CHECK(back.state(done) == SessionState::kReconstructed);
  CHECK(back.reconstruct(done).ours.sliders.values == sliders);
  CHECK(back.state(viewing) == SessionState::kViewing);
  CHECK(back.scanpath(viewing).fixations.size() == 1);
  // Fresh ids never collide with recovered ones.
  const auto c = back.create(1);
  CHECK(c.id != done);
  CHECK(c.id != viewing);
  std::filesystem::remove_all(cfg.journal_dir);
}

TEST_CASE("http api") {
  Models m;
  SessionManager sm(m.bundle, SessionConfig{});
  HttpService svc(sm);
  const int port = svc.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread server([&] { svc.listen(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);

  auto post = [&](const std::string& path, const std::string& body) {
    auto res = cli.Post(path, body, "application/json");
    REQUIRE(res);
    return std::make_pair(res->status, res->body);
  };

  auto [st, body] = post("/sessions", R"({"seed": 21, "trial": 0})");
  CHECK(st == 201);
  const Json created = Json::parse(body);
  const std::string id = created.at("id");
  CHECK(created.at("memorize_ms") == 10000.0);

  auto face = cli.Get(created.at("target_png_url").get<std::string>());
  REQUIRE(face);
  CHECK(face->status == 200);
  CHECK(face->get_header_value("Content-Type") == "image/png");
  CHECK(decode_png(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(face->body.data()),
                                                 face->body.size()))
            .width == 64);
  CHECK(cli.Get("/faces/0123abcd.png")->status == 404);

  CHECK(post("/sessions/zzz/start", "").first == 404);
  auto early = cli.Get("/sessions/" + id + "/reveal");
  CHECK(early->status == 409);
  CHECK(Json::parse(early->body).at("state") == "memorizing");

  std::tie(st, body) = post("/sessions/" + id + "/start", "");
  CHECK(st == 200);
  const Json start = Json::parse(body);
  CHECK(start.at("collage").size() == 6u);
  CHECK(start.at("collage")[0].at("layout_rect").contains("w"));
  CHECK(start.at("duration_ms") == 30000.0);

  const Trial t = simulate_trial(0, Split::kTest, ObserverConfig{}, 21);
  Json events = Json::array();
  for (const auto& f : t.scanpath.fixations) events.push_back(fixation_to_json(f));
  std::tie(st, body) = post("/sessions/" + id + "/fixations", events.dump());
  CHECK(st == 200);
  CHECK(Json::parse(body).at("accepted") == t.scanpath.fixations.size());

  Json bad = Json::array({fixation_to_json({0, 0.5, 0.5, 1.0, 10.0})});
  std::tie(st, body) = post("/sessions/" + id + "/fixations", bad.dump());
  CHECK(st == 400);
  CHECK(Json::parse(body).at("index") == 0);
  CHECK(post("/sessions/" + id + "/fixations", "{not json").first == 400);
  CHECK(post("/sessions/" + id + "/fixations", R"([{"face": 0}])").first == 400);

  std::tie(st, body) = post("/sessions/" + id + "/reconstruct", "");
  CHECK(st == 200);
  const Json rec = Json::parse(body);
  CHECK(rec.at("scores").size() == 6u);
  CHECK(rec.at("scores")[0].size() == 16u);
  CHECK(rec.at("fallback_features").empty());
  CHECK(cli.Get(rec.at("photofit_png_url").get<std::string>())->status == 200);
  CHECK(cli.Get(rec.at("baseline_png_url").get<std::string>())->status == 200);
  CHECK(post("/sessions/" + id + "/reconstruct", "").second == body);

  auto rev = cli.Get("/sessions/" + id + "/reveal");
  CHECK(rev->status == 200);
  const Json reveal = Json::parse(rev->body);
  CHECK(reveal.at("target_png_url") == created.at("target_png_url"));
  SliderVector ours = t.target;
  ours.values = rec.at("sliders").get<std::vector<float>>();
  CHECK(reveal.at("masd_ours").get<double>() == doctest::Approx(masd(ours, t.target)).epsilon(1e-6));

  svc.stop();
  server.join();
}
