// SPDX-License-Identifier: Apache-2.0
#include "photofit/http_service.hpp"

#include "httplib.h"

namespace photofit {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Maps library exceptions onto HTTP statuses.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const SessionNotFound& e) {
    send_json(res, 404, {{"error", e.what()}});
  } catch (const SessionStateError& e) {
    send_json(res, 409, {{"error", e.what()}, {"state", std::string(state_name(e.state()))}});
  } catch (const OutOfOrderEvents& e) {
    send_json(res, 400, {{"error", e.what()}, {"index", e.index()}});
  } catch (const ConfigError& e) {
    send_json(res, 400, {{"error", e.what()}});
  } catch (const Json::exception& e) {
    send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}});
  }
}

Json body_or_empty(const httplib::Request& req) {
  if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) return Json::object();
  return Json::parse(req.body);
}

}  // namespace

HttpService::HttpService(SessionManager& sessions)
    : sessions_(sessions), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;

  s.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Json body = body_or_empty(req);
      std::optional<std::uint64_t> seed;
      if (body.contains("seed") && !body["seed"].is_null()) seed = body["seed"].get<std::uint64_t>();
      const int trial = body.value("trial", 0);
      const auto r = sessions_.create(seed, trial);
      send_json(res, 201, {{"id", r.id}, {"target_png_url", r.target_png_url}, {"memorize_ms", r.memorize_ms}});
    });
  });

  s.Post(R"(/sessions/([^/]+)/start)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto r = sessions_.start(req.matches[1]);
      Json collage = Json::array();
      for (int i = 0; i < kAuxFaces; ++i) {
        const Rect& q = r.layout[std::size_t(i)];
        collage.push_back({{"face_url", r.face_urls[std::size_t(i)]},
                           {"layout_rect", {{"x", q.x}, {"y", q.y}, {"w", q.w}, {"h", q.h}}}});
      }
      send_json(res, 200, {{"collage", collage}, {"duration_ms", r.duration_ms}, {"bin_ms", r.bin_ms}});
    });
  });

  s.Post(R"(/sessions/([^/]+)/fixations)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Json body = Json::parse(req.body);
      if (!body.is_array()) throw ConfigError("fixations body must be a JSON array");
      std::vector<Fixation> events;
      for (const auto& e : body) events.push_back(fixation_from_json(e));
      const auto r = sessions_.ingest(req.matches[1], events);
      send_json(res, 200, {{"accepted", r.accepted}, {"elapsed_ms", r.elapsed_ms}});
    });
  });

  s.Post(R"(/sessions/([^/]+)/reconstruct)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto& r = sessions_.reconstruct(req.matches[1]);
      Json scores = Json::array();
      const int k = r.scores.dim(1);
      for (int i = 0; i < r.scores.dim(0); ++i) {
        scores.push_back(std::vector<float>(r.scores.data() + std::size_t(i) * k, r.scores.data() + std::size_t(i + 1) * k));
      }
      send_json(res, 200, {{"photofit_png_url", r.photofit_png_url},
                           {"rendered_png_url", r.rendered_png_url},
                           {"baseline_png_url", r.baseline_png_url},
                           {"sliders", r.ours.sliders.values},  // unclamped
                           {"scores", scores},
                           {"fallback_features", r.ours.fallback}});
    });
  });

  s.Get(R"(/sessions/([^/]+)/reveal)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto r = sessions_.reveal(req.matches[1]);
      send_json(res, 200, {{"target_png_url", r.target_png_url},
                           {"masd_ours", r.masd_ours},
                           {"masd_baseline", r.masd_baseline}});
    });
  });

  s.Get(R"(/faces/([0-9a-f]+)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto png = sessions_.image(req.matches[1]);
    if (!png) {
      send_json(res, 404, {{"error", "no image " + std::string(req.matches[1])}});
      return;
    }
    res.set_content(std::string(png->begin(), png->end()), "image/png");
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpService::listen() { server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_) server_->stop();
}

}  // namespace photofit
