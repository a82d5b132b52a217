// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "photofit/session.hpp"

namespace httplib {
class Server;
}

namespace photofit {

/// JSON-over-HTTP front end for a SessionManager.
///   POST /sessions {seed?, trial?}           -> {id, target_png_url, memorize_ms}
///   POST /sessions/{id}/start                -> {collage, duration_ms, bin_ms}
///   POST /sessions/{id}/fixations [events]   -> {accepted, elapsed_ms}
///   POST /sessions/{id}/reconstruct          -> {photofit_png_url, rendered_png_url, baseline_png_url,
///                                                sliders, scores, fallback_features}
///   GET  /sessions/{id}/reveal               -> {target_png_url, masd_ours, masd_baseline}
///   GET  /faces/{hash}.png                   -> image/png
/// Errors are {"error": message} with 400 (bad request), 404 (unknown
/// session or image) or 409 (wrong state, plus "state").
class HttpService {
 public:
  explicit HttpService(SessionManager& sessions);
  ~HttpService();

  /// Binds to host:port (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();
  httplib::Server& server() { return *server_; }

 private:
  SessionManager& sessions_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace photofit
