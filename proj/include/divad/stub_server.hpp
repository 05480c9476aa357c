// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <thread>

#include "divad/remote.hpp"
#include "divad/schedule.hpp"

namespace httplib {
class Server;
}

namespace divad {

/// Behaviour of the model-free conformance server.
struct StubConfig {
  int image_side = 256;      // geometry reported by /v1/info
  int latent_factor = 8;     // encode = mean-pool by this factor, latent = 2x - 1
  int patch_size = 8;        // /v1/features mean-pool patch
  float world_mean = 0.0f;   // /v1/eps closed-form Gaussian denoiser
  float world_std = 1.0f;
  ScheduleConfig schedule;
};

/// Serves the full protocol with analytic behaviours so the client can be
/// exercised without any neural network. Deterministic across restarts.
class StubServer {
 public:
  explicit StubServer(StubConfig config = {});
  ~StubServer();
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen_blocking(const std::string& host, int port);
  void stop();

  std::string url() const;
  ServerInfo info() const;
  const StubConfig& config() const noexcept { return config_; }

 private:
  void install_routes();

  StubConfig config_;
  NoiseSchedule schedule_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = -1;
};

}  // namespace divad
