// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Model-free conformance server for the backend protocol.

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "divad/errors.hpp"
#include "divad/stub_server.hpp"

namespace {
std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divad conformance stub server"};
  std::string host = "127.0.0.1";
  int port = 8077;
  divad::StubConfig config;
  app.add_option("--host", host, "Listen address");
  app.add_option("--port", port, "Listen port, 0 picks a free one");
  app.add_option("--image-side", config.image_side, "Image side reported by /v1/info");
  app.add_option("--latent-factor", config.latent_factor, "Encoder downsampling factor");
  app.add_option("--patch-size", config.patch_size, "Feature mean-pool patch");
  app.add_option("--world-mean", config.world_mean, "Gaussian world mean for /v1/eps");
  app.add_option("--world-std", config.world_std, "Gaussian world std for /v1/eps");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "divad-error[usage]: " << e.what() << std::endl;
    return 2;
  }

  try {
    divad::StubServer server(config);
    const int bound = server.start(host, port);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << host << ":" << bound << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  } catch (const divad::Error& e) {
    std::cerr << "divad-error[" << e.kind() << "]: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
