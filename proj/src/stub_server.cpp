// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/stub_server.hpp"

#include <cstdlib>

#include <httplib.h>

#include "divad/analytic_backends.hpp"
#include "divad/errors.hpp"
#include "divad/image_io.hpp"
#include "divad/tensor_blob.hpp"

namespace divad {

namespace {

constexpr const char* kOctet = "application/octet-stream";

void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

// Maps toolkit exceptions onto HTTP statuses: bad requests are 400, anything
// else is a server-side failure.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    reply_error(res, 400, e.what());
  } catch (const ProtocolError& e) {
    reply_error(res, 400, e.what());
  } catch (const ContractError& e) {
    reply_error(res, 400, e.what());
  } catch (const BoundsError& e) {
    reply_error(res, 400, e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, e.what());
  }
}

Image as_rgb(Image img) {
  if (img.channels == 3) return img;
  Image out(img.height, img.width, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int k = 0; k < 3; ++k) out.at(y, x, k) = img.at(y, x, 0);
  return out;
}

}  // namespace

StubServer::StubServer(StubConfig config)
    : config_(config), schedule_(build_schedule(config.schedule)), server_(std::make_unique<httplib::Server>()) {
  if (config_.latent_factor < 1 || config_.patch_size < 1) {
    throw ConfigError("stub", "latent_factor and patch_size must be >= 1");
  }
  server_->set_tcp_nodelay(true);
  install_routes();
}

StubServer::~StubServer() { stop(); }

ServerInfo StubServer::info() const {
  ServerInfo info;
  info.latent_channels = 3;
  info.latent_side = config_.image_side / config_.latent_factor;
  info.num_base_steps = schedule_.num_base_steps();
  info.patch_size = config_.patch_size;
  info.models = {{"autoencoder", "stub-meanpool-x" + std::to_string(config_.latent_factor)},
                 {"denoiser", "stub-analytic-gaussian"},
                 {"features", "stub-meanpool-p" + std::to_string(config_.patch_size)},
                 {"segmenter", "stub-all-ones"}};
  return info;
}

void StubServer::install_routes() {
  server_->Get("/v1/info", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(info().to_json().dump(), "application/json");
  });

  server_->Post("/v1/encode", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Image img = as_rgb(decode_image(req.body));
      const int f = config_.latent_factor;
      if (img.height % f != 0 || img.width % f != 0) {
        throw ContractError("image sides must be divisible by " + std::to_string(f));
      }
      const PatchFeatures pooled = mean_pool_features(img, f);
      const auto h = static_cast<std::size_t>(pooled.grid_h()), w = static_cast<std::size_t>(pooled.grid_w());
      Tensor latent({3, h, w});
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            latent[(k * h + y) * w + x] = 2.0f * pooled.grid[(y * w + x) * 3 + k] - 1.0f;
      res.set_content(encode_blob(latent), kOctet);
    });
  });

  server_->Post("/v1/decode", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Tensor latent = decode_blob(req.body);
      if (latent.rank() != 3 || latent.dim(0) != 3) throw ContractError("latent must be (3, H, W)");
      const int f = config_.latent_factor;
      const int h = static_cast<int>(latent.dim(1)), w = static_cast<int>(latent.dim(2));
      Image img(h * f, w * f, 3);
      for (int y = 0; y < h * f; ++y)
        for (int x = 0; x < w * f; ++x)
          for (int k = 0; k < 3; ++k) {
            const float z = latent[(static_cast<std::size_t>(k) * h + y / f) * w + x / f];
            img.at(y, x, k) = 0.5f * (z + 1.0f);
          }
      res.set_content(encode_png(img), "image/png");
    });
  });

  server_->Post("/v1/eps", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Frame frame = decode_frame(req.body);
      if (!frame.header.contains("t") || !frame.header.at("t").is_number_integer()) {
        throw ProtocolError("/v1/eps", "header needs integer t");
      }
      if (frame.header.contains("prompt") && !frame.header.at("prompt").is_null() &&
          !frame.header.at("prompt").is_string()) {
        throw ProtocolError("/v1/eps", "prompt must be a string or null");
      }
      const Tensor latent = decode_blob(frame.body);
      const auto world = GaussianWorldModel::uniform(latent.shape(), config_.world_mean, config_.world_std);
      const Tensor eps = analytic_gaussian_eps(latent, Timestep::at(frame.header.at("t").get<int>()),
                                               world, schedule_);
      res.set_content(encode_blob(eps), kOctet);
    });
  });

  server_->Post("/v1/features", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const PatchFeatures feats = mean_pool_features(as_rgb(decode_image(req.body)), config_.patch_size);
      res.set_content(encode_frame({{"patch_size", feats.patch_size}}, encode_blob(feats.grid)), kOctet);
    });
  });

  server_->Post("/v1/objectmask", [](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (req.has_param("threshold")) {
        const std::string t = req.get_param_value("threshold");
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (end == t.c_str() || *end != '\0' || !(v >= 0.0 && v <= 1.0)) {
          throw ContractError("threshold must be a number in [0, 1]");
        }
      }
      const Image img = decode_image(req.body);
      res.set_content(encode_mask_png(ObjectMask(img.height, img.width, 1)), "image/png");
    });
  });
}

int StubServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw ConnectionError("stub", "could not bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void StubServer::listen_blocking(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) {
    throw ConnectionError("stub", "could not listen on " + host + ":" + std::to_string(port));
  }
}

void StubServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string StubServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace divad
