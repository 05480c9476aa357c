// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Client side of the model-server protocol.
//
//   GET  /v1/info        -> JSON {latent_channels, latent_side, num_base_steps,
//                                 patch_size, models, protocol_version?}
//   POST /v1/encode      image bytes -> tensor blob (C, H, W)
//   POST /v1/decode      tensor blob -> PNG bytes
//   POST /v1/eps         frame{"t", "prompt": string|null} + blob -> blob
//   POST /v1/features    image bytes -> frame{"patch_size"} + blob (gh, gw, dim)
//   POST /v1/objectmask  image bytes, ?threshold= -> 8-bit PNG mask (255 = object)
//
// Error responses carry JSON {"error": "..."} with a 4xx/5xx status.

#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "divad/backend.hpp"
#include "divad/tensor.hpp"

namespace httplib {
class Client;
}

namespace divad {

inline constexpr int kProtocolVersion = 1;
inline constexpr const char* kServerUrlEnv = "DIVAD_SERVER_URL";

struct ServerInfo {
  int latent_channels = 0;
  int latent_side = 0;
  int num_base_steps = 0;
  int patch_size = 0;
  nlohmann::json models = nlohmann::json::object();
  int protocol_version = kProtocolVersion;

  nlohmann::json to_json() const;
  static ServerInfo from_json(const nlohmann::json& j);
};

struct RemoteOptions {
  std::string url = "http://127.0.0.1:8077";
  int pool_size = 4;
  double timeout_seconds = 300.0;
};

/// Thread-safe protocol client. Up to `pool_size` requests are in flight at
/// once; further callers wait for a free connection.
class RemoteClient {
 public:
  explicit RemoteClient(RemoteOptions options);
  ~RemoteClient();
  RemoteClient(const RemoteClient&) = delete;
  RemoteClient& operator=(const RemoteClient&) = delete;

  const RemoteOptions& options() const noexcept { return options_; }

  ServerInfo info() const;
  Tensor encode(std::string_view image_bytes) const;
  std::string decode(const Tensor& latent) const;
  Tensor predict_eps(const Tensor& latent, int base_t, const std::optional<std::string>& prompt) const;
  PatchFeatures features(std::string_view image_bytes) const;
  ObjectMask object_mask(std::string_view image_bytes, double threshold) const;

 private:
  class Lease;
  std::string post(const std::string& path, std::string body, const char* content_type) const;
  std::string get(const std::string& path) const;

  RemoteOptions options_;
  mutable std::mutex mutex_;
  mutable std::condition_variable available_;
  mutable std::vector<std::unique_ptr<httplib::Client>> idle_;
  mutable int created_ = 0;
};

// Backend adapters over a shared client. Images travel as PNG.

class RemoteDenoiser final : public DenoiserBackend {
 public:
  explicit RemoteDenoiser(std::shared_ptr<const RemoteClient> client);
  DenoiserInfo info() const override;
  Tensor predict_eps(const Tensor& latent, int base_t,
                     const std::optional<std::string>& prompt) const override;

 private:
  std::shared_ptr<const RemoteClient> client_;
  DenoiserInfo info_;
};

class RemoteAutoencoder final : public Autoencoder {
 public:
  explicit RemoteAutoencoder(std::shared_ptr<const RemoteClient> client) : client_(std::move(client)) {}
  Tensor encode(const Image& image) const override;
  Image decode(const Tensor& latent) const override;

 private:
  std::shared_ptr<const RemoteClient> client_;
};

class RemoteFeatures final : public FeatureExtractor {
 public:
  explicit RemoteFeatures(std::shared_ptr<const RemoteClient> client) : client_(std::move(client)) {}
  PatchFeatures extract(const Image& image) const override;

 private:
  std::shared_ptr<const RemoteClient> client_;
};

class RemoteSegmenter final : public ObjectSegmenter {
 public:
  RemoteSegmenter(std::shared_ptr<const RemoteClient> client, double threshold)
      : client_(std::move(client)), threshold_(threshold) {}
  ObjectMask segment(const Image& image) const override;

 private:
  std::shared_ptr<const RemoteClient> client_;
  double threshold_;
};

}  // namespace divad
