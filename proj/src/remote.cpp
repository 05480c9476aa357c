// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "divad/remote.hpp"

#include <cmath>
#include <sstream>

#include <httplib.h>

#include "divad/errors.hpp"
#include "divad/image_io.hpp"
#include "divad/tensor_blob.hpp"

namespace divad {

namespace {

constexpr const char* kOctet = "application/octet-stream";

std::string error_message(const httplib::Result& res) {
  try {
    const auto j = nlohmann::json::parse(res->body);
    if (j.contains("error")) return j.at("error").get<std::string>();
  } catch (const std::exception&) {
  }
  return res->body.substr(0, 200);
}

void check_result(const std::string& path, const httplib::Result& res) {
  if (!res) {
    throw ConnectionError(path, "request failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) throw ServerError(path, res->status, error_message(res));
}

// Re-labels a blob/frame parse failure with the endpoint it came from.
template <typename F>
auto parse_payload(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ProtocolError& e) {
    throw ProtocolError(path, e.what());
  } catch (const ContractError& e) {
    throw ProtocolError(path, e.what());
  }
}

}  // namespace

nlohmann::json ServerInfo::to_json() const {
  return {{"latent_channels", latent_channels}, {"latent_side", latent_side},
          {"num_base_steps", num_base_steps},   {"patch_size", patch_size},
          {"models", models},                   {"protocol_version", protocol_version}};
}

ServerInfo ServerInfo::from_json(const nlohmann::json& j) {
  ServerInfo info;
  try {
    info.latent_channels = j.at("latent_channels").get<int>();
    info.latent_side = j.at("latent_side").get<int>();
    info.num_base_steps = j.at("num_base_steps").get<int>();
    info.patch_size = j.at("patch_size").get<int>();
    if (j.contains("models")) info.models = j.at("models");
    info.protocol_version = j.value("protocol_version", kProtocolVersion);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError("/v1/info", std::string("malformed info: ") + e.what());
  }
  return info;
}

// Borrows one connection from the pool for the duration of a request.
class RemoteClient::Lease {
 public:
  explicit Lease(const RemoteClient& owner) : owner_(owner) {
    std::unique_lock lock(owner_.mutex_);
    owner_.available_.wait(lock, [&] {
      return !owner_.idle_.empty() || owner_.created_ < owner_.options_.pool_size;
    });
    if (!owner_.idle_.empty()) {
      client_ = std::move(owner_.idle_.back());
      owner_.idle_.pop_back();
    } else {
      ++owner_.created_;
      lock.unlock();
      client_ = std::make_unique<httplib::Client>(owner_.options_.url);
      const auto secs = static_cast<time_t>(owner_.options_.timeout_seconds);
      client_->set_read_timeout(secs, 0);
      client_->set_write_timeout(secs, 0);
      client_->set_connection_timeout(10, 0);
      client_->set_keep_alive(true);
      client_->set_tcp_nodelay(true);
    }
  }
  ~Lease() {
    {
      std::lock_guard lock(owner_.mutex_);
      owner_.idle_.push_back(std::move(client_));
    }
    owner_.available_.notify_one();
  }
  httplib::Client& operator*() { return *client_; }

 private:
  const RemoteClient& owner_;
  std::unique_ptr<httplib::Client> client_;
};

RemoteClient::RemoteClient(RemoteOptions options) : options_(std::move(options)) {
  if (options_.url.empty()) throw ConfigError("backend.url", "remote backend requires a server URL");
  if (options_.pool_size < 1) throw ConfigError("backend.pool_size", "must be >= 1");
}

RemoteClient::~RemoteClient() = default;

std::string RemoteClient::post(const std::string& path, std::string body,
                               const char* content_type) const {
  Lease lease(*this);
  auto res = (*lease).Post(path, body, content_type);
  check_result(path, res);
  return std::move(res->body);
}

std::string RemoteClient::get(const std::string& path) const {
  Lease lease(*this);
  auto res = (*lease).Get(path);
  check_result(path, res);
  return std::move(res->body);
}

ServerInfo RemoteClient::info() const {
  const std::string path = "/v1/info";
  const std::string body = get(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(path, std::string("response is not JSON: ") + e.what());
  }
  ServerInfo info = ServerInfo::from_json(j);
  if (info.protocol_version != kProtocolVersion) {
    throw ProtocolError(path, "server speaks protocol version " + std::to_string(info.protocol_version) +
                                  ", client expects " + std::to_string(kProtocolVersion));
  }
  return info;
}

Tensor RemoteClient::encode(std::string_view image_bytes) const {
  const std::string path = "/v1/encode";
  const std::string body = post(path, std::string(image_bytes), kOctet);
  Tensor t = parse_payload(path, [&] { return decode_blob(body); });
  if (t.rank() != 3) throw ProtocolError(path, "latent must have rank 3, got " + shape_string(t.shape()));
  return t;
}

std::string RemoteClient::decode(const Tensor& latent) const {
  return post("/v1/decode", encode_blob(latent), kOctet);
}

Tensor RemoteClient::predict_eps(const Tensor& latent, int base_t,
                                 const std::optional<std::string>& prompt) const {
  const std::string path = "/v1/eps";
  nlohmann::json header = {{"t", base_t}, {"prompt", nullptr}};
  if (prompt) header["prompt"] = *prompt;
  const std::string body = post(path, encode_frame(header, encode_blob(latent)), kOctet);
  Tensor eps = parse_payload(path, [&] { return decode_blob(body); });
  if (!eps.same_shape(latent)) {
    throw ProtocolError(path, "eps shape " + shape_string(eps.shape()) + " differs from latent " +
                                  shape_string(latent.shape()));
  }
  return eps;
}

PatchFeatures RemoteClient::features(std::string_view image_bytes) const {
  const std::string path = "/v1/features";
  const std::string body = post(path, std::string(image_bytes), kOctet);
  return parse_payload(path, [&] {
    Frame f = decode_frame(body);
    Tensor grid = decode_blob(f.body);
    if (grid.rank() != 3) throw ProtocolError(path, "feature grid must have rank 3");
    if (!f.header.contains("patch_size") || !f.header.at("patch_size").is_number_integer()) {
      throw ProtocolError(path, "frame header lacks integer patch_size");
    }
    return PatchFeatures{std::move(grid), f.header.at("patch_size").get<int>()};
  });
}

ObjectMask RemoteClient::object_mask(std::string_view image_bytes, double threshold) const {
  std::ostringstream path;
  path.precision(17);
  path << "/v1/objectmask?threshold=" << threshold;
  const std::string body = post(path.str(), std::string(image_bytes), kOctet);
  try {
    return decode_mask_png(body);
  } catch (const DataError& e) {
    throw ProtocolError("/v1/objectmask", e.what());
  }
}

RemoteDenoiser::RemoteDenoiser(std::shared_ptr<const RemoteClient> client) : client_(std::move(client)) {
  const ServerInfo si = client_->info();
  info_ = {si.latent_channels, si.latent_side, si.num_base_steps};
}

DenoiserInfo RemoteDenoiser::info() const { return info_; }

Tensor RemoteDenoiser::predict_eps(const Tensor& latent, int base_t,
                                   const std::optional<std::string>& prompt) const {
  return client_->predict_eps(latent, base_t, prompt);
}

Tensor RemoteAutoencoder::encode(const Image& image) const { return client_->encode(encode_png(image)); }

Image RemoteAutoencoder::decode(const Tensor& latent) const {
  const std::string png = client_->decode(latent);
  try {
    return decode_image(png);
  } catch (const DataError& e) {
    throw ProtocolError("/v1/decode", e.what());
  }
}

PatchFeatures RemoteFeatures::extract(const Image& image) const {
  return client_->features(encode_png(image));
}

ObjectMask RemoteSegmenter::segment(const Image& image) const {
  return client_->object_mask(encode_png(image), threshold_);
}

}  // namespace divad
