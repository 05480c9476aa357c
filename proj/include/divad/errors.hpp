// Copyright 2026 The divad-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace divad {

/// Base of every error raised by the toolkit. `kind()` is the short tag the
/// CLI prints in its machine-parsable error line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Invalid configuration value; `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }
  const char* kind() const noexcept override { return "config"; }

 private:
  std::string field_;
};

/// Violated precondition (shape mismatch, bad argument).
class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract"; }
};

class BoundsError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "bounds"; }
};

/// Non-finite value produced by a diffusion step.
class NumericError : public Error {
 public:
  NumericError(int step, const std::string& message)
      : Error("step " + std::to_string(step) + ": " + message), step_(step) {}
  int step() const noexcept { return step_; }
  const char* kind() const noexcept override { return "numeric"; }

 private:
  int step_;
};

/// A metric is undefined for the given input (e.g. only one class present).
class MetricError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "metric"; }
};

/// Malformed or missing dataset content.
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

/// Failure talking to a model backend. `endpoint()` is the protocol path.
class BackendError : public Error {
 public:
  BackendError(std::string endpoint, const std::string& message)
      : Error(endpoint + ": " + message), endpoint_(std::move(endpoint)) {}
  const std::string& endpoint() const noexcept { return endpoint_; }
  const char* kind() const noexcept override { return "backend"; }

 private:
  std::string endpoint_;
};

class ConnectionError : public BackendError {
 public:
  using BackendError::BackendError;
  const char* kind() const noexcept override { return "connection"; }
};

/// Malformed payload or protocol-version mismatch.
class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
  const char* kind() const noexcept override { return "protocol"; }
};

/// The server answered with an error status.
class ServerError : public BackendError {
 public:
  ServerError(std::string endpoint, int status, const std::string& message)
      : BackendError(std::move(endpoint), "HTTP " + std::to_string(status) + ": " + message),
        status_(status) {}
  int status() const noexcept { return status_; }
  const char* kind() const noexcept override { return "server"; }

 private:
  int status_;
};

/// Wraps a failure inside one stage of the scoring pipeline.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }
  const char* kind() const noexcept override { return "stage"; }

 private:
  std::string stage_;
};

}  // namespace divad
