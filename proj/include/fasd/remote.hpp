// Copyright 2026 The fasd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fasd/score.hpp"
#include "json.hpp"

namespace fasd::score {

inline constexpr const char* kProtocolVersion = "1";
inline constexpr const char* kGradientPath = "/v1/gradient";

/// Connection refused, timeout, or any failure before a response arrived.
class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// Response is not valid protocol JSON or declares another protocol version.
class ProtocolError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// Returned gradient shape differs from the request latent.
class GradientShapeError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// The service answered with an {"error": {code, message}} record.
class ServerError : public ProviderError {
 public:
  ServerError(std::string code, std::string message)
      : ProviderError("server error [" + code + "]: " + message),
        code_(std::move(code)),
        server_message_(std::move(message)) {}
  const std::string& code() const { return code_; }
  const std::string& server_message() const { return server_message_; }

 private:
  std::string code_;
  std::string server_message_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ProtocolError on invalid characters or length.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// {"shape": [c,h,w], "dtype": "f32", "data": "<base64 little-endian>"}.
/// Values are narrowed to float32.
nlohmann::json encode_tensor(const Grid& g);
/// Widens float32 data back to double. Throws ProtocolError on malformed
/// records.
Grid decode_tensor(const nlohmann::json& j);

struct ScoreRequest {
  std::string protocol_version = kProtocolVersion;
  Grid latent;
  Grid source_latent;
  int timestep = 0;
  std::string prompt_source;
  std::string prompt_target;
  double guidance_scale = 7.5;

  nlohmann::json to_json() const;
  static ScoreRequest from_json(const nlohmann::json& j);
};

/// Parses a response body into the gradient, checking version and shape
/// against `expected`. Throws ServerError, ProtocolError or
/// GradientShapeError.
Grid parse_score_response(std::string_view body, const Shape& expected);

struct RemoteOptions {
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds read_timeout{60000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
};

/// POSTs `request` to `endpoint` + /v1/gradient. `endpoint` is
/// "http://host:port" (optionally with a path prefix). Transport failures
/// are retried with exponential backoff up to max_attempts; protocol and
/// server errors are not retried.
Grid remote_gradient(const std::string& endpoint, const ScoreRequest& request,
                     const RemoteOptions& options = {});

struct RemoteProviderConfig {
  std::string endpoint;
  std::string prompt_source;
  std::string prompt_target;
  double guidance_scale = 7.5;
  TimestepRange timesteps;
  std::uint64_t seed = 0;
  RemoteOptions options;
};

/// Provider that forwards every step to a /v1/gradient service.
class RemoteProvider : public GradientProvider {
 public:
  explicit RemoteProvider(RemoteProviderConfig config) : config_(std::move(config)) {}
  GradientResult gradient(const GradientQuery& query) override;

 private:
  RemoteProviderConfig config_;
};

}  // namespace fasd::score
