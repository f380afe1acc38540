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

#include "fasd/remote.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <thread>

#include "httplib.h"

namespace fasd::score {
namespace {

constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

struct Endpoint {
  std::string origin;  // scheme://host:port
  std::string prefix;  // path prefix without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw TransportError("endpoint '" + url + "' must start with http://");
  }
  const auto path = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, path);
  if (path != std::string::npos) {
    e.prefix = url.substr(path);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  }
  return e;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ProtocolError("base64: length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> v{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2) throw ProtocolError("base64: misplaced padding");
        ++pad;
        v[k] = 0;
      } else {
        if (pad > 0) throw ProtocolError("base64: data after padding");
        v[k] = decode_char(c);
        if (v[k] < 0) throw ProtocolError("base64: invalid character");
      }
    }
    const std::uint32_t word = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(word >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(word >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(word));
  }
  return out;
}

nlohmann::json encode_tensor(const Grid& g) {
  std::vector<std::uint8_t> bytes(g.size() * 4);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(g[i]));
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return {{"shape", {g.channels(), g.height(), g.width()}},
          {"dtype", "f32"},
          {"data", base64_encode(bytes)}};
}

Grid decode_tensor(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ProtocolError("tensor record must be an object");
    if (j.at("dtype").get<std::string>() != "f32") {
      throw ProtocolError("unsupported tensor dtype '" +
                          j.at("dtype").get<std::string>() + "'");
    }
    const auto shape = j.at("shape").get<std::vector<std::int64_t>>();
    if (shape.size() != 3 || shape[0] <= 0 || shape[1] <= 0 || shape[2] <= 0) {
      throw ProtocolError("tensor shape must be three positive integers");
    }
    const Shape s{static_cast<std::size_t>(shape[0]), static_cast<std::size_t>(shape[1]),
                  static_cast<std::size_t>(shape[2])};
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    if (bytes.size() != s.size() * 4) {
      throw ProtocolError("tensor data holds " + std::to_string(bytes.size()) +
                          " bytes, shape " + s.str() + " needs " +
                          std::to_string(s.size() * 4));
    }
    Grid g(s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[4 * i + b]} << (8 * b);
      g[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    if (!g.all_finite()) throw ProtocolError("tensor contains non-finite values");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed tensor record: ") + e.what());
  }
}

nlohmann::json ScoreRequest::to_json() const {
  return {{"protocol_version", protocol_version},
          {"latent", encode_tensor(latent)},
          {"source_latent", encode_tensor(source_latent)},
          {"timestep", timestep},
          {"prompt_source", prompt_source},
          {"prompt_target", prompt_target},
          {"guidance_scale", guidance_scale}};
}

ScoreRequest ScoreRequest::from_json(const nlohmann::json& j) {
  try {
    ScoreRequest r;
    r.protocol_version = j.at("protocol_version").get<std::string>();
    r.latent = decode_tensor(j.at("latent"));
    r.source_latent = decode_tensor(j.at("source_latent"));
    r.timestep = j.at("timestep").get<int>();
    r.prompt_source = j.at("prompt_source").get<std::string>();
    r.prompt_target = j.at("prompt_target").get<std::string>();
    r.guidance_scale = j.at("guidance_scale").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed score request: ") + e.what());
  }
}

Grid parse_score_response(std::string_view body, const Shape& expected) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("response must be a JSON object");
  if (j.contains("protocol_version") &&
      j["protocol_version"] != nlohmann::json(kProtocolVersion)) {
    throw ProtocolError("protocol version mismatch: server speaks " +
                        j["protocol_version"].dump() + ", client speaks \"" +
                        kProtocolVersion + "\"");
  }
  if (j.contains("error")) {
    const auto& e = j["error"];
    throw ServerError(e.value("code", std::string("unknown")),
                      e.value("message", std::string()));
  }
  if (!j.contains("gradient")) throw ProtocolError("response has no gradient");
  Grid g = decode_tensor(j["gradient"]);
  if (g.shape() != expected) {
    throw GradientShapeError("gradient shape " + g.shape().str() +
                             " does not match latent " + expected.str());
  }
  return g;
}

Grid remote_gradient(const std::string& endpoint, const ScoreRequest& request,
                     const RemoteOptions& options) {
  require_same_shape(request.latent, request.source_latent, "remote_gradient");
  const Endpoint ep = split_endpoint(endpoint);
  const std::string body = request.to_json().dump();
  const std::string path = ep.prefix + kGradientPath;

  auto backoff = options.initial_backoff;
  std::string last_error = "no attempt made";
  for (int attempt = 1; attempt <= std::max(1, options.max_attempts); ++attempt) {
    httplib::Client client(ep.origin);
    client.set_connection_timeout(options.connect_timeout);
    client.set_read_timeout(options.read_timeout);
    auto res = client.Post(path, body, "application/json");
    if (res) {
      // Error bodies with a JSON error record surface as ServerError even on
      // non-200 statuses.
      if (res->status != 200) {
        nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("error")) {
          return parse_score_response(res->body, request.latent.shape());
        }
        throw ProtocolError("HTTP status " + std::to_string(res->status) +
                            " without an error record");
      }
      return parse_score_response(res->body, request.latent.shape());
    }
    last_error = httplib::to_string(res.error());
    if (attempt < options.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError("POST " + endpoint + path + " failed after " +
                       std::to_string(options.max_attempts) +
                       " attempts: " + last_error);
}

GradientResult RemoteProvider::gradient(const GradientQuery& query) {
  ScoreRequest req;
  req.latent = query.current;
  req.source_latent = query.source;
  req.timestep = sample_timestep(config_.seed, query.step, config_.timesteps);
  req.prompt_source = config_.prompt_source;
  req.prompt_target = config_.prompt_target;
  req.guidance_scale = config_.guidance_scale;
  return {remote_gradient(config_.endpoint, req, config_.options), req.timestep};
}

}  // namespace fasd::score
