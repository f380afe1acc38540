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

#include "fasd/prng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fasd {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Prng::Prng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) word = splitmix64(x);
}

Prng Prng::stream(std::uint64_t seed, std::string_view label,
                  std::uint64_t index) {
  std::uint64_t x = seed;
  std::uint64_t mixed = splitmix64(x) ^ fnv1a(label);
  x = mixed;
  mixed = splitmix64(x) ^ (index * 0xD1B54A32D192ED03ULL);
  x = mixed;
  return Prng(splitmix64(x));
}

std::uint64_t Prng::next() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Prng::uniform_open0() {
  return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
}

double Prng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Prng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::int64_t Prng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next());
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return lo + static_cast<std::int64_t>(v % span);
}

Grid sample_gaussian(Prng& prng, Shape shape) {
  Grid g(shape);
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; i += 2) {
    const double u1 = prng.uniform_open0();
    const double u2 = prng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    g[i] = r * std::cos(theta);
    if (i + 1 < n) g[i + 1] = r * std::sin(theta);
  }
  return g;
}

Grid sample_uniform(Prng& prng, Shape shape, double lo, double hi) {
  Grid g(shape);
  for (double& v : g.data()) v = prng.uniform(lo, hi);
  return g;
}

}  // namespace fasd
