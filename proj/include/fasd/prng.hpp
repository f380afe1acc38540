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

#include <array>
#include <cstdint>
#include <string_view>

#include "fasd/grid.hpp"

namespace fasd {

/// xoshiro256++ seeded through splitmix64.
///
/// Independent consumers (noise, timesteps, weight init, ...) take their own
/// sub-stream via `Prng::stream(seed, label, index)` so that adding draws in
/// one consumer never shifts another.
class Prng {
 public:
  explicit Prng(std::uint64_t seed = 0);

  /// Sub-stream keyed by (seed, label, index).
  static Prng stream(std::uint64_t seed, std::string_view label,
                     std::uint64_t index = 0);

  std::uint64_t next();

  /// Uniform in (0, 1]: ((next() >> 11) + 1) * 2^-53. One draw.
  double uniform_open0();
  /// Uniform in [0, 1): (next() >> 11) * 2^-53. One draw.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] (inclusive), rejection sampled.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  const std::array<std::uint64_t, 4>& state() const { return s_; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

/// i.i.d. N(0,1) grid by Box-Muller. Entries are filled pairwise in index
/// order: draws (u1, u2) give r*cos(2*pi*u2) then r*sin(2*pi*u2) with
/// r = sqrt(-2 ln u1), u1 from uniform_open0 and u2 from uniform. An odd
/// trailing entry discards its sine partner, so exactly 2*ceil(n/2) draws
/// are consumed.
Grid sample_gaussian(Prng& prng, Shape shape);

/// Uniform [lo, hi) grid, one draw per entry.
Grid sample_uniform(Prng& prng, Shape shape, double lo, double hi);

}  // namespace fasd
