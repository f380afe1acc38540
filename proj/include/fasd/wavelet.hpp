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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fasd/grid.hpp"

namespace fasd::wavelet {

inline constexpr int kMinIndex = 1;
inline constexpr int kMaxIndex = 8;

/// Orthonormal Daubechies filter bank with `index` vanishing moments
/// (index 1 is Haar). All four filters have length 2*index.
///
/// Conventions:
///   dec_hi[i] = (-1)^i * dec_lo[L-1-i]
///   rec_lo, rec_hi are dec_lo, dec_hi reversed
/// so Haar is dec_lo = [1, 1]/sqrt2, dec_hi = [1, -1]/sqrt2 and the Haar HH
/// band responds to the 2x2 pattern [+ -; - +].
struct WaveletFilter {
  int index = 0;
  std::vector<double> dec_lo;
  std::vector<double> dec_hi;
  std::vector<double> rec_lo;
  std::vector<double> rec_hi;

  std::size_t length() const { return dec_lo.size(); }
};

/// Solves for the extremal-phase Daubechies lowpass by spectral
/// factorization of the Daubechies polynomial (roots inside the unit circle),
/// then derives the remaining filters. Throws std::out_of_range for p
/// outside [1, 8].
WaveletFilter solve_daubechies(int p);

/// Tabulated dec_lo coefficients used to cross-check the solver.
std::span<const double> reference_dec_lo(int p);

/// Cached filter bank; solved once per index and checked against the table.
const WaveletFilter& daubechies_filters(int p);

enum class Orientation { kHL = 0, kLH = 1, kHH = 2 };
inline constexpr std::array<Orientation, 3> kOrientations = {
    Orientation::kHL, Orientation::kLH, Orientation::kHH};
std::string to_string(Orientation o);

/// One level of the 2D transform.
///   ll: lowpass along x and y
///   hl: highpass along x (width), lowpass along y
///   lh: lowpass along x, highpass along y (height)
///   hh: highpass along both
struct Quad {
  Grid ll;
  Grid hl;
  Grid lh;
  Grid hh;
};

struct DetailLevel {
  Grid hl;
  Grid lh;
  Grid hh;

  Grid& band(Orientation o);
  const Grid& band(Orientation o) const;
};

/// Multilevel decomposition. details[0] is the finest level (level 1, at
/// half resolution); details[J-1] is the coarsest and matches `low` in shape.
struct Subbands2D {
  Grid low;
  std::vector<DetailLevel> details;
  int filter_index = 0;

  std::size_t levels() const { return details.size(); }
  std::size_t coefficient_count() const;

  /// Flat band indexing: 0 is `low`, 1 + 3*j + o is orientation o of
  /// details[j].
  std::size_t band_count() const { return 1 + 3 * details.size(); }
  Grid& band(std::size_t index);
  const Grid& band(std::size_t index) const;
  /// "low" or "L<level>/<orientation>", e.g. "L1/HL".
  std::string band_name(std::size_t index) const;

  bool bit_equal(const Subbands2D& other) const;
  /// Checks the halving structure and throws ShapeError if inconsistent.
  void validate() const;
  /// Shape of the grid this decomposition reconstructs to.
  Shape signal_shape() const;

  /// Zero subbands with the same layout as `like`.
  static Subbands2D zeros_like(const Subbands2D& like);

  Subbands2D& operator+=(const Subbands2D& other);
  Subbands2D& operator*=(double s);
};

/// Sequential sum over low then details (finest first, HL/LH/HH).
double inner_product(const Subbands2D& a, const Subbands2D& b);
double squared_norm(const Subbands2D& s);
double max_abs_diff(const Subbands2D& a, const Subbands2D& b);

/// Single-level periodized analysis, rows (x) then columns (y).
/// Throws ShapeError for odd height or width.
Quad dwt2(const Grid& x, const WaveletFilter& f);

/// Single-level synthesis; inverse of dwt2.
Grid idwt2(const Quad& q, const WaveletFilter& f);

Subbands2D wavedec2(const Grid& x, const WaveletFilter& f, int levels);

Grid waverec2(const Subbands2D& s, const WaveletFilter& f);

/// Transpose of waverec2 viewed as a linear map from subbands to a grid of
/// shape g.shape(). Written directly as the adjoint of the synthesis
/// filter bank; for the orthonormal periodized filters here it coincides
/// with wavedec2.
Subbands2D waverec2_adjoint(const Grid& g, const WaveletFilter& f, int levels);

/// Throws ShapeError unless height and width are divisible by 2^levels and
/// levels >= 1.
void require_decomposable(const Shape& shape, int levels);

}  // namespace fasd::wavelet
