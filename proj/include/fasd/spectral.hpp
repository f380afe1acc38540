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

#include <complex>
#include <string>
#include <vector>

#include "fasd/grid.hpp"

namespace fasd::spectral {

struct ComplexGrid {
  Shape shape;
  std::vector<std::complex<double>> data;

  std::complex<double>& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * shape.height + y) * shape.width + x];
  }
  const std::complex<double>& operator()(std::size_t c, std::size_t y,
                                         std::size_t x) const {
    return data[(c * shape.height + y) * shape.width + x];
  }
};

/// Orthonormal 2D DCT-II, applied per channel along x then y.
Grid dct2(const Grid& x);
/// Orthonormal 2D DCT-III; inverse of dct2.
Grid idct2(const Grid& coeffs);

/// Unitary 2D DFT (1/sqrt(H*W) normalization), unshifted layout: bin k along
/// an axis of length N has signed frequency k for k <= N/2, else k - N.
ComplexGrid dft2(const Grid& x);
/// Unitary inverse DFT. Returns the real part; throws std::domain_error if
/// any imaginary part exceeds `imag_tolerance` times the largest magnitude.
Grid idft2(const ComplexGrid& spectrum, double imag_tolerance = 1e-9);
ComplexGrid idft2_complex(const ComplexGrid& spectrum);

enum class MaskShape { kRect, kRadial };
enum class Transform { kDct, kDft };
enum class Keep { kLow, kHigh };

std::string to_string(MaskShape s);
std::string to_string(Transform t);
std::string to_string(Keep k);
MaskShape parse_mask_shape(const std::string& s);
Transform parse_transform(const std::string& s);
Keep parse_keep(const std::string& s);

/// Low-frequency selection over an H x W spectrum.
///
/// Frequencies are normalized to Nyquist per axis. For the DFT, bin k maps to
/// |signed(k)| / (N/2); for the DCT, bin k maps to k / N. `mask` is stored in
/// the unshifted DFT layout (DC at (0,0)); `layout(Transform::kDct)` gives
/// the DCT-indexed version of the same rule.
///   rect:   1 where |f_y| <= cutoff and |f_x| <= cutoff
///   radial: 1 where sqrt(f_y^2 + f_x^2) <= cutoff
class SpectralMask {
 public:
  static SpectralMask lowpass(std::size_t height, std::size_t width,
                              double cutoff, MaskShape shape);
  /// Custom DFT-layout mask; rejected unless {0,1}-valued and invariant under
  /// (k_y, k_x) -> (-k_y, -k_x) mod (H, W).
  static SpectralMask from_grid(const Grid& mask);

  std::size_t height() const { return mask_.height(); }
  std::size_t width() const { return mask_.width(); }
  double cutoff() const { return cutoff_; }
  MaskShape shape() const { return shape_; }
  const Grid& mask() const { return mask_; }

  /// 1 x H x W {0,1} grid indexed for the given transform.
  Grid layout(Transform t) const;
  std::size_t count_ones() const;

 private:
  SpectralMask(Grid mask, double cutoff, MaskShape shape, bool custom)
      : mask_(std::move(mask)), cutoff_(cutoff), shape_(shape), custom_(custom) {}

  Grid mask_;
  double cutoff_ = 1.0;
  MaskShape shape_ = MaskShape::kRect;
  bool custom_ = false;
};

SpectralMask build_lowpass_mask(std::size_t height, std::size_t width,
                                double cutoff, MaskShape shape);

/// Projects `grad` onto the kept band: transform, zero frozen coefficients
/// (keep=low zeroes bins outside the mask, keep=high zeroes bins inside it),
/// inverse transform. Same mask for every channel.
Grid masked_spectral_gradient(const Grid& grad, const SpectralMask& mask,
                              Transform transform, Keep keep);

/// Spectral energy inside / outside the mask for `x`, used to match
/// separations against a wavelet split.
struct EnergySplit {
  double low = 0.0;
  double high = 0.0;
  double low_fraction() const {
    const double t = low + high;
    return t > 0.0 ? low / t : 0.0;
  }
};
EnergySplit spectral_energy_split(const Grid& x, const SpectralMask& mask,
                                  Transform transform);

}  // namespace fasd::spectral
