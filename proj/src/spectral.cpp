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

#include "fasd/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fasd::spectral {
namespace {

using cplx = std::complex<double>;

// Row-major N x N orthonormal DCT-II matrix: C[k][n].
std::vector<double> dct_matrix(std::size_t n) {
  std::vector<double> m(n * n);
  const double s0 = std::sqrt(1.0 / static_cast<double>(n));
  const double sk = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      m[k * n + i] = (k == 0 ? s0 : sk) *
                     std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    }
  }
  return m;
}

// Row-major N x N unitary DFT matrix, sign -1 for forward.
std::vector<cplx> dft_matrix(std::size_t n, double sign) {
  std::vector<cplx> m(n * n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      // Reduce k*i mod n first so the angle stays accurate for large n.
      const double angle =
          sign * 2.0 * std::numbers::pi * static_cast<double>((k * i) % n) / n;
      m[k * n + i] = std::polar(norm, angle);
    }
  }
  return m;
}

// out = M (or M^T) applied along x then y, per channel.
template <typename T, typename M>
std::vector<T> apply_separable(const std::vector<T>& in, const Shape& s,
                               const std::vector<M>& mx,
                               const std::vector<M>& my, bool transpose) {
  const std::size_t h = s.height;
  const std::size_t w = s.width;
  std::vector<T> tmp(in.size());
  std::vector<T> out(in.size());
  auto coeff = [transpose](const std::vector<M>& m, std::size_t n,
                           std::size_t row, std::size_t col) {
    return transpose ? m[col * n + row] : m[row * n + col];
  };
  for (std::size_t c = 0; c < s.channels; ++c) {
    const std::size_t base = c * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t k = 0; k < w; ++k) {
        T acc{};
        for (std::size_t x = 0; x < w; ++x) {
          acc += coeff(mx, w, k, x) * in[base + y * w + x];
        }
        tmp[base + y * w + k] = acc;
      }
    }
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < h; ++k) {
        T acc{};
        for (std::size_t y = 0; y < h; ++y) {
          acc += coeff(my, h, k, y) * tmp[base + y * w + x];
        }
        out[base + k * w + x] = acc;
      }
    }
  }
  return out;
}

double dft_norm_freq(std::size_t k, std::size_t n) {
  if (n == 1) return 0.0;
  const double signed_k =
      k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - n;
  return std::abs(signed_k) / (n / 2.0);
}

double dct_norm_freq(std::size_t k, std::size_t n) {
  return static_cast<double>(k) / static_cast<double>(n);
}

bool passes(double fy, double fx, double cutoff, MaskShape shape) {
  constexpr double kSlack = 1e-12;
  if (shape == MaskShape::kRect) {
    return fy <= cutoff + kSlack && fx <= cutoff + kSlack;
  }
  return std::sqrt(fy * fy + fx * fx) <= cutoff + kSlack;
}

}  // namespace

Grid dct2(const Grid& x) {
  const auto mx = dct_matrix(x.width());
  const auto my = dct_matrix(x.height());
  return Grid(x.shape(), apply_separable(x.values(), x.shape(), mx, my, false));
}

Grid idct2(const Grid& coeffs) {
  const auto mx = dct_matrix(coeffs.width());
  const auto my = dct_matrix(coeffs.height());
  return Grid(coeffs.shape(),
              apply_separable(coeffs.values(), coeffs.shape(), mx, my, true));
}

ComplexGrid dft2(const Grid& x) {
  const auto mx = dft_matrix(x.width(), -1.0);
  const auto my = dft_matrix(x.height(), -1.0);
  std::vector<cplx> in(x.values().begin(), x.values().end());
  return ComplexGrid{x.shape(), apply_separable(in, x.shape(), mx, my, false)};
}

ComplexGrid idft2_complex(const ComplexGrid& spectrum) {
  const auto mx = dft_matrix(spectrum.shape.width, 1.0);
  const auto my = dft_matrix(spectrum.shape.height, 1.0);
  return ComplexGrid{spectrum.shape, apply_separable(spectrum.data, spectrum.shape,
                                                     mx, my, false)};
}

Grid idft2(const ComplexGrid& spectrum, double imag_tolerance) {
  const ComplexGrid z = idft2_complex(spectrum);
  Grid out(z.shape);
  double max_mag = 0.0;
  double max_imag = 0.0;
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    out[i] = z.data[i].real();
    max_mag = std::max(max_mag, std::abs(z.data[i]));
    max_imag = std::max(max_imag, std::abs(z.data[i].imag()));
  }
  if (max_imag > imag_tolerance * std::max(1.0, max_mag)) {
    throw std::domain_error("idft2: spectrum is not conjugate symmetric");
  }
  return out;
}

std::string to_string(MaskShape s) {
  return s == MaskShape::kRect ? "rect" : "radial";
}
std::string to_string(Transform t) { return t == Transform::kDct ? "dct" : "dft"; }
std::string to_string(Keep k) { return k == Keep::kLow ? "low" : "high"; }

MaskShape parse_mask_shape(const std::string& s) {
  if (s == "rect") return MaskShape::kRect;
  if (s == "radial") return MaskShape::kRadial;
  throw std::invalid_argument("unknown mask shape '" + s + "'");
}
Transform parse_transform(const std::string& s) {
  if (s == "dct") return Transform::kDct;
  if (s == "dft") return Transform::kDft;
  throw std::invalid_argument("unknown transform '" + s + "'");
}
Keep parse_keep(const std::string& s) {
  if (s == "low") return Keep::kLow;
  if (s == "high") return Keep::kHigh;
  throw std::invalid_argument("unknown keep mode '" + s + "'");
}

SpectralMask SpectralMask::lowpass(std::size_t height, std::size_t width,
                                   double cutoff, MaskShape shape) {
  if (!(cutoff > 0.0 && cutoff <= 1.0)) {
    throw std::invalid_argument("mask cutoff must be in (0, 1], got " +
                                std::to_string(cutoff));
  }
  Grid m(1, height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      m(0, y, x) = passes(dft_norm_freq(y, height), dft_norm_freq(x, width),
                          cutoff, shape)
                       ? 1.0
                       : 0.0;
    }
  }
  return SpectralMask(std::move(m), cutoff, shape, false);
}

SpectralMask SpectralMask::from_grid(const Grid& mask) {
  if (mask.channels() != 1) throw ShapeError("spectral mask must have 1 channel");
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = mask(0, y, x);
      if (v != 0.0 && v != 1.0) {
        throw std::invalid_argument("spectral mask entries must be 0 or 1");
      }
      if (v != mask(0, (h - y) % h, (w - x) % w)) {
        throw std::invalid_argument(
            "spectral mask is not conjugate symmetric; masked real signals "
            "would become complex");
      }
    }
  }
  return SpectralMask(mask, 0.0, MaskShape::kRect, true);
}

Grid SpectralMask::layout(Transform t) const {
  if (t == Transform::kDft) return mask_;
  if (custom_) {
    throw std::logic_error("custom spectral masks are defined for the DFT only");
  }
  const std::size_t h = height();
  const std::size_t w = width();
  Grid m(1, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      m(0, y, x) =
          passes(dct_norm_freq(y, h), dct_norm_freq(x, w), cutoff_, shape_) ? 1.0
                                                                            : 0.0;
    }
  }
  return m;
}

std::size_t SpectralMask::count_ones() const {
  return static_cast<std::size_t>(
      std::count(mask_.data().begin(), mask_.data().end(), 1.0));
}

SpectralMask build_lowpass_mask(std::size_t height, std::size_t width,
                                double cutoff, MaskShape shape) {
  return SpectralMask::lowpass(height, width, cutoff, shape);
}

Grid masked_spectral_gradient(const Grid& grad, const SpectralMask& mask,
                              Transform transform, Keep keep) {
  if (grad.height() != mask.height() || grad.width() != mask.width()) {
    throw ShapeError("masked_spectral_gradient: gradient " + grad.shape().str() +
                     " does not match mask " + std::to_string(mask.height()) +
                     "x" + std::to_string(mask.width()));
  }
  const Grid m = mask.layout(transform);
  const std::size_t plane = grad.height() * grad.width();
  auto keep_bin = [&](std::size_t i) {
    const bool low = m[i % plane] == 1.0;
    return keep == Keep::kLow ? low : !low;
  };

  if (transform == Transform::kDct) {
    Grid coeffs = dct2(grad);
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      if (!keep_bin(i)) coeffs[i] = 0.0;
    }
    return idct2(coeffs);
  }
  ComplexGrid spec = dft2(grad);
  for (std::size_t i = 0; i < spec.data.size(); ++i) {
    if (!keep_bin(i)) spec.data[i] = 0.0;
  }
  return idft2(spec);
}

EnergySplit spectral_energy_split(const Grid& x, const SpectralMask& mask,
                                  Transform transform) {
  if (x.height() != mask.height() || x.width() != mask.width()) {
    throw ShapeError("spectral_energy_split: shape mismatch");
  }
  const Grid m = mask.layout(transform);
  const std::size_t plane = x.height() * x.width();
  EnergySplit split;
  if (transform == Transform::kDct) {
    const Grid c = dct2(x);
    for (std::size_t i = 0; i < c.size(); ++i) {
      (m[i % plane] == 1.0 ? split.low : split.high) += c[i] * c[i];
    }
  } else {
    const ComplexGrid c = dft2(x);
    for (std::size_t i = 0; i < c.data.size(); ++i) {
      (m[i % plane] == 1.0 ? split.low : split.high) += std::norm(c.data[i]);
    }
  }
  return split;
}

}  // namespace fasd::spectral
