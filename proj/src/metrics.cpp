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

#include "fasd/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace fasd::metrics {
namespace {

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> g{};
  const double center = (kSsimWindow - 1) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - center;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable "valid" Gaussian filter of one h x w plane.
std::vector<double> filter_valid(const std::vector<double>& in, std::size_t h, std::size_t w) {
  static const auto g = gaussian_window();
  const std::size_t ow = w - kSsimWindow + 1;
  const std::size_t oh = h - kSsimWindow + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) s += g[k] * in[y * w + x + k];
      tmp[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) s += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

void require_ssim_shapes(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "ssim");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow) {
    throw ShapeError("ssim needs images of at least 11 x 11, got " + a.shape().str());
  }
}

}  // namespace

Grid ssim_map(const Grid& a, const Grid& b, std::size_t channel) {
  require_ssim_shapes(a, b);
  if (channel >= a.channels()) throw ShapeError("ssim_map: channel out of range");
  const std::size_t h = a.height(), w = a.width();
  const auto ca = a.channel(channel), cb = b.channel(channel);
  std::vector<double> x(ca.begin(), ca.end()), y(cb.begin(), cb.end());
  std::vector<double> xx(h * w), yy(h * w), xy(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w);
  const auto my = filter_valid(y, h, w);
  const auto fxx = filter_valid(xx, h, w);
  const auto fyy = filter_valid(yy, h, w);
  const auto fxy = filter_valid(xy, h, w);
  Grid out(1, h - kSsimWindow + 1, w - kSsimWindow + 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mxy = mx[i] * my[i];
    const double mxx = mx[i] * mx[i];
    const double myy = my[i] * my[i];
    const double sxx = fxx[i] - mxx;
    const double syy = fyy[i] - myy;
    const double sxy = fxy[i] - mxy;
    out[i] = ((2.0 * mxy + kSsimC1) * (2.0 * sxy + kSsimC2)) /
             ((mxx + myy + kSsimC1) * (sxx + syy + kSsimC2));
  }
  return out;
}

double ssim(const Grid& a, const Grid& b) {
  require_ssim_shapes(a, b);
  double total = 0.0;
  for (std::size_t c = 0; c < a.channels(); ++c) total += mean(ssim_map(a, b, c));
  return total / static_cast<double>(a.channels());
}

double psnr(const Grid& a, const Grid& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw ShapeError("psnr of empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

SubbandEnergyReport subband_energy(const FrequencyState& state) {
  SubbandEnergyReport r;
  const auto& sb = state.subbands;
  for (std::size_t b = 0; b < sb.band_count(); ++b) {
    BandEnergy e;
    e.name = sb.band_name(b);
    e.level = b == 0 ? 0 : static_cast<int>((b - 1) / 3) + 1;
    e.energy = squared_norm(sb.band(b));
    r.total += e.energy;
    r.bands.push_back(e);
  }
  r.zero_total = r.total == 0.0;
  if (!r.zero_total) {
    for (auto& e : r.bands) e.fraction = e.energy / r.total;
  }
  return r;
}

}  // namespace fasd::metrics
