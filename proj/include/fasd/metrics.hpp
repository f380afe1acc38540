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

#include <string>
#include <vector>

#include "fasd/frequency_state.hpp"
#include "fasd/grid.hpp"

namespace fasd::metrics {

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over all fully interior 11x11 Gaussian windows (sigma 1.5,
/// dynamic range 1), computed per channel and averaged over channels.
/// Requires equal shapes with H, W >= 11.
double ssim(const Grid& a, const Grid& b);

/// Per-pixel SSIM map of one channel, (H-10) x (W-10).
Grid ssim_map(const Grid& a, const Grid& b, std::size_t channel);

/// 10 log10(1 / MSE) with peak 1; +infinity for identical inputs.
double psnr(const Grid& a, const Grid& b);

struct BandEnergy {
  std::string name;  // "low" or "L1/HL" style
  int level = 0;     // 0 for the low band
  double energy = 0.0;
  double fraction = 0.0;
};

struct SubbandEnergyReport {
  std::vector<BandEnergy> bands;  // flat band order
  double total = 0.0;
  /// Set when the total is zero; every fraction is then reported as 0.
  bool zero_total = false;
};

SubbandEnergyReport subband_energy(const FrequencyState& state);

}  // namespace fasd::metrics
