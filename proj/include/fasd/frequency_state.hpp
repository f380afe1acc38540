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
#include <string>
#include <vector>

#include "fasd/grid.hpp"
#include "fasd/optimizer.hpp"
#include "fasd/wavelet.hpp"

namespace fasd {

/// Which subbands receive no gradient (stop-gradient) during optimization.
struct FreezePolicy {
  bool freeze_low = false;
  /// freeze_detail[j][o]: level j+1 (finest first), orientation HL/LH/HH.
  std::vector<std::array<bool, 3>> freeze_detail;

  /// All detail subbands frozen; only the low band is optimized.
  static FreezePolicy freeze_high(int levels);
  /// Low band frozen; only details are optimized.
  static FreezePolicy freeze_low_band(int levels);
  static FreezePolicy none(int levels);
  /// Parses "none", "freeze-high" or "freeze-low".
  static FreezePolicy preset(const std::string& name, int levels);

  std::size_t levels() const { return freeze_detail.size(); }
  /// Flat band index as in Subbands2D::band.
  bool is_frozen(std::size_t band_index) const;
  void require_levels(std::size_t levels) const;
};

/// The optimized wavelet representation of a latent.
struct FrequencyState {
  wavelet::Subbands2D subbands;
  int filter_index = 3;
  int levels = 3;
  Shape latent_shape;

  bool bit_equal(const FrequencyState& other) const;
  std::size_t band_count() const { return subbands.band_count(); }
};

FrequencyState decompose_latent(const Grid& z, int filter_index, int levels);

Grid reconstruct_latent(const FrequencyState& state);

/// Adjoint-routes a latent-space gradient to every subband, then replaces
/// frozen subbands with exact zero grids.
wavelet::Subbands2D route_gradient(const FrequencyState& state,
                                   const Grid& grad_z,
                                   const FreezePolicy& policy);

/// Optimizer over the subbands of one FrequencyState (one slot per band).
OptimizerState make_subband_optimizer(const OptimizerConfig& config,
                                      const FrequencyState& state);

/// Applies one optimizer step per subband. A subband whose gradient is the
/// exact zero grid is copied through untouched and its optimizer slot is not
/// advanced, so frozen subbands stay bit-identical under any optimizer.
FrequencyState apply_update(const FrequencyState& state,
                            const wavelet::Subbands2D& grads,
                            OptimizerState& optimizer);

bool is_exact_zero(const Grid& g);

}  // namespace fasd
