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

#include "fasd/frequency_state.hpp"

#include <algorithm>
#include <stdexcept>

namespace fasd {

using wavelet::Subbands2D;

FreezePolicy FreezePolicy::freeze_high(int levels) {
  FreezePolicy p = none(levels);
  for (auto& row : p.freeze_detail) row = {true, true, true};
  return p;
}

FreezePolicy FreezePolicy::freeze_low_band(int levels) {
  FreezePolicy p = none(levels);
  p.freeze_low = true;
  return p;
}

FreezePolicy FreezePolicy::none(int levels) {
  if (levels < 1) throw std::invalid_argument("freeze policy needs >= 1 level");
  FreezePolicy p;
  p.freeze_detail.assign(static_cast<std::size_t>(levels), {false, false, false});
  return p;
}

FreezePolicy FreezePolicy::preset(const std::string& name, int levels) {
  if (name == "none") return none(levels);
  if (name == "freeze-high") return freeze_high(levels);
  if (name == "freeze-low") return freeze_low_band(levels);
  throw std::invalid_argument("unknown freeze policy '" + name +
                              "' (expected none, freeze-high, freeze-low)");
}

bool FreezePolicy::is_frozen(std::size_t band_index) const {
  if (band_index == 0) return freeze_low;
  const std::size_t j = (band_index - 1) / 3;
  return freeze_detail.at(j)[(band_index - 1) % 3];
}

void FreezePolicy::require_levels(std::size_t levels) const {
  if (freeze_detail.size() != levels) {
    throw ShapeError("freeze policy has " + std::to_string(freeze_detail.size()) +
                     " levels, state has " + std::to_string(levels));
  }
}

bool FrequencyState::bit_equal(const FrequencyState& other) const {
  return filter_index == other.filter_index && levels == other.levels &&
         latent_shape == other.latent_shape &&
         subbands.bit_equal(other.subbands);
}

FrequencyState decompose_latent(const Grid& z, int filter_index, int levels) {
  const auto& f = wavelet::daubechies_filters(filter_index);
  FrequencyState s;
  s.subbands = wavelet::wavedec2(z, f, levels);
  s.filter_index = filter_index;
  s.levels = levels;
  s.latent_shape = z.shape();
  return s;
}

Grid reconstruct_latent(const FrequencyState& state) {
  return wavelet::waverec2(state.subbands,
                           wavelet::daubechies_filters(state.filter_index));
}

Subbands2D route_gradient(const FrequencyState& state, const Grid& grad_z,
                          const FreezePolicy& policy) {
  if (grad_z.shape() != state.latent_shape) {
    throw ShapeError("route_gradient: gradient " + grad_z.shape().str() +
                     " does not match latent " + state.latent_shape.str());
  }
  policy.require_levels(state.subbands.levels());
  Subbands2D g = wavelet::waverec2_adjoint(
      grad_z, wavelet::daubechies_filters(state.filter_index), state.levels);
  for (std::size_t b = 0; b < g.band_count(); ++b) {
    if (policy.is_frozen(b)) g.band(b).fill(0.0);
  }
  return g;
}

OptimizerState make_subband_optimizer(const OptimizerConfig& config,
                                      const FrequencyState& state) {
  return OptimizerState(config, state.band_count());
}

bool is_exact_zero(const Grid& g) {
  return std::all_of(g.data().begin(), g.data().end(),
                     [](double v) { return v == 0.0; });
}

FrequencyState apply_update(const FrequencyState& state, const Subbands2D& grads,
                            OptimizerState& optimizer) {
  if (grads.band_count() != state.band_count()) {
    throw ShapeError("apply_update: gradient has " +
                     std::to_string(grads.band_count()) + " subbands, state has " +
                     std::to_string(state.band_count()));
  }
  if (optimizer.num_params() != state.band_count()) {
    throw std::invalid_argument("apply_update: optimizer slot count mismatch");
  }
  FrequencyState next = state;
  for (std::size_t b = 0; b < state.band_count(); ++b) {
    const Grid& g = grads.band(b);
    require_same_shape(next.subbands.band(b), g, "apply_update");
    if (is_exact_zero(g)) continue;
    optimizer.step(b, next.subbands.band(b), g);
  }
  return next;
}

}  // namespace fasd
