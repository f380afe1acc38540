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

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fasd/frequency_state.hpp"
#include "fasd/optimizer.hpp"
#include "fasd/score.hpp"
#include "fasd/spectral.hpp"

namespace fasd {

struct EditConfig {
  int filter_index = 3;
  int levels = 3;
  /// Empty means FreezePolicy::none(levels).
  FreezePolicy policy;
  long steps = 500;
  OptimizerConfig optimizer;
  /// Record per-band gradient norms every k steps (0 = never). The last step
  /// is always recorded when k > 0.
  long trace_every = 1;
  /// Keep a full FrequencyState snapshot every k steps (0 = never). The
  /// initial state is stored as step -1 and the final one is always kept.
  long snapshot_every = 0;

  void validate() const;
  FreezePolicy resolved_policy() const;
};

/// Routed subband gradient norms for one step, in flat band order.
struct TraceStep {
  long step = 0;
  int timestep = 0;
  std::vector<double> grad_l2;
};

struct TraceSnapshot {
  long step = 0;
  FrequencyState state;
};

struct EditTrace {
  int levels = 0;
  std::vector<std::string> band_names;
  std::vector<bool> frozen;
  std::vector<TraceStep> steps;
  std::vector<TraceSnapshot> snapshots;
};

/// Provider failure mid-run. Carries everything recorded so far.
class EditAborted : public score::ProviderError {
 public:
  EditAborted(const std::string& what, long step, EditTrace trace)
      : score::ProviderError(what), step_(step), trace_(std::move(trace)) {}
  long step() const { return step_; }
  const EditTrace& trace() const { return trace_; }

 private:
  long step_;
  EditTrace trace_;
};

struct EditResult {
  Grid z_out;
  FrequencyState state;
  EditTrace trace;
};

/// decompose -> N x {reconstruct, provider gradient, route, update} ->
/// reconstruct. Step k queries the provider with step index k.
EditResult run_edit_2d(const Grid& z_src, const EditConfig& config,
                       score::GradientProvider& provider);

/// Pixel-space editing with a spectral freeze: every provider gradient is
/// projected with masked_spectral_gradient before the optimizer step.
struct SpectralEditConfig {
  spectral::Transform transform = spectral::Transform::kDct;
  double cutoff = 0.25;
  spectral::MaskShape mask = spectral::MaskShape::kRect;
  spectral::Keep keep = spectral::Keep::kLow;
  long steps = 500;
  OptimizerConfig optimizer;
};

/// Throws score::ProviderError on a bad provider gradient.
Grid run_edit_spectral(const Grid& z_src, const SpectralEditConfig& config,
                       score::GradientProvider& provider);

/// Writes <dir>/trace.csv (step,level,orientation,grad_l2,frozen), and per
/// snapshot <dir>/snapshot_<step>/ with state.fbds, one normalized
/// coefficient map per band and bands.json holding each map's min/max.
/// The low band is reported as level J, orientation LL. `image_ext` is
/// ".png" or ".ppm".
void export_trace(const EditTrace& trace, const std::filesystem::path& dir,
                  const std::string& image_ext = ".png");

std::string trace_csv(const EditTrace& trace);

/// Coefficient map for one band: channels tiled left to right, linearly
/// mapped so min -> 0 and max -> 1. A constant band maps to 0.5.
struct BandImage {
  Grid image;  // 1 x h x (C*w)
  double min = 0.0;
  double max = 0.0;
};
BandImage band_image(const Grid& band);

}  // namespace fasd
