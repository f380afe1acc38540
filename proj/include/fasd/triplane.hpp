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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fasd/frequency_state.hpp"
#include "fasd/mesh.hpp"
#include "fasd/optimizer.hpp"
#include "fasd/score.hpp"

namespace fasd::triplane {

using mesh::Vec3;

/// Plane order everywhere: xy, xz, zy.
inline constexpr std::array<const char*, 3> kPlaneNames = {"xy", "xz", "zy"};

struct TriplaneShape {
  std::size_t channels = 16;
  std::size_t height = 128;
  std::size_t width = 128;
  int levels = 2;
  int filter_index = 3;
};

struct FrequencyTriplane {
  std::array<FrequencyState, 3> planes;

  static FrequencyTriplane decompose(const std::array<Grid, 3>& planes, int filter_index,
                                     int levels);
  /// Planes filled with N(0, std^2) from per-plane sub-streams of `seed`.
  static FrequencyTriplane random(const TriplaneShape& shape, std::uint64_t seed,
                                  double std = 0.1);
  static FrequencyTriplane zeros(const TriplaneShape& shape);

  TriplaneShape shape() const;
  std::size_t channels() const { return planes[0].latent_shape.channels; }
  /// All planes share (C, H, W, J, p).
  void validate() const;
  bool bit_equal(const FrequencyTriplane& other) const;
};

std::array<Grid, 3> reconstruct_planes(const FrequencyTriplane& ft);

/// Bilinear tap on one plane for coordinates (a, b) in [-1,1]^2, with a
/// along the width and b along the height: col = (a+1)/2 (W-1),
/// row = (b+1)/2 (H-1). Inputs outside [-1,1] are clamped.
struct PlaneTap {
  std::size_t x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  double tx = 0.0, ty = 0.0;
};
PlaneTap plane_tap(double a, double b, std::size_t height, std::size_t width);

/// Concatenated 3C feature: P_xy at (x, y), P_xz at (x, z), P_zy at (z, y).
std::vector<double> sample_triplane(const std::array<Grid, 3>& planes, const Vec3& x);

/// 3C -> hidden -> hidden -> 3 with ReLU, ReLU, sigmoid. Parameters are
/// stored as grids in the order w0, b0, w1, b1, w2, b2; w_k is
/// 1 x out x in (row-major), b_k is 1 x 1 x out.
class MlpDecoder {
 public:
  MlpDecoder() = default;
  /// Weights and biases uniform in +-sqrt(1/fan_in) from `seed`.
  static MlpDecoder random(std::size_t input, std::uint64_t seed, std::size_t hidden = 64);
  static MlpDecoder zeros(std::size_t input, std::size_t hidden = 64);

  std::size_t input_size() const { return params[0].width(); }
  std::size_t hidden_size() const { return params[0].height(); }
  std::array<double, 3> decode(std::span<const double> feature) const;
  bool bit_equal(const MlpDecoder& other) const;

  std::vector<Grid> params;
};

std::array<double, 3> decode_color(std::span<const double> feature, const MlpDecoder& mlp);

/// 3 x H x W render; misses are black.
Grid render_view(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                 const mesh::GBuffer& gbuf, int threads = 1);

struct TriplaneGradients {
  std::array<wavelet::Subbands2D, 3> planes;
  std::vector<Grid> mlp;
};

/// Exact reverse of render_view for a loss whose image gradient is
/// `grad_image`. Plane-space gradients are scatter-added in pixel order,
/// then routed to subbands through the IDWT adjoint with `policy` applied
/// (frozen bands are exact zeros). MLP partial sums are formed per image
/// row and merged in row order, so the result does not depend on
/// `threads`.
TriplaneGradients backprop_render(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                                  const mesh::GBuffer& gbuf, const Grid& grad_image,
                                  const FreezePolicy& policy, int threads = 1);
TriplaneGradients backprop_render(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                                  const mesh::GBuffer& gbuf, const Grid& grad_image,
                                  int threads = 1);

/// A camera's G-buffer plus, for fitting, the texture colors at its UVs.
struct View {
  mesh::Camera camera;
  mesh::GBuffer gbuffer;
  Grid target;  // 3 x H x W, zero on misses; empty when unused
};

std::vector<View> prepare_views(const mesh::TriangleMesh& mesh,
                                const std::vector<mesh::Camera>& cameras,
                                const Grid* texture = nullptr, int threads = 1);

/// Ground-truth image: sample_texture at every hit pixel's UV.
Grid texture_target(const mesh::GBuffer& gbuf, const Grid& texture);

/// Mean over hit pixels and channels of |a - b|; 0 for an empty mask.
double masked_l1(const Grid& a, const Grid& b, const Grid& hit_mask);

class FitDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitConfig {
  long steps = 2000;
  double plane_lr = 1e-2;
  double mlp_lr = 3e-3;
  /// When > 0, stop as soon as the mean L1 over all views is at or below it.
  double target_l1 = 0.0;
  int threads = 1;
};

struct FitReport {
  std::vector<double> losses;  // per step, before the update
  double final_l1 = 0.0;       // mean over all views after the last step
  long steps_run = 0;
};

/// Adam on every subband and MLP parameter against the mean masked L1 of
/// one view per step (round robin). sign(0) is taken as 0.
FitReport init_fit(FrequencyTriplane& ft, MlpDecoder& mlp, const std::vector<View>& views,
                   const FitConfig& config);

struct TextureEditConfig {
  long steps = 500;
  OptimizerConfig optimizer{OptimizerKind::kAdam, 1e-2};
  /// Empty means FreezePolicy::none(levels).
  FreezePolicy policy;
  int threads = 1;
};

struct TextureEditResult {
  FrequencyTriplane ft;
  std::vector<Grid> initial_renders;
  std::vector<Grid> final_renders;
};

/// Per step k: view k mod n is rendered, the provider returns an image
/// gradient (query.current is the render, query.source the initial render
/// of the same view), which is backpropagated and routed with the policy;
/// only plane subbands are updated. The MLP is not modified.
TextureEditResult run_texture_edit(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                                   const std::vector<View>& views,
                                   score::GradientProvider& provider,
                                   const TextureEditConfig& config);

/// Evaluates the field at the surface point of every texel center of an
/// H x W UV map. Texels outside all faces are black.
Grid bake_texture(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                  const mesh::TriangleMesh& mesh, std::size_t height, std::size_t width);

/// FBDS checkpoint: "<plane>/..." states, "mlp/<k>" parameters and an
/// optional "config.json" u8 tensor.
void save_checkpoint(const std::filesystem::path& path, const FrequencyTriplane& ft,
                     const MlpDecoder& mlp, const std::string& config_json = "");
struct Checkpoint {
  FrequencyTriplane ft;
  MlpDecoder mlp;
  std::string config_json;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fasd::triplane
