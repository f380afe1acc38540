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

#include "fasd/triplane.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

#include "fasd/io.hpp"

namespace fasd::triplane {
namespace {

constexpr std::array<const char*, 6> kParamNames = {"w0", "b0", "w1", "b1", "w2", "b2"};

// Calls fn(row) for every row, split into contiguous blocks over `threads`
// workers. Callers only write row-owned memory.
void for_each_row(std::size_t rows, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t n = std::clamp<std::size_t>(threads < 1 ? 1 : threads, 1, std::max<std::size_t>(rows, 1));
  if (n == 1) {
    for (std::size_t y = 0; y < rows; ++y) fn(y);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < n; ++i) {
    pool.emplace_back([&, i] {
      for (std::size_t y = rows * i / n; y < rows * (i + 1) / n; ++y) fn(y);
    });
  }
  for (auto& t : pool) t.join();
}

// The three (a, b) coordinate pairs, in plane order.
std::array<std::array<double, 2>, 3> plane_coords(const Vec3& p) {
  return {{{p[0], p[1]}, {p[0], p[2]}, {p[2], p[1]}}};
}

struct Taps {
  std::array<PlaneTap, 3> plane;
};

Taps taps_at(const Vec3& p, std::size_t h, std::size_t w) {
  const auto coords = plane_coords(p);
  Taps t;
  for (int k = 0; k < 3; ++k) t.plane[k] = plane_tap(coords[k][0], coords[k][1], h, w);
  return t;
}

void gather(const std::array<Grid, 3>& planes, const Taps& taps, double* feature) {
  const std::size_t c_count = planes[0].channels();
  for (int k = 0; k < 3; ++k) {
    const PlaneTap& t = taps.plane[k];
    const Grid& g = planes[k];
    for (std::size_t c = 0; c < c_count; ++c) {
      const double top = (1.0 - t.tx) * g(c, t.y0, t.x0) + t.tx * g(c, t.y0, t.x1);
      const double bot = (1.0 - t.tx) * g(c, t.y1, t.x0) + t.tx * g(c, t.y1, t.x1);
      feature[k * c_count + c] = (1.0 - t.ty) * top + t.ty * bot;
    }
  }
}

// Adjoint of gather.
void scatter(std::array<Grid, 3>& planes, const Taps& taps, const double* dfeature) {
  const std::size_t c_count = planes[0].channels();
  for (int k = 0; k < 3; ++k) {
    const PlaneTap& t = taps.plane[k];
    Grid& g = planes[k];
    const double w00 = (1.0 - t.ty) * (1.0 - t.tx);
    const double w01 = (1.0 - t.ty) * t.tx;
    const double w10 = t.ty * (1.0 - t.tx);
    const double w11 = t.ty * t.tx;
    for (std::size_t c = 0; c < c_count; ++c) {
      const double d = dfeature[k * c_count + c];
      g(c, t.y0, t.x0) += w00 * d;
      g(c, t.y0, t.x1) += w01 * d;
      g(c, t.y1, t.x0) += w10 * d;
      g(c, t.y1, t.x1) += w11 * d;
    }
  }
}

Vec3 position_at(const mesh::GBuffer& g, std::size_t y, std::size_t x) {
  return {g.positions(0, y, x), g.positions(1, y, x), g.positions(2, y, x)};
}

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// Weights stored input-major, so y = W x + b runs as axpy passes over y.
// Each y[j] still sums its terms in input order.
struct TransposedWeights {
  std::array<std::vector<double>, 3> wt;

  explicit TransposedWeights(const MlpDecoder& mlp) {
    for (int l = 0; l < 3; ++l) {
      const Grid& w = mlp.params[2 * l];
      const std::size_t out = w.height(), in = w.width();
      wt[l].resize(out * in);
      for (std::size_t j = 0; j < out; ++j) {
        for (std::size_t i = 0; i < in; ++i) wt[l][i * out + j] = w(0, j, i);
      }
    }
  }
};

void dense(const std::vector<double>& wt, const Grid& b, const double* x, double* y) {
  const std::size_t out = b.size();
  const std::size_t in = wt.size() / out;
  for (std::size_t j = 0; j < out; ++j) y[j] = b[j];
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    const double* col = wt.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += col[j] * xi;
  }
}

struct MlpScratch {
  std::vector<double> a1, h1, a2, h2, d1, d2, dh;
  double a3[3]{}, out[3]{}, d3[3]{};

  explicit MlpScratch(std::size_t hidden)
      : a1(hidden), h1(hidden), a2(hidden), h2(hidden), d1(hidden), d2(hidden), dh(hidden) {}
};

void mlp_forward(const MlpDecoder& mlp, const TransposedWeights& tw, const double* f,
                 MlpScratch& s) {
  const auto& p = mlp.params;
  const std::size_t hid = mlp.hidden_size();
  dense(tw.wt[0], p[1], f, s.a1.data());
  for (std::size_t j = 0; j < hid; ++j) s.h1[j] = s.a1[j] > 0.0 ? s.a1[j] : 0.0;
  dense(tw.wt[1], p[3], s.h1.data(), s.a2.data());
  for (std::size_t j = 0; j < hid; ++j) s.h2[j] = s.a2[j] > 0.0 ? s.a2[j] : 0.0;
  dense(tw.wt[2], p[5], s.h2.data(), s.a3);
  for (int c = 0; c < 3; ++c) s.out[c] = sigmoid(s.a3[c]);
}

// Given dL/dout, accumulates parameter gradients into `grads` (when not
// null) and writes dL/dfeature into `df`.
void mlp_backward(const MlpDecoder& mlp, const double* f, MlpScratch& s, const double* gout,
                  std::vector<Grid>* grads, double* df) {
  const auto& p = mlp.params;
  const std::size_t hid = mlp.hidden_size();
  const std::size_t in = mlp.input_size();
  for (int c = 0; c < 3; ++c) s.d3[c] = gout[c] * s.out[c] * (1.0 - s.out[c]);

  // Layer 2: a3 = W2 h2 + b2.
  std::fill(s.dh.begin(), s.dh.end(), 0.0);
  for (int c = 0; c < 3; ++c) {
    const double* row = p[4].data().data() + c * hid;
    for (std::size_t j = 0; j < hid; ++j) s.dh[j] += row[j] * s.d3[c];
  }
  for (std::size_t j = 0; j < hid; ++j) s.d2[j] = s.a2[j] > 0.0 ? s.dh[j] : 0.0;

  // Layer 1: a2 = W1 h1 + b1.
  std::fill(s.dh.begin(), s.dh.end(), 0.0);
  for (std::size_t k = 0; k < hid; ++k) {
    const double d = s.d2[k];
    if (d == 0.0) continue;
    const double* row = p[2].data().data() + k * hid;
    for (std::size_t j = 0; j < hid; ++j) s.dh[j] += row[j] * d;
  }
  for (std::size_t j = 0; j < hid; ++j) s.d1[j] = s.a1[j] > 0.0 ? s.dh[j] : 0.0;

  // Layer 0: a1 = W0 f + b0.
  std::fill(df, df + in, 0.0);
  for (std::size_t k = 0; k < hid; ++k) {
    const double d = s.d1[k];
    if (d == 0.0) continue;
    const double* row = p[0].data().data() + k * in;
    for (std::size_t i = 0; i < in; ++i) df[i] += row[i] * d;
  }

  if (grads == nullptr) return;
  auto& g = *grads;
  for (int c = 0; c < 3; ++c) {
    double* row = g[4].data().data() + c * hid;
    for (std::size_t j = 0; j < hid; ++j) row[j] += s.d3[c] * s.h2[j];
    g[5][c] += s.d3[c];
  }
  for (std::size_t k = 0; k < hid; ++k) {
    const double d = s.d2[k];
    g[3][k] += d;
    if (d == 0.0) continue;
    double* row = g[2].data().data() + k * hid;
    for (std::size_t j = 0; j < hid; ++j) row[j] += d * s.h1[j];
  }
  for (std::size_t k = 0; k < hid; ++k) {
    const double d = s.d1[k];
    g[1][k] += d;
    if (d == 0.0) continue;
    double* row = g[0].data().data() + k * in;
    for (std::size_t i = 0; i < in; ++i) row[i] += d * f[i];
  }
}

std::vector<Grid> zeros_like(const std::vector<Grid>& params) {
  std::vector<Grid> out;
  out.reserve(params.size());
  for (const Grid& p : params) out.emplace_back(p.shape());
  return out;
}

void require_mlp_matches(const FrequencyTriplane& ft, const MlpDecoder& mlp) {
  if (mlp.params.size() != 6) throw ShapeError("MLP decoder is not initialized");
  if (mlp.input_size() != 3 * ft.channels()) {
    throw ShapeError("MLP input " + std::to_string(mlp.input_size()) + " != 3 x " +
                     std::to_string(ft.channels()) + " plane channels");
  }
}

Grid render_planes(const std::array<Grid, 3>& planes, const MlpDecoder& mlp,
                   const mesh::GBuffer& gbuf, int threads) {
  const std::size_t h = gbuf.height();
  const std::size_t w = gbuf.width();
  const std::size_t ph = planes[0].height();
  const std::size_t pw = planes[0].width();
  Grid image(3, h, w);
  const TransposedWeights tw(mlp);
  for_each_row(h, threads, [&](std::size_t y) {
    MlpScratch s(mlp.hidden_size());
    std::vector<double> f(mlp.input_size());
    for (std::size_t x = 0; x < w; ++x) {
      if (gbuf.hit_mask(0, y, x) == 0.0) continue;
      gather(planes, taps_at(position_at(gbuf, y, x), ph, pw), f.data());
      mlp_forward(mlp, tw, f.data(), s);
      for (int c = 0; c < 3; ++c) image(c, y, x) = s.out[c];
    }
  });
  return image;
}

// dL/d(rendered color) at one pixel, given the forward color.
using PixelGrad = std::function<void(std::size_t y, std::size_t x, const double* color,
                                     double* grad)>;

struct PlaneSpaceGrads {
  std::array<Grid, 3> planes;
  std::vector<Grid> mlp;
};

PlaneSpaceGrads backprop_planes(const std::array<Grid, 3>& planes, const MlpDecoder& mlp,
                                const mesh::GBuffer& gbuf, const PixelGrad& pixel_grad,
                                bool want_mlp, int threads, Grid* render_out) {
  const std::size_t h = gbuf.height();
  const std::size_t w = gbuf.width();
  const std::size_t ph = planes[0].height();
  const std::size_t pw = planes[0].width();
  const std::size_t fsize = mlp.input_size();
  if (render_out != nullptr) *render_out = Grid(3, h, w);

  std::vector<double> dfeat(h * w * fsize, 0.0);
  std::vector<std::vector<Grid>> row_grads(want_mlp ? h : 0);
  const TransposedWeights tw(mlp);
  for_each_row(h, threads, [&](std::size_t y) {
    MlpScratch s(mlp.hidden_size());
    std::vector<double> f(fsize);
    std::vector<Grid>* rg = nullptr;
    for (std::size_t x = 0; x < w; ++x) {
      if (gbuf.hit_mask(0, y, x) == 0.0) continue;
      if (want_mlp && rg == nullptr) {
        row_grads[y] = zeros_like(mlp.params);
        rg = &row_grads[y];
      }
      gather(planes, taps_at(position_at(gbuf, y, x), ph, pw), f.data());
      mlp_forward(mlp, tw, f.data(), s);
      if (render_out != nullptr) {
        for (int c = 0; c < 3; ++c) (*render_out)(c, y, x) = s.out[c];
      }
      double gout[3];
      pixel_grad(y, x, s.out, gout);
      mlp_backward(mlp, f.data(), s, gout, rg, dfeat.data() + (y * w + x) * fsize);
    }
  });

  PlaneSpaceGrads out;
  for (int k = 0; k < 3; ++k) out.planes[k] = Grid(planes[k].shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (gbuf.hit_mask(0, y, x) == 0.0) continue;
      scatter(out.planes, taps_at(position_at(gbuf, y, x), ph, pw),
              dfeat.data() + (y * w + x) * fsize);
    }
  }
  if (want_mlp) {
    out.mlp = zeros_like(mlp.params);
    for (std::size_t y = 0; y < h; ++y) {
      if (row_grads[y].empty()) continue;
      for (std::size_t k = 0; k < out.mlp.size(); ++k) out.mlp[k] += row_grads[y][k];
    }
  }
  return out;
}

TriplaneGradients route(const FrequencyTriplane& ft, PlaneSpaceGrads g,
                        const FreezePolicy& policy) {
  TriplaneGradients out;
  for (int k = 0; k < 3; ++k) out.planes[k] = route_gradient(ft.planes[k], g.planes[k], policy);
  out.mlp = std::move(g.mlp);
  return out;
}

void require_gbuffer(const mesh::GBuffer& gbuf) {
  if (gbuf.hit_mask.channels() != 1 || gbuf.positions.channels() != 3 ||
      gbuf.positions.height() != gbuf.height() || gbuf.positions.width() != gbuf.width()) {
    throw ShapeError("malformed G-buffer");
  }
}

FreezePolicy resolve_policy(const FreezePolicy& p, int levels) {
  if (p.freeze_detail.empty() && !p.freeze_low) return FreezePolicy::none(levels);
  return p;
}

}  // namespace

// ---- FrequencyTriplane ---------------------------------------------------

FrequencyTriplane FrequencyTriplane::decompose(const std::array<Grid, 3>& planes,
                                               int filter_index, int levels) {
  FrequencyTriplane ft;
  for (int k = 0; k < 3; ++k) ft.planes[k] = decompose_latent(planes[k], filter_index, levels);
  ft.validate();
  return ft;
}

FrequencyTriplane FrequencyTriplane::random(const TriplaneShape& shape, std::uint64_t seed,
                                            double std) {
  std::array<Grid, 3> planes;
  for (int k = 0; k < 3; ++k) {
    Prng prng = Prng::stream(seed, "triplane", static_cast<std::uint64_t>(k));
    planes[k] = std * sample_gaussian(prng, Shape{shape.channels, shape.height, shape.width});
  }
  return decompose(planes, shape.filter_index, shape.levels);
}

FrequencyTriplane FrequencyTriplane::zeros(const TriplaneShape& shape) {
  const Grid z(shape.channels, shape.height, shape.width);
  return decompose({z, z, z}, shape.filter_index, shape.levels);
}

TriplaneShape FrequencyTriplane::shape() const {
  const Shape& s = planes[0].latent_shape;
  return {s.channels, s.height, s.width, planes[0].levels, planes[0].filter_index};
}

void FrequencyTriplane::validate() const {
  for (int k = 1; k < 3; ++k) {
    if (planes[k].latent_shape != planes[0].latent_shape ||
        planes[k].levels != planes[0].levels ||
        planes[k].filter_index != planes[0].filter_index) {
      throw ShapeError("triplane planes disagree on (C, H, W, J, p)");
    }
  }
}

bool FrequencyTriplane::bit_equal(const FrequencyTriplane& other) const {
  for (int k = 0; k < 3; ++k) {
    if (!planes[k].bit_equal(other.planes[k])) return false;
  }
  return true;
}

std::array<Grid, 3> reconstruct_planes(const FrequencyTriplane& ft) {
  return {reconstruct_latent(ft.planes[0]), reconstruct_latent(ft.planes[1]),
          reconstruct_latent(ft.planes[2])};
}

// ---- sampling ----------------------------------------------------------

PlaneTap plane_tap(double a, double b, std::size_t height, std::size_t width) {
  auto axis = [](double coord, std::size_t n, std::size_t& i0, std::size_t& i1, double& t) {
    if (n == 1) {
      i0 = i1 = 0;
      t = 0.0;
      return;
    }
    const double f = (std::clamp(coord, -1.0, 1.0) + 1.0) * 0.5 * static_cast<double>(n - 1);
    i0 = std::min(static_cast<std::size_t>(f), n - 2);
    i1 = i0 + 1;
    t = f - static_cast<double>(i0);
  };
  PlaneTap tap;
  axis(a, width, tap.x0, tap.x1, tap.tx);
  axis(b, height, tap.y0, tap.y1, tap.ty);
  return tap;
}

std::vector<double> sample_triplane(const std::array<Grid, 3>& planes, const Vec3& x) {
  for (int k = 1; k < 3; ++k) require_same_shape(planes[0], planes[k], "sample_triplane");
  std::vector<double> f(3 * planes[0].channels());
  gather(planes, taps_at(x, planes[0].height(), planes[0].width()), f.data());
  return f;
}

// ---- MLP -----------------------------------------------------------------

MlpDecoder MlpDecoder::zeros(std::size_t input, std::size_t hidden) {
  if (input == 0 || hidden == 0) throw ShapeError("MLP sizes must be positive");
  MlpDecoder m;
  m.params = {Grid(1, hidden, input), Grid(1, 1, hidden), Grid(1, hidden, hidden),
              Grid(1, 1, hidden),     Grid(1, 3, hidden), Grid(1, 1, 3)};
  return m;
}

MlpDecoder MlpDecoder::random(std::size_t input, std::uint64_t seed, std::size_t hidden) {
  MlpDecoder m = zeros(input, hidden);
  Prng prng = Prng::stream(seed, "mlp", 0);
  for (std::size_t layer = 0; layer < 3; ++layer) {
    Grid& w = m.params[2 * layer];
    Grid& b = m.params[2 * layer + 1];
    const double bound = std::sqrt(1.0 / static_cast<double>(w.width()));
    for (double& v : w.data()) v = prng.uniform(-bound, bound);
    for (double& v : b.data()) v = prng.uniform(-bound, bound);
  }
  return m;
}

std::array<double, 3> MlpDecoder::decode(std::span<const double> feature) const {
  if (params.size() != 6) throw ShapeError("MLP decoder is not initialized");
  if (feature.size() != input_size()) {
    throw ShapeError("feature length " + std::to_string(feature.size()) +
                     " != MLP input " + std::to_string(input_size()));
  }
  MlpScratch s(hidden_size());
  mlp_forward(*this, TransposedWeights(*this), feature.data(), s);
  return {s.out[0], s.out[1], s.out[2]};
}

bool MlpDecoder::bit_equal(const MlpDecoder& other) const {
  if (params.size() != other.params.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].bit_equal(other.params[i])) return false;
  }
  return true;
}

std::array<double, 3> decode_color(std::span<const double> feature, const MlpDecoder& mlp) {
  return mlp.decode(feature);
}

// ---- render / backprop ----------------------------------------------------

Grid render_view(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                 const mesh::GBuffer& gbuf, int threads) {
  require_mlp_matches(ft, mlp);
  require_gbuffer(gbuf);
  return render_planes(reconstruct_planes(ft), mlp, gbuf, threads);
}

TriplaneGradients backprop_render(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                                  const mesh::GBuffer& gbuf, const Grid& grad_image,
                                  const FreezePolicy& policy, int threads) {
  require_mlp_matches(ft, mlp);
  require_gbuffer(gbuf);
  if (grad_image.shape() != Shape{3, gbuf.height(), gbuf.width()}) {
    throw ShapeError("grad_image " + grad_image.shape().str() + " does not match render " +
                     Shape{3, gbuf.height(), gbuf.width()}.str());
  }
  const PixelGrad pg = [&](std::size_t y, std::size_t x, const double*, double* g) {
    for (int c = 0; c < 3; ++c) g[c] = grad_image(c, y, x);
  };
  return route(ft,
               backprop_planes(reconstruct_planes(ft), mlp, gbuf, pg, true, threads, nullptr),
               resolve_policy(policy, ft.planes[0].levels));
}

TriplaneGradients backprop_render(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                                  const mesh::GBuffer& gbuf, const Grid& grad_image,
                                  int threads) {
  return backprop_render(ft, mlp, gbuf, grad_image, FreezePolicy::none(ft.planes[0].levels),
                         threads);
}

// ---- views / fitting --------------------------------------------------------

Grid texture_target(const mesh::GBuffer& gbuf, const Grid& texture) {
  if (texture.channels() != 3) throw ShapeError("texture must have 3 channels");
  Grid out(3, gbuf.height(), gbuf.width());
  for (std::size_t y = 0; y < gbuf.height(); ++y) {
    for (std::size_t x = 0; x < gbuf.width(); ++x) {
      if (gbuf.hit_mask(0, y, x) == 0.0) continue;
      const auto c = mesh::sample_texture(texture, {gbuf.uv(0, y, x), gbuf.uv(1, y, x)});
      for (std::size_t k = 0; k < 3; ++k) out(k, y, x) = c[k];
    }
  }
  return out;
}

std::vector<View> prepare_views(const mesh::TriangleMesh& mesh,
                                const std::vector<mesh::Camera>& cameras,
                                const Grid* texture, int threads) {
  std::vector<View> views;
  for (const auto& cam : cameras) {
    View v{cam, mesh::render_gbuffer(mesh, cam, threads), Grid()};
    if (texture != nullptr) v.target = texture_target(v.gbuffer, *texture);
    views.push_back(std::move(v));
  }
  return views;
}

double masked_l1(const Grid& a, const Grid& b, const Grid& hit_mask) {
  require_same_shape(a, b, "masked_l1");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < hit_mask.height(); ++y) {
    for (std::size_t x = 0; x < hit_mask.width(); ++x) {
      if (hit_mask(0, y, x) == 0.0) continue;
      for (std::size_t c = 0; c < a.channels(); ++c) sum += std::abs(a(c, y, x) - b(c, y, x));
      n += a.channels();
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

FitReport init_fit(FrequencyTriplane& ft, MlpDecoder& mlp, const std::vector<View>& views,
                   const FitConfig& config) {
  require_mlp_matches(ft, mlp);
  if (views.empty()) throw std::invalid_argument("init_fit needs at least one view");
  for (const View& v : views) {
    require_gbuffer(v.gbuffer);
    if (v.target.shape() != Shape{3, v.gbuffer.height(), v.gbuffer.width()}) {
      throw ShapeError("init_fit view has no target image");
    }
  }
  if (config.steps < 0) throw std::invalid_argument("init_fit: steps must be >= 0");

  const OptimizerConfig plane_cfg{OptimizerKind::kAdam, config.plane_lr};
  const OptimizerConfig mlp_cfg{OptimizerKind::kAdam, config.mlp_lr};
  std::array<OptimizerState, 3> plane_opt;
  for (int k = 0; k < 3; ++k) plane_opt[k] = make_subband_optimizer(plane_cfg, ft.planes[k]);
  OptimizerState mlp_opt(mlp_cfg, mlp.params.size());
  const FreezePolicy none = FreezePolicy::none(ft.planes[0].levels);

  auto mean_l1 = [&] {
    double total = 0.0;
    for (const View& v : views) {
      total += masked_l1(render_view(ft, mlp, v.gbuffer, config.threads), v.target,
                         v.gbuffer.hit_mask);
    }
    return total / static_cast<double>(views.size());
  };

  FitReport report;
  for (long k = 0; k < config.steps; ++k) {
    const View& view = views[static_cast<std::size_t>(k) % views.size()];
    const double count = 3.0 * static_cast<double>(view.gbuffer.hit_count());
    const PixelGrad pg = [&](std::size_t y, std::size_t x, const double* color, double* g) {
      for (int c = 0; c < 3; ++c) {
        const double r = color[c] - view.target(c, y, x);
        g[c] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / count;
      }
    };
    Grid render;
    auto grads = route(ft,
                       backprop_planes(reconstruct_planes(ft), mlp, view.gbuffer, pg, true,
                                       config.threads, &render),
                       none);
    const double loss = masked_l1(render, view.target, view.gbuffer.hit_mask);
    if (!std::isfinite(loss)) {
      throw FitDiverged("init_fit diverged at step " + std::to_string(k) +
                        " (loss " + std::to_string(loss) + ")");
    }
    report.losses.push_back(loss);
    if (config.target_l1 > 0.0 && loss <= config.target_l1 &&
        (views.size() == 1 || mean_l1() <= config.target_l1)) {
      break;
    }
    report.steps_run = k + 1;
    for (int p = 0; p < 3; ++p) ft.planes[p] = apply_update(ft.planes[p], grads.planes[p], plane_opt[p]);
    for (std::size_t i = 0; i < mlp.params.size(); ++i) mlp_opt.step(i, mlp.params[i], grads.mlp[i]);
  }

  report.final_l1 = mean_l1();
  if (!std::isfinite(report.final_l1)) throw FitDiverged("init_fit ended with a non-finite loss");
  return report;
}

// ---- editing ----------------------------------------------------------------

TextureEditResult run_texture_edit(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                                   const std::vector<View>& views,
                                   score::GradientProvider& provider,
                                   const TextureEditConfig& config) {
  require_mlp_matches(ft, mlp);
  if (views.empty()) throw std::invalid_argument("texture edit needs at least one view");
  if (config.steps < 0) throw std::invalid_argument("texture edit: steps must be >= 0");
  if (!(config.optimizer.step_size > 0.0)) {
    throw std::invalid_argument("texture edit: step size must be > 0");
  }
  const FreezePolicy policy = resolve_policy(config.policy, ft.planes[0].levels);
  policy.require_levels(static_cast<std::size_t>(ft.planes[0].levels));

  TextureEditResult res;
  res.ft = ft;
  for (const View& v : views) {
    res.initial_renders.push_back(render_view(ft, mlp, v.gbuffer, config.threads));
  }
  std::array<OptimizerState, 3> opt;
  for (int k = 0; k < 3; ++k) opt[k] = make_subband_optimizer(config.optimizer, ft.planes[k]);

  for (long k = 0; k < config.steps; ++k) {
    const std::size_t vi = static_cast<std::size_t>(k) % views.size();
    const View& view = views[vi];
    const auto planes = reconstruct_planes(res.ft);
    const Grid render = render_planes(planes, mlp, view.gbuffer, config.threads);
    score::GradientResult g = provider.gradient({render, res.initial_renders[vi], k});
    if (g.gradient.shape() != render.shape() || !g.gradient.all_finite()) {
      throw score::ProviderError("provider returned an invalid image gradient at step " +
                                 std::to_string(k));
    }
    const PixelGrad pg = [&](std::size_t y, std::size_t x, const double*, double* out) {
      for (int c = 0; c < 3; ++c) out[c] = g.gradient(c, y, x);
    };
    const auto grads = route(
        res.ft, backprop_planes(planes, mlp, view.gbuffer, pg, false, config.threads, nullptr),
        policy);
    for (int p = 0; p < 3; ++p) res.ft.planes[p] = apply_update(res.ft.planes[p], grads.planes[p], opt[p]);
  }
  for (const View& v : views) {
    res.final_renders.push_back(render_view(res.ft, mlp, v.gbuffer, config.threads));
  }
  return res;
}

Grid bake_texture(const FrequencyTriplane& ft, const MlpDecoder& mlp,
                  const mesh::TriangleMesh& mesh, std::size_t height, std::size_t width) {
  require_mlp_matches(ft, mlp);
  const mesh::GBuffer g = mesh::rasterize_uv(mesh, height, width);
  return render_planes(reconstruct_planes(ft), mlp, g, 1);
}

// ---- checkpoints ------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const FrequencyTriplane& ft,
                     const MlpDecoder& mlp, const std::string& config_json) {
  std::vector<io::Tensor> tensors;
  for (int k = 0; k < 3; ++k) {
    io::append_state(tensors, std::string(kPlaneNames[k]) + "/", ft.planes[k]);
  }
  for (std::size_t i = 0; i < mlp.params.size(); ++i) {
    tensors.push_back(io::Tensor::from_grid(std::string("mlp/") + kParamNames[i], mlp.params[i]));
  }
  if (!config_json.empty()) {
    io::Tensor t;
    t.name = "config.json";
    t.dtype = io::DType::kU8;
    t.dims = {config_json.size()};
    t.bytes.assign(config_json.begin(), config_json.end());
    tensors.push_back(std::move(t));
  }
  io::write_container(tensors, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto tensors = io::read_container(path);
  Checkpoint cp;
  for (int k = 0; k < 3; ++k) {
    cp.ft.planes[k] = io::extract_state(tensors, std::string(kPlaneNames[k]) + "/");
  }
  cp.ft.validate();
  for (const char* name : kParamNames) {
    cp.mlp.params.push_back(io::find_tensor(tensors, std::string("mlp/") + name).to_grid());
  }
  require_mlp_matches(cp.ft, cp.mlp);
  for (const auto& t : tensors) {
    if (t.name == "config.json") cp.config_json.assign(t.bytes.begin(), t.bytes.end());
  }
  return cp;
}

}  // namespace fasd::triplane
