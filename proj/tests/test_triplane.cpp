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

#include <functional>
#include <cmath>

#include "doctest.h"
#include "fasd/io.hpp"
#include "fasd/triplane.hpp"
#include "test_util.hpp"

using namespace fasd;
using namespace fasd::triplane;
using fasd::testing::random_grid;
using fasd::testing::TempDir;

namespace {

std::array<Grid, 3> random_planes(Shape s, std::uint64_t seed, double scale = 1.0) {
  return {scale * random_grid(s, seed), scale * random_grid(s, seed + 1),
          scale * random_grid(s, seed + 2)};
}

mesh::Camera front_camera(std::size_t h, std::size_t w, double fov = 40.0) {
  mesh::Camera cam;
  cam.height = h;
  cam.width = w;
  cam.fov_deg = fov;
  return cam;
}

// Single-pixel G-buffer holding one surface point.
mesh::GBuffer point_gbuffer(const Vec3& p) {
  mesh::GBuffer g;
  g.hit_mask = Grid(1, 1, 1, 1.0);
  g.positions = Grid(3, 1, 1);
  for (int k = 0; k < 3; ++k) g.positions(k, 0, 0) = p[k];
  g.uv = Grid(2, 1, 1);
  g.face_index = {0};
  return g;
}

Grid checkerboard(std::size_t n, std::size_t cells, double lo, double hi) {
  Grid t(3, n, n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const bool odd = ((y * cells / n) + (x * cells / n)) % 2 == 1;
      for (std::size_t c = 0; c < 3; ++c) t(c, y, x) = odd ? hi : lo;
    }
  }
  return t;
}

std::array<double, 3> masked_mean_color(const Grid& img, const Grid& mask) {
  std::array<double, 3> m{};
  double n = 0.0;
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (mask(0, y, x) == 0.0) continue;
      for (int c = 0; c < 3; ++c) m[c] += img(c, y, x);
      n += 1.0;
    }
  }
  for (double& v : m) v /= n;
  return m;
}

bool details_bit_equal(const FrequencyTriplane& a, const FrequencyTriplane& b) {
  for (int p = 0; p < 3; ++p) {
    const auto& sa = a.planes[p].subbands;
    for (std::size_t i = 1; i < sa.band_count(); ++i) {
      if (!sa.band(i).bit_equal(b.planes[p].subbands.band(i))) return false;
    }
  }
  return true;
}

bool low_bit_equal(const FrequencyTriplane& a, const FrequencyTriplane& b) {
  for (int p = 0; p < 3; ++p) {
    if (!a.planes[p].subbands.low.bit_equal(b.planes[p].subbands.low)) return false;
  }
  return true;
}

// Returns a fixed image gradient, as a stand-in editing objective.
class FixedProvider : public score::GradientProvider {
 public:
  explicit FixedProvider(std::function<Grid(const Grid&)> fn) : fn_(std::move(fn)) {}
  score::GradientResult gradient(const score::GradientQuery& q) override {
    return {fn_(q.current), 0};
  }

 private:
  std::function<Grid(const Grid&)> fn_;
};

}  // namespace

TEST_CASE("reconstruct_planes inverts decompose") {
  const auto planes = random_planes({4, 32, 32}, 11);
  const auto ft = FrequencyTriplane::decompose(planes, 3, 2);
  const auto back = reconstruct_planes(ft);
  for (int k = 0; k < 3; ++k) CHECK(max_abs_diff(back[k], planes[k]) <= 1e-10);

  const auto zero = reconstruct_planes(FrequencyTriplane::zeros({4, 16, 16, 2, 3}));
  for (const auto& g : zero) CHECK(max_abs(g) == 0.0);

  const auto other = random_planes({4, 32, 32}, 21);
  std::array<Grid, 3> combo;
  for (int k = 0; k < 3; ++k) combo[k] = 2.0 * planes[k] + (-0.5) * other[k];
  const auto lin = reconstruct_planes(FrequencyTriplane::decompose(combo, 3, 2));
  const auto ob = reconstruct_planes(FrequencyTriplane::decompose(other, 3, 2));
  for (int k = 0; k < 3; ++k) {
    CHECK(max_abs_diff(lin[k], 2.0 * back[k] + (-0.5) * ob[k]) <= 1e-10);
  }
}

TEST_CASE("FrequencyTriplane shape, seeding and validation") {
  const TriplaneShape s{4, 16, 16, 2, 3};
  const auto a = FrequencyTriplane::random(s, 5);
  CHECK(a.bit_equal(FrequencyTriplane::random(s, 5)));
  CHECK_FALSE(a.bit_equal(FrequencyTriplane::random(s, 6)));
  CHECK(a.shape().channels == 4);
  CHECK(a.shape().levels == 2);
  // Distinct planes come from distinct sub-streams.
  CHECK_FALSE(a.planes[0].subbands.low.bit_equal(a.planes[1].subbands.low));

  auto bad = a;
  bad.planes[2] = decompose_latent(random_grid({4, 16, 16}, 1), 3, 1);
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("sample_triplane bilinear taps") {
  const Shape s{2, 5, 9};
  const auto planes = random_planes(s, 3);

  SUBCASE("grid node returns stored values") {
    // x -> col 6, y -> row 1, z = 0 -> col 4 on zy and row 2 on xz.
    const double x = -1.0 + 2.0 * 6 / 8, y = -1.0 + 2.0 * 1 / 4;
    const auto f = sample_triplane(planes, {x, y, 0.0});
    REQUIRE(f.size() == 6);
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(f[c] == planes[0](c, 1, 6));
      CHECK(f[2 + c] == planes[1](c, 2, 6));
      CHECK(f[4 + c] == planes[2](c, 1, 4));
    }
  }

  SUBCASE("corners and clamping") {
    const auto f = sample_triplane(planes, {1.0, 1.0, 1.0});
    CHECK(f[0] == planes[0](0, 4, 8));
    const auto g = sample_triplane(planes, {3.0, -7.0, 1.5});
    CHECK(g[0] == planes[0](0, 0, 8));
    CHECK(g[4] == planes[2](0, 0, 8));
  }

  SUBCASE("midpoint averages") {
    const double x = -1.0 + 2.0 * 2.5 / 8, y = -1.0 + 2.0 * 2 / 4, z = -1.0;
    const auto f = sample_triplane(planes, {x, y, z});
    CHECK(std::abs(f[1] - 0.5 * (planes[0](1, 2, 2) + planes[0](1, 2, 3))) <= 1e-15);
  }

  SUBCASE("constant planes") {
    const std::array<Grid, 3> c{Grid(s, 0.25), Grid(s, -1.0), Grid(s, 3.0)};
    Prng prng(9);
    for (int i = 0; i < 20; ++i) {
      const auto f = sample_triplane(c, {prng.uniform(-1, 1), prng.uniform(-1, 1), prng.uniform(-1, 1)});
      CHECK(f[0] == 0.25);
      CHECK(f[3] == -1.0);
      CHECK(f[5] == 3.0);
    }
  }

  SUBCASE("plane_tap on a single-texel axis") {
    const auto t = plane_tap(0.3, 0.3, 1, 1);
    CHECK(t.x0 == 0);
    CHECK(t.x1 == 0);
    CHECK(t.tx == 0.0);
  }
}

TEST_CASE("MLP decode") {
  SUBCASE("zero parameters give 0.5") {
    const auto m = MlpDecoder::zeros(12);
    const std::vector<double> f(12, 3.0);
    const auto c = decode_color(f, m);
    for (double v : c) CHECK(v == 0.5);
  }

  SUBCASE("hand-computed tiny network") {
    auto m = MlpDecoder::zeros(3, 2);
    m.params[0] = Grid({1, 2, 3}, {0.1, 0.2, 0.3, -0.4, 0.5, -0.6});
    m.params[1] = Grid({1, 1, 2}, {0.05, -0.05});
    m.params[2] = Grid({1, 2, 2}, {1.0, -1.0, 0.5, 2.0});
    m.params[3] = Grid({1, 1, 2}, {0.1, -3.0});
    m.params[4] = Grid({1, 3, 2}, {1.0, 0.0, -2.0, 1.0, 0.3, -0.7});
    m.params[5] = Grid({1, 1, 3}, {0.0, 0.25, -0.5});
    const std::vector<double> f{0.5, -1.0, 2.0};
    const auto c = m.decode(f);
    CHECK(std::abs(c[0] - 0.6456563062257954) <= 1e-15);
    CHECK(std::abs(c[1] - 0.27888482197713693) <= 1e-15);
    CHECK(std::abs(c[2] - 0.42067574785125056) <= 1e-15);
  }

  SUBCASE("random weights stay inside (0, 1)") {
    const auto m = MlpDecoder::random(12, 4);
    CHECK(m.hidden_size() == 64);
    CHECK(m.params[0].shape() == Shape{1, 64, 12});
    const double bound = std::sqrt(1.0 / 12.0);
    CHECK(max_abs(m.params[0]) <= bound);
    CHECK(max_abs(m.params[1]) <= bound);
    CHECK(max_abs(m.params[2]) <= 0.125);
    Prng prng(2);
    for (int i = 0; i < 200; ++i) {
      std::vector<double> f(12);
      for (double& v : f) v = prng.uniform(-5, 5);
      for (double v : m.decode(f)) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
      }
    }
    CHECK(m.bit_equal(MlpDecoder::random(12, 4)));
    CHECK_FALSE(m.bit_equal(MlpDecoder::random(12, 5)));
  }

  SUBCASE("size mismatch") {
    const auto m = MlpDecoder::zeros(12);
    const std::vector<double> f(11);
    CHECK_THROWS_AS(m.decode(f), ShapeError);
  }
}

TEST_CASE("render_view") {
  const TriplaneShape s{4, 16, 16, 2, 3};
  const auto ft = FrequencyTriplane::random(s, 8, 0.5);
  const auto mlp = MlpDecoder::random(12, 9, 16);

  SUBCASE("all misses are black") {
    mesh::GBuffer g = mesh::render_gbuffer(mesh::make_quad(), front_camera(6, 6));
    g.hit_mask.fill(0.0);
    CHECK(max_abs(render_view(ft, mlp, g)) == 0.0);
  }

  SUBCASE("constant field") {
    auto m = MlpDecoder::zeros(12, 16);
    m.params[5] = Grid({1, 1, 3}, {0.0, 1.0, -2.0});
    const auto g = mesh::render_gbuffer(mesh::make_uv_sphere(), front_camera(12, 12));
    const Grid img = render_view(FrequencyTriplane::zeros(s), m, g);
    for (std::size_t y = 0; y < 12; ++y) {
      for (std::size_t x = 0; x < 12; ++x) {
        const bool hit = g.hit_mask(0, y, x) != 0.0;
        CHECK(img(0, y, x) == (hit ? 0.5 : 0.0));
        CHECK(img(1, y, x) == (hit ? 1.0 / (1.0 + std::exp(-1.0)) : 0.0));
      }
    }
  }

  SUBCASE("single pixel equals decode of the sample") {
    const Vec3 p{-1.0 + 2.0 * 3 / 15, -1.0 + 2.0 * 7 / 15, -1.0 + 2.0 * 12 / 15};
    const Grid img = render_view(ft, mlp, point_gbuffer(p));
    const auto c = decode_color(sample_triplane(reconstruct_planes(ft), p), mlp);
    for (int k = 0; k < 3; ++k) CHECK(img(k, 0, 0) == c[k]);
  }

  SUBCASE("invariant under decompose/reconstruct round trip") {
    const auto g = mesh::render_gbuffer(mesh::make_torus(), front_camera(16, 16));
    const Grid a = render_view(ft, mlp, g);
    const auto round = FrequencyTriplane::decompose(reconstruct_planes(ft), 3, 2);
    CHECK(max_abs_diff(a, render_view(round, mlp, g)) <= 1e-9);
  }

  SUBCASE("thread count does not change the image") {
    const auto g = mesh::render_gbuffer(mesh::make_torus(), front_camera(16, 16));
    CHECK(render_view(ft, mlp, g, 1).bit_equal(render_view(ft, mlp, g, 5)));
  }

  SUBCASE("mismatched MLP") {
    const auto g = point_gbuffer({0, 0, 0});
    CHECK_THROWS_AS(render_view(ft, MlpDecoder::zeros(48), g), ShapeError);
  }
}

namespace {

struct FdCase {
  FrequencyTriplane ft;
  MlpDecoder mlp;
  mesh::GBuffer gbuf;
  Grid target;
};

FdCase fd_case(std::uint64_t seed) {
  FdCase c;
  c.ft = FrequencyTriplane::random({4, 16, 16, 2, 3}, seed, 0.5);
  c.mlp = MlpDecoder::random(12, seed + 100, 16);
  // Tilted quad so that all three planes see varying coordinates.
  mesh::Camera cam = front_camera(8, 8, 45.0);
  cam.position = {1.6, 1.2, 2.2};
  c.gbuf = mesh::render_gbuffer(mesh::make_uv_sphere(8, 16), cam);
  c.target = Grid(3, 8, 8, 0.4);
  return c;
}

double half_sq_loss(const FdCase& c, const FrequencyTriplane& ft, const MlpDecoder& mlp) {
  const Grid r = render_view(ft, mlp, c.gbuf);
  double s = 0.0;
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 8; ++x) {
      if (c.gbuf.hit_mask(0, y, x) == 0.0) continue;
      for (std::size_t k = 0; k < 3; ++k) {
        const double d = r(k, y, x) - c.target(k, y, x);
        s += 0.5 * d * d;
      }
    }
  }
  return s;
}

Grid loss_grad_image(const FdCase& c) {
  Grid g = render_view(c.ft, c.mlp, c.gbuf) - c.target;
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 8; ++x) {
      if (c.gbuf.hit_mask(0, y, x) != 0.0) continue;
      for (std::size_t k = 0; k < 3; ++k) g(k, y, x) = 0.0;
    }
  }
  return g;
}

// On/off state of every hidden ReLU at every hit pixel.
std::vector<bool> relu_pattern(const FdCase& c, const FrequencyTriplane& ft, const MlpDecoder& mlp) {
  const auto planes = reconstruct_planes(ft);
  const std::size_t hid = mlp.hidden_size(), in = mlp.input_size();
  std::vector<bool> out;
  for (std::size_t y = 0; y < c.gbuf.height(); ++y) {
    for (std::size_t x = 0; x < c.gbuf.width(); ++x) {
      if (c.gbuf.hit_mask(0, y, x) == 0.0) continue;
      const auto f = sample_triplane(planes, {c.gbuf.positions(0, y, x), c.gbuf.positions(1, y, x),
                                              c.gbuf.positions(2, y, x)});
      std::vector<double> h1(hid);
      for (std::size_t j = 0; j < hid; ++j) {
        double a = mlp.params[1][j];
        for (std::size_t i = 0; i < in; ++i) a += mlp.params[0](0, j, i) * f[i];
        out.push_back(a > 0.0);
        h1[j] = a > 0.0 ? a : 0.0;
      }
      for (std::size_t j = 0; j < hid; ++j) {
        double a = mlp.params[3][j];
        for (std::size_t i = 0; i < hid; ++i) a += mlp.params[2](0, j, i) * h1[i];
        out.push_back(a > 0.0);
      }
    }
  }
  return out;
}

struct FdStats {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;
};

// Relative error with a floor at 1e-3 of the largest finite-difference
// magnitude, so coordinates whose derivative is numerically zero are
// compared on the scale of the gradient rather than of roundoff.
void compare(FdStats& st, double analytic, double fd, double scale) {
  const double denom = std::max(std::abs(fd), 1e-3 * scale);
  const double rel = std::abs(analytic - fd) / denom;
  ++st.checked;
  st.worst = std::max(st.worst, rel);
  if (rel > 1e-4) {
    ++st.failed;
  }
}

}  // namespace

TEST_CASE("backprop_render matches central differences on every coordinate") {
  constexpr double h = 1e-4;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    FdCase c = fd_case(seed);
    REQUIRE(c.gbuf.hit_count() > 20);
    const auto grads = backprop_render(c.ft, c.mlp, c.gbuf, loss_grad_image(c));
    const auto base = relu_pattern(c, c.ft, c.mlp);

    std::vector<double> fd, an;
    std::vector<bool> is_mlp;
    std::size_t refined = 0;
    // Central difference at h; where the stencil crosses a ReLU kink the
    // quotient is not a derivative estimate, so the step is shrunk until
    // the activation pattern is the same at both ends.
    auto probe = [&](double& slot, double analytic, bool mlp_param) {
      const double keep = slot;
      double step = h, q = 0.0;
      for (int tries = 0; tries < 5; ++tries, step *= 0.1) {
        slot = keep + step;
        const double up = half_sq_loss(c, c.ft, c.mlp);
        const bool cu = relu_pattern(c, c.ft, c.mlp) != base;
        slot = keep - step;
        const double down = half_sq_loss(c, c.ft, c.mlp);
        const bool cd = relu_pattern(c, c.ft, c.mlp) != base;
        q = (up - down) / (2 * step);
        if (!cu && !cd) break;
        if (tries == 0) ++refined;
      }
      slot = keep;
      fd.push_back(q);
      an.push_back(analytic);
      is_mlp.push_back(mlp_param);
    };
    for (int p = 0; p < 3; ++p) {
      auto& sb = c.ft.planes[p].subbands;
      for (std::size_t b = 0; b < sb.band_count(); ++b) {
        Grid& band = sb.band(b);
        for (std::size_t i = 0; i < band.size(); ++i) probe(band[i], grads.planes[p].band(b)[i], false);
      }
    }
    for (std::size_t k = 0; k < c.mlp.params.size(); ++k) {
      Grid& w = c.mlp.params[k];
      for (std::size_t i = 0; i < w.size(); ++i) probe(w[i], grads.mlp[k][i], true);
    }
    double sp = 0.0, sm = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) (is_mlp[i] ? sm : sp) = std::max(is_mlp[i] ? sm : sp, std::abs(fd[i]));
    FdStats st;
    for (std::size_t i = 0; i < fd.size(); ++i) compare(st, an[i], fd[i], is_mlp[i] ? sm : sp);
    MESSAGE("seed " << seed << ": " << st.checked << " coordinates, " << refined
                    << " refined at a kink, worst relative error " << st.worst);
    CHECK(st.checked == 3 * 1024 + (12 * 16 + 16 + 16 * 16 + 16 + 3 * 16 + 3));
    CHECK(st.failed == 0);
    CHECK(st.worst <= 1e-4);
  }
}

TEST_CASE("backprop_render structural properties") {
  FdCase c = fd_case(7);
  const Grid g = loss_grad_image(c);

  SUBCASE("zero image gradient") {
    const auto z = backprop_render(c.ft, c.mlp, c.gbuf, Grid(g.shape()));
    for (int p = 0; p < 3; ++p) {
      for (std::size_t b = 0; b < z.planes[p].band_count(); ++b) {
        CHECK(max_abs(z.planes[p].band(b)) == 0.0);
      }
    }
    for (const auto& m : z.mlp) CHECK(max_abs(m) == 0.0);
  }

  SUBCASE("linear in the image gradient") {
    const auto a = backprop_render(c.ft, c.mlp, c.gbuf, g);
    const auto b = backprop_render(c.ft, c.mlp, c.gbuf, -2.5 * g);
    for (int p = 0; p < 3; ++p) {
      for (std::size_t i = 0; i < a.planes[p].band_count(); ++i) {
        CHECK(max_abs_diff(-2.5 * a.planes[p].band(i), b.planes[p].band(i)) <= 1e-12);
      }
    }
    for (std::size_t k = 0; k < a.mlp.size(); ++k) {
      CHECK(max_abs_diff(-2.5 * a.mlp[k], b.mlp[k]) <= 1e-12);
    }
  }

  SUBCASE("thread count does not change gradients") {
    const auto a = backprop_render(c.ft, c.mlp, c.gbuf, g, 1);
    const auto b = backprop_render(c.ft, c.mlp, c.gbuf, g, 3);
    for (int p = 0; p < 3; ++p) CHECK(a.planes[p].bit_equal(b.planes[p]));
    for (std::size_t k = 0; k < a.mlp.size(); ++k) CHECK(a.mlp[k].bit_equal(b.mlp[k]));
  }

  SUBCASE("policy zeros frozen bands exactly") {
    const auto free = backprop_render(c.ft, c.mlp, c.gbuf, g);
    const auto fh = backprop_render(c.ft, c.mlp, c.gbuf, g, FreezePolicy::freeze_high(2));
    for (int p = 0; p < 3; ++p) {
      CHECK(fh.planes[p].low.bit_equal(free.planes[p].low));
      for (std::size_t b = 1; b < fh.planes[p].band_count(); ++b) {
        CHECK(is_exact_zero(fh.planes[p].band(b)));
      }
    }
  }

  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(backprop_render(c.ft, c.mlp, c.gbuf, Grid(3, 8, 7)), ShapeError);
  }
}

TEST_CASE("texture_target and masked_l1") {
  const auto quad = mesh::make_quad();
  const auto g = mesh::render_gbuffer(quad, front_camera(8, 8, 30.0));
  const Grid tex(3, 4, 4, 0.3);
  const Grid t = texture_target(g, tex);
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 8; ++x) {
      CHECK(t(1, y, x) == (g.hit_mask(0, y, x) != 0.0 ? 0.3 : 0.0));
    }
  }
  Grid other = t;
  other.fill(0.0);
  CHECK(std::abs(masked_l1(t, other, g.hit_mask) - 0.3) <= 1e-15);
  CHECK(masked_l1(t, other, Grid(1, 8, 8)) == 0.0);
  CHECK_THROWS_AS(texture_target(g, Grid(1, 4, 4)), ShapeError);
}

TEST_CASE("init_fit") {
  SUBCASE("zero budget leaves state unchanged") {
    auto ft = FrequencyTriplane::random({4, 16, 16, 2, 3}, 1);
    auto mlp = MlpDecoder::random(12, 2, 16);
    const auto ft0 = ft;
    const auto mlp0 = mlp;
    const Grid tex(3, 4, 4, 0.5);
    const auto views = prepare_views(mesh::make_quad(), {front_camera(8, 8)}, &tex);
    FitConfig cfg;
    cfg.steps = 0;
    const auto rep = init_fit(ft, mlp, views, cfg);
    CHECK(rep.losses.empty());
    CHECK(ft.bit_equal(ft0));
    CHECK(mlp.bit_equal(mlp0));
  }

  SUBCASE("constant red on a sphere") {
    auto ft = FrequencyTriplane::random({8, 32, 32, 2, 3}, 3);
    auto mlp = MlpDecoder::random(24, 4);
    Grid red(3, 4, 4);
    for (double& v : red.channel(0)) v = 1.0;
    const auto views = prepare_views(mesh::make_uv_sphere(),
                                     mesh::orbit_cameras(16, 16, 4, {0.0}), &red);
    FitConfig cfg;
    cfg.steps = 600;
    cfg.plane_lr = 1e-2;
    cfg.mlp_lr = 1e-2;
    const auto rep = init_fit(ft, mlp, views, cfg);
    CHECK(rep.losses.size() == 600);
    CHECK(rep.steps_run == 600);
    CHECK(rep.final_l1 <= 0.01);
  }

  SUBCASE("missing targets and divergence") {
    auto ft = FrequencyTriplane::random({4, 16, 16, 2, 3}, 1);
    auto mlp = MlpDecoder::random(12, 2, 16);
    auto views = prepare_views(mesh::make_quad(), {front_camera(8, 8)});
    CHECK_THROWS_AS(init_fit(ft, mlp, views, FitConfig{}), ShapeError);
    CHECK_THROWS_AS(init_fit(ft, mlp, {}, FitConfig{}), std::invalid_argument);

    const Grid tex(3, 4, 4, 0.5);
    views = prepare_views(mesh::make_quad(), {front_camera(8, 8)}, &tex);
    mlp.params[5][0] = std::nan("");
    FitConfig cfg;
    cfg.steps = 3;
    CHECK_THROWS_AS(init_fit(ft, mlp, views, cfg), FitDiverged);
  }
}

TEST_CASE("checkerboard quad fit reaches mean L1 <= 0.05") {
  auto ft = FrequencyTriplane::random({16, 128, 128, 2, 3}, 1);
  auto mlp = MlpDecoder::random(48, 2);
  const Grid tex = checkerboard(64, 8, 0.0, 1.0);
  const auto views = prepare_views(mesh::make_quad(), {front_camera(32, 32, 38.0)}, &tex);
  FitConfig cfg;
  cfg.target_l1 = 0.05;
  const auto rep = init_fit(ft, mlp, views, cfg);
  MESSAGE("checkerboard fit: L1 " << rep.losses.front() << " -> " << rep.final_l1 << " after "
                                  << rep.steps_run << " steps");
  CHECK(rep.steps_run < 2000);
  CHECK(rep.final_l1 <= 0.05);
  CHECK(rep.losses.front() > 0.05);
}

TEST_CASE("run_texture_edit") {
  // Small fitted-free field: the edit only needs a nonconstant start.
  const auto ft = FrequencyTriplane::random({4, 32, 32, 2, 3}, 12, 0.3);
  const auto mlp = MlpDecoder::random(12, 13, 32);
  const auto views = prepare_views(mesh::make_quad(), {front_camera(16, 16, 38.0)});

  SUBCASE("zero provider leaves state bit-identical") {
    score::ZeroProvider zero;
    TextureEditConfig cfg;
    cfg.steps = 20;
    const auto r = run_texture_edit(ft, mlp, views, zero, cfg);
    CHECK(r.ft.bit_equal(ft));
    REQUIRE(r.final_renders.size() == 1);
    CHECK(r.final_renders[0].bit_equal(r.initial_renders[0]));
  }

  SUBCASE("FreezeHigh shifts the mean color, details untouched") {
    const Grid init = render_view(ft, mlp, views[0].gbuffer);
    const Grid& mask = views[0].gbuffer.hit_mask;
    Grid mu = init;
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) {
        if (mask(0, y, x) == 0.0) continue;
        mu(0, y, x) += 0.15;
        mu(2, y, x) -= 0.1;
      }
    }
    score::GaussianPromptModel model;
    model.add("source", init, 0.0);
    model.add("target", mu, 0.0);
    score::AnalyticProviderConfig pc;
    pc.mode = score::DistillationMode::kSds;
    pc.seed = 4;
    score::AnalyticProvider sds(model, pc);

    TextureEditConfig cfg;
    cfg.steps = 400;
    cfg.optimizer.step_size = 0.05;
    cfg.policy = FreezePolicy::freeze_high(2);
    const auto r = run_texture_edit(ft, mlp, views, sds, cfg);
    CHECK(details_bit_equal(r.ft, ft));
    CHECK_FALSE(low_bit_equal(r.ft, ft));
    const auto got = masked_mean_color(r.final_renders[0], mask);
    const auto want = masked_mean_color(mu, mask);
    const auto start = masked_mean_color(init, mask);
    double l1 = 0.0, l1_start = 0.0;
    for (int k = 0; k < 3; ++k) {
      l1 += std::abs(got[k] - want[k]);
      l1_start += std::abs(start[k] - want[k]);
    }
    MESSAGE("mean-color L1: start " << l1_start << ", end " << l1);
    CHECK(l1 <= 0.05);
  }

  SUBCASE("FreezeLow keeps low bands") {
    FixedProvider push([](const Grid& cur) { return Grid(cur.shape(), -0.05); });
    TextureEditConfig cfg;
    cfg.steps = 30;
    cfg.policy = FreezePolicy::freeze_low_band(2);
    const auto r = run_texture_edit(ft, mlp, views, push, cfg);
    CHECK(low_bit_equal(r.ft, ft));
    CHECK_FALSE(details_bit_equal(r.ft, ft));
  }

  SUBCASE("deterministic and thread independent") {
    FixedProvider push([](const Grid& cur) { return 0.1 * cur; });
    TextureEditConfig cfg;
    cfg.steps = 10;
    const auto a = run_texture_edit(ft, mlp, views, push, cfg);
    cfg.threads = 3;
    const auto b = run_texture_edit(ft, mlp, views, push, cfg);
    CHECK(a.ft.bit_equal(b.ft));
  }

  SUBCASE("bad provider output aborts") {
    FixedProvider wrong([](const Grid&) { return Grid(3, 2, 2); });
    TextureEditConfig cfg;
    cfg.steps = 2;
    CHECK_THROWS_AS(run_texture_edit(ft, mlp, views, wrong, cfg), score::ProviderError);
    FixedProvider nan([](const Grid& cur) { return Grid(cur.shape(), std::nan("")); });
    CHECK_THROWS_AS(run_texture_edit(ft, mlp, views, nan, cfg), score::ProviderError);
  }
}

TEST_CASE("bake_texture evaluates the field at texel surface points") {
  const auto ft = FrequencyTriplane::random({4, 16, 16, 2, 3}, 31, 0.5);
  const auto mlp = MlpDecoder::random(12, 32, 16);
  const auto quad = mesh::make_quad();
  const Grid tex = bake_texture(ft, mlp, quad, 8, 8);
  REQUIRE(tex.shape() == Shape{3, 8, 8});
  const auto planes = reconstruct_planes(ft);
  // Texel (r, c) of the quad map sits at x = 2u - 1, y = 2v - 1.
  for (std::size_t r : {0u, 3u, 7u}) {
    for (std::size_t col : {0u, 5u}) {
      const double u = (col + 0.5) / 8.0, v = 1.0 - (r + 0.5) / 8.0;
      const auto c = decode_color(sample_triplane(planes, {2 * u - 1, 2 * v - 1, 0.0}), mlp);
      for (int k = 0; k < 3; ++k) CHECK(std::abs(tex(k, r, col) - c[k]) <= 1e-12);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  const auto ft = FrequencyTriplane::random({4, 16, 16, 2, 3}, 41);
  const auto mlp = MlpDecoder::random(12, 42, 16);
  const std::string cfg = R"({"config_version":1})";
  save_checkpoint(dir / "ckpt.fbds", ft, mlp, cfg);
  const auto cp = load_checkpoint(dir / "ckpt.fbds");
  CHECK(cp.ft.bit_equal(ft));
  CHECK(cp.mlp.bit_equal(mlp));
  CHECK(cp.config_json == cfg);

  save_checkpoint(dir / "bare.fbds", ft, mlp);
  CHECK(load_checkpoint(dir / "bare.fbds").config_json.empty());
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.fbds"), io::IoError);
}
