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

#include <cmath>

#include "doctest.h"
#include "fasd/mesh.hpp"
#include "test_util.hpp"

using namespace fasd;
using namespace fasd::mesh;

namespace {

const char* kQuadObj = R"(# unit quad
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
vt 0 0
vt 1 0
vt 1 1
vt 0 1
f 1/1 2/2 3/3
f 1/1 3/3 4/4
)";

Camera front_camera(std::size_t res, double fov = 30.0) {
  Camera c;
  c.position = {0.0, 0.0, 3.0};
  c.fov_deg = fov;
  c.height = res;
  c.width = res;
  return c;
}

// Barycentric coordinates of p in triangle (a,b,c) and distance to its plane.
struct Bary {
  double b0, b1, b2, plane_dist;
};
Bary barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  auto sub = [](const Vec3& x, const Vec3& y) {
    return Vec3{x[0] - y[0], x[1] - y[1], x[2] - y[2]};
  };
  auto dot = [](const Vec3& x, const Vec3& y) {
    return x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
  };
  const Vec3 e1 = sub(b, a), e2 = sub(c, a), d = sub(p, a);
  const Vec3 n{e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
               e1[0] * e2[1] - e1[1] * e2[0]};
  const double nn = std::sqrt(dot(n, n));
  const double d11 = dot(e1, e1), d12 = dot(e1, e2), d22 = dot(e2, e2);
  const double dp1 = dot(d, e1), dp2 = dot(d, e2);
  const double den = d11 * d22 - d12 * d12;
  const double b1 = (d22 * dp1 - d12 * dp2) / den;
  const double b2 = (d11 * dp2 - d12 * dp1) / den;
  return {1.0 - b1 - b2, b1, b2, std::abs(dot(d, n)) / nn};
}

}  // namespace

TEST_CASE("parse_obj") {
  SUBCASE("two-triangle quad") {
    const TriangleMesh m = parse_obj(kQuadObj);
    CHECK(m.vertices.size() == 4);
    CHECK(m.uvs.size() == 4);
    REQUIRE(m.faces.size() == 2);
    CHECK(m.faces[1].v == std::array<int, 3>{0, 2, 3});
    CHECK(m.faces[1].vt == std::array<int, 3>{0, 2, 3});
  }
  SUBCASE("polygon fan") {
    const TriangleMesh m =
        parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 2 0\n"
                  "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nvt 0 0.5\nf 1/1 2/2 3/3 4/4 5/5\n");
    REQUIRE(m.faces.size() == 3);
    CHECK(m.faces[0].v == std::array<int, 3>{0, 1, 2});
    CHECK(m.faces[1].v == std::array<int, 3>{0, 2, 3});
    CHECK(m.faces[2].v == std::array<int, 3>{0, 3, 4});
    CHECK(parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                    "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n")
              .faces.size() == 2);
  }
  SUBCASE("v/vt/vn, v//vn and negative indices") {
    const TriangleMesh m = parse_obj(
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\n"
        "f 1/1/1 2/2/1 3/3/1\nf -3/-3 -2/-2 -1/-1\n");
    REQUIRE(m.faces.size() == 2);
    CHECK(m.faces[1].v == std::array<int, 3>{0, 1, 2});
    CHECK(m.faces[1].vt == std::array<int, 3>{0, 1, 2});
    const TriangleMesh n = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1//1 2//1 3//1\n", false);
    CHECK(n.faces[0].vt == std::array<int, 3>{-1, -1, -1});
    CHECK_FALSE(n.has_uvs());
  }
  SUBCASE("errors name the line") {
    try {
      parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", false);
      FAIL("expected ObjParseError");
    } catch (const ObjParseError& e) {
      CHECK(e.line() == 4);
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"), ObjParseError);
    CHECK_THROWS_AS(parse_obj("v 0 zero 0\n"), ObjParseError);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nf 1 1\n", false), ObjParseError);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 0 0 0\nv 0 0 0\nf 0 1 2\n", false),
                    ObjParseError);
    CHECK_THROWS_AS(parse_obj("vt 1.5 0\n"), ObjParseError);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\n"), MeshError);
  }
}

TEST_CASE("normalize_mesh") {
  SUBCASE("unit cube at [10,11]^3") {
    TriangleMesh m;
    for (int i = 0; i < 8; ++i) {
      m.vertices.push_back({10.0 + (i & 1), 10.0 + ((i >> 1) & 1), 10.0 + ((i >> 2) & 1)});
    }
    m.faces = {Face{{0, 1, 2}}};
    const TriangleMesh n = normalize_mesh(m);
    const Bounds b = n.bounds();
    for (int k = 0; k < 3; ++k) {
      CHECK(b.lo[k] == -1.0);
      CHECK(b.hi[k] == 1.0);
    }
  }
  SUBCASE("already normalized") {
    const TriangleMesh s = make_uv_sphere(8, 12);
    const TriangleMesh n = normalize_mesh(s);
    for (std::size_t i = 0; i < s.vertices.size(); ++i) {
      for (int k = 0; k < 3; ++k) CHECK(std::abs(n.vertices[i][k] - s.vertices[i][k]) <= 1e-12);
    }
  }
  SUBCASE("flat quad") {
    // Box [0,4] x [0,2] x {5}: center (2,1,5), max half-extent 2.
    TriangleMesh m = make_quad();
    m.vertices = {{0, 0, 5}, {4, 0, 5}, {4, 2, 5}, {0, 2, 5}};
    const TriangleMesh n = normalize_mesh(m);
    CHECK(n.vertices[0] == Vec3{-1.0, -0.5, 0.0});
    CHECK(n.vertices[2] == Vec3{1.0, 0.5, 0.0});
  }
  SUBCASE("degenerate") {
    TriangleMesh m;
    m.vertices = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
    m.faces = {Face{{0, 1, 2}}};
    CHECK_THROWS_AS(normalize_mesh(m), MeshError);
  }
}

TEST_CASE("Camera validation") {
  Camera c = front_camera(8);
  CHECK_NOTHROW(c.validate());
  c.look_at = c.position;
  CHECK_THROWS_AS(c.validate(), MeshError);
  c = front_camera(8, 180.0);
  CHECK_THROWS_AS(c.validate(), MeshError);
  c = front_camera(8);
  c.up = {0.0, 0.0, 1.0};
  CHECK_THROWS_AS(c.validate(), MeshError);
}

TEST_CASE("intersect_triangle") {
  Hit h;
  const Vec3 a{-1, -1, 0}, b{1, -1, 0}, c{0, 1, 0};
  REQUIRE(intersect_triangle({0, 0, 2}, {0, 0, -1}, a, b, c, h));
  CHECK(h.t == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(intersect_triangle({0, 0, -2}, {0, 0, 1}, a, b, c, h));  // back side
  CHECK_FALSE(intersect_triangle({0, 0, 2}, {0, 0, 1}, a, b, c, h));  // behind
  CHECK_FALSE(intersect_triangle({0, 0, 2}, {1, 0, 0}, a, b, c, h));  // parallel
  CHECK_FALSE(intersect_triangle({5, 0, 2}, {0, 0, -1}, a, b, c, h));  // outside
}

TEST_CASE("render_gbuffer") {
  SUBCASE("quad filling the frustum") {
    // tan(15 deg) * 3 < 1, so every ray hits the [-1,1]^2 quad.
    const GBuffer g = render_gbuffer(make_quad(), front_camera(9));
    CHECK(g.hit_count() == 81);
    CHECK(std::abs(g.positions(0, 4, 4)) <= 1e-9);
    CHECK(std::abs(g.positions(1, 4, 4)) <= 1e-9);
    CHECK(std::abs(g.positions(2, 4, 4)) <= 1e-9);
    CHECK(g.uv(0, 4, 4) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g.uv(1, 4, 4) == doctest::Approx(0.5).epsilon(1e-12));
    // Row 0 is the top of the image, which sees +y.
    CHECK(g.positions(1, 0, 4) > 0.0);
    CHECK(g.uv(1, 0, 4) > 0.5);
    CHECK(g.positions(0, 4, 0) < 0.0);
    // Analytic ray-plane intersection for pixel (2, 7).
    const Vec3 d = front_camera(9).ray_direction(2, 7);
    const double t = 3.0 / -d[2];
    CHECK(std::abs(g.positions(0, 2, 7) - t * d[0]) <= 1e-9);
    CHECK(std::abs(g.positions(1, 2, 7) - t * d[1]) <= 1e-9);
  }
  SUBCASE("camera looking away") {
    Camera c = front_camera(8);
    c.look_at = {0.0, 0.0, 6.0};
    const GBuffer g = render_gbuffer(make_quad(), c);
    CHECK(g.hit_count() == 0);
    CHECK(max_abs(g.positions) == 0.0);
    CHECK(max_abs(g.uv) == 0.0);
  }
  SUBCASE("nearest hit wins") {
    for (bool near_first : {true, false}) {
      TriangleMesh far_q = make_quad(0.0);
      TriangleMesh near_q = make_quad(0.5);
      near_q.uvs = {{0.1, 0.1}, {0.1, 0.1}, {0.1, 0.1}, {0.1, 0.1}};
      TriangleMesh& first = near_first ? near_q : far_q;
      TriangleMesh& second = near_first ? far_q : near_q;
      TriangleMesh m = first;
      for (const Vec3& v : second.vertices) m.vertices.push_back(v);
      for (const Vec2& t : second.uvs) m.uvs.push_back(t);
      for (Face f : second.faces) {
        for (int k = 0; k < 3; ++k) {
          f.v[k] += 4;
          f.vt[k] += 4;
        }
        m.faces.push_back(f);
      }
      const GBuffer g = render_gbuffer(m, front_camera(8));
      CHECK(g.hit_count() == 64);
      for (std::size_t i = 0; i < 64; ++i) {
        CHECK(g.uv[i] == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(g.positions[2 * 64 + i] == doctest::Approx(0.5).epsilon(1e-12));
      }
    }
  }
  SUBCASE("hits lie on their triangle") {
    const TriangleMesh m = make_torus();
    for (const Camera& c : orbit_cameras(24, 24, 4, {0.0, 30.0})) {
      const GBuffer g = render_gbuffer(m, c);
      CHECK(g.hit_count() > 0);
      for (std::size_t y = 0; y < 24; ++y) {
        for (std::size_t x = 0; x < 24; ++x) {
          const int f = g.face_index[y * 24 + x];
          if (f < 0) {
            CHECK(g.hit_mask(0, y, x) == 0.0);
            continue;
          }
          const Face& face = m.faces[f];
          const Vec3 p{g.positions(0, y, x), g.positions(1, y, x), g.positions(2, y, x)};
          const Bary b = barycentric(p, m.vertices[face.v[0]], m.vertices[face.v[1]],
                                     m.vertices[face.v[2]]);
          CHECK(b.plane_dist <= 1e-9);
          CHECK(b.b0 >= -1e-9);
          CHECK(b.b1 >= -1e-9);
          CHECK(b.b2 >= -1e-9);
          for (int k = 0; k < 3; ++k) CHECK(std::abs(p[k]) <= 1.0);
        }
      }
    }
  }
  SUBCASE("thread count does not change the output") {
    const TriangleMesh m = make_uv_sphere(10, 16);
    const Camera c = orbit_cameras(31, 29, 3)[1];
    const GBuffer a = render_gbuffer(m, c, 1);
    const GBuffer b = render_gbuffer(m, c, 4);
    CHECK(a.positions.bit_equal(b.positions));
    CHECK(a.uv.bit_equal(b.uv));
    CHECK(a.face_index == b.face_index);
  }
}

TEST_CASE("rasterize_uv on the quad") {
  const GBuffer g = rasterize_uv(make_quad(), 8, 6);
  CHECK(g.hit_count() == 48);
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 6; ++x) {
      const double u = (x + 0.5) / 6.0;
      const double v = 1.0 - (y + 0.5) / 8.0;
      CHECK(std::abs(g.positions(0, y, x) - (2.0 * u - 1.0)) <= 1e-12);
      CHECK(std::abs(g.positions(1, y, x) - (2.0 * v - 1.0)) <= 1e-12);
      CHECK(g.uv(1, y, x) == v);
    }
  }
}

TEST_CASE("sample_texture") {
  const Grid tex = fasd::testing::random_grid(Shape{3, 4, 5}, 3);
  SUBCASE("texel centers") {
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 5; ++c) {
        const auto v = sample_texture(tex, {(c + 0.5) / 5.0, 1.0 - (r + 0.5) / 4.0});
        for (std::size_t ch = 0; ch < 3; ++ch) {
          CHECK(v[ch] == doctest::Approx(tex(ch, r, c)).epsilon(1e-14));
        }
      }
    }
  }
  SUBCASE("midpoints average") {
    const auto h = sample_texture(tex, {2.0 / 5.0, 1.0 - 1.5 / 4.0});  // between cols 1, 2
    const auto v = sample_texture(tex, {0.5 / 5.0, 1.0 - 2.0 / 4.0});  // between rows 1, 2
    for (std::size_t ch = 0; ch < 3; ++ch) {
      CHECK(h[ch] == doctest::Approx(0.5 * (tex(ch, 1, 1) + tex(ch, 1, 2))).epsilon(1e-14));
      CHECK(v[ch] == doctest::Approx(0.5 * (tex(ch, 1, 0) + tex(ch, 2, 0))).epsilon(1e-14));
    }
  }
  SUBCASE("v points up, edges clamp") {
    const auto bl = sample_texture(tex, {0.0, 0.0});
    const auto tr = sample_texture(tex, {1.0, 1.0});
    for (std::size_t ch = 0; ch < 3; ++ch) {
      CHECK(bl[ch] == tex(ch, 3, 0));
      CHECK(tr[ch] == tex(ch, 0, 4));
    }
  }
  SUBCASE("constant texture") {
    const Grid c(3, 7, 3, 0.25);
    for (double u : {0.0, 0.13, 0.5, 0.99}) {
      for (double v : {0.0, 0.41, 1.0}) {
        for (double x : sample_texture(c, {u, v})) CHECK(x == 0.25);
      }
    }
  }
}

TEST_CASE("procedural meshes and default cameras") {
  const TriangleMesh s = make_uv_sphere();
  CHECK_NOTHROW(s.validate());
  for (const Vec3& v : s.vertices) {
    CHECK(std::abs(std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - 1.0) <= 1e-12);
  }
  const TriangleMesh t = make_torus();
  CHECK_NOTHROW(t.validate());
  const Bounds b = t.bounds();
  CHECK(b.hi[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b.hi[1] == doctest::Approx(0.3).epsilon(1e-12));

  const auto cams = orbit_cameras(16, 16);
  CHECK(cams.size() == 16);
  for (const Camera& c : cams) {
    CHECK_NOTHROW(c.validate());
    const double r = std::sqrt(c.position[0] * c.position[0] + c.position[1] * c.position[1] +
                               c.position[2] * c.position[2]);
    CHECK(r == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(render_gbuffer(s, c).hit_count() > 0);
  }
}
