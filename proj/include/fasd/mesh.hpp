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
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fasd/grid.hpp"

namespace fasd::mesh {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;

class MeshError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed OBJ input; what() names the 1-based line.
class ObjParseError : public MeshError {
 public:
  ObjParseError(std::size_t line, const std::string& message)
      : MeshError("OBJ line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Face {
  std::array<int, 3> v{};
  /// -1 when the face carries no texture coordinates.
  std::array<int, 3> vt{-1, -1, -1};
};

struct Bounds {
  Vec3 lo{};
  Vec3 hi{};
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec2> uvs;
  std::vector<Face> faces;

  bool has_uvs() const;
  Bounds bounds() const;
  /// Index ranges, at least one face, uvs within [0,1]^2.
  void validate() const;
};

/// OBJ subset: v, vt and f (v, v/vt, v/vt/vn or v//vn references, 1-based or
/// negative). Polygons are fan-triangulated around their first vertex. Other
/// statements are ignored.
TriangleMesh parse_obj(std::string_view text, bool require_uvs = true);
TriangleMesh load_obj(const std::filesystem::path& path, bool require_uvs = true);

/// Uniform scale and translation putting the bounding-box center at the
/// origin with the largest half-extent equal to 1.
TriangleMesh normalize_mesh(const TriangleMesh& mesh);

struct Camera {
  Vec3 position{0.0, 0.0, 3.0};
  Vec3 look_at{0.0, 0.0, 0.0};
  Vec3 up{0.0, 1.0, 0.0};
  /// Vertical field of view in degrees.
  double fov_deg = 40.0;
  std::size_t height = 64;
  std::size_t width = 64;

  void validate() const;
  /// Unit ray direction through the center of pixel (row, col); row 0 is the
  /// top of the image.
  Vec3 ray_direction(std::size_t row, std::size_t col) const;
};

struct GBuffer {
  Grid hit_mask;   // 1 x H x W, 0 or 1
  Grid positions;  // 3 x H x W, zero on misses
  Grid uv;         // 2 x H x W, zero on misses
  std::vector<int> face_index;  // H*W, -1 on misses

  std::size_t height() const { return hit_mask.height(); }
  std::size_t width() const { return hit_mask.width(); }
  std::size_t hit_count() const;
};

struct Hit {
  double t = 0.0;
  double b1 = 0.0;  // barycentric weight of vertex 1
  double b2 = 0.0;  // barycentric weight of vertex 2
};

inline constexpr double kIntersectEps = 1e-9;

/// Moller-Trumbore, two-sided. Returns false for |det| < 1e-9 or t <= 1e-9.
bool intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                        const Vec3& b, const Vec3& c, Hit& hit);

/// One ray per pixel center, nearest hit over all faces (linear scan).
/// Rows are split across `threads` workers; the output does not depend on
/// the thread count.
GBuffer render_gbuffer(const TriangleMesh& mesh, const Camera& camera, int threads = 1);

/// Texture-space rasterization: for each texel center of an H x W map, the
/// surface position whose UV equals it (first face in order wins). Row 0 is
/// v = 1. Used for baking.
GBuffer rasterize_uv(const TriangleMesh& mesh, std::size_t height, std::size_t width);

/// Bilinear, clamp-to-edge lookup in a C x H x W texture. Texel (row r,
/// col c) has its center at u = (c + 0.5)/W, v = 1 - (r + 0.5)/H, so v
/// points up and uv (0,0) is the bottom-left corner.
std::vector<double> sample_texture(const Grid& texture, const Vec2& uv);

/// [-1,1]^2 quad in the z = 0 plane facing +z, uv (0,0) at (-1,-1).
TriangleMesh make_quad(double z = 0.0);
/// Unit UV sphere; u follows longitude, v = 1 at the +y pole.
TriangleMesh make_uv_sphere(int stacks = 16, int slices = 32);
/// Torus around the y axis with the given radii (defaults fit [-1,1]).
TriangleMesh make_torus(double major = 0.7, double minor = 0.3, int rings = 32,
                        int sides = 16);

/// Cameras on a sphere of `radius` around the origin looking at it: every
/// azimuth (evenly spaced from 0) at every elevation (degrees).
std::vector<Camera> orbit_cameras(std::size_t height, std::size_t width,
                                  int azimuths = 8,
                                  const std::vector<double>& elevations_deg = {0.0, 30.0},
                                  double radius = 3.0, double fov_deg = 40.0);

}  // namespace fasd::mesh
