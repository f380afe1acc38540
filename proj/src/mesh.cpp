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

#include "fasd/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

namespace fasd::mesh {
namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_real(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ObjParseError(line, "bad number '" + std::string(s) + "'");
  }
  return v;
}

// Resolves a 1-based or negative OBJ reference against `count` elements.
int resolve_index(std::string_view s, std::size_t count, std::size_t line,
                  const char* what) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v == 0) {
    throw ObjParseError(line, std::string("bad ") + what + " index '" + std::string(s) + "'");
  }
  const long n = static_cast<long>(count);
  const long idx = v > 0 ? v - 1 : n + v;
  if (idx < 0 || idx >= n) {
    throw ObjParseError(line, std::string(what) + " index " + std::to_string(v) +
                                  " out of range (have " + std::to_string(n) + ")");
  }
  return static_cast<int>(idx);
}

Vec3 lerp3(const Vec3& a, const Vec3& b, const Vec3& c, double b1, double b2) {
  const double b0 = 1.0 - b1 - b2;
  return {b0 * a[0] + b1 * b[0] + b2 * c[0], b0 * a[1] + b1 * b[1] + b2 * c[1],
          b0 * a[2] + b1 * b[2] + b2 * c[2]};
}

Vec2 lerp2(const Vec2& a, const Vec2& b, const Vec2& c, double b1, double b2) {
  const double b0 = 1.0 - b1 - b2;
  return {b0 * a[0] + b1 * b[0] + b2 * c[0], b0 * a[1] + b1 * b[1] + b2 * c[1]};
}

GBuffer empty_gbuffer(std::size_t h, std::size_t w) {
  GBuffer g;
  g.hit_mask = Grid(1, h, w);
  g.positions = Grid(3, h, w);
  g.uv = Grid(2, h, w);
  g.face_index.assign(h * w, -1);
  return g;
}

void write_hit(GBuffer& g, std::size_t y, std::size_t x, int face, const Vec3& p,
               const Vec2& uv) {
  g.hit_mask(0, y, x) = 1.0;
  for (std::size_t k = 0; k < 3; ++k) g.positions(k, y, x) = p[k];
  g.uv(0, y, x) = uv[0];
  g.uv(1, y, x) = uv[1];
  g.face_index[y * g.width() + x] = face;
}

}  // namespace

bool TriangleMesh::has_uvs() const {
  return !faces.empty() &&
         std::all_of(faces.begin(), faces.end(), [](const Face& f) { return f.vt[0] >= 0; });
}

Bounds TriangleMesh::bounds() const {
  if (vertices.empty()) throw MeshError("mesh has no vertices");
  Bounds b{vertices[0], vertices[0]};
  for (const Vec3& v : vertices) {
    for (int k = 0; k < 3; ++k) {
      b.lo[k] = std::min(b.lo[k], v[k]);
      b.hi[k] = std::max(b.hi[k], v[k]);
    }
  }
  return b;
}

void TriangleMesh::validate() const {
  if (faces.empty()) throw MeshError("mesh has no faces");
  const int nv = static_cast<int>(vertices.size());
  const int nt = static_cast<int>(uvs.size());
  for (std::size_t i = 0; i < faces.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      if (faces[i].v[k] < 0 || faces[i].v[k] >= nv) {
        throw MeshError("face " + std::to_string(i) + ": vertex index out of range");
      }
      if (faces[i].vt[k] >= nt || faces[i].vt[k] < -1) {
        throw MeshError("face " + std::to_string(i) + ": uv index out of range");
      }
    }
  }
  for (const Vec2& t : uvs) {
    if (!(t[0] >= 0.0 && t[0] <= 1.0 && t[1] >= 0.0 && t[1] <= 1.0)) {
      throw MeshError("texture coordinate outside [0,1]^2");
    }
  }
}

TriangleMesh parse_obj(std::string_view text, bool require_uvs) {
  TriangleMesh m;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "v") {
      if (tok.size() < 4 || tok.size() > 5) throw ObjParseError(line_no, "v needs 3 coordinates");
      m.vertices.push_back({parse_real(tok[1], line_no), parse_real(tok[2], line_no),
                            parse_real(tok[3], line_no)});
    } else if (tok[0] == "vt") {
      if (tok.size() < 3 || tok.size() > 4) throw ObjParseError(line_no, "vt needs 2 coordinates");
      const Vec2 t{parse_real(tok[1], line_no), parse_real(tok[2], line_no)};
      if (!(t[0] >= 0.0 && t[0] <= 1.0 && t[1] >= 0.0 && t[1] <= 1.0)) {
        throw ObjParseError(line_no, "texture coordinate outside [0,1]^2");
      }
      m.uvs.push_back(t);
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw ObjParseError(line_no, "face needs at least 3 vertices");
      std::vector<int> vi;
      std::vector<int> ti;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const std::string_view ref = tok[k];
        const auto s1 = ref.find('/');
        vi.push_back(resolve_index(ref.substr(0, s1), m.vertices.size(), line_no, "vertex"));
        int t = -1;
        if (s1 != std::string_view::npos) {
          const auto rest = ref.substr(s1 + 1);
          const auto s2 = rest.find('/');
          const auto vt = rest.substr(0, s2);
          if (!vt.empty()) t = resolve_index(vt, m.uvs.size(), line_no, "uv");
        }
        if (t < 0 && require_uvs) throw ObjParseError(line_no, "face vertex without uv");
        ti.push_back(t);
      }
      const bool any_uv = std::any_of(ti.begin(), ti.end(), [](int t) { return t >= 0; });
      const bool all_uv = std::all_of(ti.begin(), ti.end(), [](int t) { return t >= 0; });
      if (any_uv && !all_uv) throw ObjParseError(line_no, "face mixes vertices with and without uv");
      for (std::size_t k = 1; k + 1 < vi.size(); ++k) {
        Face f;
        f.v = {vi[0], vi[k], vi[k + 1]};
        f.vt = {ti[0], ti[k], ti[k + 1]};
        m.faces.push_back(f);
      }
    }
  }
  if (m.faces.empty()) throw MeshError("OBJ has no faces");
  return m;
}

TriangleMesh load_obj(const std::filesystem::path& path, bool require_uvs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_obj(ss.str(), require_uvs);
}

TriangleMesh normalize_mesh(const TriangleMesh& mesh) {
  const Bounds b = mesh.bounds();
  double half = 0.0;
  Vec3 center{};
  for (int k = 0; k < 3; ++k) {
    center[k] = 0.5 * (b.lo[k] + b.hi[k]);
    half = std::max(half, 0.5 * (b.hi[k] - b.lo[k]));
  }
  if (!(half > 0.0)) throw MeshError("cannot normalize a zero-extent mesh");
  TriangleMesh out = mesh;
  for (Vec3& v : out.vertices) {
    for (int k = 0; k < 3; ++k) {
      v[k] = std::clamp((v[k] - center[k]) / half, -1.0, 1.0);
    }
  }
  return out;
}

void Camera::validate() const {
  const Vec3 f = sub(look_at, position);
  if (!(norm(f) > 0.0)) throw MeshError("camera position equals look-at");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw MeshError("camera fov must be in (0, 180)");
  if (!(norm(cross(f, up)) > 1e-12 * norm(f) * norm(up))) {
    throw MeshError("camera up vector is parallel to the view direction");
  }
  if (height == 0 || width == 0) throw MeshError("camera resolution must be positive");
}

Vec3 Camera::ray_direction(std::size_t row, std::size_t col) const {
  const Vec3 forward = normalized(sub(look_at, position));
  const Vec3 right = normalized(cross(forward, up));
  const Vec3 true_up = cross(right, forward);
  const double tan_half = std::tan(fov_deg * std::numbers::pi / 360.0);
  const double aspect = static_cast<double>(width) / static_cast<double>(height);
  const double sx = ((col + 0.5) / width * 2.0 - 1.0) * tan_half * aspect;
  const double sy = (1.0 - (row + 0.5) / height * 2.0) * tan_half;
  return normalized({forward[0] + sx * right[0] + sy * true_up[0],
                     forward[1] + sx * right[1] + sy * true_up[1],
                     forward[2] + sx * right[2] + sy * true_up[2]});
}

std::size_t GBuffer::hit_count() const {
  std::size_t n = 0;
  for (double v : hit_mask.data()) n += v > 0.0;
  return n;
}

bool intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                        const Vec3& b, const Vec3& c, Hit& hit) {
  const Vec3 e1 = sub(b, a);
  const Vec3 e2 = sub(c, a);
  const Vec3 p = cross(dir, e2);
  const double det = dot(e1, p);
  if (std::abs(det) < kIntersectEps) return false;
  const double inv = 1.0 / det;
  const Vec3 s = sub(origin, a);
  const double u = dot(s, p) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 q = cross(s, e1);
  const double v = dot(dir, q) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = dot(e2, q) * inv;
  if (t <= kIntersectEps) return false;
  hit = {t, u, v};
  return true;
}

GBuffer render_gbuffer(const TriangleMesh& mesh, const Camera& camera, int threads) {
  mesh.validate();
  camera.validate();
  const std::size_t h = camera.height;
  const std::size_t w = camera.width;
  GBuffer g = empty_gbuffer(h, w);
  const bool uvs = mesh.has_uvs();

  auto render_rows = [&](std::size_t row_begin, std::size_t row_end) {
    for (std::size_t y = row_begin; y < row_end; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const Vec3 dir = camera.ray_direction(y, x);
        Hit best{std::numeric_limits<double>::infinity(), 0.0, 0.0};
        int best_face = -1;
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
          const Face& face = mesh.faces[f];
          Hit hit;
          if (intersect_triangle(camera.position, dir, mesh.vertices[face.v[0]],
                                 mesh.vertices[face.v[1]], mesh.vertices[face.v[2]], hit) &&
              hit.t < best.t) {
            best = hit;
            best_face = static_cast<int>(f);
          }
        }
        if (best_face < 0) continue;
        const Face& face = mesh.faces[best_face];
        const Vec3 p = lerp3(mesh.vertices[face.v[0]], mesh.vertices[face.v[1]],
                             mesh.vertices[face.v[2]], best.b1, best.b2);
        Vec2 uv{0.0, 0.0};
        if (uvs) {
          uv = lerp2(mesh.uvs[face.vt[0]], mesh.uvs[face.vt[1]], mesh.uvs[face.vt[2]],
                     best.b1, best.b2);
        }
        write_hit(g, y, x, best_face, p, uv);
      }
    }
  };

  const std::size_t n = std::clamp<std::size_t>(threads < 1 ? 1 : threads, 1, h);
  if (n == 1) {
    render_rows(0, h);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) {
      pool.emplace_back(render_rows, h * i / n, h * (i + 1) / n);
    }
    for (auto& t : pool) t.join();
  }
  return g;
}

GBuffer rasterize_uv(const TriangleMesh& mesh, std::size_t height, std::size_t width) {
  mesh.validate();
  if (!mesh.has_uvs()) throw MeshError("rasterize_uv needs texture coordinates");
  GBuffer g = empty_gbuffer(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      const double v = 1.0 - (y + 0.5) / height;
      for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& face = mesh.faces[f];
        const Vec2& a = mesh.uvs[face.vt[0]];
        const Vec2& b = mesh.uvs[face.vt[1]];
        const Vec2& c = mesh.uvs[face.vt[2]];
        const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if (std::abs(det) < kIntersectEps * kIntersectEps) continue;
        const double b1 = ((u - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (v - a[1])) / det;
        const double b2 = ((b[0] - a[0]) * (v - a[1]) - (u - a[0]) * (b[1] - a[1])) / det;
        const double tol = 1e-12;
        if (b1 < -tol || b2 < -tol || b1 + b2 > 1.0 + tol) continue;
        const Vec3 p = lerp3(mesh.vertices[face.v[0]], mesh.vertices[face.v[1]],
                             mesh.vertices[face.v[2]], b1, b2);
        write_hit(g, y, x, static_cast<int>(f), p, {u, v});
        break;
      }
    }
  }
  return g;
}

std::vector<double> sample_texture(const Grid& texture, const Vec2& uv) {
  const std::size_t h = texture.height();
  const std::size_t w = texture.width();
  const double fx = std::clamp(uv[0] * w - 0.5, 0.0, static_cast<double>(w - 1));
  const double fy = std::clamp((1.0 - uv[1]) * h - 0.5, 0.0, static_cast<double>(h - 1));
  const std::size_t x0 = static_cast<std::size_t>(std::floor(fx));
  const std::size_t y0 = static_cast<std::size_t>(std::floor(fy));
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const double tx = fx - x0;
  const double ty = fy - y0;
  std::vector<double> out(texture.channels());
  for (std::size_t c = 0; c < texture.channels(); ++c) {
    const double top = (1.0 - tx) * texture(c, y0, x0) + tx * texture(c, y0, x1);
    const double bot = (1.0 - tx) * texture(c, y1, x0) + tx * texture(c, y1, x1);
    out[c] = (1.0 - ty) * top + ty * bot;
  }
  return out;
}

TriangleMesh make_quad(double z) {
  TriangleMesh m;
  m.vertices = {{-1.0, -1.0, z}, {1.0, -1.0, z}, {1.0, 1.0, z}, {-1.0, 1.0, z}};
  m.uvs = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
  m.faces = {Face{{0, 1, 2}, {0, 1, 2}}, Face{{0, 2, 3}, {0, 2, 3}}};
  return m;
}

TriangleMesh make_uv_sphere(int stacks, int slices) {
  if (stacks < 2 || slices < 3) throw MeshError("sphere needs stacks >= 2, slices >= 3");
  TriangleMesh m;
  const double pi = std::numbers::pi;
  for (int i = 0; i <= stacks; ++i) {
    const double theta = pi * i / stacks;
    for (int j = 0; j <= slices; ++j) {
      const double phi = 2.0 * pi * j / slices;
      m.vertices.push_back(
          {std::sin(theta) * std::cos(phi), std::cos(theta), std::sin(theta) * std::sin(phi)});
      m.uvs.push_back({static_cast<double>(j) / slices, 1.0 - static_cast<double>(i) / stacks});
    }
  }
  const int row = slices + 1;
  for (int i = 0; i < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      const int a = i * row + j;
      const int b = a + 1;
      const int c = a + row;
      const int d = c + 1;
      if (i != 0) m.faces.push_back(Face{{a, c, b}, {a, c, b}});
      if (i != stacks - 1) m.faces.push_back(Face{{b, c, d}, {b, c, d}});
    }
  }
  return m;
}

TriangleMesh make_torus(double major, double minor, int rings, int sides) {
  if (rings < 3 || sides < 3 || !(major > minor && minor > 0.0)) {
    throw MeshError("torus needs rings, sides >= 3 and major > minor > 0");
  }
  TriangleMesh m;
  const double pi = std::numbers::pi;
  for (int i = 0; i <= rings; ++i) {
    const double phi = 2.0 * pi * i / rings;
    for (int j = 0; j <= sides; ++j) {
      const double psi = 2.0 * pi * j / sides;
      const double r = major + minor * std::cos(psi);
      m.vertices.push_back({r * std::cos(phi), minor * std::sin(psi), r * std::sin(phi)});
      m.uvs.push_back({static_cast<double>(i) / rings, static_cast<double>(j) / sides});
    }
  }
  const int row = sides + 1;
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < sides; ++j) {
      const int a = i * row + j;
      const int b = a + 1;
      const int c = a + row;
      const int d = c + 1;
      m.faces.push_back(Face{{a, c, b}, {a, c, b}});
      m.faces.push_back(Face{{b, c, d}, {b, c, d}});
    }
  }
  return m;
}

std::vector<Camera> orbit_cameras(std::size_t height, std::size_t width, int azimuths,
                                  const std::vector<double>& elevations_deg, double radius,
                                  double fov_deg) {
  if (azimuths < 1 || elevations_deg.empty()) throw MeshError("orbit needs cameras");
  std::vector<Camera> out;
  const double deg = std::numbers::pi / 180.0;
  for (double el : elevations_deg) {
    if (!(std::abs(el) < 90.0)) throw MeshError("orbit elevation must be in (-90, 90)");
    for (int a = 0; a < azimuths; ++a) {
      const double az = 2.0 * std::numbers::pi * a / azimuths;
      Camera cam;
      cam.position = {radius * std::cos(el * deg) * std::sin(az), radius * std::sin(el * deg),
                      radius * std::cos(el * deg) * std::cos(az)};
      cam.fov_deg = fov_deg;
      cam.height = height;
      cam.width = width;
      out.push_back(cam);
    }
  }
  return out;
}

}  // namespace fasd::mesh
