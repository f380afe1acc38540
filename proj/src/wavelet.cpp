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

#include "fasd/wavelet.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace fasd::wavelet {
namespace {

using cplx = std::complex<double>;

// dec_lo for db1..db8, extremal phase. Cross-check only; the solver is the
// source of the coefficients actually used.
constexpr double kDb1[] = {0.7071067811865476, 0.7071067811865476};
constexpr double kDb2[] = {-0.12940952255126037, 0.2241438680420134,
                           0.8365163037378079, 0.48296291314453416};
constexpr double kDb3[] = {0.03522629188570953,  -0.08544127388202666,
                           -0.13501102001025458, 0.45987750211849154,
                           0.8068915093110925,   0.33267055295008263};
constexpr double kDb4[] = {-0.010597401785069032, 0.0328830116668852,
                           0.030841381835560764,  -0.18703481171909309,
                           -0.027983769416859854, 0.6308807679298589,
                           0.7148465705529157,    0.2303778133088965};
constexpr double kDb5[] = {0.0033357252854737712, -0.012580751999081999,
                           -0.006241490212798274, 0.07757149384004572,
                           -0.032244869584638375, -0.24229488706638203,
                           0.13842814590132074,   0.7243085284377729,
                           0.6038292697971896,    0.16010239797419293};
constexpr double kDb6[] = {-0.0010773010853084796, 0.004777257510945511,
                           0.0005538422011614961,  -0.03158203931748603,
                           0.027522865530305727,   0.09750160558732304,
                           -0.12976686756726194,   -0.22626469396543983,
                           0.31525035170919763,    0.7511339080210954,
                           0.49462389039845306,    0.11154074335010947};
constexpr double kDb7[] = {0.00035371379997452024, -0.0018016407040474908,
                           0.0004295779729213665,  0.01255099855609984,
                           -0.01657454163066688,   -0.03802993693501441,
                           0.08061260915108308,    0.07130921926683026,
                           -0.22403618499387498,   -0.14390600392856498,
                           0.4697822874051931,     0.7291320908462351,
                           0.3965393194819173,     0.07785205408500918};
constexpr double kDb8[] = {-0.00011747678412476953, 0.0006754494064505693,
                           -0.00039174037337694705, -0.004870352993451574,
                           0.008746094047405777,    0.013981027917398282,
                           -0.044088253930794755,   -0.017369301001807547,
                           0.12874742662047847,     0.0004724845739132828,
                           -0.2840155429615469,     -0.015829105256349306,
                           0.5853546836542067,      0.6756307362972898,
                           0.31287159091429995,     0.05441584224310401};

void require_index(int p) {
  if (p < kMinIndex || p > kMaxIndex) {
    throw std::out_of_range("Daubechies index must be in [1, 8], got " +
                            std::to_string(p));
  }
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Roots of sum_k c[k] y^k by Aberth-Ehrlich iteration.
std::vector<cplx> polynomial_roots(const std::vector<double>& c) {
  const int n = static_cast<int>(c.size()) - 1;
  std::vector<cplx> roots;
  if (n < 1) return roots;

  auto eval = [&](cplx y, cplx& dp) {
    cplx p = c[n];
    dp = 0.0;
    for (int k = n - 1; k >= 0; --k) {
      dp = dp * y + p;
      p = p * y + c[k];
    }
    return p;
  };

  // Starting points on a circle of the Cauchy-bound radius.
  double bound = 0.0;
  for (int k = 0; k < n; ++k) bound = std::max(bound, std::abs(c[k] / c[n]));
  const double radius = 1.0 + bound;
  for (int k = 0; k < n; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / n + 0.4;
    roots.push_back(std::polar(radius * 0.5, angle));
  }

  for (int iter = 0; iter < 500; ++iter) {
    double max_step = 0.0;
    for (int i = 0; i < n; ++i) {
      cplx dp;
      const cplx p = eval(roots[i], dp);
      if (p == cplx(0.0)) continue;
      const cplx ratio = p / dp;
      cplx repulsion = 0.0;
      for (int j = 0; j < n; ++j) {
        if (j != i) repulsion += 1.0 / (roots[i] - roots[j]);
      }
      const cplx step = ratio / (1.0 - ratio * repulsion);
      roots[i] -= step;
      max_step = std::max(max_step, std::abs(step));
    }
    if (max_step < 1e-16) break;
  }
  // Newton polish.
  for (auto& r : roots) {
    for (int iter = 0; iter < 3; ++iter) {
      cplx dp;
      const cplx p = eval(r, dp);
      if (dp != cplx(0.0)) r -= p / dp;
    }
  }
  return roots;
}

// Multiplies the descending-power polynomial `poly` by (z - root).
void multiply_linear(std::vector<cplx>& poly, cplx root) {
  poly.push_back(0.0);
  for (std::size_t i = poly.size() - 1; i > 0; --i) {
    poly[i] -= root * poly[i - 1];
  }
}

std::size_t wrap(long i, std::size_t n) {
  const long m = static_cast<long>(n);
  long r = i % m;
  return static_cast<std::size_t>(r < 0 ? r + m : r);
}

// The line kernels below run `vlen` lines side by side: element i of line
// v is at base[i * stride + v]. Every output accumulates its taps in the
// same order whatever the layout.

// lo[k] = sum_i dec_lo[i] x[(2k+i) mod N], likewise hi.
void analyze_lines(const double* in, std::size_t n, std::size_t stride, std::size_t vlen,
                   const WaveletFilter& f, double* lo, double* hi, std::size_t ostride) {
  const std::size_t len = f.length();
  for (std::size_t k = 0; k < n / 2; ++k) {
    double* a = lo + k * ostride;
    double* d = hi + k * ostride;
    std::fill(a, a + vlen, 0.0);
    std::fill(d, d + vlen, 0.0);
    std::size_t m = (2 * k) % n;
    for (std::size_t i = 0; i < len; ++i) {
      const double* v = in + m * stride;
      const double cl = f.dec_lo[i];
      const double ch = f.dec_hi[i];
      for (std::size_t x = 0; x < vlen; ++x) {
        a[x] += cl * v[x];
        d[x] += ch * v[x];
      }
      if (++m == n) m = 0;
    }
  }
}

// Transpose of synthesize_lines:
// lo[k] = sum_j rec_lo[j] in[(2k + L - 1 - j) mod N], likewise hi.
void synthesize_lines_adjoint(const double* in, std::size_t n, std::size_t stride,
                              std::size_t vlen, const WaveletFilter& f, double* lo,
                              double* hi, std::size_t ostride) {
  const long len = static_cast<long>(f.length());
  for (std::size_t k = 0; k < n / 2; ++k) {
    double* a = lo + k * ostride;
    double* d = hi + k * ostride;
    std::fill(a, a + vlen, 0.0);
    std::fill(d, d + vlen, 0.0);
    std::size_t m = wrap(static_cast<long>(2 * k) + len - 1, n);
    for (long j = 0; j < len; ++j) {
      const double* v = in + m * stride;
      const double cl = f.rec_lo[j];
      const double ch = f.rec_hi[j];
      for (std::size_t x = 0; x < vlen; ++x) {
        a[x] += cl * v[x];
        d[x] += ch * v[x];
      }
      m = m == 0 ? n - 1 : m - 1;
    }
  }
}

// out[t] = sum_j rec_lo[j] up(lo)[(t - L + 1 + j) mod N] + same for hi,
// where up() inserts zeros at odd positions, so only taps landing on even
// positions contribute.
void synthesize_lines(const double* lo, const double* hi, std::size_t half,
                      std::size_t stride, std::size_t vlen, const WaveletFilter& f,
                      double* out, std::size_t ostride) {
  const std::size_t n = 2 * half;
  const long len = static_cast<long>(f.length());
  for (std::size_t t = 0; t < n; ++t) {
    double* acc = out + t * ostride;
    std::fill(acc, acc + vlen, 0.0);
    std::size_t m = wrap(static_cast<long>(t) - len + 1, n);
    long j = 0;
    if (m % 2 != 0) {
      j = 1;
      if (++m == n) m = 0;
    }
    for (; j < len; j += 2) {
      const double* l = lo + (m / 2) * stride;
      const double* h = hi + (m / 2) * stride;
      const double cl = f.rec_lo[j];
      const double ch = f.rec_hi[j];
      for (std::size_t x = 0; x < vlen; ++x) acc[x] += cl * l[x] + ch * h[x];
      m += 2;
      if (m >= n) m -= n;
    }
  }
}

enum class Axis { kX, kY };

using SplitKernel = void (*)(const double*, std::size_t, std::size_t, std::size_t,
                             const WaveletFilter&, double*, double*, std::size_t);

// Applies a line kernel that halves `axis`, returning (lo, hi). Rows are
// contiguous, so the y pass runs all columns of a channel together.
std::pair<Grid, Grid> split_axis(const Grid& in, Axis axis,
                                 const WaveletFilter& f, SplitKernel kernel) {
  const std::size_t c_n = in.channels();
  const std::size_t h = in.height();
  const std::size_t w = in.width();
  const Shape half = axis == Axis::kX ? Shape{c_n, h, w / 2}
                                      : Shape{c_n, h / 2, w};
  Grid lo(half);
  Grid hi(half);
  const double* src = in.data().data();
  double* lo_p = lo.data().data();
  double* hi_p = hi.data().data();
  for (std::size_t c = 0; c < c_n; ++c) {
    if (axis == Axis::kX) {
      for (std::size_t l = 0; l < h; ++l) {
        const std::size_t row = c * h + l;
        kernel(src + row * w, w, 1, 1, f, lo_p + row * (w / 2), hi_p + row * (w / 2), 1);
      }
    } else {
      const std::size_t off = c * h * w;
      const std::size_t ooff = c * (h / 2) * w;
      kernel(src + off, h, w, w, f, lo_p + ooff, hi_p + ooff, w);
    }
  }
  return {std::move(lo), std::move(hi)};
}

Grid merge_axis(const Grid& lo, const Grid& hi, Axis axis,
                const WaveletFilter& f) {
  const std::size_t c_n = lo.channels();
  const std::size_t h = lo.height();
  const std::size_t w = lo.width();
  Grid out(axis == Axis::kX ? Shape{c_n, h, 2 * w} : Shape{c_n, 2 * h, w});
  const double* lo_p = lo.data().data();
  const double* hi_p = hi.data().data();
  double* dst = out.data().data();
  for (std::size_t c = 0; c < c_n; ++c) {
    if (axis == Axis::kX) {
      for (std::size_t l = 0; l < h; ++l) {
        const std::size_t row = c * h + l;
        synthesize_lines(lo_p + row * w, hi_p + row * w, w, 1, 1, f, dst + row * 2 * w, 1);
      }
    } else {
      const std::size_t off = c * h * w;
      synthesize_lines(lo_p + off, hi_p + off, h, w, w, f, dst + 2 * off, w);
    }
  }
  return out;
}

void require_even(const Shape& s, const char* what) {
  if (s.height % 2 != 0 || s.width % 2 != 0) {
    throw ShapeError(std::string(what) + ": height and width must be even, got " +
                     s.str());
  }
}

Quad synthesis_adjoint_level(const Grid& g, const WaveletFilter& f) {
  require_even(g.shape(), "waverec2_adjoint");
  // Synthesis merges y first, then x; the transpose splits x first.
  auto [lx, hx] = split_axis(g, Axis::kX, f, &synthesize_lines_adjoint);
  auto [ll, lh] = split_axis(lx, Axis::kY, f, &synthesize_lines_adjoint);
  auto [hl, hh] = split_axis(hx, Axis::kY, f, &synthesize_lines_adjoint);
  return Quad{std::move(ll), std::move(hl), std::move(lh), std::move(hh)};
}

}  // namespace

WaveletFilter solve_daubechies(int p) {
  require_index(p);
  // |Q(e^iw)|^2 = P(sin^2(w/2)), P(y) = sum_{k<p} C(p-1+k, k) y^k.
  std::vector<double> coeffs(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) coeffs[k] = binomial(p - 1 + k, k);

  std::vector<cplx> poly = {1.0};
  for (int k = 0; k < p; ++k) multiply_linear(poly, -1.0);  // (z + 1)^p
  for (const cplx& y : polynomial_roots(coeffs)) {
    // y = (2 - z - 1/z) / 4  =>  z^2 - (2 - 4y) z + 1 = 0; keep |z| < 1.
    const cplx b = 2.0 - 4.0 * y;
    const cplx disc = std::sqrt(b * b - 4.0);
    const cplx z1 = (b + disc) / 2.0;
    const cplx z2 = (b - disc) / 2.0;
    multiply_linear(poly, std::abs(z1) < std::abs(z2) ? z1 : z2);
  }

  const std::size_t len = 2 * static_cast<std::size_t>(p);
  std::vector<double> rec_lo(len);
  double sum = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    rec_lo[i] = poly[i].real();
    sum += rec_lo[i];
  }
  for (double& v : rec_lo) v *= std::numbers::sqrt2 / sum;

  WaveletFilter f;
  f.index = p;
  f.rec_lo = rec_lo;
  f.dec_lo.assign(rec_lo.rbegin(), rec_lo.rend());
  f.dec_hi.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    f.dec_hi[i] = sign * f.dec_lo[len - 1 - i];
  }
  f.rec_hi.assign(f.dec_hi.rbegin(), f.dec_hi.rend());
  return f;
}

std::span<const double> reference_dec_lo(int p) {
  require_index(p);
  switch (p) {
    case 1: return kDb1;
    case 2: return kDb2;
    case 3: return kDb3;
    case 4: return kDb4;
    case 5: return kDb5;
    case 6: return kDb6;
    case 7: return kDb7;
    default: return kDb8;
  }
}

const WaveletFilter& daubechies_filters(int p) {
  require_index(p);
  static std::array<WaveletFilter, kMaxIndex> cache;
  static std::once_flag once;
  std::call_once(once, [] {
    for (int q = kMinIndex; q <= kMaxIndex; ++q) {
      WaveletFilter f = solve_daubechies(q);
      const auto ref = reference_dec_lo(q);
      for (std::size_t i = 0; i < ref.size(); ++i) {
        if (std::abs(f.dec_lo[i] - ref[i]) > 1e-12) {
          throw std::logic_error("Daubechies solver disagrees with table for p=" +
                                 std::to_string(q));
        }
      }
      cache[q - 1] = std::move(f);
    }
  });
  return cache[p - 1];
}

std::string to_string(Orientation o) {
  switch (o) {
    case Orientation::kHL: return "HL";
    case Orientation::kLH: return "LH";
    case Orientation::kHH: return "HH";
  }
  return "?";
}

Grid& DetailLevel::band(Orientation o) {
  switch (o) {
    case Orientation::kHL: return hl;
    case Orientation::kLH: return lh;
    default: return hh;
  }
}

const Grid& DetailLevel::band(Orientation o) const {
  switch (o) {
    case Orientation::kHL: return hl;
    case Orientation::kLH: return lh;
    default: return hh;
  }
}

std::size_t Subbands2D::coefficient_count() const {
  std::size_t n = low.size();
  for (const auto& d : details) n += d.hl.size() + d.lh.size() + d.hh.size();
  return n;
}

Grid& Subbands2D::band(std::size_t index) {
  if (index == 0) return low;
  const std::size_t j = (index - 1) / 3;
  return details.at(j).band(kOrientations[(index - 1) % 3]);
}

const Grid& Subbands2D::band(std::size_t index) const {
  if (index == 0) return low;
  const std::size_t j = (index - 1) / 3;
  return details.at(j).band(kOrientations[(index - 1) % 3]);
}

std::string Subbands2D::band_name(std::size_t index) const {
  if (index == 0) return "low";
  return "L" + std::to_string((index - 1) / 3 + 1) + "/" +
         to_string(kOrientations[(index - 1) % 3]);
}

bool Subbands2D::bit_equal(const Subbands2D& other) const {
  if (filter_index != other.filter_index) return false;
  if (details.size() != other.details.size()) return false;
  if (!low.bit_equal(other.low)) return false;
  for (std::size_t j = 0; j < details.size(); ++j) {
    for (Orientation o : kOrientations) {
      if (!details[j].band(o).bit_equal(other.details[j].band(o))) return false;
    }
  }
  return true;
}

void Subbands2D::validate() const {
  if (details.empty()) throw ShapeError("subbands: level count must be >= 1");
  const Shape ls = low.shape();
  for (std::size_t j = 0; j < details.size(); ++j) {
    const std::size_t scale = std::size_t{1} << (details.size() - 1 - j);
    const Shape expect{ls.channels, ls.height * scale, ls.width * scale};
    for (Orientation o : kOrientations) {
      if (details[j].band(o).shape() != expect) {
        throw ShapeError("subbands: level " + std::to_string(j + 1) + " " +
                         to_string(o) + " has shape " +
                         details[j].band(o).shape().str() + ", expected " +
                         expect.str());
      }
    }
  }
}

Shape Subbands2D::signal_shape() const {
  const std::size_t scale = std::size_t{1} << details.size();
  return Shape{low.channels(), low.height() * scale, low.width() * scale};
}

Subbands2D Subbands2D::zeros_like(const Subbands2D& like) {
  Subbands2D z;
  z.filter_index = like.filter_index;
  z.low = Grid(like.low.shape());
  for (const auto& d : like.details) {
    z.details.push_back(
        {Grid(d.hl.shape()), Grid(d.lh.shape()), Grid(d.hh.shape())});
  }
  return z;
}

Subbands2D& Subbands2D::operator+=(const Subbands2D& other) {
  if (details.size() != other.details.size()) {
    throw ShapeError("subbands +=: level count mismatch");
  }
  low += other.low;
  for (std::size_t j = 0; j < details.size(); ++j) {
    for (Orientation o : kOrientations) {
      details[j].band(o) += other.details[j].band(o);
    }
  }
  return *this;
}

Subbands2D& Subbands2D::operator*=(double s) {
  low *= s;
  for (auto& d : details) {
    for (Orientation o : kOrientations) d.band(o) *= s;
  }
  return *this;
}

double inner_product(const Subbands2D& a, const Subbands2D& b) {
  if (a.details.size() != b.details.size()) {
    throw ShapeError("subbands inner_product: level count mismatch");
  }
  double acc = fasd::inner_product(a.low, b.low);
  for (std::size_t j = 0; j < a.details.size(); ++j) {
    for (Orientation o : kOrientations) {
      acc += fasd::inner_product(a.details[j].band(o), b.details[j].band(o));
    }
  }
  return acc;
}

double squared_norm(const Subbands2D& s) { return inner_product(s, s); }

double max_abs_diff(const Subbands2D& a, const Subbands2D& b) {
  if (a.details.size() != b.details.size()) {
    throw ShapeError("subbands max_abs_diff: level count mismatch");
  }
  double m = fasd::max_abs_diff(a.low, b.low);
  for (std::size_t j = 0; j < a.details.size(); ++j) {
    for (Orientation o : kOrientations) {
      m = std::max(m, fasd::max_abs_diff(a.details[j].band(o),
                                         b.details[j].band(o)));
    }
  }
  return m;
}

Quad dwt2(const Grid& x, const WaveletFilter& f) {
  require_even(x.shape(), "dwt2");
  auto [lx, hx] = split_axis(x, Axis::kX, f, &analyze_lines);
  auto [ll, lh] = split_axis(lx, Axis::kY, f, &analyze_lines);
  auto [hl, hh] = split_axis(hx, Axis::kY, f, &analyze_lines);
  return Quad{std::move(ll), std::move(hl), std::move(lh), std::move(hh)};
}

Grid idwt2(const Quad& q, const WaveletFilter& f) {
  const Shape s = q.ll.shape();
  if (q.hl.shape() != s || q.lh.shape() != s || q.hh.shape() != s) {
    throw ShapeError("idwt2: subband shapes differ (" + s.str() + ", " +
                     q.hl.shape().str() + ", " + q.lh.shape().str() + ", " +
                     q.hh.shape().str() + ")");
  }
  const Grid lx = merge_axis(q.ll, q.lh, Axis::kY, f);
  const Grid hx = merge_axis(q.hl, q.hh, Axis::kY, f);
  return merge_axis(lx, hx, Axis::kX, f);
}

void require_decomposable(const Shape& shape, int levels) {
  if (levels < 1) {
    throw ShapeError("decomposition level must be >= 1, got " +
                     std::to_string(levels));
  }
  if (levels >= 31) throw ShapeError("decomposition level too large");
  const std::size_t block = std::size_t{1} << levels;
  if (shape.height % block != 0 || shape.width % block != 0) {
    throw ShapeError("shape " + shape.str() + " is not divisible by 2^" +
                     std::to_string(levels));
  }
}

Subbands2D wavedec2(const Grid& x, const WaveletFilter& f, int levels) {
  require_decomposable(x.shape(), levels);
  Subbands2D s;
  s.filter_index = f.index;
  Grid current = x;
  for (int j = 0; j < levels; ++j) {
    Quad q = dwt2(current, f);
    s.details.push_back({std::move(q.hl), std::move(q.lh), std::move(q.hh)});
    current = std::move(q.ll);
  }
  s.low = std::move(current);
  return s;
}

Grid waverec2(const Subbands2D& s, const WaveletFilter& f) {
  s.validate();
  Grid current = s.low;
  for (std::size_t j = s.details.size(); j-- > 0;) {
    const DetailLevel& d = s.details[j];
    current = idwt2(Quad{std::move(current), d.hl, d.lh, d.hh}, f);
  }
  return current;
}

Subbands2D waverec2_adjoint(const Grid& g, const WaveletFilter& f,
                            int levels) {
  require_decomposable(g.shape(), levels);
  Subbands2D s;
  s.filter_index = f.index;
  Grid current = g;
  for (int j = 0; j < levels; ++j) {
    Quad q = synthesis_adjoint_level(current, f);
    s.details.push_back({std::move(q.hl), std::move(q.lh), std::move(q.hh)});
    current = std::move(q.ll);
  }
  s.low = std::move(current);
  return s;
}

}  // namespace fasd::wavelet
