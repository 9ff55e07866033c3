#include "sparsepet/interp_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <utility>

namespace sparsepet {

namespace {

double orient2d(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// Geometric predicates for the triangulation. Integer-valued inputs (the
// sinogram bin grids) are evaluated in 128-bit integer arithmetic, which is
// exact for the coordinate ranges the super triangle produces; anything else
// falls back to double precision, adequate for scattered physical points.
struct Predicates {
  bool exact = false;

  static bool integral(const std::vector<Point2>& pts, double limit) {
    for (const auto& p : pts)
      if (p.x != std::floor(p.x) || p.y != std::floor(p.y) || std::abs(p.x) > limit ||
          std::abs(p.y) > limit)
        return false;
    return true;
  }

  // Sign of the CCW test for (a, b, c).
  int orient(const Point2& a, const Point2& b, const Point2& c) const {
    if (exact) {
      const auto ax = static_cast<long long>(a.x), ay = static_cast<long long>(a.y);
      const auto bx = static_cast<long long>(b.x), by = static_cast<long long>(b.y);
      const auto cx = static_cast<long long>(c.x), cy = static_cast<long long>(c.y);
      const __int128 d = static_cast<__int128>(bx - ax) * (cy - ay) -
                         static_cast<__int128>(by - ay) * (cx - ax);
      return d > 0 ? 1 : d < 0 ? -1 : 0;
    }
    const double d = orient2d(a, b, c);
    return d > 0 ? 1 : d < 0 ? -1 : 0;
  }

  // > 0 when p lies strictly inside the circumcircle of the CCW triangle.
  int in_circle(const Point2& a, const Point2& b, const Point2& c, const Point2& p) const {
    if (exact) {
      const auto dx = [&p](const Point2& q) {
        return static_cast<long long>(q.x) - static_cast<long long>(p.x);
      };
      const auto dy = [&p](const Point2& q) {
        return static_cast<long long>(q.y) - static_cast<long long>(p.y);
      };
      const long long adx = dx(a), ady = dy(a);
      const long long bdx = dx(b), bdy = dy(b);
      const long long cdx = dx(c), cdy = dy(c);
      const __int128 al = static_cast<__int128>(adx) * adx + static_cast<__int128>(ady) * ady;
      const __int128 bl = static_cast<__int128>(bdx) * bdx + static_cast<__int128>(bdy) * bdy;
      const __int128 cl = static_cast<__int128>(cdx) * cdx + static_cast<__int128>(cdy) * cdy;
      const __int128 d = al * (static_cast<__int128>(bdx) * cdy - static_cast<__int128>(cdx) * bdy) -
                         bl * (static_cast<__int128>(adx) * cdy - static_cast<__int128>(cdx) * ady) +
                         cl * (static_cast<__int128>(adx) * bdy - static_cast<__int128>(bdx) * ady);
      return d > 0 ? 1 : d < 0 ? -1 : 0;
    }
    const double adx = a.x - p.x, ady = a.y - p.y;
    const double bdx = b.x - p.x, bdy = b.y - p.y;
    const double cdx = c.x - p.x, cdy = c.y - p.y;
    const double al = adx * adx + ady * ady;
    const double bl = bdx * bdx + bdy * bdy;
    const double cl = cdx * cdx + cdy * cdy;
    const double d = al * (bdx * cdy - cdx * bdy) - bl * (adx * cdy - cdx * ady) +
                     cl * (adx * bdy - bdx * ady);
    return d > 0 ? 1 : d < 0 ? -1 : 0;
  }
};

// Twice the signed area of the convex hull (monotone chain), for the coverage
// self-check in exact mode.
__int128 hull_double_area(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point2& l, const Point2& r) {
    return l.x != r.x ? l.x < r.x : l.y < r.y;
  });
  const auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
    return static_cast<__int128>(static_cast<long long>(a.x) - static_cast<long long>(o.x)) *
               (static_cast<long long>(b.y) - static_cast<long long>(o.y)) -
           static_cast<__int128>(static_cast<long long>(a.y) - static_cast<long long>(o.y)) *
               (static_cast<long long>(b.x) - static_cast<long long>(o.x));
  };
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, lo = k + 1; i-- > 0;) {
    while (k >= lo && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  __int128 twice_area = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point2& p = hull[i];
    const Point2& q = hull[(i + 1) % hull.size()];
    twice_area += static_cast<__int128>(static_cast<long long>(p.x)) *
                      static_cast<long long>(q.y) -
                  static_cast<__int128>(static_cast<long long>(q.x)) *
                      static_cast<long long>(p.y);
  }
  return twice_area;
}

}  // namespace

Triangulation delaunay_triangulate(const std::vector<Point2>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 3) throw std::invalid_argument("delaunay_triangulate: need at least 3 points");
  for (const auto& p : points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw std::invalid_argument("delaunay_triangulate: non-finite coordinate");
  {
    std::vector<int> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
      return points[i].x != points[j].x ? points[i].x < points[j].x : points[i].y < points[j].y;
    });
    for (std::size_t i = 1; i < order.size(); ++i)
      if (points[order[i - 1]] == points[order[i]])
        throw std::invalid_argument("delaunay_triangulate: duplicate point");
  }

  Predicates pred{Predicates::integral(points, 1e6)};
  {
    bool spans_plane = false;
    for (int k = 2; k < n && !spans_plane; ++k)
      spans_plane = pred.orient(points[0], points[1], points[k]) != 0;
    if (!spans_plane) throw std::invalid_argument("delaunay_triangulate: collinear input");
  }

  double min_x = points[0].x, max_x = min_x, min_y = points[0].y, max_y = min_y;
  for (const auto& p : points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double span = std::ceil(std::max({max_x - min_x, max_y - min_y, 1.0}));
  const double cx = std::floor((min_x + max_x) / 2.0), cy = std::floor((min_y + max_y) / 2.0);

  const auto run_bowyer_watson = [&](double margin) {
    std::vector<Point2> pts = points;
    pts.push_back({cx - margin * span, cy - margin / 2.0 * span});
    pts.push_back({cx + margin * span, cy - margin / 2.0 * span});
    pts.push_back({cx, cy + margin * span});

    std::vector<Triangle> tris;
    tris.push_back({n, n + 1, n + 2});

    std::vector<int> bad;
    std::vector<std::pair<int, int>> cavity;
    const auto edge_key = [n](int a, int b) {
      return static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(n + 3) +
             static_cast<std::uint64_t>(b);
    };
    std::unordered_map<std::uint64_t, int> edge_count;
    for (int pi = 0; pi < n; ++pi) {
      const Point2& p = pts[pi];
      bad.clear();
      for (int t = 0; t < static_cast<int>(tris.size()); ++t)
        if (pred.in_circle(pts[tris[t].a], pts[tris[t].b], pts[tris[t].c], p) > 0)
          bad.push_back(t);

      // Cavity boundary: directed edges of the bad set whose reverse is absent.
      edge_count.clear();
      for (int t : bad) {
        const Triangle& tr = tris[t];
        ++edge_count[edge_key(tr.a, tr.b)];
        ++edge_count[edge_key(tr.b, tr.c)];
        ++edge_count[edge_key(tr.c, tr.a)];
      }
      cavity.clear();
      for (int t : bad) {
        const Triangle& tr = tris[t];
        const int e[3][2] = {{tr.a, tr.b}, {tr.b, tr.c}, {tr.c, tr.a}};
        for (const auto& ab : e)
          if (edge_count.find(edge_key(ab[1], ab[0])) == edge_count.end())
            cavity.emplace_back(ab[0], ab[1]);
      }
      for (std::size_t i = bad.size(); i-- > 0;) {
        tris[bad[i]] = tris.back();
        tris.pop_back();
      }
      // The point sits strictly inside the cavity, so (a, b, p) inherits the
      // counterclockwise winding of the bad triangle the edge came from.
      for (const auto& [a, b] : cavity) tris.push_back({a, b, pi});
    }

    Triangulation out;
    out.points = points;
    for (const auto& t : tris)
      if (t.a < n && t.b < n && t.c < n) out.triangles.push_back(t);
    return out;
  };

  // A super triangle too close to the data distorts hull-adjacent triangles:
  // a real triangle is dropped from the result exactly when its circumcircle
  // reaches a super vertex, and sliver circumcircles can be huge. Widen the
  // margin until the kept triangles tile the convex hull; on the exact path
  // the tiling comparison is exact, so success certifies the triangulation.
  const __int128 hull_area = pred.exact ? hull_double_area(points) : 0;
  for (double margin = 32.0;; margin *= 2.0) {
    if (pred.exact && margin * span > 7.9e8)
      throw std::runtime_error("delaunay_triangulate: margin exceeds exact arithmetic range");
    Triangulation out = run_bowyer_watson(margin);
    if (!pred.exact) return out;  // Best effort: no exact certificate in double mode.

    __int128 tiled = 0;
    for (const auto& t : out.triangles) {
      const auto ax = static_cast<long long>(points[t.a].x),
                 ay = static_cast<long long>(points[t.a].y);
      const auto bx = static_cast<long long>(points[t.b].x),
                 by = static_cast<long long>(points[t.b].y);
      const auto cxl = static_cast<long long>(points[t.c].x),
                 cyl = static_cast<long long>(points[t.c].y);
      tiled += static_cast<__int128>(bx - ax) * (cyl - ay) -
               static_cast<__int128>(by - ay) * (cxl - ax);
    }
    if (tiled == hull_area) return out;
  }
}

namespace detail {

MacroPatch build_macro_patch(const std::array<Point2, 3>& v, const std::array<double, 3>& f,
                             const std::array<Point2, 3>& g) {
  const Point2 c{(v[0].x + v[1].x + v[2].x) / 3.0, (v[0].y + v[1].y + v[2].y) / 3.0};
  const auto dot = [](const Point2& a, double dx, double dy) { return a.x * dx + a.y * dy; };

  // Control point beside each vertex on its internal edge toward the centroid.
  std::array<double, 3> toward_c;
  for (int k = 0; k < 3; ++k)
    toward_c[k] = f[k] + dot(g[k], (c.x - v[k].x) / 3.0, (c.y - v[k].y) / 3.0);

  MacroPatch out{};
  std::array<double, 3> b111s{};
  for (int k = 0; k < 3; ++k) {
    const int k2 = (k + 1) % 3;
    const Point2& a = v[k];
    const Point2& b = v[k2];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double px = c.x - a.x, py = c.y - a.y;

    const double b300 = f[k];
    const double b030 = f[k2];
    const double b210 = f[k] + dot(g[k], ex / 3.0, ey / 3.0);
    const double b120 = f[k2] + dot(g[k2], -ex / 3.0, -ey / 3.0);
    const double b201 = toward_c[k];
    const double b021 = toward_c[k2];

    // Express the outer-edge normal as a barycentric direction (w0, w1, w2)
    // of the mini triangle; w2 = |edge|^2 / (2 area), never zero.
    const double det = ex * py - ey * px;
    const double nx = -ey, ny = ex;
    const double w1 = (nx * py - px * ny) / det;
    const double w2 = (ex * ny - nx * ey) / det;
    const double w0 = -w1 - w2;

    // Forcing the normal derivative along the outer edge to vary linearly
    // pins the interior control point; the bracket vanishes for affine data.
    const double b111 =
        0.5 * (b201 + b021) +
        (w0 * (b300 + b120 - 2.0 * b210) + w1 * (b210 + b030 - 2.0 * b120)) / (2.0 * w2);

    out.mini[k] = {b300, b030, 0.0, b210, b201, b120, b021, b111, 0.0, 0.0};
    b111s[k] = b111;
  }

  // C1 across the three internal edges fixes the centroid-adjacent points and
  // makes the shared center value their average.
  std::array<double, 3> mid;
  mid[0] = (b111s[0] + b111s[2] + toward_c[0]) / 3.0;
  mid[1] = (b111s[0] + b111s[1] + toward_c[1]) / 3.0;
  mid[2] = (b111s[1] + b111s[2] + toward_c[2]) / 3.0;
  const double center = (mid[0] + mid[1] + mid[2]) / 3.0;
  for (int k = 0; k < 3; ++k) {
    out.mini[k][2] = center;            // b003
    out.mini[k][8] = mid[k];            // b102, on the internal edge at vertex k
    out.mini[k][9] = mid[(k + 1) % 3];  // b012, on the internal edge at vertex k+1
  }
  return out;
}

double eval_macro_patch(const MacroPatch& patch, double t1, double t2, double t3) {
  // The mini triangle opposite the smallest coordinate contains the point;
  // its barycentrics come straight from the macro ones.
  int k;
  double u, v, w;
  if (t3 <= t1 && t3 <= t2) {
    k = 0, u = t1 - t3, v = t2 - t3, w = 3.0 * t3;
  } else if (t1 <= t2) {
    k = 1, u = t2 - t1, v = t3 - t1, w = 3.0 * t1;
  } else {
    k = 2, u = t3 - t2, v = t1 - t2, w = 3.0 * t2;
  }
  const MiniPatch& b = patch.mini[k];
  return b[0] * u * u * u + b[1] * v * v * v + b[2] * w * w * w +
         3.0 * (b[3] * u * u * v + b[4] * u * u * w + b[5] * u * v * v + b[6] * v * v * w +
                b[8] * u * w * w + b[9] * v * w * w) +
         6.0 * b[7] * u * v * w;
}

}  // namespace detail

CloughTocher::CloughTocher(const Triangulation& tri, std::vector<double> values)
    : tri_(tri), values_(std::move(values)) {
  const int n = static_cast<int>(tri_.points.size());
  if (static_cast<int>(values_.size()) != n)
    throw std::invalid_argument("CloughTocher: values/points size mismatch");
  for (double v : values_)
    if (!std::isfinite(v)) throw std::invalid_argument("CloughTocher: non-finite value");
  if (tri_.triangles.empty()) throw std::invalid_argument("CloughTocher: empty triangulation");

  std::vector<std::vector<int>> ring(n);
  for (const auto& t : tri_.triangles) {
    ring[t.a].push_back(t.b);
    ring[t.a].push_back(t.c);
    ring[t.b].push_back(t.a);
    ring[t.b].push_back(t.c);
    ring[t.c].push_back(t.a);
    ring[t.c].push_back(t.b);
  }

  // Inverse-square-distance weighted least-squares gradient over the 1-ring;
  // exact for affine data whenever the ring spans the plane.
  std::vector<Point2> grad(n, Point2{0.0, 0.0});
  for (int i = 0; i < n; ++i) {
    auto& nb = ring[i];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    double a00 = 0, a01 = 0, a11 = 0, r0 = 0, r1 = 0;
    for (int j : nb) {
      const double dx = tri_.points[j].x - tri_.points[i].x;
      const double dy = tri_.points[j].y - tri_.points[i].y;
      const double w = 1.0 / (dx * dx + dy * dy);
      const double df = values_[j] - values_[i];
      a00 += w * dx * dx;
      a01 += w * dx * dy;
      a11 += w * dy * dy;
      r0 += w * df * dx;
      r1 += w * df * dy;
    }
    double det = a00 * a11 - a01 * a01;
    const double tr = a00 + a11;
    if (!(det > 1e-12 * tr * tr)) {
      // Collinear ring (possible at degenerate hull corners): ridge the
      // normal equations so the gradient stays defined.
      a00 += 1e-9 * tr;
      a11 += 1e-9 * tr;
      det = a00 * a11 - a01 * a01;
    }
    grad[i] = {(a11 * r0 - a01 * r1) / det, (a00 * r1 - a01 * r0) / det};
  }

  patches_.resize(tri_.triangles.size());
  for (std::size_t t = 0; t < tri_.triangles.size(); ++t) {
    const Triangle& tr = tri_.triangles[t];
    patches_[t] = detail::build_macro_patch(
        {tri_.points[tr.a], tri_.points[tr.b], tri_.points[tr.c]},
        {values_[tr.a], values_[tr.b], values_[tr.c]}, {grad[tr.a], grad[tr.b], grad[tr.c]});
  }

  // Hull edges: directed edges whose reverse belongs to no triangle.
  {
    const auto key = [n](int a, int b) {
      return static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(n) +
             static_cast<std::uint64_t>(b);
    };
    std::unordered_map<std::uint64_t, int> owner;
    for (std::size_t t = 0; t < tri_.triangles.size(); ++t) {
      const Triangle& tr = tri_.triangles[t];
      owner[key(tr.a, tr.b)] = static_cast<int>(t);
      owner[key(tr.b, tr.c)] = static_cast<int>(t);
      owner[key(tr.c, tr.a)] = static_cast<int>(t);
    }
    for (const auto& [k, t] : owner) {
      const int a = static_cast<int>(k / n), b = static_cast<int>(k % n);
      if (owner.find(key(b, a)) == owner.end()) hull_.push_back({a, b, t});
    }
    std::sort(hull_.begin(), hull_.end(), [](const HullEdge& l, const HullEdge& r) {
      return l.a != r.a ? l.a < r.a : l.b < r.b;
    });
  }

  // Bucket grid for point location: every triangle is registered with each
  // cell its bounding box touches, so a containing triangle is always among
  // the query cell's candidates.
  double max_x = tri_.points[0].x, max_y = tri_.points[0].y;
  min_x_ = max_x, min_y_ = max_y;
  for (const auto& p : tri_.points) {
    min_x_ = std::min(min_x_, p.x);
    max_x = std::max(max_x, p.x);
    min_y_ = std::min(min_y_, p.y);
    max_y = std::max(max_y, p.y);
  }
  grid_ = std::clamp(
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(tri_.triangles.size())))), 4, 256);
  cell_w_ = std::max((max_x - min_x_) / grid_, 1e-9);
  cell_h_ = std::max((max_y - min_y_) / grid_, 1e-9);
  cells_.assign(static_cast<std::size_t>(grid_) * grid_, {});
  const auto cell_of = [this](double v, double lo, double step) {
    return std::clamp(static_cast<int>(std::floor((v - lo) / step)), 0, grid_ - 1);
  };
  for (std::size_t t = 0; t < tri_.triangles.size(); ++t) {
    const Triangle& tr = tri_.triangles[t];
    const Point2& a = tri_.points[tr.a];
    const Point2& b = tri_.points[tr.b];
    const Point2& c = tri_.points[tr.c];
    const int x0 = cell_of(std::min({a.x, b.x, c.x}), min_x_, cell_w_);
    const int x1 = cell_of(std::max({a.x, b.x, c.x}), min_x_, cell_w_);
    const int y0 = cell_of(std::min({a.y, b.y, c.y}), min_y_, cell_h_);
    const int y1 = cell_of(std::max({a.y, b.y, c.y}), min_y_, cell_h_);
    for (int yy = y0; yy <= y1; ++yy)
      for (int xx = x0; xx <= x1; ++xx)
        cells_[static_cast<std::size_t>(yy) * grid_ + xx].push_back(static_cast<std::int32_t>(t));
  }
}

int CloughTocher::locate(double x, double y, std::array<double, 3>& bary) const {
  const Point2 p{x, y};
  const int cx = std::clamp(static_cast<int>(std::floor((x - min_x_) / cell_w_)), 0, grid_ - 1);
  const int cy = std::clamp(static_cast<int>(std::floor((y - min_y_) / cell_h_)), 0, grid_ - 1);
  for (std::int32_t t : cells_[static_cast<std::size_t>(cy) * grid_ + cx]) {
    const Triangle& tr = tri_.triangles[t];
    const Point2& a = tri_.points[tr.a];
    const Point2& b = tri_.points[tr.b];
    const Point2& c = tri_.points[tr.c];
    const double denom = orient2d(a, b, c);
    const double t1 = orient2d(p, b, c) / denom;
    const double t2 = orient2d(a, p, c) / denom;
    const double t3 = orient2d(a, b, p) / denom;
    if (t1 >= -1e-9 && t2 >= -1e-9 && t3 >= -1e-9) {
      bary = {t1, t2, t3};
      return t;
    }
  }
  return -1;
}

double CloughTocher::evaluate(double x, double y) const {
  if (!std::isfinite(x) || !std::isfinite(y))
    throw std::invalid_argument("CloughTocher::evaluate: non-finite query");
  std::array<double, 3> bary{};
  int t = locate(x, y, bary);
  if (t < 0) {
    // Outside the hull: evaluate at the closest point of the hull boundary.
    double best = std::numeric_limits<double>::infinity();
    Point2 proj{};
    for (const auto& e : hull_) {
      const Point2& a = tri_.points[e.a];
      const Point2& b = tri_.points[e.b];
      const double ex = b.x - a.x, ey = b.y - a.y;
      const double s =
          std::clamp(((x - a.x) * ex + (y - a.y) * ey) / (ex * ex + ey * ey), 0.0, 1.0);
      const double px = a.x + s * ex, py = a.y + s * ey;
      const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
      if (d2 < best) {
        best = d2;
        proj = {px, py};
        t = e.tri;
      }
    }
    const Triangle& tr = tri_.triangles[t];
    const Point2& a = tri_.points[tr.a];
    const Point2& b = tri_.points[tr.b];
    const Point2& c = tri_.points[tr.c];
    const double denom = orient2d(a, b, c);
    bary = {orient2d(proj, b, c) / denom, orient2d(a, proj, c) / denom,
            orient2d(a, b, proj) / denom};
  }
  double t1 = std::max(bary[0], 0.0), t2 = std::max(bary[1], 0.0), t3 = std::max(bary[2], 0.0);
  const double sum = t1 + t2 + t3;
  t1 /= sum, t2 /= sum, t3 /= sum;
  return detail::eval_macro_patch(patches_[t], t1, t2, t3);
}

std::vector<double> clough_tocher(const ScatterSet& scatter, const std::vector<Point2>& queries) {
  const Triangulation tri = delaunay_triangulate(scatter.points);
  const CloughTocher ct(tri, scatter.values);
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(ct.evaluate(q.x, q.y));
  return out;
}

const Triangulation& TriangulationCache::get(const std::vector<Point2>& points) {
  std::uint64_t h = 1469598103934665603ull;
  const auto mix = [&h](double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    h = (h ^ bits) * 1099511628211ull;
  };
  for (const auto& p : points) {
    mix(p.x);
    mix(p.y);
  }
  auto& bucket = entries_[h];
  for (const auto& entry : bucket)
    if (entry->points == points) return *entry;
  bucket.push_back(std::make_unique<Triangulation>(delaunay_triangulate(points)));
  return *bucket.back();
}

FillResult fill_sinogram(const std::vector<float>& plane, const PlaneDescriptor& descriptor,
                         const PlaneMask& mask, TriangulationCache* cache) {
  const std::size_t size = static_cast<std::size_t>(mask.radial_bins) * mask.angle_bins;
  if (plane.size() != size)
    throw std::invalid_argument("fill_sinogram: plane does not match mask dimensions");

  FillResult out{plane, false};
  const bool summed = descriptor.kind == PlaneKind::summed_rd1;
  std::vector<Point2> refs;
  std::vector<double> ref_values;
  std::vector<Point2> queries;
  std::vector<std::size_t> query_index;
  for (int r = 0; r < mask.radial_bins; ++r)
    for (int a = 0; a < mask.angle_bins; ++a) {
      const std::size_t i = static_cast<std::size_t>(r) * mask.angle_bins + a;
      const float w = mask.weight[i];
      if (w == 0.0f) {
        queries.push_back({static_cast<double>(r), static_cast<double>(a)});
        query_index.push_back(i);
      } else if (summed || w == 1.0f) {
        refs.push_back({static_cast<double>(r), static_cast<double>(a)});
        ref_values.push_back(plane[i]);
      }
    }
  if (queries.empty()) return out;
  if (refs.size() < 3) {
    out.warned = true;
    return out;
  }

  TriangulationCache local;
  TriangulationCache& tris = cache ? *cache : local;
  const Triangulation* tri = nullptr;
  try {
    tri = &tris.get(refs);
  } catch (const std::invalid_argument&) {  // collinear references
    out.warned = true;
    return out;
  }
  const CloughTocher ct(*tri, std::move(ref_values));
  for (std::size_t q = 0; q < queries.size(); ++q)
    out.plane[query_index[q]] =
        std::max(0.0f, static_cast<float>(ct.evaluate(queries[q].x, queries[q].y)));
  return out;
}

namespace {

void check_stack_against_masks(const SinogramStack& stack, const ScannerGeometry& geom,
                               const PlaneMaskSet& masks, const char* who) {
  stack.require_consistent();
  if (stack.plane_count() != geom.plane_count() ||
      masks.size() != static_cast<std::size_t>(geom.plane_count()))
    throw std::invalid_argument(std::string(who) + ": plane count mismatch");
  for (const auto& m : masks)
    if (m.radial_bins != stack.rows || m.angle_bins != stack.cols)
      throw std::invalid_argument(std::string(who) + ": mask does not match stack dimensions");
}

}  // namespace

StackFillResult fill_stack(const SinogramStack& distorted, const ScannerGeometry& geom,
                           const PlaneMaskSet& masks) {
  check_stack_against_masks(distorted, geom, masks, "fill_stack");
  StackFillResult out;
  out.stack = distorted;
  out.stack.counts_are_integer = false;  // filled values are fractional
  out.warned.assign(masks.size(), 0);
  TriangulationCache cache;
  for (int p = 0; p < distorted.plane_count(); ++p) {
    FillResult r = fill_sinogram(distorted.planes[p], geom.plane(p), masks[p], &cache);
    out.stack.planes[p] = std::move(r.plane);
    out.warned[p] = r.warned ? 1 : 0;
  }
  return out;
}

SinogramStack global_scale_boost(const SinogramStack& stack, const ScannerGeometry& geom,
                                 const PlaneMaskSet& masks) {
  check_stack_against_masks(stack, geom, masks, "global_scale_boost");
  SinogramStack out = stack;
  for (int p = 0; p < stack.plane_count(); ++p) {
    if (geom.plane(p).kind != PlaneKind::summed_rd1) continue;
    auto& plane = out.planes[p];
    const auto& affected = masks[p].affected;
    for (std::size_t i = 0; i < plane.size(); ++i)
      if (affected[i]) plane[i] *= 2.0f;
  }
  return out;
}

}  // namespace sparsepet
