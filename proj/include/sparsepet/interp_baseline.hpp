#pragma once

// Clough-Tocher piecewise-cubic interpolation over a Delaunay triangulation:
// the comparison method that fills masked sinogram bins from the surviving
// ones. Summed rd=1 planes keep their half-weight bins as reference points at
// their recorded low values; an optional global boost rescales those planes.

#include <array>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "sparsepet/geometry.hpp"
#include "sparsepet/sparsity_mask.hpp"
#include "sparsepet/stack.hpp"

namespace sparsepet {

struct Point2 {
  double x = 0, y = 0;

  bool operator==(const Point2&) const = default;
};

// Triangle as indices into a point list, counterclockwise winding.
struct Triangle {
  int a = 0, b = 0, c = 0;
};

struct Triangulation {
  std::vector<Point2> points;
  std::vector<Triangle> triangles;
};

// Bowyer-Watson Delaunay triangulation: no input point lies strictly inside
// any triangle's circumcircle. Predicates evaluate exactly for integer-valued
// coordinates of moderate magnitude (|x| up to a few thousand), which covers
// the (radial, angle) bin grids this module interpolates on. Throws
// std::invalid_argument for fewer than 3 points, duplicate points, collinear
// input, or non-finite coordinates.
Triangulation delaunay_triangulate(const std::vector<Point2>& points);

// Scattered samples to interpolate; values[i] belongs to points[i].
struct ScatterSet {
  std::vector<Point2> points;
  std::vector<double> values;
};

namespace detail {

// Control points of one cubic Bezier mini-triangle of the Clough-Tocher
// split, ordered b300 b030 b003 b210 b201 b120 b021 b111 b102 b012, where
// the first barycentric index steps toward the mini triangle's first vertex.
using MiniPatch = std::array<double, 10>;

// The three mini patches of a macro triangle split at its centroid Vc:
// mini[0] = (V1, V2, Vc), mini[1] = (V2, V3, Vc), mini[2] = (V3, V1, Vc).
struct MacroPatch {
  std::array<MiniPatch, 3> mini;
};

// Reduced Hsieh-Clough-Tocher element: C1 inside the macro triangle, the
// normal derivative along each outer edge constrained to vary linearly.
// Reproduces quadratic data exactly when the supplied gradients are exact.
MacroPatch build_macro_patch(const std::array<Point2, 3>& vertex,
                             const std::array<double, 3>& value,
                             const std::array<Point2, 3>& gradient);

// Evaluates a macro patch at barycentric coordinates of the macro triangle.
// Slightly negative coordinates evaluate the polynomial extension of the
// nearest mini patch.
double eval_macro_patch(const MacroPatch& patch, double t1, double t2, double t3);

}  // namespace detail

// C1 piecewise-cubic interpolant: reduced Hsieh-Clough-Tocher patches on a
// Delaunay triangulation, vertex gradients estimated by inverse-square-
// distance weighted least squares over the 1-ring neighbourhood. Exact at
// data points and for affine data. Queries outside the convex hull evaluate
// at the nearest point of the hull boundary, so the fill never invents zeros
// at sinogram edges. The triangulation must outlive the interpolant.
class CloughTocher {
 public:
  // values must match tri.points in length and be finite.
  CloughTocher(const Triangulation& tri, std::vector<double> values);

  double evaluate(double x, double y) const;

 private:
  // Containing triangle and its barycentric coordinates, or -1 when outside.
  int locate(double x, double y, std::array<double, 3>& bary) const;

  struct HullEdge {
    int a = 0, b = 0;  // endpoints, counterclockwise along the hull
    int tri = 0;       // owning triangle
  };

  const Triangulation& tri_;
  std::vector<double> values_;
  std::vector<detail::MacroPatch> patches_;
  std::vector<HullEdge> hull_;
  // Uniform bucket grid over the point bounding box for point location.
  double min_x_ = 0, min_y_ = 0, cell_w_ = 1, cell_h_ = 1;
  int grid_ = 1;
  std::vector<std::vector<std::int32_t>> cells_;
};

// One-call interpolation of a scatter set at the given query points.
std::vector<double> clough_tocher(const ScatterSet& scatter, const std::vector<Point2>& queries);

// Reuses triangulations across planes that share a reference-point layout;
// under the chessboard pattern only a handful of distinct layouts occur per
// stack. Returned references stay valid for the cache's lifetime. Not
// thread-safe; give concurrent fills separate caches.
class TriangulationCache {
 public:
  const Triangulation& get(const std::vector<Point2>& points);

 private:
  std::unordered_map<std::uint64_t, std::vector<std::unique_ptr<Triangulation>>> entries_;
};

struct FillResult {
  std::vector<float> plane;
  bool warned = false;  // too few usable reference points; plane returned unchanged
};

// Fills the zero-weight bins of one plane by Clough-Tocher interpolation in
// (radial, angle) index space. Direct and oblique planes interpolate from
// their weight-1 bins; summed rd=1 planes keep every positive-weight bin as
// a reference at its recorded value and fill only the weight-0 bins. All
// non-query bins pass through bit-identical. Filled values are clamped at
// zero from below, since bins hold counts.
FillResult fill_sinogram(const std::vector<float>& plane, const PlaneDescriptor& descriptor,
                         const PlaneMask& mask, TriangulationCache* cache = nullptr);

struct StackFillResult {
  SinogramStack stack;
  std::vector<std::uint8_t> warned;  // per plane, mirrors FillResult::warned
};

// Applies fill_sinogram to every plane, sharing one triangulation cache.
StackFillResult fill_stack(const SinogramStack& distorted, const ScannerGeometry& geom,
                           const PlaneMaskSet& masks);

// Single global correction for the summed rd=1 planes, whose surviving bins
// carry half the true LOR contribution under the chessboard pattern: every
// affected bin of those planes is scaled by 2, the reciprocal of the half
// weight. Direct and oblique planes are returned bit-identical. The pipeline
// leaves this off by default; the unboosted fill shows the undercount.
SinogramStack global_scale_boost(const SinogramStack& stack, const ScannerGeometry& geom,
                                 const PlaneMaskSet& masks);

}  // namespace sparsepet
