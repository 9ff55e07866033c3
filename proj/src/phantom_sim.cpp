#include "sparsepet/phantom_sim.hpp"

#include <cmath>
#include <stdexcept>

#include "sparsepet/rng.hpp"

namespace sparsepet {

namespace {

bool point_inside(const Ellipse& e, double x, double y) {
  const double c = std::cos(e.phi), s = std::sin(e.phi);
  const double dx = x - e.cx, dy = y - e.cy;
  const double u = (c * dx + s * dy) / e.a;
  const double v = (-s * dx + c * dy) / e.b;
  return u * u + v * v <= 1.0;
}

// Conservative: the farthest ellipse point from the origin is within
// |center| + max(a, b).
bool ellipse_within_radius(const Ellipse& e, double radius) {
  return std::hypot(e.cx, e.cy) + std::max(e.a, e.b) <= radius;
}

// Sufficient containment check via boundary sampling; used only while
// placing lesions, where a conservative answer is acceptable.
bool ellipse_inside_ellipse(const Ellipse& inner, const Ellipse& outer) {
  const double c = std::cos(inner.phi), s = std::sin(inner.phi);
  for (int k = 0; k < 32; ++k) {
    const double t = 2.0 * M_PI * k / 32;
    const double px = inner.a * std::cos(t), py = inner.b * std::sin(t);
    const double x = inner.cx + c * px - s * py;
    const double y = inner.cy + s * px + c * py;
    if (!point_inside(outer, x, y)) return false;
  }
  return true;
}

bool ellipses_disjoint(const Ellipse& e1, const Ellipse& e2) {
  // Center distance beyond the summed long semi-axes is conclusive.
  if (std::hypot(e1.cx - e2.cx, e1.cy - e2.cy) > std::max(e1.a, e1.b) + std::max(e2.a, e2.b))
    return true;
  if (point_inside(e2, e1.cx, e1.cy) || point_inside(e1, e2.cx, e2.cy)) return false;
  const double c1 = std::cos(e1.phi), s1 = std::sin(e1.phi);
  for (int k = 0; k < 64; ++k) {
    const double t = 2.0 * M_PI * k / 64;
    const double px = e1.a * std::cos(t), py = e1.b * std::sin(t);
    if (point_inside(e2, e1.cx + c1 * px - s1 * py, e1.cy + s1 * px + c1 * py)) return false;
  }
  return true;
}

struct LesionTrack {
  Ellipse shape;       // cross-section at the central slice
  int center_slice = 0;
  double half_span = 1;  // slices
};

Ellipse scaled_cross_section(const LesionTrack& t, int slice) {
  const double dz = (slice - t.center_slice) / t.half_span;
  const double f = 1.0 - dz * dz;
  Ellipse e = t.shape;
  if (f <= 0.05) {  // no visible cross-section on this slice
    e.a = e.b = 0.0;
    return e;
  }
  const double scale = std::sqrt(f);
  e.a *= scale;
  e.b *= scale;
  return e;
}

}  // namespace

Phantom make_phantom(const PhantomSpec& spec, std::uint64_t seed) {
  if (spec.num_slices < 1) throw std::invalid_argument("make_phantom: need at least one slice");
  if (spec.fov_radius_mm <= 0) throw std::invalid_argument("make_phantom: fov must be positive");
  if (spec.background_activity < 0 || spec.cold_activity_lo < 0 ||
      spec.cold_activity_hi > 1.0 || spec.hot_activity_lo < 1.0)
    throw std::invalid_argument("make_phantom: activity ranges out of order");
  if (spec.cold_count_lo > spec.cold_count_hi || spec.cold_count_lo < 0)
    throw std::invalid_argument("make_phantom: cold lesion count range out of order");
  if (spec.hot_count < 0 || spec.hot_count > 1)
    throw std::invalid_argument("make_phantom: hot_count must be 0 or 1");

  Rng rng(seed);
  const double fov = spec.fov_radius_mm;

  Ellipse body;
  body.label = EllipseLabel::background;
  body.activity = spec.background_activity;
  body.a = fov * rng.uniform(0.62, 0.78);
  body.b = fov * rng.uniform(0.62, 0.78);
  body.phi = rng.uniform(0.0, M_PI);
  for (;;) {
    body.cx = fov * rng.uniform(-0.05, 0.05);
    body.cy = fov * rng.uniform(-0.05, 0.05);
    if (ellipse_within_radius(body, fov)) break;
  }

  std::vector<LesionTrack> lesions;
  const int cold_count =
      spec.cold_count_lo +
      static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.cold_count_hi -
                                                            spec.cold_count_lo + 1)));
  const int lesion_total = spec.hot_count + cold_count;

  for (int li = 0; li < lesion_total; ++li) {
    const bool hot = li < spec.hot_count;
    LesionTrack track;
    Ellipse& e = track.shape;
    e.label = hot ? EllipseLabel::bladder_hot : EllipseLabel::cold;
    e.activity = spec.background_activity *
                 (hot ? rng.uniform(spec.hot_activity_lo, spec.hot_activity_hi)
                      : rng.uniform(spec.cold_activity_lo, spec.cold_activity_hi));
    const double lo = hot ? 0.12 : 0.07, hi = hot ? 0.20 : 0.13;
    // Placement by rejection; shrink gently if a round does not fit.
    for (int attempt = 0;; ++attempt) {
      const double shrink = 1.0 / (1.0 + 0.1 * (attempt / 16));
      e.a = fov * rng.uniform(lo, hi) * shrink;
      e.b = fov * rng.uniform(lo, hi) * shrink;
      e.phi = rng.uniform(0.0, M_PI);
      const double reach = 0.8 * std::min(body.a, body.b);
      e.cx = body.cx + rng.uniform(-reach, reach);
      e.cy = body.cy + rng.uniform(-reach, reach);
      if (!ellipse_inside_ellipse(e, body)) continue;
      bool clear = true;
      for (const auto& other : lesions)
        if (!ellipses_disjoint(e, other.shape)) {
          clear = false;
          break;
        }
      if (clear) break;
    }
    track.center_slice = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_slices)));
    track.half_span = std::max(2.0, spec.num_slices * rng.uniform(0.25, 0.45));
    lesions.push_back(track);
  }

  Phantom phantom;
  phantom.slices.resize(static_cast<std::size_t>(spec.num_slices));
  for (int s = 0; s < spec.num_slices; ++s) {
    auto& slice = phantom.slices[static_cast<std::size_t>(s)];
    slice.ellipses.push_back(body);
    for (const auto& track : lesions) {
      const Ellipse e =
          spec.axially_uniform ? track.shape
                               : scaled_cross_section(track, s);
      if (e.a > 0 && e.b > 0) slice.ellipses.push_back(e);
    }
  }
  return phantom;
}

double activity_at(const PhantomSlice& slice, double x, double y) {
  if (slice.ellipses.empty() || !point_inside(slice.ellipses[0], x, y)) return 0.0;
  for (std::size_t i = 1; i < slice.ellipses.size(); ++i)
    if (point_inside(slice.ellipses[i], x, y)) return slice.ellipses[i].activity;
  return slice.ellipses[0].activity;
}

bool phantom_within_radius(const Phantom& phantom, double radius_mm) {
  for (const auto& slice : phantom.slices)
    for (const auto& e : slice.ellipses)
      if (!ellipse_within_radius(e, radius_mm)) return false;
  return true;
}

double ellipse_chord_length(const Ellipse& e, double x1, double y1, double x2, double y2) {
  const double len = std::hypot(x2 - x1, y2 - y1);
  if (len == 0.0) return 0.0;
  const double ux = (x2 - x1) / len, uy = (y2 - y1) / len;
  const double c = std::cos(e.phi), s = std::sin(e.phi);

  // Ray in the ellipse frame scaled to the unit circle.
  const double ox = (c * (x1 - e.cx) + s * (y1 - e.cy)) / e.a;
  const double oy = (-s * (x1 - e.cx) + c * (y1 - e.cy)) / e.b;
  const double dx = (c * ux + s * uy) / e.a;
  const double dy = (-s * ux + c * uy) / e.b;

  const double qa = dx * dx + dy * dy;
  const double qb = ox * dx + oy * dy;
  const double qc = ox * ox + oy * oy - 1.0;
  const double disc = qb * qb - qa * qc;
  if (disc <= 0.0 || qa == 0.0) return 0.0;
  return 2.0 * std::sqrt(disc) / qa;  // |t2 - t1| in world units
}

std::vector<float> forward_project(const PhantomSlice& slice, const ScannerGeometry& geom) {
  if (!slice.ellipses.empty() && slice.ellipses[0].label != EllipseLabel::background)
    throw std::invalid_argument("forward_project: slice must start with the body ellipse");

  // Additive coefficients reproducing the piecewise activity map: the body
  // contributes its own activity, a lesion the difference against the body.
  const double body_activity = slice.ellipses.empty() ? 0.0 : slice.ellipses[0].activity;
  std::vector<double> coeff(slice.ellipses.size());
  for (std::size_t i = 0; i < slice.ellipses.size(); ++i)
    coeff[i] = i == 0 ? body_activity : slice.ellipses[i].activity - body_activity;

  std::vector<float> plane(static_cast<std::size_t>(geom.radial_bins()) * geom.angle_bins());
  for (int radial = 0; radial < geom.radial_bins(); ++radial)
    for (int angle = 0; angle < geom.angle_bins(); ++angle) {
      const Chord chord = geom.chord_for_bin(radial, angle);
      double value = 0.0;
      for (std::size_t i = 0; i < slice.ellipses.size(); ++i)
        value += coeff[i] * ellipse_chord_length(slice.ellipses[i], chord.x1, chord.y1,
                                                 chord.x2, chord.y2);
      plane[static_cast<std::size_t>(radial) * geom.angle_bins() + angle] =
          static_cast<float>(value);
    }
  return plane;
}

StackPair build_stack(const Phantom& phantom, const ScannerGeometry& geom, double counts_scale,
                      std::uint64_t seed) {
  if (static_cast<int>(phantom.slices.size()) != geom.num_slices())
    throw std::invalid_argument("build_stack: phantom slices must match scanner rings");
  if (counts_scale < 0) throw std::invalid_argument("build_stack: counts_scale must be >= 0");

  std::vector<std::vector<float>> slice_proj(phantom.slices.size());
  for (std::size_t s = 0; s < phantom.slices.size(); ++s)
    slice_proj[s] = forward_project(phantom.slices[s], geom);

  StackPair out{SinogramStack(geom.plane_count(), geom.radial_bins(), geom.angle_bins(), false),
                SinogramStack(geom.plane_count(), geom.radial_bins(), geom.angle_bins(), true)};

  Rng root(seed);
  for (const auto& p : geom.planes()) {
    auto& noiseless = out.noiseless.planes[static_cast<std::size_t>(p.plane_id)];
    switch (p.kind) {
      case PlaneKind::direct:
        noiseless = slice_proj[static_cast<std::size_t>(p.ring_pairs[0].first)];
        break;
      case PlaneKind::summed_rd1: {
        const auto& lo = slice_proj[static_cast<std::size_t>(p.ring_pairs[0].first)];
        const auto& hi = slice_proj[static_cast<std::size_t>(p.ring_pairs[0].second)];
        for (std::size_t i = 0; i < noiseless.size(); ++i) noiseless[i] = lo[i] + hi[i];
        break;
      }
      case PlaneKind::oblique: {
        // Half-integer midpoints round up to the higher slice.
        const int mid2 = p.ring_pairs[0].first + p.ring_pairs[0].second;
        noiseless = slice_proj[static_cast<std::size_t>((mid2 + 1) / 2)];
        break;
      }
    }

    Rng rng = root.child(static_cast<std::uint64_t>(p.plane_id));
    auto& counts = out.counts.planes[static_cast<std::size_t>(p.plane_id)];
    for (std::size_t i = 0; i < noiseless.size(); ++i)
      counts[i] = static_cast<float>(rng.poisson(counts_scale * noiseless[i]));
  }
  return out;
}

}  // namespace sparsepet
