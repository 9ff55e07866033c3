#pragma once

// Synthetic ellipse phantoms and their analytic forward projection into
// multi-plane sinogram stacks with Poisson counting noise.

#include <cstdint>
#include <vector>

#include "sparsepet/geometry.hpp"
#include "sparsepet/stack.hpp"

namespace sparsepet {

enum class EllipseLabel { background, bladder_hot, cold };

struct Ellipse {
  double cx = 0, cy = 0;      // center, mm
  double a = 1, b = 1;        // semi-axes, mm
  double phi = 0;             // rotation, radians
  double activity = 0;        // regional activity concentration, >= 0
  EllipseLabel label = EllipseLabel::background;

  bool operator==(const Ellipse&) const = default;
};

// One transaxial slice. ellipses[0] is the body (background label); lesions
// lie fully inside the body and do not overlap each other, so the piecewise
// activity map and the additive line-integral model agree.
struct PhantomSlice {
  std::vector<Ellipse> ellipses;

  bool operator==(const PhantomSlice&) const = default;
};

struct Phantom {
  std::vector<PhantomSlice> slices;

  bool operator==(const Phantom&) const = default;
};

struct PhantomSpec {
  int num_slices = 15;
  double fov_radius_mm = 55.0;
  double background_activity = 1.0;
  int hot_count = 1;               // 0 or 1 bladder-like lesion
  double hot_activity_lo = 4.0;    // multiples of background
  double hot_activity_hi = 10.0;
  int cold_count_lo = 1;
  int cold_count_hi = 2;
  double cold_activity_lo = 0.0;   // multiples of background
  double cold_activity_hi = 0.5;
  bool axially_uniform = false;    // identical slices (lesions included)
};

// Deterministic in (spec, seed). Lesion cross-sections swell and shrink
// across slices like ellipsoid cuts unless axially_uniform is set.
Phantom make_phantom(const PhantomSpec& spec, std::uint64_t seed);

// Piecewise-constant activity at a point: lesion value inside a lesion,
// body value inside the body, zero outside.
double activity_at(const PhantomSlice& slice, double x, double y);

// True when every ellipse fits inside the given radius around the origin.
bool phantom_within_radius(const Phantom& phantom, double radius_mm);

// Analytic line integrals over one slice: bin value is the sum over regions
// of activity difference times the chord length of the bin's central ray.
// Row-major (radial, angle) plane of size radial_bins x angle_bins.
std::vector<float> forward_project(const PhantomSlice& slice, const ScannerGeometry& geom);

// Noiseless stack and Poisson counts at rate counts_scale * noiseless.
// Direct plane r projects slice r; summed rd=1 planes carry the sum of the
// two neighbouring slices (two contributing LOR sets); oblique planes use
// the slice nearest the axial midpoint (half-integers round up).
struct StackPair {
  SinogramStack noiseless;  // counts_are_integer == false
  SinogramStack counts;     // counts_are_integer == true
};

StackPair build_stack(const Phantom& phantom, const ScannerGeometry& geom, double counts_scale,
                      std::uint64_t seed);

// Chord length of the segment (x1,y1)-(x2,y2) inside the ellipse.
double ellipse_chord_length(const Ellipse& e, double x1, double y1, double x2, double y2);

}  // namespace sparsepet
