#include "sparsepet/sparsity_mask.hpp"

#include <cmath>
#include <stdexcept>

#include "sparsepet/rng.hpp"

namespace sparsepet {

long CrystalMask::kept_count() const {
  long n = 0;
  for (bool k : kept_) n += k ? 1 : 0;
  return n;
}

CrystalMask chessboard_mask(const ScannerGeometry& geom, const CrystalPattern& pattern) {
  if (pattern.block_w < 1 || pattern.block_h < 1)
    throw std::invalid_argument("chessboard_mask: block dimensions must be positive");
  if (geom.crystals_per_ring() % (2 * pattern.block_w) != 0)
    throw std::invalid_argument(
        "chessboard_mask: crystals_per_ring must be divisible by 2 * block_w");

  const int removed_parity = pattern.parity == PatternParity::black ? 0 : 1;
  CrystalMask mask(geom.num_rings(), geom.crystals_per_ring());
  for (int ring = 0; ring < geom.num_rings(); ++ring)
    for (int index = 0; index < geom.crystals_per_ring(); ++index) {
      const int cell = index / pattern.block_w + ring / pattern.block_h;
      if (cell % 2 == removed_parity) mask.set_kept(ring, index, false);
    }
  return mask;
}

namespace {

void check_mask_shape(const ScannerGeometry& geom, const CrystalMask& mask) {
  if (mask.num_rings() != geom.num_rings() ||
      mask.crystals_per_ring() != geom.crystals_per_ring())
    throw std::invalid_argument("crystal mask does not match the scanner layout");
}

}  // namespace

double lor_retention(const ScannerGeometry& geom, const CrystalMask& mask) {
  check_mask_shape(geom, mask);
  // bin_to_lors enumerates every in-acceptance LOR exactly once across the
  // plane table (verified by the exhaustive coverage tests).
  long total = 0, kept = 0;
  for (const auto& p : geom.planes())
    for (int radial = 0; radial < geom.radial_bins(); ++radial)
      for (int angle = 0; angle < geom.angle_bins(); ++angle)
        for (const Lor& lor : geom.bin_to_lors({p.plane_id, radial, angle})) {
          ++total;
          if (mask.kept(lor.a) && mask.kept(lor.b)) ++kept;
        }
  return static_cast<double>(kept) / static_cast<double>(total);
}

PlaneMaskSet sinogram_masks(const ScannerGeometry& geom, const CrystalMask& mask) {
  check_mask_shape(geom, mask);
  PlaneMaskSet set;
  set.reserve(static_cast<std::size_t>(geom.plane_count()));
  const int radials = geom.radial_bins();
  const int angles = geom.angle_bins();
  for (const auto& p : geom.planes()) {
    PlaneMask pm;
    pm.plane_id = p.plane_id;
    pm.radial_bins = radials;
    pm.angle_bins = angles;
    pm.weight.resize(static_cast<std::size_t>(radials) * angles);
    pm.zero.resize(pm.weight.size());
    pm.affected.resize(pm.weight.size());
    for (int radial = 0; radial < radials; ++radial)
      for (int angle = 0; angle < angles; ++angle) {
        int surviving = 0, contributing = 0;
        for (const Lor& lor : geom.bin_to_lors({p.plane_id, radial, angle})) {
          ++contributing;
          if (mask.kept(lor.a) && mask.kept(lor.b)) ++surviving;
        }
        const std::size_t at = static_cast<std::size_t>(radial) * angles + angle;
        pm.weight[at] = static_cast<float>(surviving) / static_cast<float>(contributing);
        pm.zero[at] = surviving == 0 ? 1 : 0;
        pm.affected[at] = surviving < contributing ? 1 : 0;
      }
    set.push_back(std::move(pm));
  }
  return set;
}

SinogramStack apply_mask(const SinogramStack& counts, const PlaneMaskSet& masks,
                         std::uint64_t seed) {
  counts.require_consistent();
  if (counts.planes.size() != masks.size())
    throw std::invalid_argument("apply_mask: plane count mismatch");
  if (!counts.counts_are_integer)
    throw std::invalid_argument("apply_mask: thinning is defined on integer-count stacks");

  Rng root(seed);
  SinogramStack out(counts.plane_count(), counts.rows, counts.cols, true);
  for (std::size_t plane = 0; plane < counts.planes.size(); ++plane) {
    const auto& in = counts.planes[plane];
    const auto& pm = masks[plane];
    if (in.size() != pm.weight.size())
      throw std::invalid_argument("apply_mask: bin count mismatch");
    Rng rng = root.child(plane);
    auto& thinned = out.planes[plane];
    for (std::size_t i = 0; i < in.size(); ++i) {
      const float w = pm.weight[i];
      if (w >= 1.0f) {
        thinned[i] = in[i];  // untouched bins pass through bit-identical
        continue;
      }
      if (w <= 0.0f) {
        thinned[i] = 0.0f;
        continue;
      }
      const double rounded = std::nearbyint(in[i]);
      if (in[i] < 0.0f || std::abs(in[i] - rounded) > 1e-6)
        throw std::invalid_argument("apply_mask: thinning needs nonnegative integer counts");
      thinned[i] = static_cast<float>(rng.binomial(static_cast<long>(rounded), w));
    }
  }
  return out;
}

}  // namespace sparsepet
