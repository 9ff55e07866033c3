#pragma once

// Chessboard detector sparsity: which crystals are removed, how much of each
// sinogram bin's LOR set survives, and binomial thinning of count data.

#include <cstdint>
#include <vector>

#include "sparsepet/geometry.hpp"
#include "sparsepet/stack.hpp"

namespace sparsepet {

enum class PatternParity { black, white };

struct CrystalPattern {
  int block_w = 1;  // transaxial block width, crystals
  int block_h = 1;  // axial block height, rings
  PatternParity parity = PatternParity::black;
};

// Per-ring, per-index keep flags; kept(r, i) == true means the crystal stays.
class CrystalMask {
 public:
  CrystalMask(int num_rings, int crystals_per_ring)
      : num_rings_(num_rings), crystals_per_ring_(crystals_per_ring),
        kept_(static_cast<std::size_t>(num_rings) * crystals_per_ring, true) {}

  bool kept(int ring, int index) const {
    return kept_[static_cast<std::size_t>(ring) * crystals_per_ring_ + index];
  }
  void set_kept(int ring, int index, bool value) {
    kept_[static_cast<std::size_t>(ring) * crystals_per_ring_ + index] = value;
  }
  bool kept(const CrystalAddress& c) const { return kept(c.ring, c.index); }

  int num_rings() const { return num_rings_; }
  int crystals_per_ring() const { return crystals_per_ring_; }
  long kept_count() const;

 private:
  int num_rings_;
  int crystals_per_ring_;
  std::vector<bool> kept_;
};

// Removes crystal (ring, index) when floor(index / block_w) + floor(ring / block_h)
// has the parity selected by the pattern; black and white are complements.
CrystalMask chessboard_mask(const ScannerGeometry& geom, const CrystalPattern& pattern);

// Fraction of in-acceptance LORs with both endpoints kept.
double lor_retention(const ScannerGeometry& geom, const CrystalMask& mask);

// Per-plane bin weights: surviving LORs / contributing LORs. Weight 1 bins
// are untouched by the pattern, weight 0 bins lose every contribution.
struct PlaneMask {
  int plane_id = 0;
  int radial_bins = 0;
  int angle_bins = 0;
  std::vector<float> weight;        // radial-major: weight[radial * angle_bins + angle]
  std::vector<std::uint8_t> zero;   // weight == 0
  std::vector<std::uint8_t> affected;  // weight < 1

  float weight_at(int radial, int angle) const {
    return weight[static_cast<std::size_t>(radial) * angle_bins + angle];
  }
  bool zero_at(int radial, int angle) const {
    return zero[static_cast<std::size_t>(radial) * angle_bins + angle] != 0;
  }
  bool affected_at(int radial, int angle) const {
    return affected[static_cast<std::size_t>(radial) * angle_bins + angle] != 0;
  }
};

using PlaneMaskSet = std::vector<PlaneMask>;

PlaneMaskSet sinogram_masks(const ScannerGeometry& geom, const CrystalMask& mask);

// Binomial thinning of an integer-count stack: each bin keeps
// Binomial(count, weight) counts. Weight-1 bins pass through bit-identical,
// weight-0 bins drop to zero. Deterministic in (seed, plane order).
SinogramStack apply_mask(const SinogramStack& counts, const PlaneMaskSet& masks,
                         std::uint64_t seed);

}  // namespace sparsepet
