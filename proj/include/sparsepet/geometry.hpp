#pragma once

// Cylindrical PET scanner description: crystal addressing, the plane table
// (direct, summed rd=1, oblique), and the mapping between lines of response
// and sinogram bins.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace sparsepet {

struct CrystalAddress {
  int ring = 0;
  int index = 0;  // transaxial position within the ring

  bool operator==(const CrystalAddress&) const = default;
};

// Unordered pair of distinct crystals.
struct Lor {
  CrystalAddress a, b;

  bool operator==(const Lor&) const = default;
};

enum class PlaneKind { direct, summed_rd1, oblique };

// One 2D sinogram plane. ring_pairs holds the ordered (ring_a, ring_b)
// assignments contributing to the plane: one pair for direct and oblique
// planes, two mirrored pairs for summed rd=1 planes.
struct PlaneDescriptor {
  int plane_id = 0;
  PlaneKind kind = PlaneKind::direct;
  int ring_difference = 0;  // signed; 0 direct, 1 summed, |rd| >= 2 oblique
  std::vector<std::pair<int, int>> ring_pairs;
};

struct BinAddress {
  int plane = 0;
  int radial = 0;
  int angle = 0;

  bool operator==(const BinAddress&) const = default;
};

// Transaxial chord between two crystal centers, in mm.
struct Chord {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

class ScannerGeometry {
 public:
  // radial_bins must be odd and at most crystals_per_ring - 1; pass 0 to use
  // the default crystals_per_ring / 2 + 1.
  ScannerGeometry(int num_rings, int crystals_per_ring, double crystal_pitch_mm,
                  double ring_spacing_mm, double ring_radius_mm, int radial_bins = 0);

  int num_rings() const { return num_rings_; }
  int crystals_per_ring() const { return crystals_per_ring_; }
  int angle_bins() const { return crystals_per_ring_ / 2; }
  int radial_bins() const { return radial_bins_; }
  double crystal_pitch_mm() const { return crystal_pitch_mm_; }
  double ring_spacing_mm() const { return ring_spacing_mm_; }
  double ring_radius_mm() const { return ring_radius_mm_; }

  int plane_count() const { return static_cast<int>(planes_.size()); }
  const PlaneDescriptor& plane(int plane_id) const;
  const std::vector<PlaneDescriptor>& planes() const { return planes_; }

  // Plane id for an ordered ring pair; every pair of valid rings has one.
  int plane_for_ring_pair(int ring_a, int ring_b) const;

  // Sinogram bin for a line of response, independent of endpoint order.
  // Returns nullopt when the chord falls outside the radial acceptance.
  std::optional<BinAddress> lor_to_bin(const Lor& lor) const;

  // All lines of response contributing to a bin: one for direct and oblique
  // planes, two (mirrored ring assignment) for summed rd=1 planes.
  std::vector<Lor> bin_to_lors(const BinAddress& bin) const;

  // Transaxial crystal center angle, radians. Crystals sit at half-pitch
  // offsets so no chord is exactly axis-aligned.
  double crystal_angle(int index) const;

  // Chord of a bin's transaxial crystal pair.
  Chord chord_for_bin(int radial, int angle) const;

  // Radius of the region swept by accepted chords.
  double fov_radius_mm() const;

  // Number of slices addressed by direct planes.
  int num_slices() const { return num_rings_; }

 private:
  struct TransaxialPair {
    int c1 = 0, c2 = 0;
  };

  // Canonical (c1, c2) for a bin's transaxial coordinates.
  TransaxialPair transaxial_pair(int radial, int angle) const;

  int num_rings_;
  int crystals_per_ring_;
  double crystal_pitch_mm_;
  double ring_spacing_mm_;
  double ring_radius_mm_;
  int radial_bins_;
  int radial_pad_;  // full interleaved positions trimmed from each side

  std::vector<PlaneDescriptor> planes_;
  std::vector<int> plane_by_ring_pair_;  // ring_a * num_rings + ring_b -> plane id
};

}  // namespace sparsepet
