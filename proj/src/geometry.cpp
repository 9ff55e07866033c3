#include "sparsepet/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sparsepet {

namespace {

constexpr double kPi = 3.14159265358979323846;

int positive_mod(int value, int modulus) {
  int r = value % modulus;
  return r < 0 ? r + modulus : r;
}

}  // namespace

ScannerGeometry::ScannerGeometry(int num_rings, int crystals_per_ring, double crystal_pitch_mm,
                                 double ring_spacing_mm, double ring_radius_mm, int radial_bins)
    : num_rings_(num_rings),
      crystals_per_ring_(crystals_per_ring),
      crystal_pitch_mm_(crystal_pitch_mm),
      ring_spacing_mm_(ring_spacing_mm),
      ring_radius_mm_(ring_radius_mm),
      radial_bins_(radial_bins == 0 ? crystals_per_ring / 2 + 1 : radial_bins) {
  if (num_rings_ < 1) throw std::invalid_argument("ScannerGeometry: need at least one ring");
  if (crystals_per_ring_ < 4 || crystals_per_ring_ % 2 != 0)
    throw std::invalid_argument("ScannerGeometry: crystals_per_ring must be even and >= 4");
  if (crystal_pitch_mm_ <= 0 || ring_spacing_mm_ <= 0 || ring_radius_mm_ <= 0)
    throw std::invalid_argument("ScannerGeometry: physical dimensions must be positive");
  if (radial_bins_ % 2 != 1 || radial_bins_ > crystals_per_ring_ - 1 || radial_bins_ < 1)
    throw std::invalid_argument(
        "ScannerGeometry: radial_bins must be odd and within [1, crystals_per_ring - 1]");

  radial_pad_ = (crystals_per_ring_ - 1 - radial_bins_) / 2;

  // Plane table: direct planes by ring, summed rd=1 planes by lower ring,
  // then oblique planes by |rd| ascending, positive sign first, lower ring.
  const int r = num_rings_;
  planes_.reserve(static_cast<std::size_t>(r) * r - (r - 1));
  for (int ring = 0; ring < r; ++ring) {
    PlaneDescriptor p;
    p.plane_id = static_cast<int>(planes_.size());
    p.kind = PlaneKind::direct;
    p.ring_difference = 0;
    p.ring_pairs = {{ring, ring}};
    planes_.push_back(std::move(p));
  }
  for (int ring = 0; ring + 1 < r; ++ring) {
    PlaneDescriptor p;
    p.plane_id = static_cast<int>(planes_.size());
    p.kind = PlaneKind::summed_rd1;
    p.ring_difference = 1;
    p.ring_pairs = {{ring, ring + 1}, {ring + 1, ring}};
    planes_.push_back(std::move(p));
  }
  for (int rd = 2; rd < r; ++rd) {
    for (int sign : {+1, -1}) {
      for (int lower = 0; lower + rd < r; ++lower) {
        PlaneDescriptor p;
        p.plane_id = static_cast<int>(planes_.size());
        p.kind = PlaneKind::oblique;
        p.ring_difference = sign * rd;
        p.ring_pairs = sign > 0 ? std::vector<std::pair<int, int>>{{lower, lower + rd}}
                                : std::vector<std::pair<int, int>>{{lower + rd, lower}};
        planes_.push_back(std::move(p));
      }
    }
  }

  plane_by_ring_pair_.assign(static_cast<std::size_t>(r) * r, -1);
  for (const auto& p : planes_)
    for (const auto& [ra, rb] : p.ring_pairs)
      plane_by_ring_pair_[static_cast<std::size_t>(ra) * r + rb] = p.plane_id;
}

const PlaneDescriptor& ScannerGeometry::plane(int plane_id) const {
  if (plane_id < 0 || plane_id >= plane_count())
    throw std::out_of_range("ScannerGeometry::plane: id " + std::to_string(plane_id));
  return planes_[static_cast<std::size_t>(plane_id)];
}

int ScannerGeometry::plane_for_ring_pair(int ring_a, int ring_b) const {
  if (ring_a < 0 || ring_a >= num_rings_ || ring_b < 0 || ring_b >= num_rings_)
    throw std::out_of_range("ScannerGeometry::plane_for_ring_pair: ring out of range");
  return plane_by_ring_pair_[static_cast<std::size_t>(ring_a) * num_rings_ + ring_b];
}

std::optional<BinAddress> ScannerGeometry::lor_to_bin(const Lor& lor) const {
  const int n = crystals_per_ring_;
  for (const CrystalAddress& c : {lor.a, lor.b}) {
    if (c.ring < 0 || c.ring >= num_rings_)
      throw std::out_of_range("ScannerGeometry::lor_to_bin: ring out of range");
    if (c.index < 0 || c.index >= n)
      throw std::out_of_range("ScannerGeometry::lor_to_bin: crystal index out of range");
  }
  if (lor.a == lor.b) throw std::invalid_argument("ScannerGeometry::lor_to_bin: degenerate pair");

  CrystalAddress c1 = lor.a, c2 = lor.b;
  int d = positive_mod(c1.index - c2.index, n);
  if (d == 0) return std::nullopt;  // axis-parallel chord, outside any transaxial bin
  if (d > n / 2) {
    std::swap(c1, c2);
    d = n - d;
  }

  const int s = positive_mod(c1.index + c2.index, n);
  const int view = s / 2;
  const int base = positive_mod(view + (d + 1) / 2, n);
  if (d == n / 2 && c1.index != base) std::swap(c1, c2);  // diametric: orientation by convention

  const int full = c1.index == base ? d - 1 : n - 1 - d;
  const int radial = full - radial_pad_;
  if (radial < 0 || radial >= radial_bins_) return std::nullopt;

  return BinAddress{plane_for_ring_pair(c1.ring, c2.ring), radial, view};
}

ScannerGeometry::TransaxialPair ScannerGeometry::transaxial_pair(int radial, int angle) const {
  const int n = crystals_per_ring_;
  const int full = radial + radial_pad_;
  const bool positive_side = full > n / 2 - 1;
  const int d = positive_side ? n - 1 - full : full + 1;
  const int base = positive_mod(angle + (d + 1) / 2, n);
  const int c1 = positive_side ? positive_mod(base + n / 2, n) : base;
  return {c1, positive_mod(c1 - d, n)};
}

std::vector<Lor> ScannerGeometry::bin_to_lors(const BinAddress& bin) const {
  if (bin.plane < 0 || bin.plane >= plane_count())
    throw std::out_of_range("ScannerGeometry::bin_to_lors: plane out of range");
  if (bin.radial < 0 || bin.radial >= radial_bins_)
    throw std::out_of_range("ScannerGeometry::bin_to_lors: radial out of range");
  if (bin.angle < 0 || bin.angle >= angle_bins())
    throw std::out_of_range("ScannerGeometry::bin_to_lors: angle out of range");

  const TransaxialPair t = transaxial_pair(bin.radial, bin.angle);
  std::vector<Lor> out;
  const PlaneDescriptor& p = planes_[static_cast<std::size_t>(bin.plane)];
  out.reserve(p.ring_pairs.size());
  for (const auto& [ra, rb] : p.ring_pairs) out.push_back({{ra, t.c1}, {rb, t.c2}});
  return out;
}

double ScannerGeometry::crystal_angle(int index) const {
  return 2.0 * kPi * (index + 0.5) / crystals_per_ring_;
}

Chord ScannerGeometry::chord_for_bin(int radial, int angle) const {
  if (radial < 0 || radial >= radial_bins_)
    throw std::out_of_range("ScannerGeometry::chord_for_bin: radial out of range");
  if (angle < 0 || angle >= angle_bins())
    throw std::out_of_range("ScannerGeometry::chord_for_bin: angle out of range");
  const TransaxialPair t = transaxial_pair(radial, angle);
  const double a1 = crystal_angle(t.c1);
  const double a2 = crystal_angle(t.c2);
  return {ring_radius_mm_ * std::cos(a1), ring_radius_mm_ * std::sin(a1),
          ring_radius_mm_ * std::cos(a2), ring_radius_mm_ * std::sin(a2)};
}

double ScannerGeometry::fov_radius_mm() const {
  // Accepted chords have crystal separation of at least radial_pad_ + 1
  // steps around the ring; the closest of them bounds the field of view.
  return ring_radius_mm_ * std::cos(kPi * (radial_pad_ + 1) / crystals_per_ring_);
}

}  // namespace sparsepet
