#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "sparsepet/geometry.hpp"
#include "sparsepet/rng.hpp"

using namespace sparsepet;

namespace {

ScannerGeometry mock_scanner(int radial_bins = 0) {
  return ScannerGeometry(15, 128, 4.0, 5.3, 80.0, radial_bins);
}

// Independent plane enumeration: bucket every ordered ring pair by the
// merge rule (rd=0 alone; |rd|=1 merged across signs; |rd|>=2 split by
// sign) without touching the production table builder.
int brute_force_plane_count(int rings) {
  std::set<std::tuple<int, int, int>> buckets;  // (|rd|, sign bucket, lower ring)
  for (int ra = 0; ra < rings; ++ra)
    for (int rb = 0; rb < rings; ++rb) {
      int rd = rb - ra;
      int mag = std::abs(rd);
      int sign_bucket = mag <= 1 ? 0 : (rd > 0 ? 1 : -1);
      buckets.insert({mag, sign_bucket, std::min(ra, rb)});
    }
  return static_cast<int>(buckets.size());
}

}  // namespace

TEST_CASE("plane table size matches closed form and brute force") {
  for (int rings : {1, 2, 3, 5, 15, 30, 45, 64}) {
    ScannerGeometry g(rings, 128, 4.0, 5.3, 80.0);
    const int expected = rings * rings - (rings - 1);
    CHECK(g.plane_count() == expected);
    CHECK(g.plane_count() == brute_force_plane_count(rings));
  }
  CHECK(ScannerGeometry(45, 448, 4.0, 5.3, 300.0).plane_count() == 1981);
  CHECK(mock_scanner().plane_count() == 211);
  CHECK(ScannerGeometry(1, 128, 4.0, 5.3, 80.0).plane_count() == 1);
}

TEST_CASE("plane table ordering and ring pair contents") {
  const auto g = mock_scanner();
  const int r = g.num_rings();

  for (int i = 0; i < r; ++i) {
    const auto& p = g.plane(i);
    CHECK(p.kind == PlaneKind::direct);
    CHECK(p.ring_difference == 0);
    REQUIRE(p.ring_pairs.size() == 1);
    CHECK(p.ring_pairs[0] == std::pair<int, int>{i, i});
  }
  for (int i = 0; i + 1 < r; ++i) {
    const auto& p = g.plane(r + i);
    CHECK(p.kind == PlaneKind::summed_rd1);
    CHECK(std::abs(p.ring_difference) == 1);
    REQUIRE(p.ring_pairs.size() == 2);
    CHECK(p.ring_pairs[0] == std::pair<int, int>{i, i + 1});
    CHECK(p.ring_pairs[1] == std::pair<int, int>{i + 1, i});
  }

  // Oblique section: |rd| ascending, positive sign first, then lower ring.
  int expected_id = 2 * r - 1;
  for (int rd = 2; rd < r; ++rd)
    for (int sign : {+1, -1})
      for (int lower = 0; lower + rd < r; ++lower) {
        const auto& p = g.plane(expected_id++);
        CHECK(p.kind == PlaneKind::oblique);
        CHECK(p.ring_difference == sign * rd);
        REQUIRE(p.ring_pairs.size() == 1);
        const auto expected_pair = sign > 0 ? std::pair<int, int>{lower, lower + rd}
                                            : std::pair<int, int>{lower + rd, lower};
        CHECK(p.ring_pairs[0] == expected_pair);
      }
  CHECK(expected_id == g.plane_count());

  // Every ordered ring pair resolves to a plane listing it.
  for (int ra = 0; ra < r; ++ra)
    for (int rb = 0; rb < r; ++rb) {
      int id = g.plane_for_ring_pair(ra, rb);
      REQUIRE(id >= 0);
      const auto& pairs = g.plane(id).ring_pairs;
      CHECK(std::find(pairs.begin(), pairs.end(), std::pair<int, int>{ra, rb}) != pairs.end());
    }
}

TEST_CASE("kind taxonomy follows ring difference") {
  const auto g = mock_scanner();
  for (const auto& p : g.planes()) {
    const int mag = std::abs(p.ring_difference);
    switch (p.kind) {
      case PlaneKind::direct:
        CHECK(mag == 0);
        CHECK(p.ring_pairs.size() == 1);
        break;
      case PlaneKind::summed_rd1:
        CHECK(mag == 1);
        CHECK(p.ring_pairs.size() == 2);
        break;
      case PlaneKind::oblique:
        CHECK(mag >= 2);
        CHECK(p.ring_pairs.size() == 1);
        break;
    }
  }
}

TEST_CASE("lor_to_bin ignores endpoint order") {
  const auto g = mock_scanner();
  Rng rng(41);
  int in_acceptance = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    Lor lor;
    lor.a = {static_cast<int>(rng.below(15)), static_cast<int>(rng.below(128))};
    do {
      lor.b = {static_cast<int>(rng.below(15)), static_cast<int>(rng.below(128))};
    } while (lor.b == lor.a);
    const auto fwd = g.lor_to_bin(lor);
    const auto rev = g.lor_to_bin({lor.b, lor.a});
    REQUIRE(fwd.has_value() == rev.has_value());
    if (fwd) {
      CHECK(*fwd == *rev);
      ++in_acceptance;
    }
  }
  CHECK(in_acceptance > 1000);  // the acceptance window covers a solid share
}

TEST_CASE("diametrically opposite crystals land on the central radial bin") {
  const auto g = mock_scanner();
  const int n = g.crystals_per_ring();
  for (int i = 0; i < n; ++i) {
    const auto bin = g.lor_to_bin({{7, i}, {7, (i + n / 2) % n}});
    REQUIRE(bin.has_value());
    CHECK(bin->radial == (g.radial_bins() - 1) / 2);
  }
}

TEST_CASE("exhaustive coverage: each bin hit once per contributing LOR set") {
  const auto g = mock_scanner();
  const int crystals = g.num_rings() * g.crystals_per_ring();
  const long bins_per_plane = static_cast<long>(g.radial_bins()) * g.angle_bins();
  std::vector<int> hits(static_cast<std::size_t>(g.plane_count()) * bins_per_plane, 0);
  long accepted = 0;
  for (int u = 0; u < crystals; ++u)
    for (int v = u + 1; v < crystals; ++v) {
      Lor lor{{u / 128, u % 128}, {v / 128, v % 128}};
      if (auto bin = g.lor_to_bin(lor)) {
        std::size_t flat = (static_cast<std::size_t>(bin->plane) * g.radial_bins() + bin->radial) *
                               g.angle_bins() +
                           bin->angle;
        ++hits[flat];
        ++accepted;
      }
    }

  long expected_lors = 0;
  for (const auto& p : g.planes()) expected_lors += bins_per_plane * p.ring_pairs.size();
  CHECK(accepted == expected_lors);

  long mismatches = 0;
  for (int plane = 0; plane < g.plane_count(); ++plane) {
    const int expected = static_cast<int>(g.plane(plane).ring_pairs.size());
    for (long b = 0; b < bins_per_plane; ++b)
      if (hits[static_cast<std::size_t>(plane) * bins_per_plane + b] != expected) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("bin_to_lors round trips through lor_to_bin") {
  const auto g = mock_scanner();
  for (int plane = 0; plane < g.plane_count(); ++plane)
    for (int radial = 0; radial < g.radial_bins(); ++radial)
      for (int angle = 0; angle < g.angle_bins(); ++angle) {
        BinAddress bin{plane, radial, angle};
        const auto lors = g.bin_to_lors(bin);
        REQUIRE(lors.size() == g.plane(plane).ring_pairs.size());
        for (const auto& lor : lors) {
          const auto back = g.lor_to_bin(lor);
          REQUIRE(back.has_value());
          CHECK(*back == bin);
        }
      }
}

TEST_CASE("rotating both crystals shifts the view index") {
  const auto g = mock_scanner();
  const int n = g.crystals_per_ring();
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 4000 && checked < 500; ++trial) {
    Lor lor;
    lor.a = {static_cast<int>(rng.below(15)), static_cast<int>(rng.below(128))};
    do {
      lor.b = {lor.a.ring, static_cast<int>(rng.below(128))};
    } while (lor.b == lor.a);
    const auto bin = g.lor_to_bin(lor);
    if (!bin) continue;
    for (int k : {1, 2, 5}) {
      Lor rot{{lor.a.ring, (lor.a.index + k) % n}, {lor.b.ring, (lor.b.index + k) % n}};
      const auto rbin = g.lor_to_bin(rot);
      REQUIRE(rbin.has_value());
      CHECK(rbin->angle == (bin->angle + k) % g.angle_bins());
      // Crossing the half-turn wrap mirrors the radial coordinate.
      if (bin->angle + k < g.angle_bins())
        CHECK(rbin->radial == bin->radial);
      else
        CHECK(rbin->radial == g.radial_bins() - 1 - bin->radial);
    }
    ++checked;
  }
  CHECK(checked == 500);
}

TEST_CASE("input validation") {
  const auto g = mock_scanner();
  CHECK_THROWS_AS((void)g.lor_to_bin({{0, 0}, {0, 128}}), std::out_of_range);
  CHECK_THROWS_AS((void)g.lor_to_bin({{15, 0}, {0, 1}}), std::out_of_range);
  CHECK_THROWS_AS((void)g.lor_to_bin({{3, 5}, {3, 5}}), std::invalid_argument);
  CHECK_THROWS_AS((void)g.bin_to_lors({-1, 0, 0}), std::out_of_range);
  CHECK_THROWS_AS((void)g.bin_to_lors({0, g.radial_bins(), 0}), std::out_of_range);
  CHECK_THROWS_AS((void)g.bin_to_lors({0, 0, g.angle_bins()}), std::out_of_range);
  CHECK_THROWS_AS((void)g.plane(211), std::out_of_range);

  // Axis-parallel pairs (same transaxial index, different ring) have no bin.
  CHECK_FALSE(g.lor_to_bin({{0, 17}, {5, 17}}).has_value());

  CHECK_THROWS_AS(ScannerGeometry(0, 128, 4, 5.3, 80), std::invalid_argument);
  CHECK_THROWS_AS(ScannerGeometry(15, 127, 4, 5.3, 80), std::invalid_argument);
  CHECK_THROWS_AS(ScannerGeometry(15, 128, 4, 5.3, 80, 64), std::invalid_argument);
  CHECK_THROWS_AS(ScannerGeometry(15, 128, 4, 5.3, 80, 129), std::invalid_argument);
  CHECK_THROWS_AS(ScannerGeometry(15, 128, -4, 5.3, 80), std::invalid_argument);
}

TEST_CASE("default radial acceptance and field of view") {
  const auto g = mock_scanner();
  CHECK(g.radial_bins() == 65);
  CHECK(g.angle_bins() == 64);
  // Narrowest accepted chord separation is 32 crystal steps.
  CHECK(g.fov_radius_mm() == doctest::Approx(80.0 * std::cos(M_PI * 32 / 128)).epsilon(1e-12));

  // Chord endpoints sit on the detector circle and respect the bin geometry.
  for (int radial : {0, 10, 32, 64})
    for (int angle : {0, 17, 63}) {
      const Chord c = g.chord_for_bin(radial, angle);
      CHECK(std::hypot(c.x1, c.y1) == doctest::Approx(80.0).epsilon(1e-12));
      CHECK(std::hypot(c.x2, c.y2) == doctest::Approx(80.0).epsilon(1e-12));
      // Distance from center to the chord stays inside the field of view.
      const double dx = c.x2 - c.x1, dy = c.y2 - c.y1;
      const double dist = std::abs(dx * c.y1 - dy * c.x1) / std::hypot(dx, dy);
      CHECK(dist <= g.fov_radius_mm() + 1e-9);
    }
}
