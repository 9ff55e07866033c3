#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "sparsepet/geometry.hpp"
#include "sparsepet/rng.hpp"
#include "sparsepet/sparsity_mask.hpp"

using namespace sparsepet;

namespace {

ScannerGeometry mock_scanner() { return ScannerGeometry(15, 128, 4.0, 5.3, 80.0); }

// Independent retention count: walk unordered crystal pairs directly instead
// of enumerating bins.
double oracle_retention(const ScannerGeometry& g, const CrystalMask& m) {
  const int crystals = g.num_rings() * g.crystals_per_ring();
  const int per_ring = g.crystals_per_ring();
  long total = 0, kept = 0;
  for (int u = 0; u < crystals; ++u)
    for (int v = u + 1; v < crystals; ++v) {
      Lor lor{{u / per_ring, u % per_ring}, {v / per_ring, v % per_ring}};
      if (!g.lor_to_bin(lor)) continue;
      ++total;
      if (m.kept(lor.a) && m.kept(lor.b)) ++kept;
    }
  return static_cast<double>(kept) / static_cast<double>(total);
}

// Recompute one plane's weights by scanning all crystal pairs (forward
// direction) rather than expanding bins.
PlaneMask oracle_plane_mask(const ScannerGeometry& g, const CrystalMask& m, int plane_id) {
  PlaneMask pm;
  pm.plane_id = plane_id;
  pm.radial_bins = g.radial_bins();
  pm.angle_bins = g.angle_bins();
  const std::size_t bins = static_cast<std::size_t>(pm.radial_bins) * pm.angle_bins;
  std::vector<int> surviving(bins, 0), contributing(bins, 0);
  const int crystals = g.num_rings() * g.crystals_per_ring();
  const int per_ring = g.crystals_per_ring();
  for (int u = 0; u < crystals; ++u)
    for (int v = u + 1; v < crystals; ++v) {
      Lor lor{{u / per_ring, u % per_ring}, {v / per_ring, v % per_ring}};
      const auto bin = g.lor_to_bin(lor);
      if (!bin || bin->plane != plane_id) continue;
      const std::size_t at = static_cast<std::size_t>(bin->radial) * pm.angle_bins + bin->angle;
      ++contributing[at];
      if (m.kept(lor.a) && m.kept(lor.b)) ++surviving[at];
    }
  pm.weight.resize(bins);
  pm.zero.resize(bins);
  pm.affected.resize(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    REQUIRE(contributing[i] > 0);
    pm.weight[i] = static_cast<float>(surviving[i]) / static_cast<float>(contributing[i]);
    pm.zero[i] = surviving[i] == 0 ? 1 : 0;
    pm.affected[i] = surviving[i] < contributing[i] ? 1 : 0;
  }
  return pm;
}

}  // namespace

TEST_CASE("chessboard keeps half the crystals and complements partition") {
  const auto g = mock_scanner();
  const auto black = chessboard_mask(g, {1, 1, PatternParity::black});
  const auto white = chessboard_mask(g, {1, 1, PatternParity::white});
  CHECK(black.kept_count() == 15 * 128 / 2);
  CHECK(white.kept_count() == 15 * 128 / 2);
  for (int r = 0; r < 15; ++r)
    for (int i = 0; i < 128; ++i) REQUIRE(black.kept(r, i) != white.kept(r, i));
}

TEST_CASE("2x2 blocks keep half of a 16-crystal ring") {
  ScannerGeometry g(4, 16, 4.0, 5.3, 80.0);
  const auto m = chessboard_mask(g, {2, 2, PatternParity::black});
  for (int r = 0; r < 4; ++r) {
    int kept = 0;
    for (int i = 0; i < 16; ++i) kept += m.kept(r, i) ? 1 : 0;
    CHECK(kept == 8);
  }
  // Rings 0 and 1 share a block row, ring 2 flips it.
  for (int i = 0; i < 16; ++i) {
    CHECK(m.kept(0, i) == m.kept(1, i));
    CHECK(m.kept(0, i) != m.kept(2, i));
  }
}

TEST_CASE("pattern preconditions") {
  const auto g = mock_scanner();
  CHECK_THROWS_AS(chessboard_mask(g, {3, 1, PatternParity::black}), std::invalid_argument);
  CHECK_THROWS_AS(chessboard_mask(g, {0, 1, PatternParity::black}), std::invalid_argument);
  CHECK_THROWS_AS(chessboard_mask(g, {1, 0, PatternParity::black}), std::invalid_argument);
}

TEST_CASE("lor retention: full mask 1.0, empty mask 0.0, chessboard about a quarter") {
  const auto g = mock_scanner();

  CrystalMask all(g.num_rings(), g.crystals_per_ring());
  CHECK(lor_retention(g, all) == doctest::Approx(1.0));

  CrystalMask none(g.num_rings(), g.crystals_per_ring());
  for (int r = 0; r < g.num_rings(); ++r)
    for (int i = 0; i < g.crystals_per_ring(); ++i) none.set_kept(r, i, false);
  CHECK(lor_retention(g, none) == doctest::Approx(0.0));

  const auto black = chessboard_mask(g, {1, 1, PatternParity::black});
  const double retention = lor_retention(g, black);
  CHECK(std::abs(retention - 0.25) <= 0.005);
  CHECK(retention == doctest::Approx(oracle_retention(g, black)).epsilon(1e-12));

  const auto white = chessboard_mask(g, {1, 1, PatternParity::white});
  CHECK(std::abs(lor_retention(g, white) - 0.25) <= 0.005);
}

TEST_CASE("plane weights match the forward-direction oracle") {
  const auto g = mock_scanner();
  const auto m = chessboard_mask(g, {1, 1, PatternParity::black});
  const auto masks = sinogram_masks(g, m);
  REQUIRE(static_cast<int>(masks.size()) == g.plane_count());

  // One plane of each kind: direct ring 3, summed lower ring 6, oblique rd -4.
  for (int plane_id : {3, 15 + 6, g.plane_for_ring_pair(11, 7)}) {
    const auto oracle = oracle_plane_mask(g, m, plane_id);
    const auto& got = masks[static_cast<std::size_t>(plane_id)];
    REQUIRE(got.weight.size() == oracle.weight.size());
    for (std::size_t i = 0; i < got.weight.size(); ++i) {
      CHECK(got.weight[i] == oracle.weight[i]);
      CHECK(got.zero[i] == oracle.zero[i]);
      CHECK(got.affected[i] == oracle.affected[i]);
    }
  }
}

TEST_CASE("weight taxonomy per plane kind") {
  const auto g = mock_scanner();
  const auto masks = sinogram_masks(g, chessboard_mask(g, {1, 1, PatternParity::black}));
  bool saw_half = false, saw_zero_on_summed = false;
  for (const auto& p : g.planes()) {
    const auto& pm = masks[static_cast<std::size_t>(p.plane_id)];
    for (float w : pm.weight) {
      if (p.kind == PlaneKind::summed_rd1) {
        REQUIRE((w == 0.0f || w == 0.5f || w == 1.0f));
        saw_half |= w == 0.5f;
        saw_zero_on_summed |= w == 0.0f;
      } else {
        REQUIRE((w == 0.0f || w == 1.0f));
      }
    }
    // zero implies affected.
    for (std::size_t i = 0; i < pm.weight.size(); ++i)
      if (pm.zero[i]) REQUIRE(pm.affected[i]);
  }
  CHECK(saw_half);
  CHECK(saw_zero_on_summed);
}

TEST_CASE("zeroed fraction on direct planes equals lost same-ring retention") {
  const auto g = mock_scanner();
  const auto m = chessboard_mask(g, {1, 1, PatternParity::black});
  const auto masks = sinogram_masks(g, m);

  long same_ring_total = 0, same_ring_kept = 0;
  for (int r = 0; r < g.num_rings(); ++r)
    for (int i = 0; i < g.crystals_per_ring(); ++i)
      for (int j = i + 1; j < g.crystals_per_ring(); ++j) {
        Lor lor{{r, i}, {r, j}};
        if (!g.lor_to_bin(lor)) continue;
        ++same_ring_total;
        if (m.kept(lor.a) && m.kept(lor.b)) ++same_ring_kept;
      }
  const double same_ring_retention =
      static_cast<double>(same_ring_kept) / static_cast<double>(same_ring_total);

  long zero = 0, bins = 0;
  for (int r = 0; r < g.num_rings(); ++r) {
    const auto& pm = masks[static_cast<std::size_t>(r)];
    for (auto z : pm.zero) {
      zero += z;
      ++bins;
    }
  }
  const double zero_fraction = static_cast<double>(zero) / static_cast<double>(bins);
  CHECK(std::abs(zero_fraction - (1.0 - same_ring_retention)) <= 0.005);
}

TEST_CASE("black and white parities affect equal fractions") {
  const auto g = mock_scanner();
  const auto mb = sinogram_masks(g, chessboard_mask(g, {1, 1, PatternParity::black}));
  const auto mw = sinogram_masks(g, chessboard_mask(g, {1, 1, PatternParity::white}));
  long affected_b = 0, affected_w = 0, bins = 0;
  for (std::size_t p = 0; p < mb.size(); ++p)
    for (std::size_t i = 0; i < mb[p].affected.size(); ++i) {
      affected_b += mb[p].affected[i];
      affected_w += mw[p].affected[i];
      ++bins;
    }
  const double fb = static_cast<double>(affected_b) / static_cast<double>(bins);
  const double fw = static_cast<double>(affected_w) / static_cast<double>(bins);
  CHECK(std::abs(fb - fw) <= 0.005);
}

TEST_CASE("apply_mask passes weight-1 bins through bit-identical and zeroes weight-0 bins") {
  const auto g = mock_scanner();
  const auto masks = sinogram_masks(g, chessboard_mask(g, {1, 1, PatternParity::black}));

  Rng rng(99);
  SinogramStack counts(g.plane_count(), g.radial_bins(), g.angle_bins(), true);
  for (auto& plane : counts.planes)
    for (auto& c : plane) c = static_cast<float>(rng.poisson(7.0));

  const auto thinned = apply_mask(counts, masks, 1234);
  REQUIRE(thinned.planes.size() == counts.planes.size());
  CHECK(thinned.counts_are_integer);
  for (std::size_t p = 0; p < counts.planes.size(); ++p)
    for (std::size_t i = 0; i < counts.planes[p].size(); ++i) {
      const float w = masks[p].weight[i];
      if (w == 1.0f) REQUIRE(thinned.planes[p][i] == counts.planes[p][i]);
      if (w == 0.0f) REQUIRE(thinned.planes[p][i] == 0.0f);
      REQUIRE(thinned.planes[p][i] <= counts.planes[p][i]);
      REQUIRE(thinned.planes[p][i] >= 0.0f);
      REQUIRE(thinned.planes[p][i] == std::floor(thinned.planes[p][i]));
    }

  // Deterministic in the seed.
  const auto again = apply_mask(counts, masks, 1234);
  CHECK(again == thinned);
  const auto other = apply_mask(counts, masks, 1235);
  CHECK(other != thinned);
}

TEST_CASE("half-weight thinning halves a constant-rate Poisson plane") {
  const std::size_t bins = 10000;
  PlaneMask pm;
  pm.plane_id = 0;
  pm.radial_bins = 100;
  pm.angle_bins = 100;
  pm.weight.assign(bins, 0.5f);
  pm.zero.assign(bins, 0);
  pm.affected.assign(bins, 1);

  const double lambda = 10.0;
  Rng rng(5);
  SinogramStack counts(1, 100, 100, true);
  double total_in = 0;
  for (auto& c : counts.planes[0]) {
    c = static_cast<float>(rng.poisson(lambda));
    total_in += c;
  }

  const auto thinned = apply_mask(counts, {pm}, 777);
  double total_out = 0;
  for (float c : thinned.planes[0]) total_out += c;
  const double mean_out = total_out / static_cast<double>(bins);
  // Thinned bins are Poisson(lambda / 2); allow three standard errors.
  const double se = std::sqrt(lambda / 2.0 / static_cast<double>(bins));
  CHECK(std::abs(mean_out - lambda / 2.0) <= 3.0 * se);
  CHECK(total_out < total_in);
}

TEST_CASE("apply_mask validates its inputs") {
  const auto g = mock_scanner();
  const auto masks = sinogram_masks(g, chessboard_mask(g, {1, 1, PatternParity::black}));

  SinogramStack wrong_planes(3, g.radial_bins(), g.angle_bins(), true);
  CHECK_THROWS_AS(apply_mask(wrong_planes, masks, 1), std::invalid_argument);

  SinogramStack wrong_bins(g.plane_count(), 5, 2, true);
  CHECK_THROWS_AS(apply_mask(wrong_bins, masks, 1), std::invalid_argument);

  SinogramStack fractional(g.plane_count(), g.radial_bins(), g.angle_bins(), true);
  for (auto& p : fractional.planes) p.assign(p.size(), 2.5f);
  CHECK_THROWS_AS(apply_mask(fractional, masks, 1), std::invalid_argument);

  SinogramStack unflagged(g.plane_count(), g.radial_bins(), g.angle_bins(), false);
  CHECK_THROWS_AS(apply_mask(unflagged, masks, 1), std::invalid_argument);
}

TEST_CASE("crystal mask shape must match the scanner") {
  const auto g = mock_scanner();
  CrystalMask wrong(7, 128);
  CHECK_THROWS_AS(lor_retention(g, wrong), std::invalid_argument);
  CHECK_THROWS_AS(sinogram_masks(g, wrong), std::invalid_argument);
}
