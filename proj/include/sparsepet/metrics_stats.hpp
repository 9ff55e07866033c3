#pragma once
// Quantitative comparison metrics: windowed SSIM + MAE between planes,
// sampled pixel correlation with a fitted line, Fisher-Z comparison of two
// correlations, the Mann-Whitney U rank test, and ROI statistics (background
// variability, contrast recovery).
//
// All functions are pure and thread-safe. Degenerate inputs (empty ROI, zero
// variance, undefined ratios) throw std::invalid_argument rather than
// returning NaN so callers cannot silently aggregate garbage.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sparsepet {

// Mean / population standard deviation / size of one region of interest.
struct RoiStats {
  double mean = 0.0;
  double stddev = 0.0;
  int voxel_count = 0;
};

// One evaluated image or plane pair, as aggregated into report rows.
struct ComparisonRecord {
  double ssim = 0.0;
  double mae = 0.0;
  double r = 0.0;
  double fit_slope = 0.0;
  double bv = 0.0;
  double rbv = 0.0;
  double cr = 0.0;
  double u_statistic = 0.0;
  double p_fisher_z = 1.0;
  double p_rank_test = 1.0;
};

struct PlaneComparison {
  double ssim = 0.0;
  double mae_full = 0.0;
  double mae_masked = 0.0;
};

// SSIM and MAE between two planes of shape rows x cols. The SSIM is the same
// sliding-window routine the training loss uses (uniform window, biased
// moments), evaluated in double precision with the supplied dynamic range.
// mae_full averages |a - b| over every pixel; mae_masked averages over the
// pixels where mask is nonzero (0 when the mask is empty).
PlaneComparison compare_planes(const std::vector<float>& a,
                               const std::vector<float>& b, int rows, int cols,
                               const std::vector<std::uint8_t>& mask,
                               double dynamic_range, int window = 7);

struct CorrelationFit {
  double r = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
};

// Pearson correlation and least-squares line b ~ slope * a + intercept over a
// seeded random sample of pixel positions (drawn with replacement). When
// sample_size >= the number of pixels, every pixel enters exactly once
// instead, which makes small-image results independent of the seed.
// Throws when either sampled coordinate has zero variance.
CorrelationFit pixel_correlation(const std::vector<float>& a,
                                 const std::vector<float>& b,
                                 std::size_t sample_size, std::uint64_t seed);

struct ZComparison {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Compares two Pearson correlations via the variance-stabilizing z = atanh(r)
// transform: statistic = (z1 - z2) / sqrt(1/(n1-3) + 1/(n2-3)), with a
// two-sided normal p-value. Requires |r| < 1 and n > 3 on both sides.
ZComparison fisher_z_compare(double r1, std::size_t n1, double r2,
                             std::size_t n2);

enum class RankTestMethod {
  automatic,      // exact when min(n) <= 8 and enumeration is affordable
  exact,          // full enumeration of rank arrangements
  normal_approx,  // tie-corrected normal with continuity correction
};

struct RankTest {
  double u_statistic = 0.0;
  double p_value = 1.0;
};

// Two-sided Mann-Whitney U test. Ties receive midranks; the reported U is the
// statistic of sample_a. The exact branch enumerates every assignment of the
// combined values to the two groups and counts arrangements at least as far
// from the null mean n1*n2/2 as the observed U. The normal branch applies the
// tie-corrected variance and a 0.5 continuity correction toward the mean.
RankTest mann_whitney_u(const std::vector<double>& sample_a,
                        const std::vector<double>& sample_b,
                        RankTestMethod method = RankTestMethod::automatic);

// Mean and population standard deviation over the nonzero-mask voxels.
RoiStats roi_stats(const std::vector<float>& image,
                   const std::vector<std::uint8_t>& roi);

struct RoiComparison {
  double bv_restored = 0.0;
  double rbv = 0.0;
  double cr = 0.0;
};

// Background variability BV = sigma/mu * 100 over the background ROI, its
// ratio between restored and original, and contrast recovery
// CR = (mu_bladder - mu_background)_restored / (same difference)_original
// * 100. Throws when a BV mean is zero, the original BV is zero, or the
// original contrast difference is zero.
RoiComparison roi_metrics(const std::vector<float>& restored,
                          const std::vector<float>& original,
                          const std::vector<std::uint8_t>& roi_bladder,
                          const std::vector<std::uint8_t>& roi_background);

}  // namespace sparsepet
