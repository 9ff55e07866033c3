#include "sparsepet/metrics_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sparsepet/neural.hpp"
#include "sparsepet/rng.hpp"

namespace sparsepet {
namespace {

// Two-sided tail of the standard normal at |z|.
double two_sided_normal_p(double z) {
  return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

// Midranks of the combined sample: tied runs share the average of the ranks
// they occupy. Returned in the order of the concatenated input.
std::vector<double> midranks(const std::vector<double>& combined) {
  const std::size_t n = combined.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return combined[i] < combined[j];
  });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && combined[order[j + 1]] == combined[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = shared;
    i = j + 1;
  }
  return rank;
}

double binomial_coefficient(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (std::size_t i = 0; i < k; ++i)
    c *= static_cast<double>(n - i) / static_cast<double>(i + 1);
  return c;
}

// Fraction of the C(n, m) assignments of m ranks to the first group whose U
// lies at least as far from the null mean as the observed distance.
double exact_rank_p(const std::vector<double>& rank, std::size_t m,
                    double null_mean, double observed_distance) {
  const std::size_t n = rank.size();
  std::vector<std::size_t> pick(m);
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  const double rank_offset = 0.5 * static_cast<double>(m * (m + 1));
  std::size_t hits = 0;
  std::size_t total = 0;
  for (;;) {
    double rank_sum = 0.0;
    for (std::size_t idx : pick) rank_sum += rank[idx];
    const double u = rank_sum - rank_offset;
    if (std::fabs(u - null_mean) >= observed_distance - 1e-9) ++hits;
    ++total;
    std::size_t i = m;
    while (i > 0 && pick[i - 1] == n - m + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < m; ++j) pick[j] = pick[j - 1] + 1;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

RoiStats accumulate_roi(const std::vector<float>& image,
                        const std::vector<std::uint8_t>& roi,
                        const char* what) {
  if (roi.size() != image.size())
    throw std::invalid_argument(std::string(what) + ": ROI size mismatch");
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (!roi[i]) continue;
    sum += image[i];
    ++count;
  }
  if (count == 0) throw std::invalid_argument(std::string(what) + ": empty ROI");
  const double mean = sum / count;
  double sq = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (!roi[i]) continue;
    const double d = image[i] - mean;
    sq += d * d;
  }
  RoiStats stats;
  stats.mean = mean;
  stats.stddev = std::sqrt(sq / count);
  stats.voxel_count = count;
  return stats;
}

// sigma/mu * 100 over one ROI; the mean must be nonzero for the ratio to
// exist.
double background_variability(const RoiStats& stats, const char* what) {
  if (stats.mean == 0.0)
    throw std::invalid_argument(std::string(what) + ": zero ROI mean");
  return stats.stddev / stats.mean * 100.0;
}

}  // namespace

PlaneComparison compare_planes(const std::vector<float>& a,
                               const std::vector<float>& b, int rows, int cols,
                               const std::vector<std::uint8_t>& mask,
                               double dynamic_range, int window) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("compare_planes: empty shape");
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (a.size() != n || b.size() != n)
    throw std::invalid_argument("compare_planes: plane size mismatch");
  if (mask.size() != n)
    throw std::invalid_argument("compare_planes: mask size mismatch");

  Tensor<double> ta(1, 1, rows, cols);
  Tensor<double> tb(1, 1, rows, cols);
  for (std::size_t i = 0; i < n; ++i) {
    ta.data[i] = a[i];
    tb.data[i] = b[i];
  }
  PlaneComparison out;
  out.ssim = ssim_windowed(ta, tb, dynamic_range, window).value;

  double sum_all = 0.0;
  double sum_masked = 0.0;
  std::size_t masked = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::fabs(static_cast<double>(a[i]) - b[i]);
    sum_all += d;
    if (mask[i]) {
      sum_masked += d;
      ++masked;
    }
  }
  out.mae_full = sum_all / static_cast<double>(n);
  out.mae_masked = masked ? sum_masked / static_cast<double>(masked) : 0.0;
  return out;
}

CorrelationFit pixel_correlation(const std::vector<float>& a,
                                 const std::vector<float>& b,
                                 std::size_t sample_size, std::uint64_t seed) {
  if (a.size() != b.size())
    throw std::invalid_argument("pixel_correlation: size mismatch");
  if (a.empty()) throw std::invalid_argument("pixel_correlation: empty input");
  if (sample_size < 2)
    throw std::invalid_argument("pixel_correlation: sample_size must be >= 2");

  std::vector<double> xs;
  std::vector<double> ys;
  if (sample_size >= a.size()) {
    xs.assign(a.begin(), a.end());
    ys.assign(b.begin(), b.end());
  } else {
    Rng rng(seed);
    xs.reserve(sample_size);
    ys.reserve(sample_size);
    for (std::size_t i = 0; i < sample_size; ++i) {
      const auto idx = static_cast<std::size_t>(rng.below(a.size()));
      xs.push_back(a[idx]);
      ys.push_back(b[idx]);
    }
  }

  const auto count = static_cast<double>(xs.size());
  const double mean_x = std::accumulate(xs.begin(), xs.end(), 0.0) / count;
  const double mean_y = std::accumulate(ys.begin(), ys.end(), 0.0) / count;
  double var_x = 0.0;
  double var_y = 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mean_x;
    const double dy = ys[i] - mean_y;
    var_x += dx * dx;
    var_y += dy * dy;
    cov += dx * dy;
  }
  if (var_x <= 0.0 || var_y <= 0.0)
    throw std::invalid_argument("pixel_correlation: zero variance in sample");

  CorrelationFit fit;
  fit.r = cov / std::sqrt(var_x * var_y);
  fit.slope = cov / var_x;
  fit.intercept = mean_y - fit.slope * mean_x;
  return fit;
}

ZComparison fisher_z_compare(double r1, std::size_t n1, double r2,
                             std::size_t n2) {
  if (!(std::fabs(r1) < 1.0) || !(std::fabs(r2) < 1.0))
    throw std::invalid_argument("fisher_z_compare: |r| must be < 1");
  if (n1 <= 3 || n2 <= 3)
    throw std::invalid_argument("fisher_z_compare: need n > 3");
  const double z1 = std::atanh(r1);
  const double z2 = std::atanh(r2);
  const double se = std::sqrt(1.0 / static_cast<double>(n1 - 3) +
                              1.0 / static_cast<double>(n2 - 3));
  ZComparison out;
  out.statistic = (z1 - z2) / se;
  out.p_value = two_sided_normal_p(out.statistic);
  return out;
}

RankTest mann_whitney_u(const std::vector<double>& sample_a,
                        const std::vector<double>& sample_b,
                        RankTestMethod method) {
  if (sample_a.empty() || sample_b.empty())
    throw std::invalid_argument("mann_whitney_u: empty sample");
  const std::size_t n1 = sample_a.size();
  const std::size_t n2 = sample_b.size();
  const std::size_t n = n1 + n2;

  std::vector<double> combined;
  combined.reserve(n);
  combined.insert(combined.end(), sample_a.begin(), sample_a.end());
  combined.insert(combined.end(), sample_b.begin(), sample_b.end());
  const std::vector<double> rank = midranks(combined);

  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < n1; ++i) rank_sum_a += rank[i];
  const double u_a =
      rank_sum_a - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
  const double null_mean = 0.5 * static_cast<double>(n1) * static_cast<double>(n2);

  // Arrangement count for the smaller group; both groups give the same
  // distance distribution because U_a + U_b is constant.
  const std::size_t m = std::min(n1, n2);
  const double arrangements = binomial_coefficient(n, m);
  constexpr double kExactLimit = 2e7;

  bool use_exact = false;
  switch (method) {
    case RankTestMethod::automatic:
      use_exact = m <= 8 && arrangements <= kExactLimit;
      break;
    case RankTestMethod::exact:
      if (arrangements > kExactLimit)
        throw std::invalid_argument(
            "mann_whitney_u: exact enumeration infeasible for these sizes");
      use_exact = true;
      break;
    case RankTestMethod::normal_approx:
      use_exact = false;
      break;
  }

  RankTest out;
  out.u_statistic = u_a;
  const double distance = std::fabs(u_a - null_mean);
  if (use_exact) {
    out.p_value = exact_rank_p(rank, m, null_mean, distance);
    return out;
  }

  // Tie-corrected variance of U under the null, then a continuity-corrected
  // normal tail. A fully tied sample has zero variance and carries no
  // evidence either way.
  double tie_term = 0.0;
  {
    std::vector<double> sorted = combined;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double nn = static_cast<double>(n);
  const double variance =
      (static_cast<double>(n1) * static_cast<double>(n2) / 12.0) *
      ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (variance <= 0.0) {
    out.p_value = 1.0;
    return out;
  }
  const double z = std::max(0.0, distance - 0.5) / std::sqrt(variance);
  out.p_value = two_sided_normal_p(z);
  return out;
}

RoiStats roi_stats(const std::vector<float>& image,
                   const std::vector<std::uint8_t>& roi) {
  return accumulate_roi(image, roi, "roi_stats");
}

RoiComparison roi_metrics(const std::vector<float>& restored,
                          const std::vector<float>& original,
                          const std::vector<std::uint8_t>& roi_bladder,
                          const std::vector<std::uint8_t>& roi_background) {
  if (restored.size() != original.size())
    throw std::invalid_argument("roi_metrics: image size mismatch");
  const RoiStats bladder_restored =
      accumulate_roi(restored, roi_bladder, "roi_metrics");
  const RoiStats bladder_original =
      accumulate_roi(original, roi_bladder, "roi_metrics");
  const RoiStats background_restored =
      accumulate_roi(restored, roi_background, "roi_metrics");
  const RoiStats background_original =
      accumulate_roi(original, roi_background, "roi_metrics");

  RoiComparison out;
  out.bv_restored = background_variability(background_restored, "roi_metrics");
  const double bv_original =
      background_variability(background_original, "roi_metrics");
  if (bv_original == 0.0)
    throw std::invalid_argument("roi_metrics: original BV is zero");
  out.rbv = out.bv_restored / bv_original;

  const double contrast_original = bladder_original.mean - background_original.mean;
  if (contrast_original == 0.0)
    throw std::invalid_argument("roi_metrics: zero original contrast");
  out.cr = (bladder_restored.mean - background_restored.mean) /
           contrast_original * 100.0;
  return out;
}

}  // namespace sparsepet
