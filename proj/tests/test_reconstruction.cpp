#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sparsepet/geometry.hpp"
#include "sparsepet/phantom_sim.hpp"
#include "sparsepet/reconstruction.hpp"
#include "sparsepet/rng.hpp"

using namespace sparsepet;

namespace {

ScannerGeometry mock_scanner() { return ScannerGeometry(15, 128, 4.0, 5.3, 80.0); }

std::vector<double> random_vector(Rng& rng, std::size_t size, double lo, double hi) {
  std::vector<double> v(size);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Supersampled centered disk of unit activity whose rim falls off linearly
// over ramp_mm (0 gives a binary coverage rasterization).
std::vector<double> disk_image(int n, double pixel_mm, double radius_mm, double ramp_mm = 0.0) {
  const int ss = 8;
  std::vector<double> img(static_cast<std::size_t>(n) * n, 0.0);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      double sum = 0.0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const double x = (ix + (sx + 0.5) / ss - n / 2.0) * pixel_mm;
          const double y = (iy + (sy + 0.5) / ss - n / 2.0) * pixel_mm;
          const double r = std::hypot(x, y);
          const double u = ramp_mm > 0.0 ? std::clamp((radius_mm - r) / ramp_mm, 0.0, 1.0)
                                         : static_cast<double>(r <= radius_mm);
          sum += u * u * (3.0 - 2.0 * u);  // C1 rim: no kink for a sampled ray to alias
        }
      img[static_cast<std::size_t>(iy) * n + ix] = sum / (ss * ss);
    }
  return img;
}

std::vector<double> rasterize_slice(const PhantomSlice& slice, int n, double pixel_mm) {
  const int ss = 4;
  std::vector<double> img(static_cast<std::size_t>(n) * n, 0.0);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      double sum = 0.0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx)
          sum += activity_at(slice, (ix + (sx + 0.5) / ss - n / 2.0) * pixel_mm,
                             (iy + (sy + 0.5) / ss - n / 2.0) * pixel_mm);
      img[static_cast<std::size_t>(iy) * n + ix] = sum / (ss * ss);
    }
  return img;
}

double nrmse(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return std::sqrt(num / den);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

std::vector<double> widen(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

// Full width at half maximum of the central row, by linear interpolation of
// the half-maximum crossings, in pixels.
double measured_fwhm(const std::vector<float>& image, int n) {
  const int row = n / 2;
  const float* p = image.data() + static_cast<std::size_t>(row) * n;
  const int peak = static_cast<int>(std::max_element(p, p + n) - p);
  const double half = p[peak] / 2.0;
  double left = 0, right = 0;
  for (int x = peak; x > 0; --x)
    if (p[x - 1] < half && p[x] >= half) {
      left = x - 1 + (half - p[x - 1]) / (p[x] - p[x - 1]);
      break;
    }
  for (int x = peak; x < n - 1; ++x)
    if (p[x + 1] < half && p[x] >= half) {
      right = x + (p[x] - half) / (p[x] - p[x + 1]);
      break;
    }
  return right - left;
}

}  // namespace

TEST_CASE("project and backproject are adjoint") {
  const ScannerGeometry geom = mock_scanner();
  const int n = 48;
  const double pixel = 2.0;
  Rng rng(501);
  for (int trial = 0; trial < 10; ++trial) {
    const auto image = random_vector(rng, static_cast<std::size_t>(n) * n, 0.0, 1.0);
    const auto plane = random_vector(
        rng, static_cast<std::size_t>(geom.radial_bins()) * geom.angle_bins(), 0.0, 1.0);
    const double lhs = dot(project(image, n, pixel, geom), plane);
    const double rhs = dot(image, backproject(plane, n, pixel, geom));
    CHECK(std::abs(lhs - rhs) <= 1e-9 * std::abs(lhs));
  }
}

TEST_CASE("zero image projects to a zero sinogram") {
  const ScannerGeometry geom = mock_scanner();
  const std::vector<double> image(48 * 48, 0.0);
  for (double v : project(image, 48, 2.0, geom)) CHECK(v == 0.0);
}

TEST_CASE("centered disk projects to an angle-invariant sinogram") {
  const ScannerGeometry geom = mock_scanner();
  REQUIRE(geom.fov_radius_mm() > 40.0);
  // Discretization error scales with pixel^2 times the field's curvature, so
  // the anisotropy bound needs a fine grid and a rim without kinks; the field
  // stays a centered disk.
  const int n = 192;
  const double pixel = 0.625;
  const auto plane = project(disk_image(n, pixel, 30.0, 10.0), n, pixel, geom);

  double worst = 0.0, peak = 0.0;
  for (int r = 0; r < geom.radial_bins(); ++r) {
    double mean = 0.0;
    for (int a = 0; a < geom.angle_bins(); ++a)
      mean += plane[static_cast<std::size_t>(r) * geom.angle_bins() + a];
    mean /= geom.angle_bins();
    peak = std::max(peak, mean);
    for (int a = 0; a < geom.angle_bins(); ++a)
      worst = std::max(
          worst,
          std::abs(plane[static_cast<std::size_t>(r) * geom.angle_bins() + a] - mean));
  }
  MESSAGE("angular anisotropy ", worst / peak);
  CHECK(worst <= 1e-3 * peak);
}

TEST_CASE("operator and config preconditions are enforced") {
  const ScannerGeometry geom = mock_scanner();
  CHECK_THROWS_AS(project(std::vector<double>(10, 0.0), 48, 2.0, geom), std::invalid_argument);
  CHECK_THROWS_AS(backproject(std::vector<double>(10, 0.0), 48, 2.0, geom),
                  std::invalid_argument);

  ReconConfig cfg;  // subsets default 28 does not divide 64 angle bins
  CHECK_THROWS_AS(cfg.validate(geom), std::invalid_argument);
  cfg.subsets = 16;
  CHECK_NOTHROW(cfg.validate(geom));
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(geom), std::invalid_argument);
  cfg.iterations = 2;
  cfg.postfilter_fwhm_mm = -1.0;
  CHECK_THROWS_AS(cfg.validate(geom), std::invalid_argument);
  cfg.postfilter_fwhm_mm = 0.0;

  const std::size_t bins = static_cast<std::size_t>(geom.radial_bins()) * geom.angle_bins();
  CHECK_THROWS_AS(osem(std::vector<float>(10, 0.0f), geom, cfg), std::invalid_argument);
  std::vector<float> negative(bins, 1.0f);
  negative[5] = -0.5f;
  CHECK_THROWS_AS(osem(negative, geom, cfg), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_postfilter(std::vector<float>(10, 0.0f), 48, 5.0, 1.25),
                  std::invalid_argument);
  CHECK_THROWS_AS(gaussian_postfilter(std::vector<float>(48 * 48, 0.0f), 48, -5.0, 1.25),
                  std::invalid_argument);
}

TEST_CASE("zero sinogram reconstructs to a zero image") {
  const ScannerGeometry geom = mock_scanner();
  ReconConfig cfg;
  cfg.image_size = 48;
  cfg.pixel_size_mm = 2.0;
  cfg.subsets = 16;
  cfg.postfilter_fwhm_mm = 0.0;
  const std::size_t bins = static_cast<std::size_t>(geom.radial_bins()) * geom.angle_bins();
  for (float v : osem(std::vector<float>(bins, 0.0f), geom, cfg)) CHECK(v == 0.0f);
}

TEST_CASE("full-update expectation maximization preserves total counts") {
  const ScannerGeometry geom = mock_scanner();
  const int n = 64;
  const double pixel = 1.75;
  const auto truth = disk_image(n, pixel, 28.0);
  const auto noiseless = project(truth, n, pixel, geom);
  std::vector<float> y(noiseless.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<float>(noiseless[i]);
  double y_total = 0.0;
  for (float v : y) y_total += v;

  ReconConfig cfg;
  cfg.image_size = n;
  cfg.pixel_size_mm = pixel;
  cfg.subsets = 1;
  cfg.postfilter_fwhm_mm = 0.0;
  for (int iterations = 1; iterations <= 5; ++iterations) {
    cfg.iterations = iterations;
    const auto image = osem(y, geom, cfg);
    double projected_total = 0.0;
    for (double v : project(widen(image), n, pixel, geom)) projected_total += v;
    CHECK(std::abs(projected_total - y_total) <= 1e-6 * y_total);
    for (float v : image) CHECK(v >= 0.0f);
  }
}

TEST_CASE("reconstruction error decreases over early full-update iterations") {
  const ScannerGeometry geom = mock_scanner();
  const int n = 64;
  const double pixel = 1.75;

  // Noiseless data from the analytic chord projector, not the reconstruction
  // model, so convergence is toward the truth rather than a private replica.
  PhantomSlice slice;
  slice.ellipses.push_back({0.0, 0.0, 42.0, 42.0, 0.0, 1.0, EllipseLabel::background});
  const std::vector<float> y = forward_project(slice, geom);
  const auto truth = rasterize_slice(slice, n, pixel);

  ReconConfig cfg;
  cfg.image_size = n;
  cfg.pixel_size_mm = pixel;
  cfg.subsets = 1;
  cfg.postfilter_fwhm_mm = 0.0;
  double previous = nrmse(std::vector<double>(truth.size(), 1.0), truth);
  for (int iterations = 1; iterations <= 10; ++iterations) {
    cfg.iterations = iterations;
    const double err = nrmse(widen(osem(y, geom, cfg)), truth);
    CHECK(err < previous);
    previous = err;
  }
}

TEST_CASE("subset and full-update reconstructions agree at matched passes") {
  const ScannerGeometry geom(3, 224, 2.0, 5.3, 72.0);
  REQUIRE(geom.angle_bins() % 28 == 0);
  const int n = 64;
  const double pixel = 1.5;

  // Consistent noiseless data (projected by the reconstruction model itself)
  // so the comparison isolates subset scheduling from model mismatch, with
  // more equations than pixels: an underdetermined view set would let the
  // subset and full-update runs settle on different feasible solutions. The
  // smooth truth keeps both runs deep in their convergent regime.
  PhantomSlice slice;
  slice.ellipses.push_back({0.0, 0.0, 30.0, 26.0, 0.3, 1.0, EllipseLabel::background});
  slice.ellipses.push_back({10.0, -6.0, 6.0, 5.0, 1.1, 5.0, EllipseLabel::bladder_hot});
  std::vector<float> smooth(static_cast<std::size_t>(n) * n);
  {
    const auto truth = rasterize_slice(slice, n, pixel);
    std::vector<float> truth_f(truth.begin(), truth.end());
    smooth = gaussian_postfilter(truth_f, n, 6.0, pixel);
  }
  const auto noiseless = project(widen(smooth), n, pixel, geom);
  std::vector<float> y(noiseless.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<float>(noiseless[i]);

  ReconConfig fast;
  fast.image_size = n;
  fast.pixel_size_mm = pixel;
  fast.subsets = 28;
  fast.iterations = 2;
  fast.postfilter_fwhm_mm = 0.0;
  ReconConfig full = fast;
  full.subsets = 1;
  full.iterations = 56;

  const auto a = widen(osem(y, geom, fast));
  const auto b = widen(osem(y, geom, full));
  MESSAGE("subset vs full-update normalized error ", nrmse(a, b));
  CHECK(nrmse(a, b) < 0.05);
}

TEST_CASE("postfilter with zero width returns the image unchanged") {
  Rng rng(502);
  std::vector<float> image(96 * 96);
  for (auto& v : image) v = static_cast<float>(rng.uniform(0.0, 5.0));
  CHECK(gaussian_postfilter(image, 96, 0.0, 1.25) == image);
}

TEST_CASE("postfilter preserves the image total") {
  Rng rng(503);
  std::vector<float> image(96 * 96);
  for (auto& v : image) v = static_cast<float>(rng.uniform(0.0, 5.0));
  double before = 0.0, after = 0.0;
  for (float v : image) before += v;
  for (float v : gaussian_postfilter(image, 96, 5.0, 1.25)) after += v;
  CHECK(std::abs(after - before) <= 1e-6 * before);
}

TEST_CASE("postfilter width matches the requested full width at half maximum") {
  for (double fwhm_mm : {5.0, 8.0}) {
    std::vector<float> delta(96 * 96, 0.0f);
    delta[48 * 96 + 48] = 1.0f;
    const auto blurred = gaussian_postfilter(delta, 96, fwhm_mm, 1.25);
    CHECK(std::abs(measured_fwhm(blurred, 96) - fwhm_mm / 1.25) <= 0.5);
  }
}

TEST_CASE("direct planes reconstruct ring by ring") {
  const ScannerGeometry geom = mock_scanner();
  PhantomSpec spec;
  spec.axially_uniform = true;
  spec.fov_radius_mm = 0.95 * geom.fov_radius_mm();
  const Phantom phantom = make_phantom(spec, 11);
  const SinogramStack stack = build_stack(phantom, geom, 0.0, 1).noiseless;

  ReconConfig cfg;
  cfg.image_size = 64;
  cfg.pixel_size_mm = 1.75;
  cfg.subsets = 16;
  cfg.iterations = 2;
  cfg.postfilter_fwhm_mm = 5.0;

  const SinogramStack images = reconstruct_direct_planes(stack, geom, cfg);
  CHECK(images.rows == 64);
  CHECK(images.cols == 64);
  CHECK(images.plane_count() == geom.num_rings());
  CHECK_FALSE(images.counts_are_integer);
  for (const auto& plane : images.planes)
    for (float v : plane) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0f);
    }

  // Axially uniform input: every ring sees the same sinogram, and the
  // reconstruction is deterministic, so the images match exactly.
  CHECK(images.planes[0] == images.planes[7]);
  CHECK(images.planes[0] == images.planes[14]);

  const auto truth = rasterize_slice(phantom.slices[0], 64, 1.75);
  CHECK(pearson(widen(images.planes[0]), truth) > 0.8);

  SinogramStack wrong = stack;
  wrong.planes.pop_back();
  CHECK_THROWS_AS(reconstruct_direct_planes(wrong, geom, cfg), std::invalid_argument);
}
