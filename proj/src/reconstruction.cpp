#include "sparsepet/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sparsepet {

namespace {

// Joseph enumeration of a chord's pixel weights: one sample per unit step of
// the dominant axis in pixel coordinates, two bilinear taps per sample, each
// weighted by the path length one step covers. Taps outside the grid are
// dropped; the operator is linear in the image either way.
template <class Emit>
void scan_chord(const Chord& chord, int n, double pixel_mm, Emit&& emit) {
  const double half = n / 2.0 - 0.5;
  const double ax = chord.x1 / pixel_mm + half, ay = chord.y1 / pixel_mm + half;
  const double bx = chord.x2 / pixel_mm + half, by = chord.y2 / pixel_mm + half;
  const double dx = bx - ax, dy = by - ay;
  const double length = std::hypot(dx, dy);
  if (length == 0.0) return;

  const auto tap = [&](int gx, int gy, double w) {
    if (gx >= 0 && gx < n && gy >= 0 && gy < n)
      emit(static_cast<std::size_t>(gy) * n + gx, w);
  };

  if (std::abs(dx) >= std::abs(dy)) {
    const double step_mm = pixel_mm * length / std::abs(dx);
    const int g0 = std::max(0, static_cast<int>(std::ceil(std::min(ax, bx))));
    const int g1 = std::min(n - 1, static_cast<int>(std::floor(std::max(ax, bx))));
    for (int gx = g0; gx <= g1; ++gx) {
      const double y = ay + (gx - ax) / dx * dy;
      const int gy = static_cast<int>(std::floor(y));
      const double f = y - gy;
      tap(gx, gy, (1.0 - f) * step_mm);
      tap(gx, gy + 1, f * step_mm);
    }
  } else {
    const double step_mm = pixel_mm * length / std::abs(dy);
    const int g0 = std::max(0, static_cast<int>(std::ceil(std::min(ay, by))));
    const int g1 = std::min(n - 1, static_cast<int>(std::floor(std::max(ay, by))));
    for (int gy = g0; gy <= g1; ++gy) {
      const double x = ax + (gy - ay) / dy * dx;
      const int gx = static_cast<int>(std::floor(x));
      const double f = x - gx;
      tap(gx, gy, (1.0 - f) * step_mm);
      tap(gx + 1, gy, f * step_mm);
    }
  }
}

std::size_t image_pixels(int image_size) {
  return static_cast<std::size_t>(image_size) * image_size;
}

std::size_t plane_bins(const ScannerGeometry& geom) {
  return static_cast<std::size_t>(geom.radial_bins()) * geom.angle_bins();
}

}  // namespace

void ReconConfig::validate(const ScannerGeometry& geom) const {
  if (image_size < 2) throw std::invalid_argument("ReconConfig: image_size must be at least 2");
  if (!(pixel_size_mm > 0)) throw std::invalid_argument("ReconConfig: pixel_size_mm must be > 0");
  if (subsets < 1) throw std::invalid_argument("ReconConfig: subsets must be >= 1");
  if (geom.angle_bins() % subsets != 0)
    throw std::invalid_argument("ReconConfig: subsets must divide angle_bins");
  if (iterations < 1) throw std::invalid_argument("ReconConfig: iterations must be >= 1");
  if (postfilter_fwhm_mm < 0)
    throw std::invalid_argument("ReconConfig: postfilter_fwhm_mm must be >= 0");
}

std::vector<double> project(const std::vector<double>& image, int image_size,
                            double pixel_size_mm, const ScannerGeometry& geom) {
  if (image.size() != image_pixels(image_size))
    throw std::invalid_argument("project: image size mismatch");
  std::vector<double> plane(plane_bins(geom), 0.0);
  for (int radial = 0; radial < geom.radial_bins(); ++radial)
    for (int angle = 0; angle < geom.angle_bins(); ++angle) {
      double sum = 0.0;
      scan_chord(geom.chord_for_bin(radial, angle), image_size, pixel_size_mm,
                 [&](std::size_t pixel, double w) { sum += w * image[pixel]; });
      plane[static_cast<std::size_t>(radial) * geom.angle_bins() + angle] = sum;
    }
  return plane;
}

std::vector<double> backproject(const std::vector<double>& plane, int image_size,
                                double pixel_size_mm, const ScannerGeometry& geom) {
  if (plane.size() != plane_bins(geom))
    throw std::invalid_argument("backproject: plane size mismatch");
  std::vector<double> image(image_pixels(image_size), 0.0);
  for (int radial = 0; radial < geom.radial_bins(); ++radial)
    for (int angle = 0; angle < geom.angle_bins(); ++angle) {
      const double v = plane[static_cast<std::size_t>(radial) * geom.angle_bins() + angle];
      if (v == 0.0) continue;
      scan_chord(geom.chord_for_bin(radial, angle), image_size, pixel_size_mm,
                 [&](std::size_t pixel, double w) { image[pixel] += w * v; });
    }
  return image;
}

std::vector<float> osem(const std::vector<float>& sinogram_plane, const ScannerGeometry& geom,
                        const ReconConfig& cfg) {
  cfg.validate(geom);
  if (sinogram_plane.size() != plane_bins(geom))
    throw std::invalid_argument("osem: plane size mismatch");
  for (float v : sinogram_plane)
    if (!(v >= 0.0f)) throw std::invalid_argument("osem: sinogram must be nonnegative");

  const int n = cfg.image_size;
  const int subsets = cfg.subsets;
  const std::size_t pixels = image_pixels(n);

  // Per-subset sensitivity: the backprojection of ones over the subset's bins.
  std::vector<std::vector<double>> sens(static_cast<std::size_t>(subsets),
                                        std::vector<double>(pixels, 0.0));
  for (int radial = 0; radial < geom.radial_bins(); ++radial)
    for (int angle = 0; angle < geom.angle_bins(); ++angle) {
      auto& s = sens[static_cast<std::size_t>(angle % subsets)];
      scan_chord(geom.chord_for_bin(radial, angle), n, cfg.pixel_size_mm,
                 [&](std::size_t pixel, double w) { s[pixel] += w; });
    }

  // Start from a flat image on the pixels some ray can see; the rest stay
  // zero forever, so an unmeasurable pixel can never leak into the result.
  std::vector<double> image(pixels, 0.0);
  for (std::size_t j = 0; j < pixels; ++j) {
    double total = 0.0;
    for (const auto& s : sens) total += s[j];
    if (total > 0.0) image[j] = 1.0;
  }

  std::vector<double> ratio(static_cast<std::size_t>(geom.radial_bins()), 0.0);
  std::vector<double> update(pixels, 0.0);
  for (int it = 0; it < cfg.iterations; ++it)
    for (int m = 0; m < subsets; ++m) {
      std::fill(update.begin(), update.end(), 0.0);
      for (int angle = m; angle < geom.angle_bins(); angle += subsets) {
        for (int radial = 0; radial < geom.radial_bins(); ++radial) {
          const Chord chord = geom.chord_for_bin(radial, angle);
          double fp = 0.0;
          scan_chord(chord, n, cfg.pixel_size_mm,
                     [&](std::size_t pixel, double w) { fp += w * image[pixel]; });
          const double y =
              sinogram_plane[static_cast<std::size_t>(radial) * geom.angle_bins() + angle];
          ratio[static_cast<std::size_t>(radial)] = fp > 0.0 ? y / fp : 0.0;
        }
        for (int radial = 0; radial < geom.radial_bins(); ++radial) {
          const double q = ratio[static_cast<std::size_t>(radial)];
          if (q == 0.0) continue;
          scan_chord(geom.chord_for_bin(radial, angle), n, cfg.pixel_size_mm,
                     [&](std::size_t pixel, double w) { update[pixel] += w * q; });
        }
      }
      const auto& s = sens[static_cast<std::size_t>(m)];
      for (std::size_t j = 0; j < pixels; ++j)
        if (s[j] > 0.0) image[j] *= update[j] / s[j];
    }

  std::vector<float> out(pixels);
  for (std::size_t j = 0; j < pixels; ++j) out[j] = static_cast<float>(image[j]);
  if (cfg.postfilter_fwhm_mm > 0.0)
    out = gaussian_postfilter(out, n, cfg.postfilter_fwhm_mm, cfg.pixel_size_mm);
  return out;
}

std::vector<float> gaussian_postfilter(const std::vector<float>& image, int image_size,
                                       double fwhm_mm, double pixel_size_mm) {
  if (image.size() != image_pixels(image_size))
    throw std::invalid_argument("gaussian_postfilter: image size mismatch");
  if (fwhm_mm < 0) throw std::invalid_argument("gaussian_postfilter: fwhm must be >= 0");
  if (!(pixel_size_mm > 0))
    throw std::invalid_argument("gaussian_postfilter: pixel size must be > 0");
  if (fwhm_mm == 0.0) return image;

  const double sigma = fwhm_mm / 2.355 / pixel_size_mm;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(radius) + 1);
  double norm = 0.0;
  for (int k = -radius; k <= radius; ++k)
    norm += std::exp(-0.5 * (k / sigma) * (k / sigma));
  for (int k = 0; k <= radius; ++k)
    kernel[static_cast<std::size_t>(k)] = std::exp(-0.5 * (k / sigma) * (k / sigma)) / norm;

  // Half-sample reflection; folding repeats until the index lands inside, so
  // a kernel wider than the image still sees a well-defined border.
  const auto reflect = [image_size](int i) {
    while (i < 0 || i >= image_size) i = i < 0 ? -i - 1 : 2 * image_size - 1 - i;
    return static_cast<std::size_t>(i);
  };

  const int n = image_size;
  std::vector<double> rows(image.size()), out(image.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double sum = kernel[0] * image[static_cast<std::size_t>(y) * n + x];
      for (int k = 1; k <= radius; ++k)
        sum += kernel[static_cast<std::size_t>(k)] *
               (image[static_cast<std::size_t>(y) * n + reflect(x - k)] +
                image[static_cast<std::size_t>(y) * n + reflect(x + k)]);
      rows[static_cast<std::size_t>(y) * n + x] = sum;
    }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double sum = kernel[0] * rows[static_cast<std::size_t>(y) * n + x];
      for (int k = 1; k <= radius; ++k)
        sum += kernel[static_cast<std::size_t>(k)] * (rows[reflect(y - k) * n + x] +
                                                      rows[reflect(y + k) * n + x]);
      out[static_cast<std::size_t>(y) * n + x] = sum;
    }

  std::vector<float> result(image.size());
  for (std::size_t j = 0; j < image.size(); ++j) result[j] = static_cast<float>(out[j]);
  return result;
}

SinogramStack reconstruct_direct_planes(const SinogramStack& stack, const ScannerGeometry& geom,
                                        const ReconConfig& cfg) {
  stack.require_consistent();
  if (stack.plane_count() != geom.plane_count() || stack.rows != geom.radial_bins() ||
      stack.cols != geom.angle_bins())
    throw std::invalid_argument("reconstruct_direct_planes: stack does not match the scanner");

  SinogramStack images;
  images.rows = cfg.image_size;
  images.cols = cfg.image_size;
  images.counts_are_integer = false;
  images.planes.reserve(static_cast<std::size_t>(geom.num_rings()));
  for (int ring = 0; ring < geom.num_rings(); ++ring) {
    const int plane_id = geom.plane_for_ring_pair(ring, ring);
    images.planes.push_back(osem(stack.planes[static_cast<std::size_t>(plane_id)], geom, cfg));
  }
  return images;
}

}  // namespace sparsepet
