#pragma once

#include <vector>

#include "sparsepet/geometry.hpp"
#include "sparsepet/stack.hpp"

namespace sparsepet {

// Square reconstruction grid centered on the scanner axis: pixel (ix, iy) of
// an image_size x image_size image stored row-major at iy * image_size + ix
// has its center at ((ix + 0.5 - N/2) * pixel, (iy + 0.5 - N/2) * pixel) mm.
struct ReconConfig {
  int image_size = 96;
  double pixel_size_mm = 1.25;
  int subsets = 28;          // angle_bins must divide evenly into subsets
  int iterations = 2;
  double postfilter_fwhm_mm = 5.0;  // 0 disables the postfilter

  void validate(const ScannerGeometry& geom) const;
};

// Line integral of the image along each bin's chord (Joseph interpolation,
// one sample per pixel step along the dominant axis). The same weight
// enumeration drives both directions, so the pair is adjoint to rounding:
// <project(x), y> == <x, backproject(y)>.
std::vector<double> project(const std::vector<double>& image, int image_size,
                            double pixel_size_mm, const ScannerGeometry& geom);
std::vector<double> backproject(const std::vector<double>& plane, int image_size,
                                double pixel_size_mm, const ScannerGeometry& geom);

// Expectation maximization over angle-interleaved subsets (maximum likelihood
// when subsets == 1), followed by the Gaussian postfilter when enabled.
// Pixels a subset's rays never touch are frozen at zero, never divided by
// their zero sensitivity. Multiplicative updates keep the image nonnegative.
std::vector<float> osem(const std::vector<float>& sinogram_plane, const ScannerGeometry& geom,
                        const ReconConfig& cfg);

// Separable Gaussian blur, sigma = fwhm / 2.355 / pixel. The kernel is
// normalized and borders reflect, so the image total is preserved.
// fwhm == 0 returns the input unchanged.
std::vector<float> gaussian_postfilter(const std::vector<float>& image, int image_size,
                                       double fwhm_mm, double pixel_size_mm);

// One reconstructed image per ring, from that ring's direct plane, in ring
// order. rows == cols == cfg.image_size; counts_are_integer == false.
SinogramStack reconstruct_direct_planes(const SinogramStack& stack, const ScannerGeometry& geom,
                                        const ReconConfig& cfg);

}  // namespace sparsepet
