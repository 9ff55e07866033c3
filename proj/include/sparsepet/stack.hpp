#pragma once

// Plane-major stack of 2D sinogram planes (or reconstructed images). All
// planes share one (rows x cols) shape; values are stored radial-major
// (row index is the radial coordinate for sinograms).

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sparsepet {

struct SinogramStack {
  int rows = 0;
  int cols = 0;
  bool counts_are_integer = false;
  std::vector<std::vector<float>> planes;

  SinogramStack() = default;
  SinogramStack(int num_planes, int rows_, int cols_, bool integer_counts = false)
      : rows(rows_), cols(cols_), counts_are_integer(integer_counts),
        planes(static_cast<std::size_t>(num_planes),
               std::vector<float>(static_cast<std::size_t>(rows_) * cols_, 0.0f)) {}

  int plane_count() const { return static_cast<int>(planes.size()); }
  std::size_t plane_size() const { return static_cast<std::size_t>(rows) * cols; }

  float& at(int plane, int row, int col) {
    return planes[static_cast<std::size_t>(plane)][static_cast<std::size_t>(row) * cols + col];
  }
  float at(int plane, int row, int col) const {
    return planes[static_cast<std::size_t>(plane)][static_cast<std::size_t>(row) * cols + col];
  }

  void require_consistent() const {
    for (const auto& p : planes)
      if (p.size() != plane_size())
        throw std::invalid_argument("SinogramStack: plane size does not match dims");
  }

  bool operator==(const SinogramStack&) const = default;
};

}  // namespace sparsepet
