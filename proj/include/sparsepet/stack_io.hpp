#pragma once
// Binary artifact formats and image dumps.
//
// Stack file: magic "SPST", version u16 (currently 1), kind u16, dims u32x3
// (planes, rows, cols), then planes*rows*cols little-endian f32 values in
// plane-major order. Model file: magic "SPRN", version u16 (currently 1),
// tensor count u32, then per tensor dims u32x4 (n, c, h, w) and the f32
// payload, in the model's fixed parameter order (batchnorm running statistics
// included). Both formats round-trip bit-exactly.

#include <cstdint>
#include <string>
#include <vector>

#include "sparsepet/restoration_model.hpp"
#include "sparsepet/stack.hpp"

namespace sparsepet {

enum class StackKind : std::uint16_t {
  sinogram = 1,
  mask_weights = 2,
  image = 3,
};

struct LoadedStack {
  SinogramStack stack;
  StackKind kind = StackKind::sinogram;
};

void write_stack(const std::string& path, const SinogramStack& stack, StackKind kind);

// The format does not carry the integer-counts flag; sinogram-kind stacks
// whose every value is integral are re-flagged as counts on load.
LoadedStack read_stack(const std::string& path);

// Serializes every parameter tensor of the model in params() order.
void save_model(const std::string& path, Model& model);

// The model must already be built with the same configuration; shapes are
// checked tensor by tensor.
void load_model(const std::string& path, Model& model);

// 8-bit binary PGM windowed to [min, max] of the plane, with the window
// recorded in "<path>.window.txt" so absolute values stay recoverable.
void write_pgm(const std::string& path, const std::vector<float>& plane, int rows, int cols);

}  // namespace sparsepet
