#include "sparsepet/stack_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sparsepet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "stack files are little-endian; big-endian hosts need byte swaps");
static_assert(sizeof(float) == 4);

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) io_fail(path, "truncated file");
  return value;
}

void check_closed(std::ifstream& in, const std::string& path) {
  in.peek();
  if (!in.eof()) io_fail(path, "trailing bytes after payload");
}

}  // namespace

void write_stack(const std::string& path, const SinogramStack& stack, StackKind kind) {
  stack.require_consistent();
  if (stack.plane_count() == 0 || stack.rows < 1 || stack.cols < 1)
    throw std::invalid_argument("write_stack: empty stack");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_fail(path, "cannot open for writing");
  out.write("SPST", 4);
  write_raw(out, std::uint16_t{1});
  write_raw(out, static_cast<std::uint16_t>(kind));
  write_raw(out, static_cast<std::uint32_t>(stack.plane_count()));
  write_raw(out, static_cast<std::uint32_t>(stack.rows));
  write_raw(out, static_cast<std::uint32_t>(stack.cols));
  for (const auto& plane : stack.planes)
    out.write(reinterpret_cast<const char*>(plane.data()),
              static_cast<std::streamsize>(plane.size() * sizeof(float)));
  if (!out) io_fail(path, "write failed");
}

LoadedStack read_stack(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SPST", 4) != 0) io_fail(path, "not a stack file");
  const auto version = read_raw<std::uint16_t>(in, path);
  if (version != 1) io_fail(path, "unsupported stack version " + std::to_string(version));
  const auto kind_raw = read_raw<std::uint16_t>(in, path);
  if (kind_raw < 1 || kind_raw > 3) io_fail(path, "unknown stack kind " + std::to_string(kind_raw));
  const auto planes = read_raw<std::uint32_t>(in, path);
  const auto rows = read_raw<std::uint32_t>(in, path);
  const auto cols = read_raw<std::uint32_t>(in, path);
  if (planes < 1 || rows < 1 || cols < 1) io_fail(path, "degenerate dims");
  const std::uint64_t total = std::uint64_t{planes} * rows * cols;
  if (total > (std::uint64_t{1} << 31)) io_fail(path, "implausibly large stack");

  LoadedStack out;
  out.kind = static_cast<StackKind>(kind_raw);
  out.stack = SinogramStack(static_cast<int>(planes), static_cast<int>(rows),
                            static_cast<int>(cols));
  for (auto& plane : out.stack.planes) {
    in.read(reinterpret_cast<char*>(plane.data()),
            static_cast<std::streamsize>(plane.size() * sizeof(float)));
    if (!in) io_fail(path, "truncated payload");
  }
  check_closed(in, path);

  if (out.kind == StackKind::sinogram) {
    bool integral = true;
    for (const auto& plane : out.stack.planes) {
      for (float v : plane)
        if (std::rint(v) != v) { integral = false; break; }
      if (!integral) break;
    }
    out.stack.counts_are_integer = integral;
  }
  return out;
}

void save_model(const std::string& path, Model& model) {
  const auto params = model.params();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_fail(path, "cannot open for writing");
  out.write("SPRN", 4);
  write_raw(out, std::uint16_t{1});
  write_raw(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    write_raw(out, static_cast<std::uint32_t>(p.value->n));
    write_raw(out, static_cast<std::uint32_t>(p.value->c));
    write_raw(out, static_cast<std::uint32_t>(p.value->h));
    write_raw(out, static_cast<std::uint32_t>(p.value->w));
    out.write(reinterpret_cast<const char*>(p.value->data.data()),
              static_cast<std::streamsize>(p.value->size() * sizeof(float)));
  }
  if (!out) io_fail(path, "write failed");
}

void load_model(const std::string& path, Model& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SPRN", 4) != 0) io_fail(path, "not a model file");
  const auto version = read_raw<std::uint16_t>(in, path);
  if (version != 1) io_fail(path, "unsupported model version " + std::to_string(version));

  const auto params = model.params();
  const auto count = read_raw<std::uint32_t>(in, path);
  if (count != params.size())
    io_fail(path, "parameter count mismatch: file has " + std::to_string(count) +
                      ", model has " + std::to_string(params.size()));
  for (const auto& p : params) {
    const auto n = read_raw<std::uint32_t>(in, path);
    const auto c = read_raw<std::uint32_t>(in, path);
    const auto h = read_raw<std::uint32_t>(in, path);
    const auto w = read_raw<std::uint32_t>(in, path);
    if (static_cast<int>(n) != p.value->n || static_cast<int>(c) != p.value->c ||
        static_cast<int>(h) != p.value->h || static_cast<int>(w) != p.value->w)
      io_fail(path, "parameter shape mismatch");
    in.read(reinterpret_cast<char*>(p.value->data.data()),
            static_cast<std::streamsize>(p.value->size() * sizeof(float)));
    if (!in) io_fail(path, "truncated payload");
  }
  check_closed(in, path);
}

void write_pgm(const std::string& path, const std::vector<float>& plane, int rows, int cols) {
  if (plane.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("write_pgm: plane size mismatch");
  const auto [lo_it, hi_it] = std::minmax_element(plane.begin(), plane.end());
  const float lo = *lo_it, hi = *hi_it;
  const float span = hi > lo ? hi - lo : 1.0f;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_fail(path, "cannot open for writing");
  out << "P5\n" << cols << " " << rows << "\n255\n";
  std::vector<unsigned char> bytes(plane.size());
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const float t = (plane[i] - lo) / span;
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(t, 0.0f, 1.0f) * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) io_fail(path, "write failed");

  std::ofstream side(path + ".window.txt", std::ios::trunc);
  if (!side) io_fail(path, "cannot write window sidecar");
  side << "min " << lo << "\nmax " << hi << "\n";
}

}  // namespace sparsepet
