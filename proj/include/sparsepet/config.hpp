#pragma once
// Sectioned key=value experiment configuration. The parser is strict:
// unknown sections or keys, duplicate keys, and malformed values are all
// errors, so a typo cannot silently fall back to a default. Seeds and the
// phantom/split counts have no defaults and must be stated explicitly;
// everything else defaults to the desk-scale values.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsepet/geometry.hpp"
#include "sparsepet/phantom_sim.hpp"
#include "sparsepet/reconstruction.hpp"
#include "sparsepet/restoration_model.hpp"
#include "sparsepet/sparsity_mask.hpp"

namespace sparsepet {

// Configuration mistakes are reported as this type so the CLI can separate
// them (exit 2) from runtime failures (exit 3).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ParitySelection { black, white, both };

struct GeometryBlock {
  int rings = 15;
  int crystals_per_ring = 128;
  double crystal_pitch_mm = 4.0;
  double ring_spacing_mm = 5.3;
  double ring_radius_mm = 80.0;
  int radial_bins = 63;
};

struct PatternBlock {
  int block_w = 1;
  int block_h = 1;
  ParitySelection parities = ParitySelection::both;
};

struct PhantomBlock {
  int count = 0;
  std::uint64_t seed = 0;
  double counts_scale = 1.0;
};

struct EvaluateBlock {
  std::uint64_t seed = 0;
  int scatter_samples = 2000;
  int correlation_samples = 20000;
};

struct SplitBlock {
  int train = 0;
  int val = 0;
  int test = 0;
};

struct ExperimentConfig {
  GeometryBlock geometry;
  PatternBlock pattern;
  PhantomBlock phantom;
  ModelConfig model;
  TrainConfig train;
  ReconConfig recon;
  EvaluateBlock evaluate;
  SplitBlock split;
  std::string output_dir = "out";

  ScannerGeometry make_geometry() const;
  PhantomSpec make_phantom_spec() const;
  std::vector<PatternParity> selected_parities() const;

  // Full cross-block validation; throws ConfigError.
  void validate() const;
};

// Parses config text; load reads the file first. Both validate the result.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace sparsepet
