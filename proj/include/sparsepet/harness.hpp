#pragma once
// Experiment orchestration: dataset generation, model training, and the
// evaluation pass with metric aggregation and artifact emission. Commands
// read and write only under the config's output directory. Generation is
// deterministic (same config, same bytes); evaluation never mutates the
// dataset or the model file.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sparsepet/config.hpp"
#include "sparsepet/restoration_model.hpp"

namespace sparsepet {

struct ManifestEntry {
  int phantom = 0;
  std::string parity;  // "black" or "white"
  std::string role;    // "original", "distorted", or "weights"
  std::string path;    // relative to the dataset directory
  std::uint64_t seed = 0;
};

struct GenerateResult {
  std::string dataset_dir;
  std::string manifest_path;
  std::vector<ManifestEntry> entries;
  int planes_per_stack = 0;
  long distorted_plane_total = 0;  // phantoms x parities x planes
};

// Builds every phantom, thins it under each selected parity, and writes the
// original/distorted/weights stacks plus the manifest. The original stack is
// parity-independent: both parity rows point at the same file.
GenerateResult cmd_generate(const ExperimentConfig& cfg);

struct TrainCommandResult {
  TrainHistory history;
  std::string model_path;
  std::string history_path;
};

// Trains on the train-split phantoms (all selected parities), validates on
// the val split, and writes the best weights and the per-epoch history CSV.
TrainCommandResult cmd_train(const ExperimentConfig& cfg);

struct MetricSummary {
  double p5 = 0, p25 = 0, p50 = 0, p75 = 0, p95 = 0;
};

struct EvaluateResult {
  // Keyed "domain/arm/metric", e.g. "sinogram/restored/mae_masked".
  std::map<std::string, MetricSummary> summaries;
  double rank_p_sinogram_mae = 1.0;   // restored vs interpolated, per-plane
  double rank_p_image_mae = 1.0;      // restored vs interpolated, per-ring
  double fisher_p_correlation = 1.0;  // restored vs interpolated pooled pixels
  double affected_bin_mean_counts = 0.0;
  double restored_masked_mae_pooled = 0.0;
  std::string eval_dir;
};

// Restores and interpolates the test split, reconstructs all four arms,
// and emits per-plane/per-image metric CSVs, percentile summaries, rank and
// correlation tests, scatter samples, ROI metrics, difference stacks, and
// PGM dumps.
EvaluateResult cmd_evaluate(const ExperimentConfig& cfg);

// generate + train + evaluate.
void cmd_all(const ExperimentConfig& cfg);

std::vector<ManifestEntry> read_manifest(const std::string& path);

// Linear-interpolation percentile over unsorted values; q in [0, 100].
double percentile(std::vector<double> values, double q);

// Deterministic (base, tag) -> seed map shared by generation and evaluation.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace sparsepet
