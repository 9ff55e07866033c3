#include "sparsepet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace sparsepet {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void fail(int line, const std::string& message) {
  throw ConfigError("config line " + std::to_string(line) + ": " + message);
}

long long parse_integer(const std::string& value, int line) {
  long long out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) fail(line, "expected integer, got '" + value + "'");
  return out;
}

int parse_int(const std::string& value, int line) {
  const long long v = parse_integer(value, line);
  if (v < INT32_MIN || v > INT32_MAX) fail(line, "integer out of range: '" + value + "'");
  return static_cast<int>(v);
}

std::uint64_t parse_u64(const std::string& value, int line) {
  std::uint64_t out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    fail(line, "expected unsigned integer, got '" + value + "'");
  return out;
}

double parse_double(const std::string& value, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) fail(line, "expected number, got '" + value + "'");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    fail(line, "expected number, got '" + value + "'");
  }
}

std::vector<int> parse_int_list(const std::string& value, int line) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(trim(item), line));
  if (out.empty()) fail(line, "expected comma-separated integers");
  return out;
}

ParitySelection parse_parities(const std::string& value, int line) {
  if (value == "black") return ParitySelection::black;
  if (value == "white") return ParitySelection::white;
  if (value == "both") return ParitySelection::both;
  fail(line, "parities must be black, white, or both");
}

}  // namespace

ScannerGeometry ExperimentConfig::make_geometry() const {
  return ScannerGeometry(geometry.rings, geometry.crystals_per_ring,
                         geometry.crystal_pitch_mm, geometry.ring_spacing_mm,
                         geometry.ring_radius_mm, geometry.radial_bins);
}

PhantomSpec ExperimentConfig::make_phantom_spec() const {
  PhantomSpec spec;
  spec.num_slices = geometry.rings;
  // Keep the body safely inside the transaxial field of view.
  spec.fov_radius_mm = make_geometry().fov_radius_mm() * 0.95;
  return spec;
}

std::vector<PatternParity> ExperimentConfig::selected_parities() const {
  switch (pattern.parities) {
    case ParitySelection::black: return {PatternParity::black};
    case ParitySelection::white: return {PatternParity::white};
    case ParitySelection::both: return {PatternParity::black, PatternParity::white};
  }
  throw ConfigError("config: invalid parity selection");
}

void ExperimentConfig::validate() const {
  try {
    const ScannerGeometry geom = make_geometry();
    model.validate();
    train.validate();
    recon.validate(geom);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (pattern.block_w < 1 || pattern.block_h < 1)
    throw ConfigError("config: pattern block sizes must be >= 1");
  if (phantom.count < 1) throw ConfigError("config: phantom count must be >= 1");
  if (!(phantom.counts_scale >= 0))
    throw ConfigError("config: counts_scale must be >= 0");
  if (split.train < 1 || split.val < 1 || split.test < 1)
    throw ConfigError("config: every split needs at least one phantom");
  if (split.train + split.val + split.test != phantom.count)
    throw ConfigError("config: split counts must sum to the phantom count");
  if (evaluate.scatter_samples < 2 || evaluate.correlation_samples < 2)
    throw ConfigError("config: evaluate sample sizes must be >= 2");
  if (output_dir.empty()) throw ConfigError("config: output dir must not be empty");
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  bool have_phantom_seed = false, have_train_seed = false, have_eval_seed = false;
  bool have_count = false, have_train = false, have_val = false, have_test = false;

  std::istringstream stream(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      static const std::set<std::string> known = {
          "geometry", "pattern", "phantom", "model", "train",
          "recon",    "evaluate", "output", "split"};
      if (!known.count(section)) fail(line_no, "unknown section [" + section + "]");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    if (value.empty()) fail(line_no, "empty value for '" + key + "'");
    if (section.empty()) fail(line_no, "key '" + key + "' outside any section");
    const std::string qualified = section + "." + key;
    if (!seen.insert(qualified).second) fail(line_no, "duplicate key '" + qualified + "'");

    if (section == "geometry") {
      if (key == "rings") cfg.geometry.rings = parse_int(value, line_no);
      else if (key == "crystals_per_ring") cfg.geometry.crystals_per_ring = parse_int(value, line_no);
      else if (key == "crystal_pitch_mm") cfg.geometry.crystal_pitch_mm = parse_double(value, line_no);
      else if (key == "ring_spacing_mm") cfg.geometry.ring_spacing_mm = parse_double(value, line_no);
      else if (key == "ring_radius_mm") cfg.geometry.ring_radius_mm = parse_double(value, line_no);
      else if (key == "radial_bins") cfg.geometry.radial_bins = parse_int(value, line_no);
      else fail(line_no, "unknown key '" + qualified + "'");
    } else if (section == "pattern") {
      if (key == "block_w") cfg.pattern.block_w = parse_int(value, line_no);
      else if (key == "block_h") cfg.pattern.block_h = parse_int(value, line_no);
      else if (key == "parities") cfg.pattern.parities = parse_parities(value, line_no);
      else fail(line_no, "unknown key '" + qualified + "'");
    } else if (section == "phantom") {
      if (key == "count") { cfg.phantom.count = parse_int(value, line_no); have_count = true; }
      else if (key == "seed") { cfg.phantom.seed = parse_u64(value, line_no); have_phantom_seed = true; }
      else if (key == "counts_scale") cfg.phantom.counts_scale = parse_double(value, line_no);
      else fail(line_no, "unknown key '" + qualified + "'");
    } else if (section == "model") {
      if (key == "depth") cfg.model.depth = parse_int(value, line_no);
      else if (key == "base_filters") cfg.model.base_filters = parse_int(value, line_no);
      else if (key == "blocks_per_level") cfg.model.blocks_per_level = parse_int_list(value, line_no);
      else if (key == "ssim_window") cfg.model.ssim_window = parse_int(value, line_no);
      else fail(line_no, "unknown key '" + qualified + "'");
    } else if (section == "train") {
      if (key == "epochs") cfg.train.epochs = parse_int(value, line_no);
      else if (key == "batch_size") cfg.train.batch_size = parse_int(value, line_no);
      else if (key == "base_lr") cfg.train.base_lr = parse_double(value, line_no);
      else if (key == "decay") cfg.train.decay = parse_double(value, line_no);
      else if (key == "patience") cfg.train.patience = parse_int(value, line_no);
      else if (key == "seed") { cfg.train.seed = parse_u64(value, line_no); have_train_seed = true; }
      else fail(line_no, "unknown key '" + qualified + "'");
    } else if (section == "recon") {
      if (key == "image_size") cfg.recon.image_size = parse_int(value, line_no);
      else if (key == "pixel_size_mm") cfg.recon.pixel_size_mm = parse_double(value, line_no);
      else if (key == "subsets") cfg.recon.subsets = parse_int(value, line_no);
      else if (key == "iterations") cfg.recon.iterations = parse_int(value, line_no);
      else if (key == "postfilter_fwhm_mm") cfg.recon.postfilter_fwhm_mm = parse_double(value, line_no);
      else fail(line_no, "unknown key '" + qualified + "'");
    } else if (section == "evaluate") {
      if (key == "seed") { cfg.evaluate.seed = parse_u64(value, line_no); have_eval_seed = true; }
      else if (key == "scatter_samples") cfg.evaluate.scatter_samples = parse_int(value, line_no);
      else if (key == "correlation_samples") cfg.evaluate.correlation_samples = parse_int(value, line_no);
      else fail(line_no, "unknown key '" + qualified + "'");
    } else if (section == "output") {
      if (key == "dir") cfg.output_dir = value;
      else fail(line_no, "unknown key '" + qualified + "'");
    } else if (section == "split") {
      if (key == "train") { cfg.split.train = parse_int(value, line_no); have_train = true; }
      else if (key == "val") { cfg.split.val = parse_int(value, line_no); have_val = true; }
      else if (key == "test") { cfg.split.test = parse_int(value, line_no); have_test = true; }
      else fail(line_no, "unknown key '" + qualified + "'");
    }
  }

  if (!have_count) throw ConfigError("config: phantom.count is required");
  if (!have_phantom_seed) throw ConfigError("config: phantom.seed is required");
  if (!have_train_seed) throw ConfigError("config: train.seed is required");
  if (!have_eval_seed) throw ConfigError("config: evaluate.seed is required");
  if (!have_train || !have_val || !have_test)
    throw ConfigError("config: split.train/val/test are required");

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

}  // namespace sparsepet
