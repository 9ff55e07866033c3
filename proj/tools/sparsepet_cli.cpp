// Command-line front end: generate / train / evaluate / all over one
// experiment config. Exit codes: 0 success, 2 config error, 3 runtime
// failure.
#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "sparsepet/config.hpp"
#include "sparsepet/harness.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

struct CliOptions {
  std::string config_path;
  std::string output_dir;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
  int threads = 0;
};

sparsepet::ExperimentConfig load_config(const CliOptions& opts) {
  sparsepet::ExperimentConfig cfg = sparsepet::load_experiment_config(opts.config_path);
  if (!opts.output_dir.empty()) cfg.output_dir = opts.output_dir;
  if (opts.has_seed_override) {
    // One override fans out to distinct per-stage seeds so stages never
    // share a stream by accident.
    cfg.phantom.seed = sparsepet::derive_seed(opts.seed_override, 1);
    cfg.train.seed = sparsepet::derive_seed(opts.seed_override, 2);
    cfg.evaluate.seed = sparsepet::derive_seed(opts.seed_override, 3);
  }
  cfg.validate();
  return cfg;
}

void print_generate(const sparsepet::GenerateResult& r) {
  std::printf("generate: %zu manifest entries, %d planes per stack, %ld distorted planes\n",
              r.entries.size(), r.planes_per_stack, r.distorted_plane_total);
  std::printf("generate: manifest %s\n", r.manifest_path.c_str());
}

void print_train(const sparsepet::TrainCommandResult& r) {
  const double baseline =
      r.history.epochs.empty() ? 0.0 : r.history.epochs.front().val_loss;
  std::printf("train: %zu epochs, baseline val loss %.6g, best epoch %d, best val loss %.6g (%s)\n",
              r.history.epochs.empty() ? std::size_t{0} : r.history.epochs.size() - 1, baseline,
              r.history.best_epoch, r.history.best_val_loss, r.history.stop_reason.c_str());
  std::printf("train: model %s\n", r.model_path.c_str());
}

void print_evaluate(const sparsepet::EvaluateResult& r) {
  const auto median = [&](const std::string& key) {
    const auto it = r.summaries.find(key);
    return it == r.summaries.end() ? 0.0 : it->second.p50;
  };
  std::printf("evaluate: masked MAE median restored %.4f interpolated %.4f distorted %.4f\n",
              median("sinogram/restored/mae_masked"), median("sinogram/interpolated/mae_masked"),
              median("sinogram/distorted/mae_masked"));
  std::printf("evaluate: sinogram SSIM median restored %.4f interpolated %.4f\n",
              median("sinogram/restored/ssim"), median("sinogram/interpolated/ssim"));
  std::printf("evaluate: rank-test p sinogram %.3g image %.3g, fisher p %.3g\n",
              r.rank_p_sinogram_mae, r.rank_p_image_mae, r.fisher_p_correlation);
  std::printf("evaluate: artifacts in %s\n", r.eval_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-detector sinogram restoration pipeline"};
  app.require_subcommand(1);

  CliOptions opts;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "experiment config file")
        ->required();
    sub->add_option("--output", opts.output_dir, "override the configured output directory");
    sub->add_option("--seed-override", opts.seed_override,
                    "replace the phantom/train/evaluate seeds derived from this value")
        ->each([&](const std::string&) { opts.has_seed_override = true; });
    sub->add_option("--threads", opts.threads, "BLAS thread count (0 keeps the default)");
  };

  CLI::App* generate = app.add_subcommand("generate", "build the phantom dataset");
  CLI::App* train = app.add_subcommand("train", "train the restoration model");
  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate the test split");
  CLI::App* all = app.add_subcommand("all", "generate, train, and evaluate");
  for (CLI::App* sub : {generate, train, evaluate, all}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  if (opts.threads > 0) openblas_set_num_threads(opts.threads);

  try {
    const sparsepet::ExperimentConfig cfg = load_config(opts);
    if (generate->parsed()) {
      print_generate(sparsepet::cmd_generate(cfg));
    } else if (train->parsed()) {
      print_train(sparsepet::cmd_train(cfg));
    } else if (evaluate->parsed()) {
      print_evaluate(sparsepet::cmd_evaluate(cfg));
    } else {
      print_generate(sparsepet::cmd_generate(cfg));
      print_train(sparsepet::cmd_train(cfg));
      print_evaluate(sparsepet::cmd_evaluate(cfg));
    }
  } catch (const sparsepet::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
