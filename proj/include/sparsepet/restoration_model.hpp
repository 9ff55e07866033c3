#pragma once

// Residual U-Net for sinogram restoration: an asymmetric encoder-decoder
// where each encoder level stacks residual blocks and downsamples with a
// strided convolution, each decoder level upsamples with a transposed
// convolution, merges the skip by addition, and runs one residual block.
// The core is templated on the scalar so gradient checks run in double;
// training and inference instantiate float.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparsepet/neural.hpp"
#include "sparsepet/sparsity_mask.hpp"
#include "sparsepet/stack.hpp"

namespace sparsepet {

struct ModelConfig {
  int depth = 3;          // downsampling levels
  int base_filters = 16;  // channels at the top level
  std::vector<int> blocks_per_level = {1, 2, 2, 4};  // encoder blocks, top to bottom
  int ssim_window = 7;

  void validate() const {
    if (depth < 1) throw std::invalid_argument("model: depth must be >= 1");
    if (base_filters < 1) throw std::invalid_argument("model: base_filters must be >= 1");
    if (static_cast<int>(blocks_per_level.size()) != depth + 1)
      throw std::invalid_argument("model: blocks_per_level must have depth + 1 entries");
    for (std::size_t i = 0; i < blocks_per_level.size(); ++i) {
      if (blocks_per_level[i] < 1)
        throw std::invalid_argument("model: every level needs at least one block");
      if (i > 0 && blocks_per_level[i] < blocks_per_level[i - 1])
        throw std::invalid_argument("model: blocks_per_level must be non-decreasing");
    }
    if (ssim_window < 3) throw std::invalid_argument("model: ssim_window must be >= 3");
  }
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double base_lr = 1e-3;
  double decay = 0.96;  // staircase multiplier per epoch
  int patience = 20;    // epochs without validation improvement before stopping
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (patience < 1 || patience >= epochs)
      throw std::invalid_argument("train: need 1 <= patience < epochs");
    if (base_lr <= 0 || decay <= 0) throw std::invalid_argument("train: positive lr and decay");
  }
};

// Two (conv 3x3 -> batchnorm -> ReLU) stages plus the identity shortcut.
// Convolutions carry no bias; the batchnorm shift covers it.
template <typename S>
struct ResidualBlockT {
  Conv2d<S> conv1, conv2;
  BatchNorm2d<S> bn1, bn2;
  ReluLayer<S> relu1, relu2;

  explicit ResidualBlockT(int channels)
      : conv1(channels, channels, 3, 1, 1, false),
        conv2(channels, channels, 3, 1, 1, false),
        bn1(channels),
        bn2(channels) {}

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
  }

  Tensor<S> forward(const Tensor<S>& x, BnMode mode) {
    Tensor<S> h = relu1.forward(bn1.forward(conv1.forward(x), mode));
    Tensor<S> y = relu2.forward(bn2.forward(conv2.forward(h), mode));
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> g = conv1.backward(bn1.backward(relu1.backward(
        conv2.backward(bn2.backward(relu2.backward(gy))))));
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += gy.data[i];
    return g;
  }

  void collect(std::vector<ParamRef<S>>& out) {
    conv1.collect(out);
    bn1.collect(out);
    conv2.collect(out);
    bn2.collect(out);
  }
};

template <typename S>
struct ModelT {
  ModelConfig cfg;
  Conv2d<S> stem;  // lifts the single input channel to base_filters

  struct EncoderLevel {
    std::vector<ResidualBlockT<S>> blocks;
    Conv2d<S> down;
    EncoderLevel(int channels, int num_blocks)
        : blocks(static_cast<std::size_t>(num_blocks), ResidualBlockT<S>(channels)),
          down(channels, channels * 2, 3, 2, 1, false) {}
  };
  struct DecoderLevel {
    ConvTranspose2d<S> up;
    ResidualBlockT<S> block;
    explicit DecoderLevel(int channels) : up(channels * 2, channels), block(channels) {}
  };

  std::vector<EncoderLevel> encoder;            // shallow to deep
  std::vector<ResidualBlockT<S>> bottom;
  std::vector<DecoderLevel> decoder;            // deep to shallow
  Conv2d<S> final1;
  ReluLayer<S> final_relu;
  Conv2d<S> final2;

  explicit ModelT(const ModelConfig& config)
      : cfg(config),
        stem(1, config.base_filters, 3, 1, 1),
        final1(config.base_filters, config.base_filters, 3, 1, 1),
        final2(config.base_filters, 1, 1, 1, 0) {
    cfg.validate();
    for (int level = 0; level < cfg.depth; ++level)
      encoder.emplace_back(cfg.base_filters << level, cfg.blocks_per_level[level]);
    bottom.assign(static_cast<std::size_t>(cfg.blocks_per_level[cfg.depth]),
                  ResidualBlockT<S>(cfg.base_filters << cfg.depth));
    for (int level = cfg.depth - 1; level >= 0; --level)
      decoder.emplace_back(DecoderLevel(cfg.base_filters << level));
  }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    stem.init(rng);
    for (auto& level : encoder) {
      for (auto& block : level.blocks) block.init(rng);
      level.down.init(rng);
    }
    for (auto& block : bottom) block.init(rng);
    for (auto& level : decoder) {
      level.up.init(rng);
      level.block.init(rng);
    }
    final1.init(rng);
    final2.init(rng);
  }

  // x: (n, 1, H, W) with H, W divisible by 2^depth.
  Tensor<S> forward(const Tensor<S>& x, BnMode mode) {
    if (x.c != 1) throw std::invalid_argument("model: expects a single input channel");
    if (x.h % (1 << cfg.depth) != 0 || x.w % (1 << cfg.depth) != 0)
      throw std::invalid_argument("model: dims must be divisible by 2^depth");
    Tensor<S> a = stem.forward(x);
    skips_.clear();
    for (auto& level : encoder) {
      for (auto& block : level.blocks) a = block.forward(a, mode);
      skips_.push_back(a);
      a = level.down.forward(a);
    }
    for (auto& block : bottom) a = block.forward(a, mode);
    for (std::size_t d = 0; d < decoder.size(); ++d) {
      a = decoder[d].up.forward(a);
      const Tensor<S>& skip = skips_[decoder.size() - 1 - d];
      for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += skip.data[i];
      a = decoder[d].block.forward(a, mode);
    }
    Tensor<S> h = final_relu.forward(final1.forward(a));
    return final2.forward(h);
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> g = final1.backward(final_relu.backward(final2.backward(gy)));
    std::vector<Tensor<S>> skip_grads(decoder.size());
    for (std::size_t d = decoder.size(); d-- > 0;) {
      g = decoder[d].block.backward(g);
      skip_grads[decoder.size() - 1 - d] = g;
      g = decoder[d].up.backward(g);
    }
    for (std::size_t i = bottom.size(); i-- > 0;) g = bottom[i].backward(g);
    for (std::size_t level = encoder.size(); level-- > 0;) {
      g = encoder[level].down.backward(g);
      const Tensor<S>& sg = skip_grads[level];
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += sg.data[i];
      for (std::size_t b = encoder[level].blocks.size(); b-- > 0;)
        g = encoder[level].blocks[b].backward(g);
    }
    return stem.backward(g);
  }

  // Fixed topological order shared by the optimizer and the serializer.
  std::vector<ParamRef<S>> params() {
    std::vector<ParamRef<S>> out;
    stem.collect(out);
    for (auto& level : encoder) {
      for (auto& block : level.blocks) block.collect(out);
      level.down.collect(out);
    }
    for (auto& block : bottom) block.collect(out);
    for (auto& level : decoder) {
      level.up.collect(out);
      level.block.collect(out);
    }
    final1.collect(out);
    final2.collect(out);
    return out;
  }

  std::size_t param_count() {
    std::size_t total = 0;
    for (const auto& p : params())
      if (p.trainable) total += p.value->size();
    return total;
  }

  void zero_grads() {
    for (auto& p : params())
      if (p.grad) p.grad->zero();
  }

 private:
  std::vector<Tensor<S>> skips_;
};

using Model = ModelT<float>;

inline Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model model(cfg);
  model.init(seed);
  return model;
}

template <typename S>
struct LossResult {
  S value;
  S ssim;
  S mae;
  Tensor<S> grad_pred;
};

// (1 - windowed SSIM) + masked MAE. The dynamic range defaults to the max
// over both tensors and is treated as a constant in the gradient (pass a
// positive fixed_range to pin it, e.g. for finite-difference checks); an
// all-zero pair falls back to range 1 so the SSIM constants stay finite.
template <typename S>
LossResult<S> restoration_loss(const Tensor<S>& pred, const Tensor<S>& target,
                               const std::vector<std::uint8_t>& mask, int window,
                               S fixed_range = S(0)) {
  S range = fixed_range;
  if (range <= S(0)) {
    for (S v : pred.data) range = std::max(range, std::abs(v));
    for (S v : target.data) range = std::max(range, std::abs(v));
    if (range <= S(0)) range = S(1);
  }
  const SsimResult<S> ssim = ssim_windowed(pred, target, range, window);
  const MaskedMaeResult<S> mae = masked_mae(pred, target, mask);
  LossResult<S> out;
  out.ssim = ssim.value;
  out.mae = mae.value;
  out.value = (S(1) - ssim.value) + mae.value;
  out.grad_pred = mae.grad_pred;
  for (std::size_t i = 0; i < out.grad_pred.size(); ++i)
    out.grad_pred.data[i] -= ssim.grad_a.data[i];
  return out;
}

// One training or evaluation sample: a distorted plane, the original it
// should restore, and the affected-pixel mask, all rows x cols row-major.
struct PlaneSample {
  int rows = 0, cols = 0;
  std::vector<float> distorted;
  std::vector<float> original;
  std::vector<std::uint8_t> affected;
};

// Row 0 is the untrained baseline (validation only: train_loss is NaN and
// lr is 0); trained epochs are 1-based.
struct EpochStats {
  int epoch;
  double train_loss;
  double val_loss;
  double lr;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_loss = 0;
  std::string stop_reason;
};

// Shuffled mini-batch training with per-epoch validation, early stopping
// after cfg.patience epochs without improvement, and restoration of the
// best-validation weights. The untrained model is validated first and kept
// unless an epoch improves on it. Deterministic in cfg.seed.
TrainHistory train(Model& model, const std::vector<PlaneSample>& train_set,
                   const std::vector<PlaneSample>& val_set, const TrainConfig& cfg);

// Normalizes by the distorted plane's max, pads to the model's granularity,
// runs the network in inference mode, denormalizes, clamps at zero, and
// reinstates every unaffected pixel bit-wise from the input.
std::vector<float> restore_plane(Model& model, const std::vector<float>& plane, int rows, int cols,
                                 const std::vector<std::uint8_t>& affected);

SinogramStack restore_stack(Model& model, const SinogramStack& distorted,
                            const PlaneMaskSet& masks, int batch_size = 16);

}  // namespace sparsepet
