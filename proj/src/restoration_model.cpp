#include "sparsepet/restoration_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sparsepet {

namespace {

struct PadSpec {
  int rows, cols;  // padded dims
  int top, left;   // offset of the raw plane inside the padded frame
};

PadSpec pad_for(int rows, int cols, int depth) {
  const int mult = 1 << depth;
  const int ph = (rows + mult - 1) / mult * mult;
  const int pw = (cols + mult - 1) / mult * mult;
  return {ph, pw, (ph - rows) / 2, (pw - cols) / 2};
}

// Writes plane / factor into one padded batch slot; padding stays zero.
void fill_slot(Tensor<float>& batch, int slot, const std::vector<float>& plane, int rows, int cols,
               float factor, const PadSpec& pad) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      batch.at(slot, 0, pad.top + r, pad.left + c) =
          plane[static_cast<std::size_t>(r) * cols + c] / factor;
}

Tensor<float> crop(const Tensor<float>& padded, int rows, int cols, const PadSpec& pad) {
  Tensor<float> out(padded.n, 1, rows, cols);
  for (int s = 0; s < padded.n; ++s)
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        out.at(s, 0, r, c) = padded.at(s, 0, pad.top + r, pad.left + c);
  return out;
}

Tensor<float> embed(const Tensor<float>& grad, const PadSpec& pad) {
  Tensor<float> out(grad.n, 1, pad.rows, pad.cols);
  for (int s = 0; s < grad.n; ++s)
    for (int r = 0; r < grad.h; ++r)
      for (int c = 0; c < grad.w; ++c)
        out.at(s, 0, pad.top + r, pad.left + c) = grad.at(s, 0, r, c);
  return out;
}

float norm_factor(const std::vector<float>& plane) {
  float factor = 0;
  for (float v : plane) factor = std::max(factor, v);
  return factor > 0 ? factor : 1.0f;
}

struct Batch {
  Tensor<float> input;   // padded, normalized
  Tensor<float> target;  // raw dims, normalized by the input's factor
  std::vector<std::uint8_t> mask;
};

Batch assemble(const std::vector<PlaneSample>& set, const std::vector<std::size_t>& order,
               std::size_t start, std::size_t count, const PadSpec& pad) {
  const int rows = set[order[start]].rows, cols = set[order[start]].cols;
  Batch b{Tensor<float>(static_cast<int>(count), 1, pad.rows, pad.cols),
          Tensor<float>(static_cast<int>(count), 1, rows, cols),
          std::vector<std::uint8_t>(count * static_cast<std::size_t>(rows) * cols, 0)};
  for (std::size_t i = 0; i < count; ++i) {
    const PlaneSample& s = set[order[start + i]];
    const float factor = norm_factor(s.distorted);
    fill_slot(b.input, static_cast<int>(i), s.distorted, rows, cols, factor, pad);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
        b.target.at(static_cast<int>(i), 0, r, c) = s.original[idx] / factor;
        b.mask[i * static_cast<std::size_t>(rows) * cols + idx] = s.affected[idx];
      }
  }
  return b;
}

void check_dataset(const std::vector<PlaneSample>& set, int rows, int cols, const char* name) {
  if (set.empty()) throw std::invalid_argument(std::string("train: empty ") + name + " set");
  for (const PlaneSample& s : set) {
    const std::size_t expect = static_cast<std::size_t>(rows) * cols;
    if (s.rows != rows || s.cols != cols || s.distorted.size() != expect ||
        s.original.size() != expect || s.affected.size() != expect)
      throw std::invalid_argument("train: inconsistent sample dimensions");
  }
}

}  // namespace

TrainHistory train(Model& model, const std::vector<PlaneSample>& train_set,
                   const std::vector<PlaneSample>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty train set");
  const int rows = train_set.front().rows, cols = train_set.front().cols;
  check_dataset(train_set, rows, cols, "train");
  check_dataset(val_set, rows, cols, "validation");
  const PadSpec pad = pad_for(rows, cols, model.cfg.depth);

  const std::vector<ParamRef<float>> params = model.params();
  AdamState<float> adam;
  Rng root(cfg.seed);

  const auto snapshot = [&]() {
    std::vector<std::vector<float>> s;
    s.reserve(params.size());
    for (const auto& p : params) s.push_back(p.value->data);
    return s;
  };

  const auto evaluate = [&](const std::vector<PlaneSample>& set) {
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double sum = 0;
    for (std::size_t start = 0; start < set.size(); start += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, set.size() - start);
      Batch b = assemble(set, order, start, count, pad);
      const Tensor<float> out = crop(model.forward(b.input, BnMode::infer), rows, cols, pad);
      const auto loss = restoration_loss(out, b.target, b.mask, model.cfg.ssim_window);
      sum += static_cast<double>(loss.value) * count;
    }
    return sum / static_cast<double>(set.size());
  };

  TrainHistory hist;

  // Epoch 0 is the untrained baseline: validation of the freshly initialized
  // model before any update. Training efficacy is judged against this row,
  // and an epoch must beat it before its weights are worth keeping.
  const double baseline = evaluate(val_set);
  if (!std::isfinite(baseline))
    throw std::runtime_error("train: non-finite validation loss at baseline");
  hist.epochs.push_back({0, std::numeric_limits<double>::quiet_NaN(), baseline, 0.0});

  double best = baseline;
  hist.best_epoch = 0;
  std::vector<std::vector<float>> best_weights = snapshot();
  int stale = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = staircase_lr(cfg.base_lr, cfg.decay, epoch);
    Rng shuffle = root.child(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.below(i)]);

    double train_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      Batch b = assemble(train_set, order, start, count, pad);
      model.zero_grads();
      const Tensor<float> out = crop(model.forward(b.input, BnMode::train), rows, cols, pad);
      const auto loss = restoration_loss(out, b.target, b.mask, model.cfg.ssim_window);
      if (!std::isfinite(static_cast<double>(loss.value)))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(start / cfg.batch_size));
      train_sum += static_cast<double>(loss.value) * count;
      model.backward(embed(loss.grad_pred, pad));
      adam_step(params, adam, lr);
    }

    const double val = evaluate(val_set);
    if (!std::isfinite(val))
      throw std::runtime_error("train: non-finite validation loss at epoch " +
                               std::to_string(epoch + 1));
    hist.epochs.push_back({epoch + 1, train_sum / static_cast<double>(train_set.size()), val, lr});

    if (val < best) {
      best = val;
      hist.best_epoch = epoch + 1;
      best_weights = snapshot();
      stale = 0;
    } else if (++stale >= cfg.patience) {
      hist.stop_reason = "early stop: no validation improvement for " +
                         std::to_string(cfg.patience) + " epochs";
      break;
    }
  }
  if (hist.stop_reason.empty()) hist.stop_reason = "completed all epochs";
  hist.best_val_loss = best;

  std::size_t slot = 0;
  for (const auto& p : params) p.value->data = best_weights[slot++];
  return hist;
}

std::vector<float> restore_plane(Model& model, const std::vector<float>& plane, int rows, int cols,
                                 const std::vector<std::uint8_t>& affected) {
  if (plane.size() != static_cast<std::size_t>(rows) * cols || affected.size() != plane.size())
    throw std::invalid_argument("restore: plane/mask size mismatch");
  float factor = 0;
  for (float v : plane) factor = std::max(factor, v);
  if (factor <= 0) return plane;  // degenerate normalization: skip the network

  const PadSpec pad = pad_for(rows, cols, model.cfg.depth);
  Tensor<float> input(1, 1, pad.rows, pad.cols);
  fill_slot(input, 0, plane, rows, cols, factor, pad);
  const Tensor<float> out = crop(model.forward(input, BnMode::infer), rows, cols, pad);

  std::vector<float> restored = plane;
  for (std::size_t i = 0; i < restored.size(); ++i)
    if (affected[i]) restored[i] = std::max(0.0f, out.data[i] * factor);
  return restored;
}

SinogramStack restore_stack(Model& model, const SinogramStack& distorted,
                            const PlaneMaskSet& masks, int batch_size) {
  distorted.require_consistent();
  if (masks.size() != distorted.planes.size())
    throw std::invalid_argument("restore: mask set does not match plane count");
  if (batch_size < 1) throw std::invalid_argument("restore: batch_size must be >= 1");
  const int rows = distorted.rows, cols = distorted.cols;
  const PadSpec pad = pad_for(rows, cols, model.cfg.depth);

  SinogramStack out = distorted;
  out.counts_are_integer = false;

  std::vector<std::size_t> pending;  // planes that actually reach the network
  for (std::size_t p = 0; p < distorted.planes.size(); ++p) {
    if (masks[p].weight.size() != static_cast<std::size_t>(rows) * cols)
      throw std::invalid_argument("restore: mask plane size mismatch");
    const float factor = *std::max_element(distorted.planes[p].begin(), distorted.planes[p].end());
    if (factor > 0) pending.push_back(p);
  }

  for (std::size_t start = 0; start < pending.size(); start += batch_size) {
    const std::size_t count = std::min<std::size_t>(batch_size, pending.size() - start);
    Tensor<float> input(static_cast<int>(count), 1, pad.rows, pad.cols);
    std::vector<float> factors(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& plane = distorted.planes[pending[start + i]];
      factors[i] = norm_factor(plane);
      fill_slot(input, static_cast<int>(i), plane, rows, cols, factors[i], pad);
    }
    const Tensor<float> result = crop(model.forward(input, BnMode::infer), rows, cols, pad);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t p = pending[start + i];
      auto& plane = out.planes[p];
      const auto& affected = masks[p].affected;
      for (std::size_t idx = 0; idx < plane.size(); ++idx)
        if (affected[idx])
          plane[idx] = std::max(0.0f, result.at(static_cast<int>(i), 0, static_cast<int>(idx / cols),
                                                static_cast<int>(idx % cols)) *
                                          factors[i]);
    }
  }
  return out;
}

}  // namespace sparsepet
