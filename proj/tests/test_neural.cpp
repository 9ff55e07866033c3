#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "sparsepet/neural.hpp"
#include "sparsepet/rng.hpp"

using namespace sparsepet;

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(n, c, h, w);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Central finite differences against an analytic gradient, elementwise.
double max_rel_error(Tensor<double>& param, const Tensor<double>& analytic,
                     const std::function<double()>& loss, double step = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double old = param.data[i];
    param.data[i] = old + step;
    const double up = loss();
    param.data[i] = old - step;
    const double dn = loss();
    param.data[i] = old;
    const double fd = (up - dn) / (2 * step);
    const double denom = std::max({std::abs(fd), std::abs(analytic.data[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic.data[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("conv2d identity and delta responses") {
  Rng rng(1);
  Tensor<double> x = random_tensor(2, 3, 5, 6, rng);
  Tensor<double> eye(3, 3, 1, 1);
  for (int ci = 0; ci < 3; ++ci) eye.at(ci, ci, 0, 0) = 1.0;
  const Tensor<double> y = conv_forward(x, eye, static_cast<const Tensor<double>*>(nullptr), 1, 0);
  CHECK(y == x);

  Tensor<double> one_hot(1, 1, 5, 5);
  one_hot.at(0, 0, 2, 2) = 1.0;
  Tensor<double> ones(1, 1, 3, 3);
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  const Tensor<double> d = conv_forward(one_hot, ones, static_cast<const Tensor<double>*>(nullptr), 1, 0);
  REQUIRE(d.h == 3);
  REQUIRE(d.w == 3);
  for (double v : d.data) CHECK(v == 1.0);
}

TEST_CASE("conv2d strided output dims and validation") {
  Rng rng(2);
  Tensor<double> x = random_tensor(1, 2, 64, 64, rng);
  Conv2d<double> down(2, 4, 3, 2, 1);
  down.init(rng);
  const auto y = down.forward(x);
  CHECK(y.c == 4);
  CHECK(y.h == 32);
  CHECK(y.w == 32);

  Tensor<double> wrong = random_tensor(1, 3, 8, 8, rng);
  CHECK_THROWS_AS(down.forward(wrong), std::invalid_argument);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(3);
  for (const int stride : {1, 2}) {
    Conv2d<double> conv(1, 2, 3, stride, 1);
    conv.init(rng);
    Tensor<double> x = random_tensor(4, 1, 8, 8, rng);
    Tensor<double> probe;

    const auto loss = [&]() {
      Conv2d<double> fresh = conv;
      return dot(fresh.forward(x), probe);
    };
    {
      Conv2d<double> fresh = conv;
      probe = random_tensor(4, 2, fresh.forward(x).h, conv_out_dim(8, 3, stride, 1), rng);
    }

    Conv2d<double> work = conv;
    work.forward(x);
    const Tensor<double> gx = work.backward(probe);
    CHECK(max_rel_error(x, gx, loss) < 1e-4);
    CHECK(max_rel_error(conv.weight, work.gweight, loss) < 1e-4);
  }
}

TEST_CASE("conv and transposed conv are exact adjoints") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int ic = 1 + static_cast<int>(rng.below(4));
    const int oc = 1 + static_cast<int>(rng.below(4));
    const int h = 2 * (2 + static_cast<int>(rng.below(7)));
    const int w = 2 * (2 + static_cast<int>(rng.below(7)));
    Tensor<double> kernel = random_tensor(oc, ic, 2, 2, rng);
    Tensor<double> x = random_tensor(2, ic, h, w, rng);
    Tensor<double> y = random_tensor(2, oc, h / 2, w / 2, rng);

    const Tensor<double> ax =
        conv_forward(x, kernel, static_cast<const Tensor<double>*>(nullptr), 2, 0);
    const Tensor<double> aty = conv_backward_input(y, kernel, 2, 0, h, w);
    const double lhs = dot(ax, y), rhs = dot(x, aty);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  }

  // Same identity for the 3x3 stride-1 padded convolution used everywhere.
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> kernel = random_tensor(3, 2, 3, 3, rng);
    Tensor<double> x = random_tensor(1, 2, 9, 7, rng);
    Tensor<double> y = random_tensor(1, 3, 9, 7, rng);
    const Tensor<double> ax =
        conv_forward(x, kernel, static_cast<const Tensor<double>*>(nullptr), 1, 1);
    const Tensor<double> aty = conv_backward_input(y, kernel, 1, 1, 9, 7);
    CHECK(dot(ax, y) == doctest::Approx(dot(x, aty)).epsilon(1e-9));
  }
}

TEST_CASE("transposed conv stamps the kernel at stride-2 positions") {
  ConvTranspose2d<double> up(1, 2);
  Rng rng(5);
  up.init(rng);
  Tensor<double> x(1, 1, 3, 3);
  x.at(0, 0, 1, 2) = 1.0;
  const auto y = up.forward(x);
  REQUIRE(y.h == 6);
  REQUIRE(y.w == 6);
  for (int oc = 0; oc < 2; ++oc)
    for (int iy = 0; iy < 6; ++iy)
      for (int ix = 0; ix < 6; ++ix) {
        const bool inside = iy >= 2 && iy < 4 && ix >= 4 && ix < 6;
        const double expect = inside ? up.weight.at(0, oc, iy - 2, ix - 4) : 0.0;
        CHECK(y.at(0, oc, iy, ix) == doctest::Approx(expect).epsilon(1e-12));
      }
}

TEST_CASE("transposed conv gradients match finite differences") {
  Rng rng(6);
  ConvTranspose2d<double> up(3, 2);
  up.init(rng);
  Tensor<double> x = random_tensor(2, 3, 4, 5, rng);
  Tensor<double> probe = random_tensor(2, 2, 8, 10, rng);

  const auto loss = [&]() {
    ConvTranspose2d<double> fresh = up;
    return dot(fresh.forward(x), probe);
  };
  ConvTranspose2d<double> work = up;
  work.forward(x);
  const Tensor<double> gx = work.backward(probe);
  CHECK(max_rel_error(x, gx, loss) < 1e-4);
  CHECK(max_rel_error(up.weight, work.gweight, loss) < 1e-4);
}

TEST_CASE("batchnorm normalizes per channel in train mode") {
  Rng rng(7);
  BatchNorm2d<double> bn(3);
  Tensor<double> x = random_tensor(4, 3, 6, 6, rng, -3, 5);
  const auto y = bn.forward(x, BnMode::train);
  for (int ci = 0; ci < 3; ++ci) {
    double sum = 0, sumsq = 0;
    int count = 0;
    for (int s = 0; s < 4; ++s)
      for (int iy = 0; iy < 6; ++iy)
        for (int ix = 0; ix < 6; ++ix) {
          const double v = y.at(s, ci, iy, ix);
          sum += v;
          sumsq += v * v;
          ++count;
        }
    const double mean = sum / count;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(sumsq / count - mean * mean == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("batchnorm infer with running stats equal to batch stats matches train") {
  Rng rng(8);
  Tensor<double> x = random_tensor(3, 2, 5, 5, rng, 0, 4);
  BatchNorm2d<double> bn(2);
  const auto train_out = bn.forward(x, BnMode::train);  // loads running stats

  BatchNorm2d<double> infer_bn(2);
  for (int ci = 0; ci < 2; ++ci) {
    double sum = 0, sumsq = 0;
    for (int s = 0; s < 3; ++s)
      for (int i = 0; i < 25; ++i) {
        const double v = x.data[((static_cast<std::size_t>(s) * 2 + ci) * 25) + i];
        sum += v;
        sumsq += v * v;
      }
    const double mean = sum / 75.0;
    infer_bn.running_mean.data[ci] = mean;
    infer_bn.running_var.data[ci] = sumsq / 75.0 - mean * mean;
  }
  const auto infer_out = infer_bn.forward(x, BnMode::infer);
  for (std::size_t i = 0; i < train_out.size(); ++i)
    CHECK(infer_out.data[i] == doctest::Approx(train_out.data[i]).epsilon(1e-9));

  Tensor<double> empty(0, 2, 5, 5);
  CHECK_THROWS_AS(bn.forward(empty, BnMode::train), std::invalid_argument);
}

TEST_CASE("batchnorm gradients match finite differences in both modes") {
  Rng rng(9);
  Tensor<double> x = random_tensor(3, 2, 4, 4, rng);
  Tensor<double> probe = random_tensor(3, 2, 4, 4, rng);
  BatchNorm2d<double> proto(2);
  for (auto& v : proto.gamma.data) v = rng.uniform(0.5, 1.5);
  for (auto& v : proto.beta.data) v = rng.uniform(-0.5, 0.5);
  for (auto& v : proto.running_mean.data) v = rng.uniform(-0.5, 0.5);
  for (auto& v : proto.running_var.data) v = rng.uniform(0.5, 2.0);

  for (const BnMode mode : {BnMode::train, BnMode::infer}) {
    const auto loss = [&]() {
      BatchNorm2d<double> fresh = proto;
      return dot(fresh.forward(x, mode), probe);
    };
    BatchNorm2d<double> work = proto;
    work.forward(x, mode);
    const Tensor<double> gx = work.backward(probe);
    CHECK(max_rel_error(x, gx, loss) < 1e-4);
    CHECK(max_rel_error(proto.gamma, work.ggamma, loss) < 1e-4);
    CHECK(max_rel_error(proto.beta, work.gbeta, loss) < 1e-4);
  }
}

TEST_CASE("relu forward and subgradient") {
  Tensor<double> x(1, 1, 2, 3);
  x.data = {-2, 0, 3, -0.5, 1, -4};
  ReluLayer<double> relu;
  const auto y = relu.forward(x);
  CHECK(y.data == std::vector<double>{0, 0, 3, 0, 1, 0});
  Tensor<double> gy(1, 1, 2, 3);
  gy.data = {1, 1, 1, 1, 1, 1};
  CHECK(relu.backward(gy).data == std::vector<double>{0, 0, 1, 0, 1, 0});
}

TEST_CASE("ssim value properties") {
  Rng rng(10);
  Tensor<double> x = random_tensor(1, 1, 12, 14, rng, 0, 1);
  const auto self = ssim_windowed(x, x, 1.0, 7);
  CHECK(self.value == 1.0);
  for (double g : self.grad_a.data) CHECK(std::abs(g) < 1e-12);

  // Zero-mean checkerboard against its negation: covariance term goes negative.
  Tensor<double> checker(1, 1, 10, 10), anti(1, 1, 10, 10);
  for (int iy = 0; iy < 10; ++iy)
    for (int ix = 0; ix < 10; ++ix) {
      const double v = ((iy + ix) % 2 == 0) ? 1.0 : -1.0;
      checker.at(0, 0, iy, ix) = v;
      anti.at(0, 0, iy, ix) = -v + 0.1;
    }
  CHECK(ssim_windowed(checker, anti, 2.0, 7).value < 0.0);

  Tensor<double> y = random_tensor(1, 1, 12, 14, rng, 0, 1);
  const double ab = ssim_windowed(x, y, 1.0, 7).value;
  const double ba = ssim_windowed(y, x, 1.0, 7).value;
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK(ab < 1.0);

  CHECK_THROWS_AS(ssim_windowed(x, y, 1.0, 15), std::invalid_argument);
  CHECK_THROWS_AS(ssim_windowed(x, y, 0.0, 7), std::invalid_argument);
}

TEST_CASE("ssim matches a per-window scalar-loop oracle") {
  Rng rng(11);
  Tensor<double> a = random_tensor(2, 1, 9, 9, rng, 0, 2);
  Tensor<double> b = random_tensor(2, 1, 9, 9, rng, 0, 2);
  const double dr = 2.0;
  const int win = 5;
  const double c1 = 0.01 * dr * 0.01 * dr, c2 = 0.03 * dr * 0.03 * dr;

  double oracle = 0;
  int windows = 0;
  for (int s = 0; s < 2; ++s)
    for (int y0 = 0; y0 + win <= 9; ++y0)
      for (int x0 = 0; x0 + win <= 9; ++x0) {
        double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
        for (int iy = y0; iy < y0 + win; ++iy)
          for (int ix = x0; ix < x0 + win; ++ix) {
            ma += a.at(s, 0, iy, ix);
            mb += b.at(s, 0, iy, ix);
          }
        ma /= win * win;
        mb /= win * win;
        for (int iy = y0; iy < y0 + win; ++iy)
          for (int ix = x0; ix < x0 + win; ++ix) {
            va += (a.at(s, 0, iy, ix) - ma) * (a.at(s, 0, iy, ix) - ma);
            vb += (b.at(s, 0, iy, ix) - mb) * (b.at(s, 0, iy, ix) - mb);
            cov += (a.at(s, 0, iy, ix) - ma) * (b.at(s, 0, iy, ix) - mb);
          }
        va /= win * win;
        vb /= win * win;
        cov /= win * win;
        oracle += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
  oracle /= windows;
  CHECK(ssim_windowed(a, b, dr, win).value == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("ssim gradient matches finite differences") {
  Rng rng(12);
  Tensor<double> a = random_tensor(1, 1, 10, 11, rng, 0, 1);
  Tensor<double> b = random_tensor(1, 1, 10, 11, rng, 0, 1);
  const auto analytic = ssim_windowed(a, b, 1.5, 7);
  const auto loss = [&]() { return static_cast<double>(ssim_windowed(a, b, 1.5, 7).value); };
  Tensor<double> grad = analytic.grad_a;
  CHECK(max_rel_error(a, grad, loss) < 1e-4);
}

TEST_CASE("masked MAE value, oracle, and gradient") {
  Rng rng(13);
  Tensor<double> pred = random_tensor(1, 1, 6, 6, rng, -2, 2);
  Tensor<double> target = pred;
  std::vector<std::uint8_t> mask(pred.size(), 1);
  CHECK(masked_mae(pred, target, mask).value == 0.0);

  for (std::size_t i = 0; i < pred.size(); ++i) pred.data[i] = target.data[i] + 3.0;
  CHECK(masked_mae(pred, target, mask).value == doctest::Approx(3.0).epsilon(1e-12));

  // Random case with a random mask against a scalar loop, exact.
  Tensor<double> q = random_tensor(2, 1, 5, 7, rng, -1, 1);
  Tensor<double> t = random_tensor(2, 1, 5, 7, rng, -1, 1);
  std::vector<std::uint8_t> m(q.size());
  for (auto& bit : m) bit = rng.below(2) ? 1 : 0;
  m[0] = 1;
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (m[i]) {
      sum += std::abs(q.data[i] - t.data[i]);
      ++n;
    }
  const auto res = masked_mae(q, t, m);
  CHECK(res.value == sum / static_cast<double>(n));
  CHECK(max_rel_error(q, res.grad_pred, [&]() { return static_cast<double>(masked_mae(q, t, m).value); }) < 1e-4);

  CHECK_THROWS_AS(masked_mae(q, t, std::vector<std::uint8_t>(q.size(), 0)), std::invalid_argument);
}

TEST_CASE("adam closed-form first step, zero-grad stationarity, schedule") {
  Tensor<double> p(1, 1, 1, 1), g(1, 1, 1, 1);
  p.data[0] = 0.5;
  g.data[0] = 1.0;
  std::vector<ParamRef<double>> refs{{&p, &g, true}};
  AdamState<double> st;
  adam_step(refs, st, 1e-3);
  CHECK(p.data[0] == doctest::Approx(0.5 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(st.t == 1);

  g.data[0] = 0.0;
  const double before = p.data[0];
  adam_step(refs, st, 1e-3);
  // First moment decays but the sqrt(v) floor keeps the step tiny, not zero.
  CHECK(std::abs(p.data[0] - before) < 2e-3);

  Tensor<double> q(1, 1, 1, 1), zq(1, 1, 1, 1);
  q.data[0] = 2.0;
  std::vector<ParamRef<double>> fresh{{&q, &zq, true}};
  AdamState<double> st2;
  adam_step(fresh, st2, 1e-3);
  CHECK(q.data[0] == 2.0);  // zero gradient from the start: m = v = 0
  CHECK(st2.t == 1);

  CHECK(staircase_lr(1e-3, 0.96, 25) == doctest::Approx(1e-3 * std::pow(0.96, 25)).epsilon(1e-15));
  CHECK(staircase_lr(1e-3, 0.96, 0) == 1e-3);
}

TEST_CASE("composite pipeline end-to-end gradient check") {
  // conv -> BN -> ReLU -> strided conv -> convT -> skip add -> 1x1 conv,
  // loss = (1 - SSIM) + masked MAE. Exercises every primitive jointly.
  Rng rng(14);
  Tensor<double> x = random_tensor(2, 1, 8, 8, rng, 0, 1);
  Tensor<double> target = random_tensor(2, 1, 8, 8, rng, 0, 1);
  std::vector<std::uint8_t> mask(x.size());
  for (auto& bit : mask) bit = rng.below(2) ? 1 : 0;
  mask[3] = 1;

  struct Net {
    Conv2d<double> stem{1, 4, 3, 1, 1};
    BatchNorm2d<double> bn{4};
    ReluLayer<double> relu;
    Conv2d<double> down{4, 8, 3, 2, 1};
    ConvTranspose2d<double> up{8, 4};
    Conv2d<double> head{4, 1, 1, 1, 0};

    double forward_loss(const Tensor<double>& in, const Tensor<double>& tgt,
                        const std::vector<std::uint8_t>& m, Tensor<double>* gin) {
      auto a = stem.forward(in);
      auto b = bn.forward(a, BnMode::train);
      auto c = relu.forward(b);
      auto d = down.forward(c);
      auto e = up.forward(d);
      for (std::size_t i = 0; i < e.size(); ++i) e.data[i] += c.data[i];  // skip add
      auto out = head.forward(e);
      const auto ssim = ssim_windowed(out, tgt, 1.0, 5);
      const auto mae = masked_mae(out, tgt, m);
      if (gin) {
        Tensor<double> gout = mae.grad_pred;
        for (std::size_t i = 0; i < gout.size(); ++i) gout.data[i] -= ssim.grad_a.data[i];
        auto ge = head.backward(gout);
        auto gd = up.backward(ge);
        auto gc = down.backward(gd);
        for (std::size_t i = 0; i < gc.size(); ++i) gc.data[i] += ge.data[i];  // skip add
        auto gb = relu.backward(gc);
        auto ga = bn.backward(gb);
        *gin = stem.backward(ga);
      }
      return (1.0 - ssim.value) + mae.value;
    }
  };

  Net proto;
  proto.stem.init(rng);
  proto.down.init(rng);
  proto.up.init(rng);
  proto.head.init(rng);
  for (auto& v : proto.bn.gamma.data) v = rng.uniform(0.5, 1.5);

  Net work = proto;
  Tensor<double> gx;
  work.forward_loss(x, target, mask, &gx);
  const auto loss = [&]() {
    Net fresh = proto;
    return fresh.forward_loss(x, target, mask, nullptr);
  };

  CHECK(max_rel_error(x, gx, loss, 1e-5) < 1e-3);
  CHECK(max_rel_error(proto.stem.weight, work.stem.gweight, loss, 1e-5) < 1e-3);
  CHECK(max_rel_error(proto.down.weight, work.down.gweight, loss, 1e-5) < 1e-3);
  CHECK(max_rel_error(proto.up.weight, work.up.gweight, loss, 1e-5) < 1e-3);
  CHECK(max_rel_error(proto.head.weight, work.head.gweight, loss, 1e-5) < 1e-3);
  CHECK(max_rel_error(proto.bn.gamma, work.bn.ggamma, loss, 1e-5) < 1e-3);
  CHECK(max_rel_error(proto.bn.beta, work.bn.gbeta, loss, 1e-5) < 1e-3);
}

TEST_CASE("float and double instantiations agree") {
  Rng rng(15);
  Tensor<double> xd = random_tensor(1, 2, 6, 6, rng);
  Tensor<double> kd = random_tensor(3, 2, 3, 3, rng);
  Tensor<float> xf(1, 2, 6, 6), kf(3, 2, 3, 3);
  for (std::size_t i = 0; i < xd.size(); ++i) xf.data[i] = static_cast<float>(xd.data[i]);
  for (std::size_t i = 0; i < kd.size(); ++i) kf.data[i] = static_cast<float>(kd.data[i]);
  const auto yd = conv_forward(xd, kd, static_cast<const Tensor<double>*>(nullptr), 1, 1);
  const auto yf = conv_forward(xf, kf, static_cast<const Tensor<float>*>(nullptr), 1, 1);
  for (std::size_t i = 0; i < yd.size(); ++i)
    CHECK(static_cast<double>(yf.data[i]) == doctest::Approx(yd.data[i]).epsilon(1e-4));
}
