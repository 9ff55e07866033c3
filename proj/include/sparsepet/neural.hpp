#pragma once

// Dense NCHW tensors and the reverse-mode building blocks the restoration
// network needs: convolution via im2col + GEMM, transposed convolution as the
// exact adjoint, batch normalization, ReLU, windowed SSIM, masked MAE, and
// Adam. Templated on the scalar: training runs in float, gradient checks in
// double. Everything is single-threaded with a fixed reduction order, so
// results are bit-reproducible for a fixed seed.

#include <cblas.h>

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sparsepet/rng.hpp"

namespace sparsepet {

template <typename S>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<S> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, S(0)) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0) throw std::invalid_argument("negative tensor dim");
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  S& at(int in, int ic, int iy, int ix) {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  const S& at(int in, int ic, int iy, int ix) const {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  void zero() { std::fill(data.begin(), data.end(), S(0)); }

  bool operator==(const Tensor&) const = default;
};

// Debug-mode guard: every op output must be finite.
template <typename S>
inline void debug_check_finite(const Tensor<S>& t) {
#ifndef NDEBUG
  for (S v : t.data) assert(std::isfinite(static_cast<double>(v)));
#else
  (void)t;
#endif
}

// Row-major GEMM: C = alpha * op(A) op(B) + beta * C.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// Unpacks one sample into a (c*kh*kw) x (oh*ow) row-major patch matrix.
template <typename S>
void im2col(const Tensor<S>& x, int sample, int kh, int kw, int stride, int pad, S* col) {
  const int oh = conv_out_dim(x.h, kh, stride, pad);
  const int ow = conv_out_dim(x.w, kw, stride, pad);
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < x.c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        S* row = col + (static_cast<std::size_t>(ci) * kh * kw + ky * kw + kx) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            row[static_cast<std::size_t>(oy) * ow + ox] =
                (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w) ? x.at(sample, ci, iy, ix) : S(0);
          }
        }
      }
}

// Adjoint of im2col: scatter-adds a patch matrix back into one sample.
template <typename S>
void col2im(const S* col, Tensor<S>& x, int sample, int kh, int kw, int stride, int pad) {
  const int oh = conv_out_dim(x.h, kh, stride, pad);
  const int ow = conv_out_dim(x.w, kw, stride, pad);
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < x.c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const S* row = col + (static_cast<std::size_t>(ci) * kh * kw + ky * kw + kx) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= x.h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < x.w)
              x.at(sample, ci, iy, ix) += row[static_cast<std::size_t>(oy) * ow + ox];
          }
        }
      }
}

// Cross-correlation with kernel (out_c, in_c, kh, kw). bias may be null.
template <typename S>
Tensor<S> conv_forward(const Tensor<S>& x, const Tensor<S>& kernel, const Tensor<S>* bias,
                       int stride, int pad) {
  if (kernel.c != x.c) throw std::invalid_argument("conv: channel mismatch");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv: stride must be 1 or 2");
  const int oh = conv_out_dim(x.h, kernel.h, stride, pad);
  const int ow = conv_out_dim(x.w, kernel.w, stride, pad);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv: empty output");
  const int k = kernel.c * kernel.h * kernel.w;
  const int cols = oh * ow;
  Tensor<S> y(x.n, kernel.n, oh, ow);
  std::vector<S> col(static_cast<std::size_t>(k) * cols);
  for (int s = 0; s < x.n; ++s) {
    im2col(x, s, kernel.h, kernel.w, stride, pad, col.data());
    gemm(false, false, kernel.n, cols, k, S(1), kernel.data.data(), k, col.data(), cols, S(0),
         &y.at(s, 0, 0, 0), cols);
    if (bias)
      for (int oc = 0; oc < kernel.n; ++oc) {
        const S b = bias->data[static_cast<std::size_t>(oc)];
        S* plane = &y.at(s, oc, 0, 0);
        for (int i = 0; i < cols; ++i) plane[i] += b;
      }
  }
  debug_check_finite(y);
  return y;
}

// Gradient w.r.t. the conv input; also the forward map of the transposed
// convolution (in_h, in_w are the conv-input spatial dims to reconstruct).
template <typename S>
Tensor<S> conv_backward_input(const Tensor<S>& gy, const Tensor<S>& kernel, int stride, int pad,
                              int in_h, int in_w) {
  if (gy.c != kernel.n) throw std::invalid_argument("conv: grad channel mismatch");
  const int oh = conv_out_dim(in_h, kernel.h, stride, pad);
  const int ow = conv_out_dim(in_w, kernel.w, stride, pad);
  if (oh != gy.h || ow != gy.w) throw std::invalid_argument("conv: grad spatial mismatch");
  const int k = kernel.c * kernel.h * kernel.w;
  const int cols = oh * ow;
  Tensor<S> gx(gy.n, kernel.c, in_h, in_w);
  std::vector<S> col(static_cast<std::size_t>(k) * cols);
  for (int s = 0; s < gy.n; ++s) {
    gemm(true, false, k, cols, kernel.n, S(1), kernel.data.data(), k, &gy.at(s, 0, 0, 0), cols,
         S(0), col.data(), cols);
    col2im(col.data(), gx, s, kernel.h, kernel.w, stride, pad);
  }
  debug_check_finite(gx);
  return gx;
}

// Accumulates the kernel gradient into gkernel (shape (out_c, in_c, kh, kw)).
template <typename S>
void conv_backward_weight(const Tensor<S>& x, const Tensor<S>& gy, Tensor<S>& gkernel, int stride,
                          int pad) {
  const int k = gkernel.c * gkernel.h * gkernel.w;
  const int cols = gy.h * gy.w;
  std::vector<S> col(static_cast<std::size_t>(k) * cols);
  for (int s = 0; s < x.n; ++s) {
    im2col(x, s, gkernel.h, gkernel.w, stride, pad, col.data());
    gemm(false, true, gkernel.n, k, cols, S(1), &gy.at(s, 0, 0, 0), cols, col.data(), cols, S(1),
         gkernel.data.data(), k);
  }
}

template <typename S>
void conv_backward_bias(const Tensor<S>& gy, Tensor<S>& gbias) {
  for (int s = 0; s < gy.n; ++s)
    for (int oc = 0; oc < gy.c; ++oc) {
      S sum = 0;
      const S* plane = &gy.at(s, oc, 0, 0);
      for (int i = 0; i < gy.h * gy.w; ++i) sum += plane[i];
      gbias.data[static_cast<std::size_t>(oc)] += sum;
    }
}

// One optimizable or persistent tensor of a layer. Running statistics are
// serialized but never optimized (trainable == false, grad == nullptr).
template <typename S>
struct ParamRef {
  Tensor<S>* value;
  Tensor<S>* grad;
  bool trainable;
};

template <typename S>
void he_normal_init(Tensor<S>& t, int fan_in, Rng& rng) {
  const double sigma = std::sqrt(2.0 / fan_in);
  for (S& v : t.data) v = static_cast<S>(rng.normal() * sigma);
}

template <typename S>
class Conv2d {
 public:
  Conv2d(int in_c, int out_c, int kernel, int stride, int pad, bool bias = true)
      : weight(out_c, in_c, kernel, kernel),
        gweight(out_c, in_c, kernel, kernel),
        stride_(stride),
        pad_(pad),
        has_bias_(bias),
        bias_(out_c, 1, 1, 1),
        gbias_(out_c, 1, 1, 1) {}

  void init(Rng& rng) { he_normal_init(weight, weight.c * weight.h * weight.w, rng); }

  Tensor<S> forward(const Tensor<S>& x) {
    x_ = x;
    return conv_forward(x, weight, has_bias_ ? &bias_ : nullptr, stride_, pad_);
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    conv_backward_weight(x_, gy, gweight, stride_, pad_);
    if (has_bias_) conv_backward_bias(gy, gbias_);
    return conv_backward_input(gy, weight, stride_, pad_, x_.h, x_.w);
  }

  void collect(std::vector<ParamRef<S>>& out) {
    out.push_back({&weight, &gweight, true});
    if (has_bias_) out.push_back({&bias_, &gbias_, true});
  }

  Tensor<S> weight, gweight;

 private:
  int stride_, pad_;
  bool has_bias_;
  Tensor<S> bias_, gbias_;
  Tensor<S> x_;
};

// 2x2 stride-2 upsampling convolution, the exact adjoint of a 2x2 stride-2
// convolution sharing the same kernel. Weight shape (in_c, out_c, k, k).
template <typename S>
class ConvTranspose2d {
 public:
  ConvTranspose2d(int in_c, int out_c, int kernel = 2, int stride = 2)
      : weight(in_c, out_c, kernel, kernel),
        gweight(in_c, out_c, kernel, kernel),
        stride_(stride),
        bias_(out_c, 1, 1, 1),
        gbias_(out_c, 1, 1, 1) {
    if (stride != 2) throw std::invalid_argument("conv_transpose: stride must be 2");
  }

  void init(Rng& rng) { he_normal_init(weight, weight.n * weight.h * weight.w, rng); }

  Tensor<S> forward(const Tensor<S>& x) {
    x_ = x;
    Tensor<S> y = conv_backward_input(x, weight, stride_, 0, x.h * stride_, x.w * stride_);
    for (int s = 0; s < y.n; ++s)
      for (int oc = 0; oc < y.c; ++oc) {
        const S b = bias_.data[static_cast<std::size_t>(oc)];
        S* plane = &y.at(s, oc, 0, 0);
        for (int i = 0; i < y.h * y.w; ++i) plane[i] += b;
      }
    debug_check_finite(y);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    conv_backward_weight(gy, x_, gweight, stride_, 0);
    conv_backward_bias(gy, gbias_);
    return conv_forward(gy, weight, static_cast<const Tensor<S>*>(nullptr), stride_, 0);
  }

  void collect(std::vector<ParamRef<S>>& out) {
    out.push_back({&weight, &gweight, true});
    out.push_back({&bias_, &gbias_, true});
  }

  Tensor<S> weight, gweight;

 private:
  int stride_;
  Tensor<S> bias_, gbias_;
  Tensor<S> x_;
};

enum class BnMode { train, infer };

// Per-channel batch normalization over (batch, H, W) with biased variance;
// running statistics keep 0.9 of the old value per update and are used
// verbatim in infer mode.
template <typename S>
class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels)
      : gamma(channels, 1, 1, 1),
        beta(channels, 1, 1, 1),
        running_mean(channels, 1, 1, 1),
        running_var(channels, 1, 1, 1),
        ggamma(channels, 1, 1, 1),
        gbeta(channels, 1, 1, 1) {
    std::fill(gamma.data.begin(), gamma.data.end(), S(1));
    std::fill(running_var.data.begin(), running_var.data.end(), S(1));
  }

  Tensor<S> forward(const Tensor<S>& x, BnMode mode) {
    if (x.n == 0) throw std::invalid_argument("batchnorm: empty batch");
    if (x.c != gamma.n) throw std::invalid_argument("batchnorm: channel mismatch");
    mode_ = mode;
    const int count = x.n * x.h * x.w;
    const int plane = x.h * x.w;
    xhat_ = Tensor<S>(x.n, x.c, x.h, x.w);
    inv_std_.assign(static_cast<std::size_t>(x.c), S(0));
    Tensor<S> y(x.n, x.c, x.h, x.w);
    for (int ci = 0; ci < x.c; ++ci) {
      double mean, var;
      if (mode == BnMode::train) {
        double sum = 0, sumsq = 0;
        for (int s = 0; s < x.n; ++s) {
          const S* p = &x.at(s, ci, 0, 0);
          for (int i = 0; i < plane; ++i) {
            sum += p[i];
            sumsq += static_cast<double>(p[i]) * p[i];
          }
        }
        mean = sum / count;
        var = std::max(0.0, sumsq / count - mean * mean);
        auto& rm = running_mean.data[static_cast<std::size_t>(ci)];
        auto& rv = running_var.data[static_cast<std::size_t>(ci)];
        rm = static_cast<S>(momentum * rm + (1.0 - momentum) * mean);
        rv = static_cast<S>(momentum * rv + (1.0 - momentum) * var);
      } else {
        mean = running_mean.data[static_cast<std::size_t>(ci)];
        var = running_var.data[static_cast<std::size_t>(ci)];
      }
      const S istd = static_cast<S>(1.0 / std::sqrt(var + eps));
      inv_std_[static_cast<std::size_t>(ci)] = istd;
      const S g = gamma.data[static_cast<std::size_t>(ci)];
      const S b = beta.data[static_cast<std::size_t>(ci)];
      for (int s = 0; s < x.n; ++s) {
        const S* px = &x.at(s, ci, 0, 0);
        S* ph = &xhat_.at(s, ci, 0, 0);
        S* py = &y.at(s, ci, 0, 0);
        for (int i = 0; i < plane; ++i) {
          ph[i] = static_cast<S>((px[i] - mean) * istd);
          py[i] = g * ph[i] + b;
        }
      }
    }
    debug_check_finite(y);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const int count = gy.n * gy.h * gy.w;
    const int plane = gy.h * gy.w;
    Tensor<S> gx(gy.n, gy.c, gy.h, gy.w);
    for (int ci = 0; ci < gy.c; ++ci) {
      double sum_gy = 0, sum_gy_xhat = 0;
      for (int s = 0; s < gy.n; ++s) {
        const S* pg = &gy.at(s, ci, 0, 0);
        const S* ph = &xhat_.at(s, ci, 0, 0);
        for (int i = 0; i < plane; ++i) {
          sum_gy += pg[i];
          sum_gy_xhat += static_cast<double>(pg[i]) * ph[i];
        }
      }
      gbeta.data[static_cast<std::size_t>(ci)] += static_cast<S>(sum_gy);
      ggamma.data[static_cast<std::size_t>(ci)] += static_cast<S>(sum_gy_xhat);
      const S g = gamma.data[static_cast<std::size_t>(ci)];
      const S istd = inv_std_[static_cast<std::size_t>(ci)];
      if (mode_ == BnMode::train) {
        const S mg = static_cast<S>(sum_gy / count);
        const S mgx = static_cast<S>(sum_gy_xhat / count);
        for (int s = 0; s < gy.n; ++s) {
          const S* pg = &gy.at(s, ci, 0, 0);
          const S* ph = &xhat_.at(s, ci, 0, 0);
          S* px = &gx.at(s, ci, 0, 0);
          for (int i = 0; i < plane; ++i) px[i] = g * istd * (pg[i] - mg - ph[i] * mgx);
        }
      } else {
        for (int s = 0; s < gy.n; ++s) {
          const S* pg = &gy.at(s, ci, 0, 0);
          S* px = &gx.at(s, ci, 0, 0);
          for (int i = 0; i < plane; ++i) px[i] = g * istd * pg[i];
        }
      }
    }
    return gx;
  }

  void collect(std::vector<ParamRef<S>>& out) {
    out.push_back({&gamma, &ggamma, true});
    out.push_back({&beta, &gbeta, true});
    out.push_back({&running_mean, nullptr, false});
    out.push_back({&running_var, nullptr, false});
  }

  static constexpr double eps = 1e-5;
  static constexpr double momentum = 0.9;
  Tensor<S> gamma, beta, running_mean, running_var, ggamma, gbeta;

 private:
  BnMode mode_ = BnMode::train;
  Tensor<S> xhat_;
  std::vector<S> inv_std_;
};

template <typename S>
class ReluLayer {
 public:
  Tensor<S> forward(const Tensor<S>& x) {
    positive_.assign(x.size(), 0);
    Tensor<S> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.data[i] > S(0))
        positive_[i] = 1;
      else
        y.data[i] = S(0);
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!positive_[i]) gx.data[i] = S(0);
    return gx;
  }

 private:
  std::vector<std::uint8_t> positive_;
};

template <typename S>
struct SsimResult {
  S value;
  Tensor<S> grad_a;
};

// Mean SSIM over all valid positions of a sliding uniform window, with the
// analytic gradient w.r.t. the first argument. Window statistics use biased
// (1/n) moments and are accumulated in double regardless of S. The gradient
// of each window is affine in (a_i, b_i), so per-pixel accumulation runs
// through three 2D difference arrays instead of a per-window scatter.
template <typename S>
SsimResult<S> ssim_windowed(const Tensor<S>& a, const Tensor<S>& b, S dynamic_range, int window) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (dynamic_range <= S(0)) throw std::invalid_argument("ssim: dynamic range must be positive");
  if (window < 1 || window > a.h || window > a.w)
    throw std::invalid_argument("ssim: window larger than image");

  const double c1 = 0.01 * dynamic_range * 0.01 * dynamic_range;
  const double c2 = 0.03 * dynamic_range * 0.03 * dynamic_range;
  const int vh = a.h - window + 1, vw = a.w - window + 1;
  const double nw = static_cast<double>(window) * window;
  const std::size_t total_windows =
      static_cast<std::size_t>(a.n) * a.c * static_cast<std::size_t>(vh) * vw;

  SsimResult<S> result;
  result.grad_a = Tensor<S>(a.n, a.c, a.h, a.w);
  double ssim_sum = 0;

  const int pw = a.w + 1;
  std::vector<double> pa(static_cast<std::size_t>(a.h + 1) * pw), pb(pa.size()), paa(pa.size()),
      pbb(pa.size()), pab(pa.size());
  std::vector<double> d0(pa.size()), d1(pa.size()), d2(pa.size());

  for (int s = 0; s < a.n; ++s)
    for (int ci = 0; ci < a.c; ++ci) {
      const S* xa = &a.at(s, ci, 0, 0);
      const S* xb = &b.at(s, ci, 0, 0);
      for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
          const std::size_t cur = static_cast<std::size_t>(y + 1) * pw + (x + 1);
          const std::size_t up = cur - pw, left = cur - 1, diag = up - 1;
          const double va = xa[y * a.w + x], vb = xb[y * a.w + x];
          pa[cur] = va + pa[up] + pa[left] - pa[diag];
          pb[cur] = vb + pb[up] + pb[left] - pb[diag];
          paa[cur] = va * va + paa[up] + paa[left] - paa[diag];
          pbb[cur] = vb * vb + pbb[up] + pbb[left] - pbb[diag];
          pab[cur] = va * vb + pab[up] + pab[left] - pab[diag];
        }

      std::fill(d0.begin(), d0.end(), 0.0);
      std::fill(d1.begin(), d1.end(), 0.0);
      std::fill(d2.begin(), d2.end(), 0.0);
      const auto window_sum = [&](const std::vector<double>& p, int y0, int x0) {
        const std::size_t tl = static_cast<std::size_t>(y0) * pw + x0;
        const std::size_t br = static_cast<std::size_t>(y0 + window) * pw + (x0 + window);
        const std::size_t tr = static_cast<std::size_t>(y0) * pw + (x0 + window);
        const std::size_t bl = static_cast<std::size_t>(y0 + window) * pw + x0;
        return p[br] - p[tr] - p[bl] + p[tl];
      };
      for (int y0 = 0; y0 < vh; ++y0)
        for (int x0 = 0; x0 < vw; ++x0) {
          const double mu_a = window_sum(pa, y0, x0) / nw;
          const double mu_b = window_sum(pb, y0, x0) / nw;
          const double var_a = std::max(0.0, window_sum(paa, y0, x0) / nw - mu_a * mu_a);
          const double var_b = std::max(0.0, window_sum(pbb, y0, x0) / nw - mu_b * mu_b);
          const double cov = window_sum(pab, y0, x0) / nw - mu_a * mu_b;
          const double a1 = 2 * mu_a * mu_b + c1, a2 = 2 * cov + c2;
          const double b1 = mu_a * mu_a + mu_b * mu_b + c1, b2 = var_a + var_b + c2;
          const double ssim = (a1 * a2) / (b1 * b2);
          ssim_sum += ssim;

          const double k0 =
              (2.0 / nw) * (mu_b * (a2 - a1) / (b1 * b2) - ssim * mu_a / b1 + ssim * mu_a / b2);
          const double k1 = 2.0 * a1 / (nw * b1 * b2);
          const double k2 = -2.0 * ssim / (nw * b2);
          const std::size_t tl = static_cast<std::size_t>(y0) * pw + x0;
          const std::size_t br = static_cast<std::size_t>(y0 + window) * pw + (x0 + window);
          const std::size_t tr = static_cast<std::size_t>(y0) * pw + (x0 + window);
          const std::size_t bl = static_cast<std::size_t>(y0 + window) * pw + x0;
          d0[tl] += k0, d0[br] += k0, d0[tr] -= k0, d0[bl] -= k0;
          d1[tl] += k1, d1[br] += k1, d1[tr] -= k1, d1[bl] -= k1;
          d2[tl] += k2, d2[br] += k2, d2[tr] -= k2, d2[bl] -= k2;
        }

      S* grad = &result.grad_a.at(s, ci, 0, 0);
      std::vector<double> acc0(pa.size()), acc1(pa.size()), acc2(pa.size());
      for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
          const std::size_t cur = static_cast<std::size_t>(y + 1) * pw + (x + 1);
          const std::size_t up = cur - pw, left = cur - 1, diag = up - 1;
          acc0[cur] = d0[static_cast<std::size_t>(y) * pw + x] + acc0[up] + acc0[left] - acc0[diag];
          acc1[cur] = d1[static_cast<std::size_t>(y) * pw + x] + acc1[up] + acc1[left] - acc1[diag];
          acc2[cur] = d2[static_cast<std::size_t>(y) * pw + x] + acc2[up] + acc2[left] - acc2[diag];
          const double va = xa[y * a.w + x], vb = xb[y * a.w + x];
          grad[y * a.w + x] = static_cast<S>(
              (acc0[cur] + acc1[cur] * vb + acc2[cur] * va) / static_cast<double>(total_windows));
        }
    }

  result.value = static_cast<S>(ssim_sum / static_cast<double>(total_windows));
  return result;
}

template <typename S>
struct MaskedMaeResult {
  S value;
  Tensor<S> grad_pred;
};

// (1/n) sum of |pred - target| over mask-activated pixels; subgradient 0 at
// exact ties and outside the mask.
template <typename S>
MaskedMaeResult<S> masked_mae(const Tensor<S>& pred, const Tensor<S>& target,
                              const std::vector<std::uint8_t>& mask) {
  if (!pred.same_shape(target)) throw std::invalid_argument("masked_mae: shape mismatch");
  if (mask.size() != pred.size()) throw std::invalid_argument("masked_mae: mask size mismatch");
  std::size_t n = 0;
  for (std::uint8_t m : mask) n += m ? 1 : 0;
  if (n == 0) throw std::invalid_argument("masked_mae: empty mask");

  MaskedMaeResult<S> result;
  result.grad_pred = Tensor<S>(pred.n, pred.c, pred.h, pred.w);
  double sum = 0;
  const S inv_n = static_cast<S>(1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const S d = pred.data[i] - target.data[i];
    sum += std::abs(static_cast<double>(d));
    result.grad_pred.data[i] = d > S(0) ? inv_n : (d < S(0) ? -inv_n : S(0));
  }
  result.value = static_cast<S>(sum / static_cast<double>(n));
  return result;
}

// Bias-corrected Adam over a fixed parameter list. Moment buffers are laid
// out per parameter in list order; the list must not change between steps.
template <typename S>
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<std::vector<S>> m, v;
};

template <typename S>
void adam_step(const std::vector<ParamRef<S>>& params, AdamState<S>& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params)
      if (p.trainable) {
        state.m.emplace_back(p.value->size(), S(0));
        state.v.emplace_back(p.value->size(), S(0));
      }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  std::size_t slot = 0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    auto& m = state.m.at(slot);
    auto& v = state.v.at(slot);
    ++slot;
    if (m.size() != p.value->size()) throw std::invalid_argument("adam: parameter list changed");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p.grad->data[i];
      m[i] = static_cast<S>(state.beta1 * m[i] + (1.0 - state.beta1) * g);
      v[i] = static_cast<S>(state.beta2 * v[i] + (1.0 - state.beta2) * g * g);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value->data[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

// Staircase exponential decay: base * rate^epoch with an integer exponent.
inline double staircase_lr(double base, double rate, int epoch) {
  return base * std::pow(rate, static_cast<double>(epoch));
}

}  // namespace sparsepet
