#include "ddf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ddf {

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::uint64_t fnv1a(const std::string& s, std::uint64_t seed) {
  return fnv1a(s.data(), s.size(), seed);
}

std::uint64_t tensor_hash(const Tensor& t) {
  std::uint64_t h = fnv1a(t.shape().data(), t.shape().size() * sizeof(std::size_t));
  return fnv1a(t.data(), t.numel() * sizeof(double), h);
}

}  // namespace ddf

namespace ddf::kernels {

namespace {
using idx = std::ptrdiff_t;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
}

template <class F>
Tensor unary(const Tensor& x, F f) {
  Tensor y(x.shape());
  const idx n = static_cast<idx>(x.numel());
#pragma omp parallel for if (n >= kParallelGrain)
  for (idx i = 0; i < n; ++i) y[i] = f(x[i]);
  return y;
}
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor y(a.shape());
  const idx n = static_cast<idx>(a.numel());
#pragma omp parallel for if (n >= kParallelGrain)
  for (idx i = 0; i < n; ++i) y[i] = a[i] + b[i];
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor y(a.shape());
  const idx n = static_cast<idx>(a.numel());
#pragma omp parallel for if (n >= kParallelGrain)
  for (idx i = 0; i < n; ++i) y[i] = a[i] - b[i];
  return y;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  Tensor y(a.shape());
  const idx n = static_cast<idx>(a.numel());
#pragma omp parallel for if (n >= kParallelGrain)
  for (idx i = 0; i < n; ++i) y[i] = a[i] * b[i];
  return y;
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v * s; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor tanh_(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor exp_(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); });
}

void add_inplace(Tensor& dst, const Tensor& src) {
  check_same_shape(dst, src, "add_inplace");
  const idx n = static_cast<idx>(dst.numel());
#pragma omp parallel for if (n >= kParallelGrain)
  for (idx i = 0; i < n; ++i) dst[i] += src[i];
}

void axpy_inplace(Tensor& dst, double a, const Tensor& x) {
  check_same_shape(dst, x, "axpy_inplace");
  const idx n = static_cast<idx>(dst.numel());
#pragma omp parallel for if (n >= kParallelGrain)
  for (idx i = 0; i < n; ++i) dst[i] += a * x[i];
}

void mul_add_inplace(Tensor& dst, const Tensor& a, const Tensor& b) {
  check_same_shape(dst, a, "mul_add_inplace");
  check_same_shape(dst, b, "mul_add_inplace");
  const idx n = static_cast<idx>(dst.numel());
#pragma omp parallel for if (n >= kParallelGrain)
  for (idx i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}

double sum(const Tensor& x) {
  // Serial on purpose: a fixed accumulation order keeps reductions
  // deterministic for any thread count.
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
  return s;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " " +
                                b.shape_str());
  const idx m = static_cast<idx>(a.dim(0)), k = static_cast<idx>(a.dim(1)),
            n = static_cast<idx>(b.dim(1));
  Tensor y({a.dim(0), b.dim(1)});
#pragma omp parallel for if (m * n >= kParallelGrain)
  for (idx i = 0; i < m; ++i)
    for (idx j = 0; j < n; ++j) {
      double s = 0.0;
      for (idx t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      y[i * n + j] = s;
    }
  return y;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("matmul_tn: incompatible shapes");
  const idx k = static_cast<idx>(a.dim(0)), m = static_cast<idx>(a.dim(1)),
            n = static_cast<idx>(b.dim(1));
  Tensor y({a.dim(1), b.dim(1)});
#pragma omp parallel for if (m * n >= kParallelGrain)
  for (idx i = 0; i < m; ++i)
    for (idx j = 0; j < n; ++j) {
      double s = 0.0;
      for (idx t = 0; t < k; ++t) s += a[t * m + i] * b[t * n + j];
      y[i * n + j] = s;
    }
  return y;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  const idx m = static_cast<idx>(a.dim(0)), k = static_cast<idx>(a.dim(1)),
            n = static_cast<idx>(b.dim(0));
  Tensor y({a.dim(0), b.dim(0)});
#pragma omp parallel for if (m * n >= kParallelGrain)
  for (idx i = 0; i < m; ++i)
    for (idx j = 0; j < n; ++j) {
      double s = 0.0;
      for (idx t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
      y[i * n + j] = s;
    }
  return y;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose: rank-2 expected");
  const idx m = static_cast<idx>(x.dim(0)), n = static_cast<idx>(x.dim(1));
  Tensor y({x.dim(1), x.dim(0)});
#pragma omp parallel for if (m * n >= kParallelGrain)
  for (idx i = 0; i < m; ++i)
    for (idx j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
  return y;
}

Tensor col_sum(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("col_sum: rank-2 expected");
  const idx m = static_cast<idx>(x.dim(0)), n = static_cast<idx>(x.dim(1));
  Tensor y({x.dim(1)});
#pragma omp parallel for if (n >= 64)
  for (idx j = 0; j < n; ++j) {
    double s = 0.0;
    for (idx i = 0; i < m; ++i) s += x[i * n + j];
    y[j] = s;
  }
  return y;
}

namespace {
inline std::size_t conv_out(std::size_t in, int k, int stride, int pad) {
  return (in + 2 * static_cast<std::size_t>(pad) - static_cast<std::size_t>(k)) /
             static_cast<std::size_t>(stride) +
         1;
}
}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1))
    throw std::invalid_argument("conv2d: incompatible shapes " + x.shape_str() + " " +
                                w.shape_str());
  const idx B = static_cast<idx>(x.dim(0)), Cin = static_cast<idx>(x.dim(1)),
            H = static_cast<idx>(x.dim(2)), W = static_cast<idx>(x.dim(3));
  const idx Cout = static_cast<idx>(w.dim(0)), kh = static_cast<idx>(w.dim(2)),
            kw = static_cast<idx>(w.dim(3));
  const idx Ho = static_cast<idx>(conv_out(x.dim(2), static_cast<int>(kh), stride, pad));
  const idx Wo = static_cast<idx>(conv_out(x.dim(3), static_cast<int>(kw), stride, pad));
  const bool has_bias = bias.numel() > 0;
  Tensor y({x.dim(0), w.dim(0), static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
#pragma omp parallel for collapse(2) if (B * Cout * Ho * Wo >= kParallelGrain)
  for (idx b = 0; b < B; ++b)
    for (idx co = 0; co < Cout; ++co)
      for (idx oh = 0; oh < Ho; ++oh)
        for (idx ow = 0; ow < Wo; ++ow) {
          double s = has_bias ? bias[static_cast<std::size_t>(co)] : 0.0;
          for (idx ci = 0; ci < Cin; ++ci)
            for (idx i = 0; i < kh; ++i) {
              const idx ih = oh * stride + i - pad;
              if (ih < 0 || ih >= H) continue;
              for (idx j = 0; j < kw; ++j) {
                const idx iw = ow * stride + j - pad;
                if (iw < 0 || iw >= W) continue;
                s += x[((b * Cin + ci) * H + ih) * W + iw] *
                     w[((co * Cin + ci) * kh + i) * kw + j];
              }
            }
          y[((b * Cout + co) * Ho + oh) * Wo + ow] = s;
        }
  return y;
}

Tensor conv2d_grad_input(const Tensor& dy, const Tensor& w, std::size_t H, std::size_t W,
                         int stride, int pad) {
  const idx B = static_cast<idx>(dy.dim(0)), Cout = static_cast<idx>(dy.dim(1)),
            Ho = static_cast<idx>(dy.dim(2)), Wo = static_cast<idx>(dy.dim(3));
  const idx Cin = static_cast<idx>(w.dim(1)), kh = static_cast<idx>(w.dim(2)),
            kw = static_cast<idx>(w.dim(3));
  Tensor dx({dy.dim(0), w.dim(1), H, W});
  const idx Hi = static_cast<idx>(H), Wi = static_cast<idx>(W);
  // Gather form: each input element sums the outputs it touched, so the loop
  // is race-free and deterministic.
#pragma omp parallel for collapse(2) if (B * Cin * Hi * Wi >= kParallelGrain)
  for (idx b = 0; b < B; ++b)
    for (idx ci = 0; ci < Cin; ++ci)
      for (idx ih = 0; ih < Hi; ++ih)
        for (idx iw = 0; iw < Wi; ++iw) {
          double s = 0.0;
          for (idx co = 0; co < Cout; ++co)
            for (idx i = 0; i < kh; ++i) {
              const idx num_h = ih + pad - i;
              if (num_h < 0 || num_h % stride != 0) continue;
              const idx oh = num_h / stride;
              if (oh >= Ho) continue;
              for (idx j = 0; j < kw; ++j) {
                const idx num_w = iw + pad - j;
                if (num_w < 0 || num_w % stride != 0) continue;
                const idx ow = num_w / stride;
                if (ow >= Wo) continue;
                s += dy[((b * Cout + co) * Ho + oh) * Wo + ow] *
                     w[((co * Cin + ci) * kh + i) * kw + j];
              }
            }
          dx[((b * Cin + ci) * Hi + ih) * Wi + iw] = s;
        }
  return dx;
}

Tensor conv2d_grad_weight(const Tensor& dy, const Tensor& x, std::size_t kh, std::size_t kw,
                          int stride, int pad) {
  const idx B = static_cast<idx>(dy.dim(0)), Cout = static_cast<idx>(dy.dim(1)),
            Ho = static_cast<idx>(dy.dim(2)), Wo = static_cast<idx>(dy.dim(3));
  const idx Cin = static_cast<idx>(x.dim(1)), H = static_cast<idx>(x.dim(2)),
            W = static_cast<idx>(x.dim(3));
  const idx khi = static_cast<idx>(kh), kwi = static_cast<idx>(kw);
  Tensor dw({dy.dim(1), x.dim(1), kh, kw});
#pragma omp parallel for collapse(2) if (Cout * Cin * khi * kwi >= 64)
  for (idx co = 0; co < Cout; ++co)
    for (idx ci = 0; ci < Cin; ++ci)
      for (idx i = 0; i < khi; ++i)
        for (idx j = 0; j < kwi; ++j) {
          double s = 0.0;
          for (idx b = 0; b < B; ++b)
            for (idx oh = 0; oh < Ho; ++oh) {
              const idx ih = oh * stride + i - pad;
              if (ih < 0 || ih >= H) continue;
              for (idx ow = 0; ow < Wo; ++ow) {
                const idx iw = ow * stride + j - pad;
                if (iw < 0 || iw >= W) continue;
                s += dy[((b * Cout + co) * Ho + oh) * Wo + ow] *
                     x[((b * Cin + ci) * H + ih) * W + iw];
              }
            }
          dw[((co * Cin + ci) * khi + i) * kwi + j] = s;
        }
  return dw;
}

Tensor conv2d_grad_bias(const Tensor& dy) {
  const idx B = static_cast<idx>(dy.dim(0)), C = static_cast<idx>(dy.dim(1)),
            Ho = static_cast<idx>(dy.dim(2)), Wo = static_cast<idx>(dy.dim(3));
  Tensor db({dy.dim(1)});
#pragma omp parallel for if (C >= 64)
  for (idx c = 0; c < C; ++c) {
    double s = 0.0;
    for (idx b = 0; b < B; ++b)
      for (idx p = 0; p < Ho * Wo; ++p) s += dy[(b * C + c) * Ho * Wo + p];
    db[static_cast<std::size_t>(c)] = s;
  }
  return db;
}

Tensor gap(const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("gap: rank-4 expected");
  const idx BC = static_cast<idx>(x.dim(0) * x.dim(1));
  const idx HW = static_cast<idx>(x.dim(2) * x.dim(3));
  Tensor y({x.dim(0), x.dim(1)});
#pragma omp parallel for if (BC >= 16)
  for (idx i = 0; i < BC; ++i) {
    double s = 0.0;
    for (idx p = 0; p < HW; ++p) s += x[i * HW + p];
    y[static_cast<std::size_t>(i)] = s / static_cast<double>(HW);
  }
  return y;
}

Tensor gap_grad(const Tensor& dy, std::size_t H, std::size_t W) {
  const idx BC = static_cast<idx>(dy.numel());
  const idx HW = static_cast<idx>(H * W);
  Tensor dx({dy.dim(0), dy.dim(1), H, W});
  const double inv = 1.0 / static_cast<double>(HW);
#pragma omp parallel for if (BC * HW >= kParallelGrain)
  for (idx i = 0; i < BC; ++i)
    for (idx p = 0; p < HW; ++p) dx[i * HW + p] = dy[static_cast<std::size_t>(i)] * inv;
  return dx;
}

Tensor gmp(const Tensor& x, std::vector<std::size_t>* argmax) {
  if (x.rank() != 4) throw std::invalid_argument("gmp: rank-4 expected");
  const idx BC = static_cast<idx>(x.dim(0) * x.dim(1));
  const idx HW = static_cast<idx>(x.dim(2) * x.dim(3));
  Tensor y({x.dim(0), x.dim(1)});
  if (argmax) argmax->assign(static_cast<std::size_t>(BC), 0);
#pragma omp parallel for if (BC >= 16)
  for (idx i = 0; i < BC; ++i) {
    double best = x[i * HW];
    idx best_p = 0;
    for (idx p = 1; p < HW; ++p) {
      if (x[i * HW + p] > best) {  // strict >: first maximum wins
        best = x[i * HW + p];
        best_p = p;
      }
    }
    y[static_cast<std::size_t>(i)] = best;
    if (argmax) (*argmax)[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best_p);
  }
  return y;
}

Tensor gmp_grad(const Tensor& dy, const std::vector<std::size_t>& argmax, std::size_t H,
                std::size_t W) {
  const idx BC = static_cast<idx>(dy.numel());
  Tensor dx({dy.dim(0), dy.dim(1), H, W});
  const std::size_t HW = H * W;
#pragma omp parallel for if (BC >= 64)
  for (idx i = 0; i < BC; ++i)
    dx[static_cast<std::size_t>(i) * HW + argmax[static_cast<std::size_t>(i)]] =
        dy[static_cast<std::size_t>(i)];
  return dx;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 expected");
  const idx m = static_cast<idx>(x.dim(0)), n = static_cast<idx>(x.dim(1));
  Tensor y(x.shape());
#pragma omp parallel for if (m >= 8)
  for (idx i = 0; i < m; ++i) {
    double mx = x[i * n];
    for (idx j = 1; j < n; ++j) mx = std::max(mx, x[i * n + j]);
    double z = 0.0;
    for (idx j = 0; j < n; ++j) {
      y[i * n + j] = std::exp(x[i * n + j] - mx);
      z += y[i * n + j];
    }
    for (idx j = 0; j < n; ++j) y[i * n + j] /= z;
  }
  return y;
}

Tensor softmax_axis0(const Tensor& x, std::size_t K) {
  const idx inner = static_cast<idx>(x.numel() / K);
  const idx k = static_cast<idx>(K);
  Tensor y(x.shape());
#pragma omp parallel for if (inner >= 256)
  for (idx j = 0; j < inner; ++j) {
    double mx = x[static_cast<std::size_t>(j)];
    for (idx i = 1; i < k; ++i) mx = std::max(mx, x[i * inner + j]);
    double z = 0.0;
    for (idx i = 0; i < k; ++i) {
      y[i * inner + j] = std::exp(x[i * inner + j] - mx);
      z += y[i * inner + j];
    }
    for (idx i = 0; i < k; ++i) y[i * inner + j] /= z;
  }
  return y;
}

Tensor bilinear_resize(const Tensor& x, std::size_t Ho, std::size_t Wo) {
  if (x.rank() != 3) throw std::invalid_argument("bilinear_resize: rank-3 {C,H,W} expected");
  const idx C = static_cast<idx>(x.dim(0)), H = static_cast<idx>(x.dim(1)),
            W = static_cast<idx>(x.dim(2));
  const idx Hoi = static_cast<idx>(Ho), Woi = static_cast<idx>(Wo);
  Tensor y({x.dim(0), Ho, Wo});
  const double sh = static_cast<double>(H) / static_cast<double>(Ho);
  const double sw = static_cast<double>(W) / static_cast<double>(Wo);
#pragma omp parallel for if (C * Hoi * Woi >= kParallelGrain)
  for (idx c = 0; c < C; ++c)
    for (idx oh = 0; oh < Hoi; ++oh)
      for (idx ow = 0; ow < Woi; ++ow) {
        const double fy = (static_cast<double>(oh) + 0.5) * sh - 0.5;
        const double fx = (static_cast<double>(ow) + 0.5) * sw - 0.5;
        const idx y0 = static_cast<idx>(std::floor(fy)), x0 = static_cast<idx>(std::floor(fx));
        const double dy = fy - static_cast<double>(y0), dx = fx - static_cast<double>(x0);
        auto sample = [&](idx yy, idx xx) {
          yy = std::clamp<idx>(yy, 0, H - 1);
          xx = std::clamp<idx>(xx, 0, W - 1);
          return x[(c * H + yy) * W + xx];
        };
        y[(c * Hoi + oh) * Woi + ow] = sample(y0, x0) * (1 - dy) * (1 - dx) +
                                       sample(y0, x0 + 1) * (1 - dy) * dx +
                                       sample(y0 + 1, x0) * dy * (1 - dx) +
                                       sample(y0 + 1, x0 + 1) * dy * dx;
      }
  return y;
}

// ---- serial reference implementations ----

namespace ref {

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      y[i * n + j] = s;
    }
  return y;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t Ho = conv_out(H, static_cast<int>(kh), stride, pad);
  const std::size_t Wo = conv_out(W, static_cast<int>(kw), stride, pad);
  const bool has_bias = bias.numel() > 0;
  Tensor y({B, Cout, Ho, Wo});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow) {
          double s = has_bias ? bias[co] : 0.0;
          for (std::size_t ci = 0; ci < Cin; ++ci)
            for (std::size_t i = 0; i < kh; ++i) {
              const std::ptrdiff_t ih =
                  static_cast<std::ptrdiff_t>(oh * stride + i) - pad;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t j = 0; j < kw; ++j) {
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(ow * stride + j) - pad;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                s += x[((b * Cin + ci) * H + static_cast<std::size_t>(ih)) * W +
                       static_cast<std::size_t>(iw)] *
                     w[((co * Cin + ci) * kh + i) * kw + j];
              }
            }
          y[((b * Cout + co) * Ho + oh) * Wo + ow] = s;
        }
  return y;
}

Tensor conv2d_grad_input(const Tensor& dy, const Tensor& w, std::size_t H, std::size_t W,
                         int stride, int pad) {
  using sidx = std::ptrdiff_t;
  const sidx B = static_cast<sidx>(dy.dim(0)), Cout = static_cast<sidx>(dy.dim(1)),
             Ho = static_cast<sidx>(dy.dim(2)), Wo = static_cast<sidx>(dy.dim(3));
  const sidx Cin = static_cast<sidx>(w.dim(1)), kh = static_cast<sidx>(w.dim(2)),
             kw = static_cast<sidx>(w.dim(3));
  Tensor dx({dy.dim(0), w.dim(1), H, W});
  const sidx Hi = static_cast<sidx>(H), Wi = static_cast<sidx>(W);
  for (sidx b = 0; b < B; ++b)
    for (sidx ci = 0; ci < Cin; ++ci)
      for (sidx ih = 0; ih < Hi; ++ih)
        for (sidx iw = 0; iw < Wi; ++iw) {
          double s = 0.0;
          for (sidx co = 0; co < Cout; ++co)
            for (sidx i = 0; i < kh; ++i) {
              const sidx num_h = ih + pad - i;
              if (num_h < 0 || num_h % stride != 0) continue;
              const sidx oh = num_h / stride;
              if (oh >= Ho) continue;
              for (sidx j = 0; j < kw; ++j) {
                const sidx num_w = iw + pad - j;
                if (num_w < 0 || num_w % stride != 0) continue;
                const sidx ow = num_w / stride;
                if (ow >= Wo) continue;
                s += dy[((b * Cout + co) * Ho + oh) * Wo + ow] *
                     w[((co * Cin + ci) * kh + i) * kw + j];
              }
            }
          dx[((b * Cin + ci) * Hi + ih) * Wi + iw] = s;
        }
  return dx;
}

Tensor conv2d_grad_weight(const Tensor& dy, const Tensor& x, std::size_t kh, std::size_t kw,
                          int stride, int pad) {
  using sidx = std::ptrdiff_t;
  const sidx B = static_cast<sidx>(dy.dim(0)), Cout = static_cast<sidx>(dy.dim(1)),
             Ho = static_cast<sidx>(dy.dim(2)), Wo = static_cast<sidx>(dy.dim(3));
  const sidx Cin = static_cast<sidx>(x.dim(1)), H = static_cast<sidx>(x.dim(2)),
             W = static_cast<sidx>(x.dim(3));
  Tensor dw({dy.dim(1), x.dim(1), kh, kw});
  const sidx khi = static_cast<sidx>(kh), kwi = static_cast<sidx>(kw);
  for (sidx co = 0; co < Cout; ++co)
    for (sidx ci = 0; ci < Cin; ++ci)
      for (sidx i = 0; i < khi; ++i)
        for (sidx j = 0; j < kwi; ++j) {
          double s = 0.0;
          for (sidx b = 0; b < B; ++b)
            for (sidx oh = 0; oh < Ho; ++oh) {
              const sidx ih = oh * stride + i - pad;
              if (ih < 0 || ih >= H) continue;
              for (sidx ow = 0; ow < Wo; ++ow) {
                const sidx iw = ow * stride + j - pad;
                if (iw < 0 || iw >= W) continue;
                s += dy[((b * Cout + co) * Ho + oh) * Wo + ow] *
                     x[((b * Cin + ci) * H + ih) * W + iw];
              }
            }
          dw[((co * Cin + ci) * khi + i) * kwi + j] = s;
        }
  return dw;
}

Tensor gap(const Tensor& x) {
  const std::size_t BC = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor y({x.dim(0), x.dim(1)});
  for (std::size_t i = 0; i < BC; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < HW; ++p) s += x[i * HW + p];
    y[i] = s / static_cast<double>(HW);
  }
  return y;
}

Tensor gmp(const Tensor& x, std::vector<std::size_t>* argmax) {
  const std::size_t BC = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor y({x.dim(0), x.dim(1)});
  if (argmax) argmax->assign(BC, 0);
  for (std::size_t i = 0; i < BC; ++i) {
    double best = x[i * HW];
    std::size_t best_p = 0;
    for (std::size_t p = 1; p < HW; ++p)
      if (x[i * HW + p] > best) {
        best = x[i * HW + p];
        best_p = p;
      }
    y[i] = best;
    if (argmax) (*argmax)[i] = best_p;
  }
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    double mx = x[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[i * n + j] = std::exp(x[i * n + j] - mx);
      z += y[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= z;
  }
  return y;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] * b[i];
  return y;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return y;
}

}  // namespace ref

}  // namespace ddf::kernels
