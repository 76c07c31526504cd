#pragma once

#include <cstddef>
#include <vector>

#include "ddf/tensor.hpp"

namespace ddf::kernels {

// OpenMP-parallel tensor kernels. Every loop is parallel over independent
// output elements with a fixed per-element operation order, so results are
// bit-identical for any thread count. The serial reference implementations
// live in kernels::ref and are compared against these in the test suite and
// in the kernel benchmark.

// Minimum element count before a loop goes parallel.
inline constexpr std::ptrdiff_t kParallelGrain = 2048;

int max_threads();
void set_num_threads(int n);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sigmoid(const Tensor& x);
Tensor tanh_(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp_(const Tensor& x);
void add_inplace(Tensor& dst, const Tensor& src);
void axpy_inplace(Tensor& dst, double a, const Tensor& x);   // dst += a*x
void mul_add_inplace(Tensor& dst, const Tensor& a, const Tensor& b);  // dst += a.*b
double sum(const Tensor& x);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);     // {m,k}x{k,n} -> {m,n}
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T b: {k,m},{k,n} -> {m,n}
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a b^T: {m,k},{n,k} -> {m,n}
Tensor transpose(const Tensor& x);                   // {m,n} -> {n,m}
Tensor col_sum(const Tensor& x);                     // {m,n} -> {n}

// ---- convolution ----
// x {B,Cin,H,W}, w {Cout,Cin,kh,kw}, bias {Cout} (may be empty).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
Tensor conv2d_grad_input(const Tensor& dy, const Tensor& w, std::size_t H, std::size_t W,
                         int stride, int pad);
Tensor conv2d_grad_weight(const Tensor& dy, const Tensor& x, std::size_t kh, std::size_t kw,
                          int stride, int pad);
Tensor conv2d_grad_bias(const Tensor& dy);

// ---- pooling ----
Tensor gap(const Tensor& x);                                          // {B,C,H,W} -> {B,C}
Tensor gap_grad(const Tensor& dy, std::size_t H, std::size_t W);
// Max over spatial positions; argmax records the first maximal position in
// row-major order per (b,c), which fixes the subgradient at ties.
Tensor gmp(const Tensor& x, std::vector<std::size_t>* argmax);
Tensor gmp_grad(const Tensor& dy, const std::vector<std::size_t>& argmax, std::size_t H,
                std::size_t W);

// ---- softmax ----
Tensor softmax_rows(const Tensor& x);  // {m,n}, softmax over each row
// x {K, inner}: softmax across axis 0 for every inner index.
Tensor softmax_axis0(const Tensor& x, std::size_t K);

// ---- image resampling (forward-only data path) ----
Tensor bilinear_resize(const Tensor& x, std::size_t Ho, std::size_t Wo);  // {C,H,W}

namespace ref {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
Tensor conv2d_grad_input(const Tensor& dy, const Tensor& w, std::size_t H, std::size_t W,
                         int stride, int pad);
Tensor conv2d_grad_weight(const Tensor& dy, const Tensor& x, std::size_t kh, std::size_t kw,
                          int stride, int pad);
Tensor gap(const Tensor& x);
Tensor gmp(const Tensor& x, std::vector<std::size_t>* argmax);
Tensor softmax_rows(const Tensor& x);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& x);
}  // namespace ref

}  // namespace ddf::kernels
