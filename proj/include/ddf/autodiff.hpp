#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ddf/tensor.hpp"

namespace ddf::ad {

// Reverse-mode autodiff on a dynamically built tape. Every operation stores
// its analytic vector-Jacobian product as a closure; backward() replays them
// in reverse topological order. Forward graphs are pure given (inputs,
// parameters), so graph construction is reentrant as long as nobody mutates
// parameter values concurrently.

class Node;
using NodePtr = std::shared_ptr<Node>;

class Node {
public:
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;

  bool grad_ready() const { return grad.numel() == value.numel() && value.numel() > 0; }
  Tensor& ensure_grad() {
    if (!grad_ready()) grad = Tensor::zeros(value.shape());
    return grad;
  }
};

class Var {
public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  static Var leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad_ready(); }
  void zero_grad() {
    if (node_ && node_->grad_ready()) node_->grad.fill(0.0);
  }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  std::size_t numel() const { return node_->value.numel(); }

  const NodePtr& node() const { return node_; }

private:
  NodePtr node_;
};

/// Runs the tape backward from a scalar root (numel()==1), seeding d(root)=1.
void backward(const Var& root);

// ---- graph construction ----
Var constant(Tensor v);
Var param(Tensor v);

// elementwise (same shape)
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_n(const std::vector<Var>& xs);
Var scale(const Var& a, double s);
Var sigmoid(const Var& x);
Var tanh_(const Var& x);
Var relu(const Var& x);
Var exp_(const Var& x);
Var clamp_max(const Var& x, double hi);

// shape plumbing
Var reshape(const Var& x, std::vector<std::size_t> shape);
Var transpose(const Var& x);                                    // {m,n}->{n,m}
Var concat_cols(const Var& a, const Var& b);                    // {N,Ka},{N,Kb}->{N,Ka+Kb}
Var slice_cols(const Var& x, std::size_t c0, std::size_t len);  // {N,M}->{N,len}
Var concat_rows(const std::vector<Var>& xs);                    // {Ni,D}->{sum Ni,D}
Var concat_channels(const Var& a, const Var& b);                // {B,Ca,H,W},{B,Cb,H,W}
Var stack0(const std::vector<Var>& xs);                         // K x {S} -> {K,S...}
Var index0(const Var& x, std::size_t k);                        // {K,S...} -> {S...}
Var tokens_from_map(const Var& x);                              // {1,C,h,w} -> {h*w,C}

// broadcasting
Var scale_channels(const Var& x, const Var& s);      // x {B,C,H,W} * s {B,C}
Var scale_channels_vec(const Var& x, const Var& v);  // x {B,C,H,W} * v {C}
Var scale_spatial(const Var& x, const Var& m);       // x {B,C,H,W} * m {B,1,H,W}
Var scale_per_sample(const Var& x, const Var& g);    // x {B,...} * g {B} or {B,1}
Var add_channel_vec(const Var& x, const Var& v);     // x {B,C,H,W} + v {C}

// linear algebra / nn primitives
Var matmul(const Var& a, const Var& b);
Var linear(const Var& x, const Var& w, const Var& b);  // {N,K}x{K,M}+{M}
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
Var gap(const Var& x);
Var gmp(const Var& x);
Var softmax_rows(const Var& x);
Var softmax_axis0(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// reductions / losses
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var dot_const(const Var& x, const Tensor& r);
Var mse_loss(const Var& pred, const Tensor& target);
Var l1_loss_masked(const Var& pred, const Tensor& target, const Tensor& mask);

}  // namespace ddf::ad
