#include "ddf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ddf/kernels.hpp"

namespace ddf::ad {

namespace {

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  n->parents.reserve(parents.size());
  for (auto& p : parents) {
    rg = rg || p.node()->requires_grad;
    n->parents.push_back(p.node());
  }
  n->requires_grad = rg;
  if (rg) n->backprop = std::move(fn);
  return Var(std::move(n));
}

void accum(const NodePtr& p, const Tensor& g) {
  if (!p->requires_grad) return;
  kernels::add_inplace(p->ensure_grad(), g);
}

void check_same(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                                " vs " + b.value().shape_str());
}

}  // namespace

void backward(const Var& root) {
  if (root.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  // Iterative DFS for topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad_ready()) n->backprop(*n);
  }
}

Var constant(Tensor v) { return Var::leaf(std::move(v), false); }
Var param(Tensor v) { return Var::leaf(std::move(v), true); }

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  return make_op(kernels::add(a.value(), b.value()), {a, b}, [](Node& n) {
    accum(n.parents[0], n.grad);
    accum(n.parents[1], n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  return make_op(kernels::sub(a.value(), b.value()), {a, b}, [](Node& n) {
    accum(n.parents[0], n.grad);
    if (n.parents[1]->requires_grad)
      kernels::axpy_inplace(n.parents[1]->ensure_grad(), -1.0, n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  return make_op(kernels::hadamard(a.value(), b.value()), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      kernels::mul_add_inplace(n.parents[0]->ensure_grad(), n.grad, n.parents[1]->value);
    if (n.parents[1]->requires_grad)
      kernels::mul_add_inplace(n.parents[1]->ensure_grad(), n.grad, n.parents[0]->value);
  });
}

Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: empty input");
  Tensor v = xs[0].value();
  for (std::size_t i = 1; i < xs.size(); ++i) kernels::add_inplace(v, xs[i].value());
  return make_op(std::move(v), xs, [](Node& n) {
    for (auto& p : n.parents) accum(p, n.grad);
  });
}

Var scale(const Var& a, double s) {
  return make_op(kernels::scale(a.value(), s), {a}, [s](Node& n) {
    if (n.parents[0]->requires_grad)
      kernels::axpy_inplace(n.parents[0]->ensure_grad(), s, n.grad);
  });
}

Var sigmoid(const Var& x) {
  return make_op(kernels::sigmoid(x.value()), {x}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.numel(); ++i)
      dx[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

Var tanh_(const Var& x) {
  return make_op(kernels::tanh_(x.value()), {x}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.numel(); ++i)
      dx[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

Var relu(const Var& x) {
  return make_op(kernels::relu(x.value()), {x}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    const Tensor& in = n.parents[0]->value;
    for (std::size_t i = 0; i < dx.numel(); ++i)
      if (in[i] > 0.0) dx[i] += n.grad[i];
  });
}

Var exp_(const Var& x) {
  return make_op(kernels::exp_(x.value()), {x}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    kernels::mul_add_inplace(n.parents[0]->ensure_grad(), n.grad, n.value);
  });
}

Var clamp_max(const Var& x, double hi) {
  Tensor y(x.value().shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::min(x.value()[i], hi);
  return make_op(std::move(y), {x}, [hi](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    const Tensor& in = n.parents[0]->value;
    for (std::size_t i = 0; i < dx.numel(); ++i)
      if (in[i] < hi) dx[i] += n.grad[i];
  });
}

Var reshape(const Var& x, std::vector<std::size_t> shape) {
  Tensor v(std::move(shape), x.value().vec());
  return make_op(std::move(v), {x}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += n.grad[i];
  });
}

Var transpose(const Var& x) {
  return make_op(kernels::transpose(x.value()), {x}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    kernels::add_inplace(n.parents[0]->ensure_grad(), kernels::transpose(n.grad));
  });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("concat_cols: incompatible shapes");
  const std::size_t N = a.dim(0), Ka = a.dim(1), Kb = b.dim(1);
  Tensor v({N, Ka + Kb});
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < Ka; ++j) v[i * (Ka + Kb) + j] = a.value()[i * Ka + j];
    for (std::size_t j = 0; j < Kb; ++j) v[i * (Ka + Kb) + Ka + j] = b.value()[i * Kb + j];
  }
  return make_op(std::move(v), {a, b}, [N, Ka, Kb](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor& da = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < Ka; ++j) da[i * Ka + j] += n.grad[i * (Ka + Kb) + j];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& db = n.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < Kb; ++j) db[i * Kb + j] += n.grad[i * (Ka + Kb) + Ka + j];
    }
  });
}

Var slice_cols(const Var& x, std::size_t c0, std::size_t len) {
  if (x.value().rank() != 2 || c0 + len > x.dim(1))
    throw std::invalid_argument("slice_cols: out of range");
  const std::size_t N = x.dim(0), M = x.dim(1);
  Tensor v({N, len});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < len; ++j) v[i * len + j] = x.value()[i * M + c0 + j];
  return make_op(std::move(v), {x}, [N, M, c0, len](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < len; ++j) dx[i * M + c0 + j] += n.grad[i * len + j];
  });
}

Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input");
  const std::size_t D = xs[0].dim(1);
  std::size_t total = 0;
  for (const auto& x : xs) {
    if (x.value().rank() != 2 || x.dim(1) != D)
      throw std::invalid_argument("concat_rows: incompatible shapes");
    total += x.dim(0);
  }
  Tensor v({total, D});
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& x : xs) {
    offsets.push_back(off);
    std::copy(x.value().vec().begin(), x.value().vec().end(), v.vec().begin() + off * D);
    off += x.dim(0);
  }
  return make_op(std::move(v), xs, [offsets, D](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      if (!n.parents[k]->requires_grad) continue;
      Tensor& dx = n.parents[k]->ensure_grad();
      const std::size_t base = offsets[k] * D;
      for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += n.grad[base + i];
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 4 || bv.rank() != 4 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
      av.dim(3) != bv.dim(3))
    throw std::invalid_argument("concat_channels: incompatible shapes");
  const std::size_t B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), HW = av.dim(2) * av.dim(3);
  Tensor v({B, Ca + Cb, av.dim(2), av.dim(3)});
  for (std::size_t s = 0; s < B; ++s) {
    std::copy(av.vec().begin() + s * Ca * HW, av.vec().begin() + (s + 1) * Ca * HW,
              v.vec().begin() + s * (Ca + Cb) * HW);
    std::copy(bv.vec().begin() + s * Cb * HW, bv.vec().begin() + (s + 1) * Cb * HW,
              v.vec().begin() + (s * (Ca + Cb) + Ca) * HW);
  }
  return make_op(std::move(v), {a, b}, [B, Ca, Cb, HW](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor& da = n.parents[0]->ensure_grad();
      for (std::size_t s = 0; s < B; ++s)
        for (std::size_t i = 0; i < Ca * HW; ++i)
          da[s * Ca * HW + i] += n.grad[s * (Ca + Cb) * HW + i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& db = n.parents[1]->ensure_grad();
      for (std::size_t s = 0; s < B; ++s)
        for (std::size_t i = 0; i < Cb * HW; ++i)
          db[s * Cb * HW + i] += n.grad[(s * (Ca + Cb) + Ca) * HW + i];
    }
  });
}

Var stack0(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("stack0: empty input");
  const std::size_t inner = xs[0].numel();
  std::vector<std::size_t> shape{xs.size()};
  for (auto d : xs[0].shape()) shape.push_back(d);
  Tensor v(std::move(shape));
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (xs[k].numel() != inner) throw std::invalid_argument("stack0: incompatible shapes");
    std::copy(xs[k].value().vec().begin(), xs[k].value().vec().end(),
              v.vec().begin() + k * inner);
  }
  return make_op(std::move(v), xs, [inner](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      if (!n.parents[k]->requires_grad) continue;
      Tensor& dx = n.parents[k]->ensure_grad();
      for (std::size_t i = 0; i < inner; ++i) dx[i] += n.grad[k * inner + i];
    }
  });
}

Var index0(const Var& x, std::size_t k) {
  const std::size_t K = x.dim(0);
  if (k >= K) throw std::invalid_argument("index0: out of range");
  const std::size_t inner = x.numel() / K;
  std::vector<std::size_t> shape(x.shape().begin() + 1, x.shape().end());
  Tensor v(std::move(shape));
  std::copy(x.value().vec().begin() + k * inner, x.value().vec().begin() + (k + 1) * inner,
            v.vec().begin());
  return make_op(std::move(v), {x}, [k, inner](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < inner; ++i) dx[k * inner + i] += n.grad[i];
  });
}

Var tokens_from_map(const Var& x) {
  const Tensor& v = x.value();
  if (v.rank() != 4 || v.dim(0) != 1)
    throw std::invalid_argument("tokens_from_map: {1,C,h,w} expected");
  const std::size_t C = v.dim(1), HW = v.dim(2) * v.dim(3);
  Tensor t({HW, C});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < HW; ++p) t[p * C + c] = v[c * HW + p];
  return make_op(std::move(t), {x}, [C, HW](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p) dx[c * HW + p] += n.grad[p * C + c];
  });
}

Var scale_channels(const Var& x, const Var& s) {
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  if (xv.rank() != 4 || sv.rank() != 2 || xv.dim(0) != sv.dim(0) || xv.dim(1) != sv.dim(1))
    throw std::invalid_argument("scale_channels: incompatible shapes");
  const std::size_t BC = xv.dim(0) * xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  Tensor v(xv.shape());
  for (std::size_t i = 0; i < BC; ++i)
    for (std::size_t p = 0; p < HW; ++p) v[i * HW + p] = xv[i * HW + p] * sv[i];
  return make_op(std::move(v), {x, s}, [BC, HW](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    const Tensor& sv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& dx = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < BC; ++i)
        for (std::size_t p = 0; p < HW; ++p) dx[i * HW + p] += n.grad[i * HW + p] * sv[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& ds = n.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < BC; ++i) {
        double g = 0.0;
        for (std::size_t p = 0; p < HW; ++p) g += n.grad[i * HW + p] * xv[i * HW + p];
        ds[i] += g;
      }
    }
  });
}

Var scale_channels_vec(const Var& x, const Var& v) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  if (xv.rank() != 4 || vv.numel() != xv.dim(1))
    throw std::invalid_argument("scale_channels_vec: incompatible shapes");
  const std::size_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p)
        out[(b * C + c) * HW + p] = xv[(b * C + c) * HW + p] * vv[c];
  return make_op(std::move(out), {x, v}, [B, C, HW](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    const Tensor& vv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& dx = n.parents[0]->ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t p = 0; p < HW; ++p)
            dx[(b * C + c) * HW + p] += n.grad[(b * C + c) * HW + p] * vv[c];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& dv = n.parents[1]->ensure_grad();
      for (std::size_t c = 0; c < C; ++c) {
        double g = 0.0;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t p = 0; p < HW; ++p)
            g += n.grad[(b * C + c) * HW + p] * xv[(b * C + c) * HW + p];
        dv[c] += g;
      }
    }
  });
}

Var scale_spatial(const Var& x, const Var& m) {
  const Tensor& xv = x.value();
  const Tensor& mv = m.value();
  if (xv.rank() != 4 || mv.rank() != 4 || mv.dim(1) != 1 || xv.dim(0) != mv.dim(0) ||
      xv.dim(2) != mv.dim(2) || xv.dim(3) != mv.dim(3))
    throw std::invalid_argument("scale_spatial: incompatible shapes");
  const std::size_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  Tensor v(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p)
        v[(b * C + c) * HW + p] = xv[(b * C + c) * HW + p] * mv[b * HW + p];
  return make_op(std::move(v), {x, m}, [B, C, HW](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    const Tensor& mv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& dx = n.parents[0]->ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t p = 0; p < HW; ++p)
            dx[(b * C + c) * HW + p] += n.grad[(b * C + c) * HW + p] * mv[b * HW + p];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& dm = n.parents[1]->ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < HW; ++p) {
          double g = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            g += n.grad[(b * C + c) * HW + p] * xv[(b * C + c) * HW + p];
          dm[b * HW + p] += g;
        }
    }
  });
}

Var scale_per_sample(const Var& x, const Var& g) {
  const Tensor& xv = x.value();
  const Tensor& gv = g.value();
  const std::size_t B = xv.dim(0);
  if (gv.numel() != B) throw std::invalid_argument("scale_per_sample: gate size != batch");
  const std::size_t inner = xv.numel() / B;
  Tensor v(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < inner; ++i) v[b * inner + i] = xv[b * inner + i] * gv[b];
  return make_op(std::move(v), {x, g}, [B, inner](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    const Tensor& gv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& dx = n.parents[0]->ensure_grad();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i) dx[b * inner + i] += n.grad[b * inner + i] * gv[b];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& dg = n.parents[1]->ensure_grad();
      for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < inner; ++i) s += n.grad[b * inner + i] * xv[b * inner + i];
        dg[b] += s;
      }
    }
  });
}

Var add_channel_vec(const Var& x, const Var& v) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  if (xv.rank() != 4 || vv.numel() != xv.dim(1))
    throw std::invalid_argument("add_channel_vec: incompatible shapes");
  const std::size_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p)
        out[(b * C + c) * HW + p] = xv[(b * C + c) * HW + p] + vv[c];
  return make_op(std::move(out), {x, v}, [B, C, HW](Node& n) {
    if (n.parents[0]->requires_grad) kernels::add_inplace(n.parents[0]->ensure_grad(), n.grad);
    if (n.parents[1]->requires_grad) {
      Tensor& dv = n.parents[1]->ensure_grad();
      for (std::size_t c = 0; c < C; ++c) {
        double g = 0.0;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t p = 0; p < HW; ++p) g += n.grad[(b * C + c) * HW + p];
        dv[c] += g;
      }
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  return make_op(kernels::matmul(a.value(), b.value()), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad)
      kernels::add_inplace(n.parents[0]->ensure_grad(),
                           kernels::matmul_nt(n.grad, n.parents[1]->value));
    if (n.parents[1]->requires_grad)
      kernels::add_inplace(n.parents[1]->ensure_grad(),
                           kernels::matmul_tn(n.parents[0]->value, n.grad));
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(0))
    throw std::invalid_argument("linear: incompatible shapes " + xv.shape_str() + " x " +
                                wv.shape_str());
  Tensor y = kernels::matmul(xv, wv);
  const std::size_t N = y.dim(0), M = y.dim(1);
  if (b.defined()) {
    if (b.numel() != M) throw std::invalid_argument("linear: bias size mismatch");
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < M; ++j) y[i * M + j] += b.value()[j];
  }
  std::vector<Var> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_op(std::move(y), std::move(parents), [](Node& n) {
    if (n.parents[0]->requires_grad)
      kernels::add_inplace(n.parents[0]->ensure_grad(),
                           kernels::matmul_nt(n.grad, n.parents[1]->value));
    if (n.parents[1]->requires_grad)
      kernels::add_inplace(n.parents[1]->ensure_grad(),
                           kernels::matmul_tn(n.parents[0]->value, n.grad));
    if (n.parents.size() > 2 && n.parents[2]->requires_grad)
      kernels::add_inplace(n.parents[2]->ensure_grad(), kernels::col_sum(n.grad));
  });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  Tensor y = kernels::conv2d(x.value(), w.value(), bias.defined() ? bias.value() : Tensor(),
                             stride, pad);
  std::vector<Var> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  const std::size_t H = x.dim(2), W = x.dim(3), kh = w.dim(2), kw = w.dim(3);
  return make_op(std::move(y), std::move(parents), [H, W, kh, kw, stride, pad](Node& n) {
    if (n.parents[0]->requires_grad)
      kernels::add_inplace(
          n.parents[0]->ensure_grad(),
          kernels::conv2d_grad_input(n.grad, n.parents[1]->value, H, W, stride, pad));
    if (n.parents[1]->requires_grad)
      kernels::add_inplace(
          n.parents[1]->ensure_grad(),
          kernels::conv2d_grad_weight(n.grad, n.parents[0]->value, kh, kw, stride, pad));
    if (n.parents.size() > 2 && n.parents[2]->requires_grad)
      kernels::add_inplace(n.parents[2]->ensure_grad(), kernels::conv2d_grad_bias(n.grad));
  });
}

Var gap(const Var& x) {
  const std::size_t H = x.dim(2), W = x.dim(3);
  return make_op(kernels::gap(x.value()), {x}, [H, W](Node& n) {
    if (n.parents[0]->requires_grad)
      kernels::add_inplace(n.parents[0]->ensure_grad(), kernels::gap_grad(n.grad, H, W));
  });
}

Var gmp(const Var& x) {
  std::vector<std::size_t> argmax;
  Tensor y = kernels::gmp(x.value(), &argmax);
  const std::size_t H = x.dim(2), W = x.dim(3);
  return make_op(std::move(y), {x}, [argmax = std::move(argmax), H, W](Node& n) {
    if (n.parents[0]->requires_grad)
      kernels::add_inplace(n.parents[0]->ensure_grad(), kernels::gmp_grad(n.grad, argmax, H, W));
  });
}

Var softmax_rows(const Var& x) {
  Tensor y = kernels::softmax_rows(x.value());
  const std::size_t m = y.dim(0), c = y.dim(1);
  return make_op(std::move(y), {x}, [m, c](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += n.grad[i * c + j] * n.value[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        dx[i * c + j] += n.value[i * c + j] * (n.grad[i * c + j] - dot);
    }
  });
}

Var softmax_axis0(const Var& x) {
  const std::size_t K = x.dim(0);
  Tensor y = kernels::softmax_axis0(x.value(), K);
  const std::size_t inner = x.numel() / K;
  return make_op(std::move(y), {x}, [K, inner](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    for (std::size_t j = 0; j < inner; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < K; ++i) dot += n.grad[i * inner + j] * n.value[i * inner + j];
      for (std::size_t i = 0; i < K; ++i)
        dx[i * inner + j] += n.value[i * inner + j] * (n.grad[i * inner + j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("layer_norm: rank-2 expected");
  const std::size_t N = xv.dim(0), D = xv.dim(1);
  if (gamma.numel() != D || beta.numel() != D)
    throw std::invalid_argument("layer_norm: gamma/beta size mismatch");
  Tensor y(xv.shape());
  Tensor xhat(xv.shape());
  Tensor inv_std({N});
  for (std::size_t i = 0; i < N; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < D; ++j) mean += xv[i * D + j];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double d = xv[i * D + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < D; ++j) {
      xhat[i * D + j] = (xv[i * D + j] - mean) * is;
      y[i * D + j] = xhat[i * D + j] * gamma.value()[j] + beta.value()[j];
    }
  }
  return make_op(std::move(y), {x, gamma, beta},
                 [N, D, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
    const Tensor& gm = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& dx = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < N; ++i) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
          const double dyj = n.grad[i * D + j] * gm[j];
          sum_dy += dyj;
          sum_dy_xhat += dyj * xhat[i * D + j];
        }
        const double invD = 1.0 / static_cast<double>(D);
        for (std::size_t j = 0; j < D; ++j) {
          const double dyj = n.grad[i * D + j] * gm[j];
          dx[i * D + j] +=
              inv_std[i] * (dyj - invD * sum_dy - xhat[i * D + j] * invD * sum_dy_xhat);
        }
      }
    }
    if (n.parents[1]->requires_grad) {
      Tensor& dg = n.parents[1]->ensure_grad();
      for (std::size_t j = 0; j < D; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) s += n.grad[i * D + j] * xhat[i * D + j];
        dg[j] += s;
      }
    }
    if (n.parents[2]->requires_grad) {
      Tensor& db = n.parents[2]->ensure_grad();
      for (std::size_t j = 0; j < D; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) s += n.grad[i * D + j];
        db[j] += s;
      }
    }
  });
}

Var sum_all(const Var& x) {
  return make_op(Tensor::scalar(kernels::sum(x.value())), {x}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& dx = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += n.grad[0];
  });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Var dot_const(const Var& x, const Tensor& r) {
  if (!x.value().same_shape(r)) throw std::invalid_argument("dot_const: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < r.numel(); ++i) s += x.value()[i] * r[i];
  return make_op(Tensor::scalar(s), {x}, [r](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    kernels::axpy_inplace(n.parents[0]->ensure_grad(), n.grad[0], r);
  });
}

Var mse_loss(const Var& pred, const Tensor& target) {
  if (!pred.value().same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
  const std::size_t n = target.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.value()[i] - target[i];
    s += d * d;
  }
  return make_op(Tensor::scalar(s / static_cast<double>(n)), {pred}, [target](Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    Tensor& dp = nd.parents[0]->ensure_grad();
    const double c = 2.0 * nd.grad[0] / static_cast<double>(target.numel());
    for (std::size_t i = 0; i < target.numel(); ++i)
      dp[i] += c * (nd.parents[0]->value[i] - target[i]);
  });
}

Var l1_loss_masked(const Var& pred, const Tensor& target, const Tensor& mask) {
  if (!pred.value().same_shape(target) || !pred.value().same_shape(mask))
    throw std::invalid_argument("l1_loss_masked: shape mismatch");
  double count = 0.0;
  for (std::size_t i = 0; i < mask.numel(); ++i) count += mask[i];
  const double denom = std::max(1.0, count);
  double s = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i)
    s += std::abs(pred.value()[i] - target[i]) * mask[i];
  return make_op(Tensor::scalar(s / denom), {pred}, [target, mask, denom](Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    Tensor& dp = nd.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < target.numel(); ++i) {
      const double d = nd.parents[0]->value[i] - target[i];
      const double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      dp[i] += nd.grad[0] * sg * mask[i] / denom;
    }
  });
}

}  // namespace ddf::ad
