#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ddf/autodiff.hpp"
#include "gradcheck.hpp"

using namespace ddf;
using test::finite_difference_check;
using test::random_tensor;

TEST_CASE("elementwise and activation gradients") {
  std::mt19937_64 rng(11);
  ad::Var a = ad::param(random_tensor({3, 4}, rng));
  ad::Var b = ad::param(random_tensor({3, 4}, rng));
  Tensor proj = random_tensor({3, 4}, rng);
  auto fwd = [&] {
    ad::Var y = ad::mul(ad::sigmoid(a), ad::tanh_(ad::sub(b, a)));
    y = ad::add(y, ad::exp_(ad::scale(b, 0.3)));
    return ad::dot_const(y, proj);
  };
  auto res = finite_difference_check(fwd, {a, b});
  CHECK(res.max_rel_err <= 1e-6);
}

TEST_CASE("matmul, linear and layer_norm gradients") {
  std::mt19937_64 rng(12);
  ad::Var x = ad::param(random_tensor({5, 3}, rng));
  ad::Var w = ad::param(random_tensor({3, 4}, rng));
  ad::Var bias = ad::param(random_tensor({4}, rng));
  ad::Var gamma = ad::param(random_tensor({4}, rng, 0.5, 1.5));
  ad::Var beta = ad::param(random_tensor({4}, rng));
  Tensor proj = random_tensor({5, 4}, rng);
  auto fwd = [&] {
    ad::Var y = ad::layer_norm(ad::linear(x, w, bias), gamma, beta);
    return ad::dot_const(y, proj);
  };
  auto res = finite_difference_check(fwd, {x, w, bias, gamma, beta});
  CHECK(res.max_rel_err <= 1e-5);
}

TEST_CASE("conv2d and pooling gradients") {
  std::mt19937_64 rng(13);
  ad::Var x = ad::param(random_tensor({2, 3, 5, 5}, rng));
  ad::Var w = ad::param(random_tensor({4, 3, 3, 3}, rng));
  ad::Var bias = ad::param(random_tensor({4}, rng));
  Tensor proj_conv = random_tensor({2, 4, 5, 5}, rng);
  auto fwd = [&] {
    ad::Var y = ad::conv2d(x, w, bias, 1, 1);
    ad::Var pooled = ad::concat_cols(ad::gap(y), ad::gmp(y));
    ad::Var s = ad::dot_const(y, proj_conv);
    return ad::add(s, ad::sum_all(pooled));
  };
  auto res = finite_difference_check(fwd, {x, w, bias});
  CHECK(res.max_rel_err <= 1e-5);
}

TEST_CASE("softmax, stack and broadcast gradients") {
  std::mt19937_64 rng(14);
  ad::Var x = ad::param(random_tensor({1, 3, 4, 4}, rng));
  ad::Var s = ad::param(random_tensor({1, 3}, rng));
  ad::Var v = ad::param(random_tensor({3}, rng));
  ad::Var g = ad::param(random_tensor({1}, rng, 0.1, 0.9));
  ad::Var m = ad::param(random_tensor({1, 1, 4, 4}, rng));
  Tensor proj = random_tensor({1, 3, 4, 4}, rng);
  auto fwd = [&] {
    ad::Var z = ad::scale_channels(x, ad::softmax_rows(s));
    z = ad::scale_channels_vec(z, v);
    z = ad::scale_spatial(z, ad::sigmoid(m));
    z = ad::scale_per_sample(z, g);
    z = ad::add_channel_vec(z, v);
    ad::Var st = ad::softmax_axis0(ad::stack0({ad::gap(z), ad::gmp(z)}));
    return ad::add(ad::dot_const(z, proj), ad::sum_all(ad::index0(st, 0)));
  };
  auto res = finite_difference_check(fwd, {x, s, v, g, m});
  CHECK(res.max_rel_err <= 1e-5);
}

TEST_CASE("losses match hand-computed values and gradients") {
  Tensor target({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor mask({2, 2}, {1.0, 0.0, 1.0, 0.0});
  ad::Var p = ad::param(Tensor({2, 2}, {1.5, 1.0, 2.0, 4.0}));
  ad::Var l = ad::mse_loss(p, target);
  // (0.25 + 1 + 1 + 0)/4
  CHECK(l.value()[0] == doctest::Approx(0.5625).epsilon(1e-15));
  ad::Var l1 = ad::l1_loss_masked(p, target, mask);
  // (0.5 + 1.0)/2
  CHECK(l1.value()[0] == doctest::Approx(0.75).epsilon(1e-15));
  auto res = finite_difference_check(
      [&] { return ad::add(ad::mse_loss(p, target), ad::l1_loss_masked(p, target, mask)); }, {p});
  CHECK(res.max_rel_err <= 1e-6);
}

TEST_CASE("graph reuse accumulates gradients for shared subexpressions") {
  ad::Var x = ad::param(Tensor::scalar(3.0));
  ad::Var y = ad::mul(x, x);            // x^2
  ad::Var z = ad::add(y, ad::scale(x, 2.0));  // x^2 + 2x
  ad::backward(z);
  CHECK(x.grad()[0] == doctest::Approx(8.0));  // 2x + 2
}

TEST_CASE("tokens_from_map transposes channels and positions") {
  Tensor v({1, 2, 2, 1}, {1, 2, 3, 4});
  ad::Var x = ad::param(v);
  ad::Var t = ad::tokens_from_map(x);
  REQUIRE(t.shape() == std::vector<std::size_t>{2, 2});
  CHECK(t.value()[0] == 1);  // position 0, channel 0
  CHECK(t.value()[1] == 3);  // position 0, channel 1
  CHECK(t.value()[2] == 2);
  CHECK(t.value()[3] == 4);
}
