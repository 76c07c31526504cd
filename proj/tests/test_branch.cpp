#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ddf/branch.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace ddf;
using test::finite_difference_check;
using test::random_tensor;
namespace orc = ddf::test::oracle;

namespace {

orc::Map to_oracle(const Tensor& t) {
  return orc::Map{t.dim(0), t.dim(1), t.dim(2), t.dim(3), t.vec()};
}

FeatureMap fmap(Tensor t, int layer = 1) { return {ad::param(std::move(t)), layer}; }

orc::ScfuWeights oracle_scfu(const ScfuParams& p, std::size_t C, std::size_t hidden) {
  orc::ScfuWeights w;
  w.sae_w = p.sae.conv_w.value().vec();
  w.sae_b = p.sae.conv_b.value()[0];
  w.cae_w = p.cae.mix_w.value().vec();
  w.cae_b = p.cae.mix_b.value().vec();
  w.router = {p.router.w1.value().vec(), p.router.b1.value().vec(), p.router.w2.value().vec(),
              p.router.b2.value().vec(), 2 * C, hidden, 2};
  return w;
}

orc::BranchWeights oracle_branch(const BranchParams& p, std::size_t C, std::size_t hidden,
                                 std::size_t mid) {
  orc::BranchWeights w;
  w.rgb = oracle_scfu(p.scfu_rgb, C, hidden);
  w.tir = oracle_scfu(p.scfu_tir, C, hidden);
  w.sfu_rgb = {p.sfu.reduce_w_rgb.value().vec(), p.sfu.reduce_b_rgb.value().vec(),
               p.sfu.expand_w_rgb.value().vec(), p.sfu.expand_b_rgb.value().vec()};
  w.sfu_tir = {p.sfu.reduce_w_tir.value().vec(), p.sfu.reduce_b_tir.value().vec(),
               p.sfu.expand_w_tir.value().vec(), p.sfu.expand_b_tir.value().vec()};
  w.sfu_mid = mid;
  w.sfu_router = {p.sfu_router.w1.value().vec(), p.sfu_router.b1.value().vec(),
                  p.sfu_router.w2.value().vec(), p.sfu_router.b2.value().vec(), 4 * C, hidden, 1};
  return w;
}

void zero_router(RouterParams& r) {
  r.w1.mutable_value().fill(0.0);
  r.b1.mutable_value().fill(0.0);
  r.w2.mutable_value().fill(0.0);
  r.b2.mutable_value().fill(0.0);
}

std::vector<ad::Var> branch_leaves(const BranchParams& p) {
  return {p.scfu_rgb.sae.conv_w, p.scfu_rgb.sae.conv_b, p.scfu_rgb.cae.mix_w,
          p.scfu_rgb.cae.mix_b, p.scfu_rgb.router.w1, p.scfu_rgb.router.b1,
          p.scfu_rgb.router.w2, p.scfu_rgb.router.b2, p.scfu_tir.sae.conv_w,
          p.scfu_tir.sae.conv_b, p.scfu_tir.cae.mix_w, p.scfu_tir.cae.mix_b,
          p.scfu_tir.router.w1, p.scfu_tir.router.b1, p.scfu_tir.router.w2,
          p.scfu_tir.router.b2, p.sfu.reduce_w_rgb, p.sfu.reduce_b_rgb, p.sfu.expand_w_rgb,
          p.sfu.expand_b_rgb, p.sfu.reduce_w_tir, p.sfu.reduce_b_tir, p.sfu.expand_w_tir,
          p.sfu.expand_b_tir, p.sfu_router.w1, p.sfu_router.b1, p.sfu_router.w2, p.sfu_router.b2};
}

}  // namespace

TEST_CASE("scfu: zero router makes the unit transparent") {
  ParamStore store;
  std::mt19937_64 rng(3);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::OCC, rng);
  zero_router(p.scfu_rgb.router);
  Tensor f = random_tensor({2, 4, 3, 3}, rng);
  auto [out, sig] = scfu_forward(fmap(f), p.scfu_rgb);
  for (std::size_t i = 0; i < sig.weights.numel(); ++i) CHECK(sig.weights.value()[i] == 0.0);
  for (std::size_t i = 0; i < f.numel(); ++i) CHECK(out.map.value()[i] == f[i]);
}

TEST_CASE("scfu: zero input maps to zero") {
  ParamStore store;
  std::mt19937_64 rng(4);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::EI, rng);
  auto [out, sig] = scfu_forward(fmap(Tensor::zeros({1, 4, 3, 3})), p.scfu_rgb);
  for (std::size_t i = 0; i < out.map.numel(); ++i) CHECK(out.map.value()[i] == 0.0);
}

TEST_CASE("scfu: matches the composition of the unit oracles") {
  ParamStore store;
  std::mt19937_64 rng(5);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::LR, rng);
  Tensor f = random_tensor({1, 4, 3, 3}, rng);
  auto [out, sig] = scfu_forward(fmap(f), p.scfu_rgb);
  orc::Map expect = orc::scfu(to_oracle(f), oracle_scfu(p.scfu_rgb, 4, 2));
  for (std::size_t i = 0; i < f.numel(); ++i)
    CHECK(out.map.value()[i] == doctest::Approx(expect.v[i]).epsilon(1e-12));
}

TEST_CASE("branch: all routers zeroed leaves the branch dormant") {
  ParamStore store;
  std::mt19937_64 rng(6);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::TC, rng);
  zero_router(p.scfu_rgb.router);
  zero_router(p.scfu_tir.router);
  zero_router(p.sfu_router);
  BranchOutput out = branch_forward(fmap(random_tensor({2, 4, 3, 3}, rng)),
                                    fmap(random_tensor({2, 4, 3, 3}, rng)), p);
  for (std::size_t i = 0; i < out.fused.map.numel(); ++i) CHECK(out.fused.map.value()[i] == 0.0);
  for (const GateRecord& g : out.gates) {
    CHECK(g.sae_rgb == 0.0);
    CHECK(g.cae_rgb == 0.0);
    CHECK(g.sae_tir == 0.0);
    CHECK(g.cae_tir == 0.0);
    CHECK(g.sfu == 0.0);
  }
}

TEST_CASE("branch: saturated SFU router with symmetric SFU passes w_sfu*f") {
  ParamStore store;
  std::mt19937_64 rng(7);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::SA, rng);
  // Make the SCFUs transparent and the SFU symmetric, then push the SFU
  // router toward its supremum.
  zero_router(p.scfu_rgb.router);
  zero_router(p.scfu_tir.router);
  p.sfu.reduce_w_tir.mutable_value() = p.sfu.reduce_w_rgb.value();
  p.sfu.reduce_b_tir.mutable_value() = p.sfu.reduce_b_rgb.value();
  p.sfu.expand_w_tir.mutable_value() = p.sfu.expand_w_rgb.value();
  p.sfu.expand_b_tir.mutable_value() = p.sfu.expand_b_rgb.value();
  p.sfu_router.w1.mutable_value().fill(0.0);
  p.sfu_router.b1.mutable_value().fill(0.0);
  p.sfu_router.w2.mutable_value().fill(0.0);
  p.sfu_router.b2.mutable_value().fill(100.0);  // tanh saturates toward 1
  Tensor f = random_tensor({1, 4, 3, 3}, rng);
  BranchOutput out = branch_forward(fmap(f), fmap(f), p);
  const double w_sfu = out.gates[0].sfu;
  CHECK(w_sfu < 1.0);
  CHECK(w_sfu > 0.999);
  for (std::size_t i = 0; i < f.numel(); ++i)
    CHECK(out.fused.map.value()[i] == doctest::Approx(w_sfu * f[i]).epsilon(1e-12));
}

TEST_CASE("branch: matches the end-to-end scalar oracle") {
  ParamStore store;
  std::mt19937_64 rng(8);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::GEN, rng);
  Tensor fr = random_tensor({1, 4, 3, 3}, rng);
  Tensor ft = random_tensor({1, 4, 3, 3}, rng);
  BranchOutput out = branch_forward(fmap(fr), fmap(ft), p);
  std::vector<double> oracle_gates;
  orc::Map expect =
      orc::branch(to_oracle(fr), to_oracle(ft), oracle_branch(p, 4, 2, 1), &oracle_gates);
  for (std::size_t i = 0; i < fr.numel(); ++i)
    CHECK(out.fused.map.value()[i] == doctest::Approx(expect.v[i]).epsilon(1e-12));
  CHECK(out.gates[0].sfu == doctest::Approx(oracle_gates[0]).epsilon(1e-12));
}

TEST_CASE("branch: rejects modality shape mismatch") {
  ParamStore store;
  std::mt19937_64 rng(9);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::GEN, rng);
  CHECK_THROWS_AS(
      branch_forward(fmap(Tensor::zeros({1, 4, 3, 3})), fmap(Tensor::zeros({1, 4, 4, 3})), p),
      std::invalid_argument);
}

TEST_CASE("branch: determinism — identical inputs give bit-identical outputs") {
  ParamStore store;
  std::mt19937_64 rng(10);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::GEN, rng);
  Tensor fr = random_tensor({1, 4, 5, 5}, rng), ft = random_tensor({1, 4, 5, 5}, rng);
  BranchOutput a = branch_forward(fmap(fr), fmap(ft), p);
  BranchOutput b = branch_forward(fmap(fr), fmap(ft), p);
  for (std::size_t i = 0; i < a.fused.map.numel(); ++i)
    CHECK(a.fused.map.value()[i] == b.fused.map.value()[i]);
  CHECK(a.gates[0].sfu == b.gates[0].sfu);
}

TEST_CASE("branch: end-to-end gradient matches finite differences") {
  ParamStore store;
  std::mt19937_64 rng(11);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::GEN, rng);
  ad::Var fr = ad::param(test::random_tensor({1, 4, 6, 6}, rng));
  ad::Var ft = ad::param(test::random_tensor({1, 4, 6, 6}, rng));
  Tensor proj = test::random_tensor({1, 4, 6, 6}, rng);
  auto fwd = [&] { return ad::dot_const(branch_forward({fr, 1}, {ft, 1}, p).fused.map, proj); };
  std::vector<ad::Var> leaves = branch_leaves(p);
  leaves.push_back(fr);
  leaves.push_back(ft);
  auto res = finite_difference_check(fwd, leaves);
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("structure trace: single frame equals branch_forward gates") {
  ParamStore store;
  std::mt19937_64 rng(12);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::GEN, rng);
  Tensor fr = random_tensor({1, 4, 3, 3}, rng), ft = random_tensor({1, 4, 3, 3}, rng);
  auto trace = branch_structure_trace({{fmap(fr), fmap(ft)}}, p);
  REQUIRE(trace.size() == 1);
  BranchOutput out = branch_forward(fmap(fr), fmap(ft), p);
  CHECK(trace[0].sae_rgb == out.gates[0].sae_rgb);
  CHECK(trace[0].cae_rgb == out.gates[0].cae_rgb);
  CHECK(trace[0].sae_tir == out.gates[0].sae_tir);
  CHECK(trace[0].cae_tir == out.gates[0].cae_tir);
  CHECK(trace[0].sfu == out.gates[0].sfu);
}

TEST_CASE("structure trace: constant input repeated n times gives identical rows") {
  ParamStore store;
  std::mt19937_64 rng(13);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::GEN, rng);
  Tensor fr = random_tensor({1, 4, 3, 3}, rng), ft = random_tensor({1, 4, 3, 3}, rng);
  std::vector<std::pair<FeatureMap, FeatureMap>> frames;
  for (int i = 0; i < 5; ++i) frames.push_back({fmap(fr), fmap(ft)});
  auto trace = branch_structure_trace(frames, p);
  REQUIRE(trace.size() == 5);
  for (std::size_t i = 1; i < 5; ++i) {
    CHECK(trace[i].sae_rgb == trace[0].sae_rgb);
    CHECK(trace[i].sfu == trace[0].sfu);
  }
}

TEST_CASE("structure trace: rejects an empty sequence") {
  ParamStore store;
  std::mt19937_64 rng(14);
  BranchParams p = make_branch(store, "g", "b", 4, 4, AttributeId::GEN, rng);
  CHECK_THROWS_AS(branch_structure_trace({}, p), std::invalid_argument);
}

TEST_CASE("gate trace csv has a header and one row per frame") {
  std::vector<GateRecord> trace(3);
  trace[1].sfu = 0.5;
  std::string csv = gate_trace_csv(trace);
  CHECK(csv.find("frame_index,w_sae_rgb") == 0);
  std::size_t rows = 0;
  for (char c : csv)
    if (c == '\n') ++rows;
  CHECK(rows == 4);  // header + 3 frames
}
