#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ddf/kernels.hpp"
#include "ddf/model.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace ddf;
using test::random_tensor;
namespace orc = ddf::test::oracle;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.backbone.input_resolution = 8;
  cfg.backbone.channels = {4};
  cfg.backbone.strides = {2};
  cfg.backbone.ddf_layers = {1};
  cfg.predictor.dim = 8;
  cfg.predictor.encoder_layers = 1;
  cfg.predictor.ffn_dim = 8;
  cfg.predictor.positional_encoding = true;
  cfg.reduction = 4;
  return cfg;
}

FeatureMap fmap(Tensor t, int layer = 1) { return {ad::param(std::move(t)), layer}; }

void zero_all_routers(const ParamStore& store, DdfModuleParams& mod) {
  (void)store;
  for (auto& b : mod.branches) {
    for (RouterParams* r : {&b.scfu_rgb.router, &b.scfu_tir.router, &b.sfu_router}) {
      r->w1.mutable_value().fill(0.0);
      r->b1.mutable_value().fill(0.0);
      r->w2.mutable_value().fill(0.0);
      r->b2.mutable_value().fill(0.0);
    }
  }
}

}  // namespace

TEST_CASE("ddf_forward: zero-gate cascade with zero EFM params halves both streams") {
  ParamStore store;
  std::mt19937_64 rng(41);
  ModelConfig cfg = tiny_config();
  TrackerModel model(cfg, store, rng);
  DdfModuleParams mod = model.ddf_params(1);
  zero_all_routers(store, mod);
  for (ad::Var v : {mod.efm_rgb.gate_w1, mod.efm_rgb.gate_b1, mod.efm_rgb.gate_w2,
                    mod.efm_rgb.gate_b2, mod.efm_rgb.res_w1, mod.efm_rgb.res_b1,
                    mod.efm_rgb.res_w2, mod.efm_rgb.res_b2, mod.efm_tir.gate_w1,
                    mod.efm_tir.gate_b1, mod.efm_tir.gate_w2, mod.efm_tir.gate_b2,
                    mod.efm_tir.res_w1, mod.efm_tir.res_b1, mod.efm_tir.res_w2,
                    mod.efm_tir.res_b2})
    v.mutable_value().fill(0.0);
  Tensor fr = random_tensor({1, 4, 3, 3}, rng), ft = random_tensor({1, 4, 3, 3}, rng);
  auto [orgb, otir] = model.ddf_forward(fmap(fr), fmap(ft), mod, FusionMode::Full);
  for (std::size_t i = 0; i < fr.numel(); ++i) {
    CHECK(orgb.map.value()[i] == doctest::Approx(0.5 * fr[i]).epsilon(1e-15));
    CHECK(otir.map.value()[i] == doctest::Approx(0.5 * ft[i]).epsilon(1e-15));
  }
}

TEST_CASE("ddf_forward: shape contract holds for any params") {
  ParamStore store;
  std::mt19937_64 rng(42);
  TrackerModel model(tiny_config(), store, rng);
  Tensor fr = random_tensor({2, 4, 5, 5}, rng), ft = random_tensor({2, 4, 5, 5}, rng);
  auto [orgb, otir] = model.ddf_forward(fmap(fr), fmap(ft), model.ddf_params(1),
                                        FusionMode::Full);
  CHECK(orgb.map.shape() == fr.shape());
  CHECK(otir.map.shape() == ft.shape());
}

TEST_CASE("ddf_forward: matches the composition of the module oracles") {
  ParamStore store;
  std::mt19937_64 rng(43);
  TrackerModel model(tiny_config(), store, rng);
  const DdfModuleParams& mod = model.ddf_params(1);
  Tensor fr = random_tensor({1, 4, 3, 3}, rng), ft = random_tensor({1, 4, 3, 3}, rng);
  auto [orgb, otir] = model.ddf_forward(fmap(fr), fmap(ft), mod, FusionMode::Full);

  auto to_oracle = [](const Tensor& t) {
    return orc::Map{t.dim(0), t.dim(1), t.dim(2), t.dim(3), t.vec()};
  };
  auto oracle_scfu = [&](const ScfuParams& p) {
    orc::ScfuWeights w;
    w.sae_w = p.sae.conv_w.value().vec();
    w.sae_b = p.sae.conv_b.value()[0];
    w.cae_w = p.cae.mix_w.value().vec();
    w.cae_b = p.cae.mix_b.value().vec();
    w.router = {p.router.w1.value().vec(), p.router.b1.value().vec(), p.router.w2.value().vec(),
                p.router.b2.value().vec(), 8, 2, 2};
    return w;
  };
  std::vector<orc::Map> fused;
  for (const BranchParams& bp : mod.branches) {
    orc::BranchWeights bw;
    bw.rgb = oracle_scfu(bp.scfu_rgb);
    bw.tir = oracle_scfu(bp.scfu_tir);
    bw.sfu_rgb = {bp.sfu.reduce_w_rgb.value().vec(), bp.sfu.reduce_b_rgb.value().vec(),
                  bp.sfu.expand_w_rgb.value().vec(), bp.sfu.expand_b_rgb.value().vec()};
    bw.sfu_tir = {bp.sfu.reduce_w_tir.value().vec(), bp.sfu.reduce_b_tir.value().vec(),
                  bp.sfu.expand_w_tir.value().vec(), bp.sfu.expand_b_tir.value().vec()};
    bw.sfu_mid = 1;
    bw.sfu_router = {bp.sfu_router.w1.value().vec(), bp.sfu_router.b1.value().vec(),
                     bp.sfu_router.w2.value().vec(), bp.sfu_router.b2.value().vec(), 16, 2, 1};
    fused.push_back(orc::branch(to_oracle(fr), to_oracle(ft), bw));
  }
  orc::AfmWeights aw{mod.afm.reduce_w.value().vec(), mod.afm.reduce_b.value().vec(),
                     mod.afm.expand_w.value().vec(), mod.afm.expand_b.value().vec(), 1};
  orc::Map agg = orc::afm(fused, aw);
  auto oracle_efm = [](const EfmParams& p) {
    return orc::EfmWeights{p.gate_w1.value().vec(), p.gate_b1.value().vec(),
                           p.gate_w2.value().vec(), p.gate_b2.value().vec(),
                           p.res_w1.value().vec(),  p.res_b1.value().vec(),
                           p.res_w2.value().vec(),  p.res_b2.value().vec()};
  };
  orc::Map expect_rgb = orc::efm(to_oracle(fr), agg, oracle_efm(mod.efm_rgb));
  orc::Map expect_tir = orc::efm(to_oracle(ft), agg, oracle_efm(mod.efm_tir));
  for (std::size_t i = 0; i < fr.numel(); ++i) {
    CHECK(orgb.map.value()[i] == doctest::Approx(expect_rgb.v[i]).epsilon(1e-12));
    CHECK(otir.map.value()[i] == doctest::Approx(expect_tir.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("backbone: fusion is a pure insertion (Plain mode matches manual composition)") {
  ParamStore store;
  std::mt19937_64 rng(44);
  ModelConfig cfg;
  cfg.backbone.input_resolution = 16;
  cfg.backbone.channels = {4, 6};
  cfg.backbone.strides = {2, 2};
  cfg.backbone.ddf_layers = {};  // baseline configuration
  cfg.predictor.dim = 8;
  cfg.predictor.ffn_dim = 8;
  cfg.reduction = 2;
  TrackerModel model(cfg, store, rng);
  Tensor rgb = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor tir = random_tensor({1, 3, 16, 16}, rng, 0.0, 1.0);
  ad::Var joint = model.backbone_forward(ad::constant(rgb), ad::constant(tir), FusionMode::Full);

  // Manual two-stream recomposition from the same weights.
  auto conv_relu = [&](const Tensor& x, const std::string& w, const std::string& b, int stride) {
    Tensor y = kernels::conv2d(x, store.get(w).value(), store.get(b).value(), stride, 1);
    return kernels::relu(y);
  };
  Tensor r = conv_relu(rgb, "rgb.l1.w", "rgb.l1.b", 2);
  r = conv_relu(r, "rgb.l2.w", "rgb.l2.b", 2);
  Tensor t = conv_relu(tir, "tir.l1.w", "tir.l1.b", 2);
  t = conv_relu(t, "tir.l2.w", "tir.l2.b", 2);
  Tensor cat({1, 12, 4, 4});
  std::copy(r.vec().begin(), r.vec().end(), cat.vec().begin());
  std::copy(t.vec().begin(), t.vec().end(), cat.vec().begin() + r.numel());
  Tensor expect = kernels::conv2d(cat, store.get("proj.w").value(), store.get("proj.b").value(),
                                  1, 0);
  REQUIRE(joint.numel() == expect.numel());
  for (std::size_t i = 0; i < expect.numel(); ++i) CHECK(joint.value()[i] == expect[i]);
}

TEST_CASE("backbone: stride arithmetic fixes the output grid") {
  ParamStore store;
  std::mt19937_64 rng(45);
  ModelConfig cfg = tiny_config();
  cfg.backbone.input_resolution = 32;
  cfg.backbone.channels = {8, 8};
  cfg.backbone.strides = {2, 2};
  cfg.backbone.ddf_layers = {2};
  TrackerModel model(cfg, store, rng);
  CHECK(cfg.backbone.total_stride() == 4);
  CHECK(cfg.backbone.feature_grid() == 8);
  Tensor rgb = random_tensor({1, 3, 32, 32}, rng), tir = random_tensor({1, 3, 32, 32}, rng);
  ad::Var joint = model.backbone_forward(ad::constant(rgb), ad::constant(tir), FusionMode::Full);
  CHECK(joint.shape() == std::vector<std::size_t>{1, 8, 8, 8});
  CHECK_THROWS_AS(model.backbone_forward(ad::constant(rgb),
                                         ad::constant(random_tensor({1, 3, 16, 16}, rng)),
                                         FusionMode::Full),
                  std::invalid_argument);
}

TEST_CASE("encode: gaussian label peaks at 1 on the box center cell") {
  ParamStore store;
  std::mt19937_64 rng(46);
  ModelConfig cfg = tiny_config();  // res 8, stride 2 -> grid 4, cell centers at odd pixels
  TrackerModel model(cfg, store, rng);
  // center the box on cell (1,1): its center pixel is (3,3)
  BBox box{1.0, 1.0, 4.0, 4.0};
  Tensor label = model.gaussian_label(box);
  CHECK(label.at(0, 0, 1, 1) == doctest::Approx(1.0).epsilon(1e-15));
  double mx = 0.0;
  for (std::size_t i = 0; i < label.numel(); ++i) mx = std::max(mx, label[i]);
  CHECK(mx == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(model.gaussian_label({0, 0, 0, 4}), std::invalid_argument);
}

TEST_CASE("encode: LTRB at the box center equals half-extents in grid units") {
  ParamStore store;
  std::mt19937_64 rng(47);
  TrackerModel model(tiny_config(), store, rng);
  BBox box{1.0, 1.0, 4.0, 4.0};  // center (3,3) = cell (1,1), stride 2
  auto [ltrb, mask] = model.ltrb_target(box);
  CHECK(ltrb.at(0, 0, 1, 1) == doctest::Approx(1.0));  // w/2 in grid units = 2/2
  CHECK(ltrb.at(0, 1, 1, 1) == doctest::Approx(1.0));
  CHECK(ltrb.at(0, 2, 1, 1) == doctest::Approx(1.0));
  CHECK(ltrb.at(0, 3, 1, 1) == doctest::Approx(1.0));
  CHECK(mask.at(0, 0, 1, 1) == 1.0);
  CHECK(mask.at(0, 0, 3, 3) == 0.0);
}

TEST_CASE("encode: full encoding on a 4x4 grid matches hand geometry") {
  ParamStore store;
  std::mt19937_64 rng(48);
  ModelConfig cfg = tiny_config();
  TrackerModel model(cfg, store, rng);
  BBox box{2.0, 1.0, 3.0, 5.0};
  Tensor label = model.gaussian_label(box);
  auto [ltrb, mask] = model.ltrb_target(box);
  const double s = 2.0;
  const double sigma = 0.25 * std::hypot(box.w / s, box.h / s);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double cx = (j + 0.5) * s, cy = (i + 0.5) * s;
      const double dx = (cx - box.cx()) / s, dy = (cy - box.cy()) / s;
      CHECK(label.at(0, 0, i, j) ==
            doctest::Approx(std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma))).epsilon(1e-12));
      CHECK(ltrb.at(0, 0, i, j) == doctest::Approx((cx - box.x) / s).epsilon(1e-12));
      CHECK(ltrb.at(0, 3, i, j) == doctest::Approx((box.y + box.h - cy) / s).epsilon(1e-12));
      const bool inside = cx >= box.x && cx <= box.x + box.w && cy >= box.y && cy <= box.y + box.h;
      CHECK(mask.at(0, 0, i, j) == (inside ? 1.0 : 0.0));
    }
  // decode inverts the target map at any in-box cell
  BBox dec = model.decode_box(ltrb, 1, 1);
  CHECK(dec.x == doctest::Approx(box.x).epsilon(1e-12));
  CHECK(dec.y == doctest::Approx(box.y).epsilon(1e-12));
  CHECK(dec.w == doctest::Approx(box.w).epsilon(1e-12));
  CHECK(dec.h == doctest::Approx(box.h).epsilon(1e-12));
}

TEST_CASE("predictor: weight shapes and empty-train-set error") {
  ParamStore store;
  std::mt19937_64 rng(49);
  ModelConfig cfg = tiny_config();
  TrackerModel model(cfg, store, rng);
  ad::Var f1 = ad::constant(random_tensor({1, 8, 2, 2}, rng));
  ad::Var f2 = ad::constant(random_tensor({1, 8, 2, 2}, rng));
  TargetModelWeights w = model.predictor_forward({f1}, f2);
  CHECK(w.w_cls.shape() == std::vector<std::size_t>{8});
  CHECK(w.w_bbreg.shape() == std::vector<std::size_t>{8});
  CHECK_THROWS_AS(model.predictor_forward({}, f2), std::invalid_argument);
}

TEST_CASE("predictor: token permutation within a frame leaves w_t unchanged without PE") {
  ParamStore store;
  std::mt19937_64 rng(50);
  ModelConfig cfg = tiny_config();
  cfg.predictor.positional_encoding = false;
  TrackerModel model(cfg, store, rng);
  Tensor train = random_tensor({1, 8, 2, 2}, rng);
  Tensor test_map = random_tensor({1, 8, 2, 2}, rng);
  TargetModelWeights base =
      model.predictor_forward({ad::constant(train)}, ad::constant(test_map));
  // permute the 4 spatial positions of the training frame
  const std::size_t perm[4] = {2, 0, 3, 1};
  Tensor shuffled(train.shape());
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t p = 0; p < 4; ++p) shuffled.vec()[c * 4 + p] = train.vec()[c * 4 + perm[p]];
  TargetModelWeights permuted =
      model.predictor_forward({ad::constant(shuffled)}, ad::constant(test_map));
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(base.w_cls.value()[i] == doctest::Approx(permuted.w_cls.value()[i]).epsilon(1e-10));
    CHECK(base.w_bbreg.value()[i] == doctest::Approx(permuted.w_bbreg.value()[i]).epsilon(1e-10));
  }
}

TEST_CASE("predictor: two-token toy instance matches a scalar attention oracle") {
  ParamStore store;
  std::mt19937_64 rng(51);
  ModelConfig cfg;
  cfg.backbone.input_resolution = 4;
  cfg.backbone.channels = {2};
  cfg.backbone.strides = {2};
  cfg.backbone.ddf_layers = {};
  cfg.predictor.dim = 2;
  cfg.predictor.encoder_layers = 1;
  cfg.predictor.ffn_dim = 2;
  cfg.predictor.positional_encoding = false;
  cfg.reduction = 1;
  TrackerModel model(cfg, store, rng);
  // Hand-set weights: attention and FFN paths zeroed so the encoder reduces
  // to layer norm; the head splits into [w_t | 2*w_t].
  for (const char* n : {"enc0.wq", "enc0.bq", "enc0.wk", "enc0.bk", "enc0.wv", "enc0.bv",
                        "enc0.wo", "enc0.bo", "enc0.ff1_w", "enc0.ff1_b", "enc0.ff2_w",
                        "enc0.ff2_b", "head.b"})
    store.get(n).mutable_value().fill(0.0);
  Tensor head({2, 4});
  head.vec() = {1, 0, 2, 0, 0, 1, 0, 2};  // rows: identity | 2*identity
  store.get("head.w").mutable_value() = head;
  Tensor q({1, 2});
  q.vec() = {0.7, -0.3};
  store.get("dec.query").mutable_value() = q;

  Tensor train({1, 2, 1, 1});
  train.vec() = {0.9, -0.4};  // one token, channels (a1,a2)
  Tensor test_map({1, 2, 1, 1});
  test_map.vec() = {0.1, 0.8};
  TargetModelWeights w =
      model.predictor_forward({ad::constant(train)}, ad::constant(test_map));

  // scalar recomputation
  auto ln = [](double a, double b) {
    const double mean = (a + b) / 2.0;
    const double var = ((a - mean) * (a - mean) + (b - mean) * (b - mean)) / 2.0;
    const double inv = 1.0 / std::sqrt(var + 1e-6);
    return std::pair<double, double>{(a - mean) * inv, (b - mean) * inv};
  };
  auto enc_token = [&](double a, double b) {
    auto [x1, x2] = ln(a, b);   // after attention residual (attention path is zero)
    return ln(x1, x2);          // after FFN residual (FFN path is zero)
  };
  auto [z11, z12] = enc_token(0.9, -0.4);
  auto [z21, z22] = enc_token(0.1, 0.8);
  const double inv_sqrt_d = 1.0 / std::sqrt(2.0);
  const double s1 = (0.7 * z11 + -0.3 * z12) * inv_sqrt_d;
  const double s2 = (0.7 * z21 + -0.3 * z22) * inv_sqrt_d;
  const double m = std::max(s1, s2);
  const double e1 = std::exp(s1 - m), e2 = std::exp(s2 - m);
  const double p1 = e1 / (e1 + e2), p2 = e2 / (e1 + e2);
  const double wt1 = p1 * z11 + p2 * z21;
  const double wt2 = p1 * z12 + p2 * z22;
  CHECK(w.w_cls.value()[0] == doctest::Approx(wt1).epsilon(1e-12));
  CHECK(w.w_cls.value()[1] == doctest::Approx(wt2).epsilon(1e-12));
  CHECK(w.w_bbreg.value()[0] == doctest::Approx(2 * wt1).epsilon(1e-12));
  CHECK(w.w_bbreg.value()[1] == doctest::Approx(2 * wt2).epsilon(1e-12));
}

TEST_CASE("target model: zero classifier weights zero the score map") {
  ParamStore store;
  std::mt19937_64 rng(52);
  TrackerModel model(tiny_config(), store, rng);
  TargetModelWeights w{ad::constant(Tensor::zeros({8})),
                       ad::constant(random_tensor({8}, rng))};
  auto [score, ltrb] = model.target_model_apply(ad::constant(random_tensor({1, 8, 4, 4}, rng)), w);
  for (std::size_t i = 0; i < score.numel(); ++i) CHECK(score.value()[i] == 0.0);
  for (std::size_t i = 0; i < ltrb.numel(); ++i) CHECK(ltrb.value()[i] > 0.0);
}

TEST_CASE("target model: argmax is invariant to positive rescaling of w_cls") {
  ParamStore store;
  std::mt19937_64 rng(53);
  TrackerModel model(tiny_config(), store, rng);
  Tensor feat = random_tensor({1, 8, 4, 4}, rng);
  Tensor wc = random_tensor({8}, rng);
  auto argmax_of = [&](double scale) {
    Tensor scaled = wc;
    for (auto& v : scaled.vec()) v *= scale;
    TargetModelWeights w{ad::constant(scaled), ad::constant(random_tensor({8}, rng))};
    auto [score, ltrb] = model.target_model_apply(ad::constant(feat), w);
    std::size_t best = 0;
    for (std::size_t i = 1; i < score.numel(); ++i)
      if (score.value()[i] > score.value()[best]) best = i;
    return best;
  };
  CHECK(argmax_of(1.0) == argmax_of(7.5));
  CHECK(argmax_of(1.0) == argmax_of(0.01));
}

TEST_CASE("target model: toy 2x2 grid score map matches hand computation") {
  ParamStore store;
  std::mt19937_64 rng(54);
  ModelConfig cfg = tiny_config();
  cfg.predictor.dim = 2;
  cfg.predictor.ffn_dim = 2;
  ParamStore store2;
  TrackerModel model(cfg, store2, rng);
  Tensor feat({1, 2, 2, 2});
  feat.vec() = {1, 2, 3, 4, 5, 6, 7, 8};  // channel 0: [1,2;3,4], channel 1: [5..8]
  Tensor wc({2});
  wc.vec() = {0.5, -0.25};
  TargetModelWeights w{ad::constant(wc), ad::constant(Tensor::full({2}, 1.0))};
  auto [score, ltrb] = model.target_model_apply(ad::constant(feat), w);
  CHECK(score.value()[0] == doctest::Approx(0.5 * 1 - 0.25 * 5).epsilon(1e-15));
  CHECK(score.value()[1] == doctest::Approx(0.5 * 2 - 0.25 * 6).epsilon(1e-15));
  CHECK(score.value()[2] == doctest::Approx(0.5 * 3 - 0.25 * 7).epsilon(1e-15));
  CHECK(score.value()[3] == doctest::Approx(0.5 * 4 - 0.25 * 8).epsilon(1e-15));
}

TEST_CASE("end-to-end gradient through backbone, fusion, predictor and losses") {
  ParamStore store;
  std::mt19937_64 rng(55);
  ModelConfig cfg = tiny_config();
  TrackerModel model(cfg, store, rng);
  Tensor rgb1 = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
  Tensor tir1 = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
  Tensor rgb2 = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
  Tensor tir2 = random_tensor({1, 3, 8, 8}, rng, 0.0, 1.0);
  BBox box{2.0, 2.0, 4.0, 4.0};
  Tensor gauss = model.gaussian_label(box);
  auto [ltrb_t, mask] = model.ltrb_target(box);

  auto fwd = [&] {
    ad::Var x1 = model.backbone_forward(ad::constant(rgb1), ad::constant(tir1), FusionMode::Full);
    ad::Var v1 = model.encode_target_state(x1, box);
    ad::Var x2 = model.backbone_forward(ad::constant(rgb2), ad::constant(tir2), FusionMode::Full);
    ad::Var v2 = model.encode_test_state(x2);
    TargetModelWeights w = model.predictor_forward({v1}, v2);
    auto [score, ltrb] = model.target_model_apply(v2, w);
    return ad::add(ad::mse_loss(score, gauss), ad::l1_loss_masked(ltrb, ltrb_t, mask));
  };

  // analytic gradients
  store.zero_grads();
  ad::Var loss = fwd();
  ad::backward(loss);
  std::map<std::string, Tensor> analytic;
  for (const auto& name : store.names())
    analytic[name] = store.get(name).has_grad() ? store.get(name).grad()
                                                : Tensor::zeros(store.get(name).shape());

  // sampled central differences across every parameter group
  std::mt19937_64 pick_rng(99);
  double max_rel = 0.0;
  std::set<std::string> seen_groups;
  for (const auto& name : store.names()) {
    const std::string& group = store.group_of(name);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool new_group = seen_groups.insert(group).second;
    if (!new_group && u(pick_rng) > 0.15) continue;  // sample, but cover every group
    ad::Var v = store.get(name);
    std::uniform_int_distribution<std::size_t> idx_dist(0, v.numel() - 1);
    const std::size_t idx = idx_dist(pick_rng);
    const double saved = v.value()[idx];
    const double h = 1e-5;
    v.mutable_value()[idx] = saved + h;
    const double up = fwd().value()[0];
    v.mutable_value()[idx] = saved - h;
    const double dn = fwd().value()[0];
    v.mutable_value()[idx] = saved;
    const double numeric = (up - dn) / (2 * h);
    const double a = analytic[name][idx];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    max_rel = std::max(max_rel, rel);
  }
  CHECK(seen_groups.size() == store.groups().size());
  CHECK(max_rel <= 1e-3);
}

TEST_CASE("determinism: identical seeds build identical models") {
  ParamStore s1, s2;
  std::mt19937_64 r1(77), r2(77);
  TrackerModel m1(tiny_config(), s1, r1);
  TrackerModel m2(tiny_config(), s2, r2);
  for (const auto& name : s1.names())
    CHECK(tensor_hash(s1.get(name).value()) == tensor_hash(s2.get(name).value()));
}
