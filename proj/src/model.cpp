#include "ddf/model.hpp"

#include <cmath>
#include <stdexcept>

namespace ddf {

namespace {
constexpr const char* kBackboneGroup = "backbone";
constexpr const char* kPredictorGroup = "predictor";
constexpr const char* kAfmGroup = "afm";
constexpr const char* kEfmGroup = "efm";

std::string branch_group(AttributeId a) { return "branch:" + attribute_name(a); }
}  // namespace

TrackerModel::TrackerModel(const ModelConfig& cfg, ParamStore& store, std::mt19937_64& rng)
    : cfg_(cfg), store_(&store) {
  const auto& bb = cfg_.backbone;
  if (bb.channels.size() != bb.strides.size())
    throw std::invalid_argument("TrackerModel: channels/strides size mismatch");
  if (bb.channels.empty()) throw std::invalid_argument("TrackerModel: empty backbone");
  for (int l : bb.ddf_layers)
    if (l < 1 || l > static_cast<int>(bb.channels.size()))
      throw std::invalid_argument("TrackerModel: ddf layer out of range");

  auto make_stream = [&](const std::string& name) {
    std::vector<ConvLayer> layers;
    std::size_t cin = 3;
    for (std::size_t l = 0; l < bb.channels.size(); ++l) {
      const std::size_t cout = bb.channels[l];
      ConvLayer cl;
      cl.w = store.create(kBackboneGroup, name + ".l" + std::to_string(l + 1) + ".w",
                          xavier_init({cout, cin, 3, 3}, cin * 9, cout, rng));
      cl.b = store.create(kBackboneGroup, name + ".l" + std::to_string(l + 1) + ".b",
                          zeros_init({cout}));
      cl.stride = bb.strides[l];
      layers.push_back(cl);
      cin = cout;
    }
    return layers;
  };
  stream_rgb_ = make_stream("rgb");
  stream_tir_ = make_stream("tir");

  for (int l : bb.ddf_layers) {
    const std::size_t C = bb.channels[static_cast<std::size_t>(l - 1)];
    DdfModuleParams mod;
    for (std::size_t k = 0; k < kAllAttributes.size(); ++k) {
      const AttributeId attr = kAllAttributes[k];
      mod.branches[k] = make_branch(store, branch_group(attr),
                                    "ddf.l" + std::to_string(l) + "." + attribute_name(attr), C,
                                    cfg_.reduction, attr, rng);
    }
    mod.afm = make_afm(store, kAfmGroup, "ddf.l" + std::to_string(l) + ".afm", C, cfg_.reduction,
                       rng);
    mod.efm_rgb = make_efm(store, kEfmGroup, "ddf.l" + std::to_string(l) + ".efm_rgb", C, rng);
    mod.efm_tir = make_efm(store, kEfmGroup, "ddf.l" + std::to_string(l) + ".efm_tir", C, rng);
    ddf_.emplace(l, std::move(mod));
  }

  const std::size_t D = cfg_.predictor.dim;
  const std::size_t Cjoint = 2 * bb.channels.back();
  proj_w_ = store.create(kBackboneGroup, "proj.w", xavier_init({D, Cjoint, 1, 1}, Cjoint, D, rng));
  proj_b_ = store.create(kBackboneGroup, "proj.b", zeros_init({D}));

  for (int e = 0; e < cfg_.predictor.encoder_layers; ++e) {
    const std::string pre = "enc" + std::to_string(e);
    EncoderLayer el;
    auto lin = [&](const std::string& n, std::size_t in, std::size_t out) {
      return store.create(kPredictorGroup, pre + "." + n, xavier_init({in, out}, in, out, rng));
    };
    auto vec = [&](const std::string& n, std::size_t d, double v) {
      return store.create(kPredictorGroup, pre + "." + n, Tensor::full({d}, v));
    };
    el.wq = lin("wq", D, D); el.bq = vec("bq", D, 0.0);
    el.wk = lin("wk", D, D); el.bk = vec("bk", D, 0.0);
    el.wv = lin("wv", D, D); el.bv = vec("bv", D, 0.0);
    el.wo = lin("wo", D, D); el.bo = vec("bo", D, 0.0);
    el.ln1_g = vec("ln1_g", D, 1.0); el.ln1_b = vec("ln1_b", D, 0.0);
    el.ln2_g = vec("ln2_g", D, 1.0); el.ln2_b = vec("ln2_b", D, 0.0);
    el.ff1_w = lin("ff1_w", D, cfg_.predictor.ffn_dim);
    el.ff1_b = vec("ff1_b", cfg_.predictor.ffn_dim, 0.0);
    el.ff2_w = lin("ff2_w", cfg_.predictor.ffn_dim, D);
    el.ff2_b = vec("ff2_b", D, 0.0);
    encoder_.push_back(el);
  }
  query_ = store.create(kPredictorGroup, "dec.query", xavier_init({1, D}, D, D, rng));
  head_w_ = store.create(kPredictorGroup, "head.w", xavier_init({D, 2 * D}, D, 2 * D, rng));
  head_b_ = store.create(kPredictorGroup, "head.b", zeros_init({2 * D}));
  score_proj_w_ =
      store.create(kPredictorGroup, "embed.score_w", xavier_init({D, 1, 1, 1}, 1, D, rng));
  score_proj_b_ = store.create(kPredictorGroup, "embed.score_b", zeros_init({D}));
  ltrb_proj_w_ =
      store.create(kPredictorGroup, "embed.ltrb_w", xavier_init({D, 4, 1, 1}, 4, D, rng));
  ltrb_proj_b_ = store.create(kPredictorGroup, "embed.ltrb_b", zeros_init({D}));
  test_token_ = store.create(kPredictorGroup, "embed.test_token",
                             xavier_init({D}, D, 1, rng));
  reg_head_w_ = store.create(kPredictorGroup, "reg.w", xavier_init({4, D, 3, 3}, D * 9, 4, rng));
  reg_head_b_ = store.create(kPredictorGroup, "reg.b", zeros_init({4}));
}

ad::Var TrackerModel::run_stream(const ad::Var& img, const std::vector<ConvLayer>& layers,
                                 int upto) const {
  ad::Var x = img;
  for (int l = 0; l < upto; ++l) {
    const ConvLayer& cl = layers[static_cast<std::size_t>(l)];
    x = ad::relu(ad::conv2d(x, cl.w, cl.b, cl.stride, 1));
  }
  return x;
}

std::pair<FeatureMap, FeatureMap> TrackerModel::ddf_forward(const FeatureMap& f_rgb,
                                                            const FeatureMap& f_tir,
                                                            const DdfModuleParams& p,
                                                            FusionMode mode,
                                                            AttributeId active_branch,
                                                            LayerTrace* trace) const {
  if (!f_rgb.map.value().same_shape(f_tir.map.value()))
    throw std::invalid_argument("ddf_forward: modality shape mismatch");
  if (trace) trace->layer_index = f_rgb.layer_index;

  if (mode == FusionMode::Stage1Bypass) {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < kAllAttributes.size(); ++k)
      if (kAllAttributes[k] == active_branch) idx = k;
    BranchOutput out = branch_forward(f_rgb, f_tir, p.branches[idx]);
    if (trace) {
      trace->branch_fused[idx] = out.fused;
      trace->branch_gates[idx] = out.gates;
    }
    return {FeatureMap{ad::add(f_rgb.map, out.fused.map), f_rgb.layer_index},
            FeatureMap{ad::add(f_tir.map, out.fused.map), f_tir.layer_index}};
  }

  std::array<FeatureMap, 6> fused;
  for (std::size_t k = 0; k < kAllAttributes.size(); ++k) {
    BranchOutput out = branch_forward(f_rgb, f_tir, p.branches[k]);
    fused[k] = out.fused;
    if (trace) {
      trace->branch_fused[k] = out.fused;
      trace->branch_gates[k] = out.gates;
    }
  }
  FeatureMap agg = afm_forward(fused, p.afm);
  if (trace) trace->aggregated = agg;

  if (mode == FusionMode::Stage2NoEfm) {
    return {FeatureMap{ad::add(f_rgb.map, agg.map), f_rgb.layer_index},
            FeatureMap{ad::add(f_tir.map, agg.map), f_tir.layer_index}};
  }

  FeatureMap out_rgb = efm_forward(f_rgb, agg, p.efm_rgb);
  FeatureMap out_tir = efm_forward(f_tir, agg, p.efm_tir);
  if (trace) {
    trace->enhanced_rgb = out_rgb;
    trace->enhanced_tir = out_tir;
  }
  return {out_rgb, out_tir};
}

ad::Var TrackerModel::backbone_forward(const ad::Var& rgb, const ad::Var& tir, FusionMode mode,
                                       AttributeId active_branch, ForwardTrace* trace) const {
  if (rgb.value().dim(2) != tir.value().dim(2) || rgb.value().dim(3) != tir.value().dim(3))
    throw std::invalid_argument("backbone_forward: input resolution mismatch");
  ad::Var x_rgb = rgb, x_tir = tir;
  const std::size_t L = stream_rgb_.size();
  for (std::size_t l = 0; l < L; ++l) {
    x_rgb = ad::relu(ad::conv2d(x_rgb, stream_rgb_[l].w, stream_rgb_[l].b,
                                stream_rgb_[l].stride, 1));
    x_tir = ad::relu(ad::conv2d(x_tir, stream_tir_[l].w, stream_tir_[l].b,
                                stream_tir_[l].stride, 1));
    const int layer = static_cast<int>(l) + 1;
    if (mode != FusionMode::Plain && ddf_.count(layer)) {
      LayerTrace lt;
      auto [er, et] = ddf_forward({x_rgb, layer}, {x_tir, layer}, ddf_.at(layer), mode,
                                  active_branch, trace ? &lt : nullptr);
      x_rgb = er.map;
      x_tir = et.map;
      if (trace) trace->ddf.push_back(std::move(lt));
    }
    if (trace) trace->layer_outputs.push_back({{x_rgb, layer}, {x_tir, layer}});
  }
  return ad::conv2d(ad::concat_channels(x_rgb, x_tir), proj_w_, proj_b_, 1, 0);
}

Tensor TrackerModel::gaussian_label(const BBox& bbox) const {
  if (!bbox.valid()) throw std::invalid_argument("gaussian_label: degenerate bbox");
  const int g = cfg_.backbone.feature_grid();
  const double s = cfg_.backbone.total_stride();
  Tensor label({1, 1, static_cast<std::size_t>(g), static_cast<std::size_t>(g)});
  const double diag = std::hypot(bbox.w / s, bbox.h / s);
  const double sigma = std::max(cfg_.gaussian_sigma_factor * diag, 1e-6);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      const double cellx = (j + 0.5) * s, celly = (i + 0.5) * s;
      const double dx = (cellx - bbox.cx()) / s, dy = (celly - bbox.cy()) / s;
      label.at(0, 0, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  return label;
}

std::pair<Tensor, Tensor> TrackerModel::ltrb_target(const BBox& bbox) const {
  if (!bbox.valid()) throw std::invalid_argument("ltrb_target: degenerate bbox");
  const int g = cfg_.backbone.feature_grid();
  const double s = cfg_.backbone.total_stride();
  Tensor t({1, 4, static_cast<std::size_t>(g), static_cast<std::size_t>(g)});
  Tensor mask(t.shape());
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      const double cellx = (j + 0.5) * s, celly = (i + 0.5) * s;
      const bool inside = cellx >= bbox.x && cellx <= bbox.x + bbox.w && celly >= bbox.y &&
                          celly <= bbox.y + bbox.h;
      const auto ii = static_cast<std::size_t>(i), jj = static_cast<std::size_t>(j);
      t.at(0, 0, ii, jj) = (cellx - bbox.x) / s;
      t.at(0, 1, ii, jj) = (celly - bbox.y) / s;
      t.at(0, 2, ii, jj) = (bbox.x + bbox.w - cellx) / s;
      t.at(0, 3, ii, jj) = (bbox.y + bbox.h - celly) / s;
      for (std::size_t c = 0; c < 4; ++c) mask.at(0, c, ii, jj) = inside ? 1.0 : 0.0;
    }
  return {t, mask};
}

BBox TrackerModel::decode_box(const Tensor& ltrb, std::size_t ci, std::size_t cj) const {
  const double s = cfg_.backbone.total_stride();
  const double cellx = (static_cast<double>(cj) + 0.5) * s;
  const double celly = (static_cast<double>(ci) + 0.5) * s;
  const double l = ltrb.at(0, 0, ci, cj) * s, t = ltrb.at(0, 1, ci, cj) * s;
  const double r = ltrb.at(0, 2, ci, cj) * s, b = ltrb.at(0, 3, ci, cj) * s;
  return {cellx - l, celly - t, l + r, t + b};
}

ad::Var TrackerModel::encode_target_state(const ad::Var& x, const BBox& bbox) const {
  if (!bbox.valid()) throw std::invalid_argument("encode_target_state: degenerate bbox");
  ad::Var gauss = ad::constant(gaussian_label(bbox));
  ad::Var ltrb = ad::constant(ltrb_target(bbox).first);
  ad::Var enc = ad::add(x, ad::conv2d(gauss, score_proj_w_, score_proj_b_, 1, 0));
  return ad::add(enc, ad::conv2d(ltrb, ltrb_proj_w_, ltrb_proj_b_, 1, 0));
}

ad::Var TrackerModel::encode_test_state(const ad::Var& x) const {
  return ad::add_channel_vec(x, test_token_);
}

Tensor TrackerModel::positional_encoding(std::size_t h, std::size_t w) const {
  const std::size_t D = cfg_.predictor.dim;
  Tensor pe({h * w, D});
  const std::size_t half = D / 2;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t pos = i * w + j;
      for (std::size_t d = 0; d < half; ++d) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(d / 2) /
                                                   static_cast<double>(half));
        const double vi = static_cast<double>(i) * freq;
        const double vj = static_cast<double>(j) * freq;
        pe[pos * D + d] = (d % 2 == 0) ? std::sin(vi) : std::cos(vi);
        pe[pos * D + half + d] = (d % 2 == 0) ? std::sin(vj) : std::cos(vj);
      }
    }
  return pe;
}

ad::Var TrackerModel::encoder_block(const ad::Var& tokens, const EncoderLayer& l) const {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.predictor.dim));
  ad::Var q = ad::linear(tokens, l.wq, l.bq);
  ad::Var k = ad::linear(tokens, l.wk, l.bk);
  ad::Var v = ad::linear(tokens, l.wv, l.bv);
  ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_d));
  ad::Var o = ad::linear(ad::matmul(attn, v), l.wo, l.bo);
  ad::Var x = ad::layer_norm(ad::add(tokens, o), l.ln1_g, l.ln1_b);
  ad::Var f = ad::linear(ad::relu(ad::linear(x, l.ff1_w, l.ff1_b)), l.ff2_w, l.ff2_b);
  return ad::layer_norm(ad::add(x, f), l.ln2_g, l.ln2_b);
}

TargetModelWeights TrackerModel::predictor_forward(const std::vector<ad::Var>& train_feats,
                                                   const ad::Var& test_feat) const {
  if (train_feats.empty())
    throw std::invalid_argument("predictor_forward: empty training set");
  std::vector<ad::Var> token_blocks;
  auto to_tokens = [&](const ad::Var& m) {
    ad::Var t = ad::tokens_from_map(m);
    if (cfg_.predictor.positional_encoding)
      t = ad::add(t, ad::constant(positional_encoding(m.dim(2), m.dim(3))));
    return t;
  };
  for (const ad::Var& f : train_feats) token_blocks.push_back(to_tokens(f));
  token_blocks.push_back(to_tokens(test_feat));
  ad::Var tokens = ad::concat_rows(token_blocks);
  for (const EncoderLayer& l : encoder_) tokens = encoder_block(tokens, l);

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.predictor.dim));
  ad::Var attn =
      ad::softmax_rows(ad::scale(ad::matmul(query_, ad::transpose(tokens)), inv_sqrt_d));
  ad::Var w_t = ad::matmul(attn, tokens);                 // {1,D}
  ad::Var split = ad::linear(w_t, head_w_, head_b_);      // {1,2D}
  const std::size_t D = cfg_.predictor.dim;
  TargetModelWeights w;
  w.w_cls = ad::reshape(ad::slice_cols(split, 0, D), {D});
  w.w_bbreg = ad::reshape(ad::slice_cols(split, D, D), {D});
  return w;
}

std::pair<ad::Var, ad::Var> TrackerModel::target_model_apply(const ad::Var& test_feat,
                                                             const TargetModelWeights& w) const {
  const std::size_t D = cfg_.predictor.dim;
  if (test_feat.dim(1) != D)
    throw std::invalid_argument("target_model_apply: channel count mismatch");
  ad::Var score =
      ad::conv2d(test_feat, ad::reshape(w.w_cls, {1, D, 1, 1}), ad::Var(), 1, 0);
  ad::Var modulated = ad::scale_channels_vec(test_feat, w.w_bbreg);
  ad::Var ltrb = ad::exp_(ad::conv2d(modulated, reg_head_w_, reg_head_b_, 1, 1));
  return {score, ltrb};
}

}  // namespace ddf
