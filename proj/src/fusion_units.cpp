#include "ddf/fusion_units.hpp"

#include <stdexcept>

namespace ddf {

namespace {
void require_map(const FeatureMap& f, const char* who) {
  if (!f.map.defined() || f.map.value().rank() != 4)
    throw std::invalid_argument(std::string(who) + ": {B,C,H,W} feature expected");
}
}  // namespace

SaeParams make_sae(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::mt19937_64& rng) {
  SaeParams p;
  p.conv_w = store.create(group, prefix + ".conv_w", xavier_init({1, channels, 1, 1}, channels, 1, rng));
  p.conv_b = store.create(group, prefix + ".conv_b", zeros_init({1}));
  return p;
}

CaeParams make_cae(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::mt19937_64& rng) {
  CaeParams p;
  p.mix_w = store.create(group, prefix + ".mix_w",
                         xavier_init({2 * channels, channels}, 2 * channels, channels, rng));
  p.mix_b = store.create(group, prefix + ".mix_b", zeros_init({channels}));
  return p;
}

SfuParams make_sfu(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::size_t reduction, std::mt19937_64& rng) {
  if (reduction == 0 || channels % reduction != 0)
    throw std::invalid_argument("make_sfu: reduction must divide channel count");
  const std::size_t mid = channels / reduction;
  SfuParams p;
  auto lin = [&](const std::string& name, std::size_t in, std::size_t out) {
    return store.create(group, prefix + "." + name, xavier_init({in, out}, in, out, rng));
  };
  auto bias = [&](const std::string& name, std::size_t n) {
    return store.create(group, prefix + "." + name, zeros_init({n}));
  };
  p.reduce_w_rgb = lin("reduce_w_rgb", 2 * channels, mid);
  p.reduce_b_rgb = bias("reduce_b_rgb", mid);
  p.expand_w_rgb = lin("expand_w_rgb", mid, channels);
  p.expand_b_rgb = bias("expand_b_rgb", channels);
  p.reduce_w_tir = lin("reduce_w_tir", 2 * channels, mid);
  p.reduce_b_tir = bias("reduce_b_tir", mid);
  p.expand_w_tir = lin("expand_w_tir", mid, channels);
  p.expand_b_tir = bias("expand_b_tir", channels);
  return p;
}

RouterParams make_router(ParamStore& store, const std::string& group, const std::string& prefix,
                         std::size_t input_channels, std::size_t hidden, std::size_t outputs,
                         std::mt19937_64& rng) {
  const std::size_t in = 2 * input_channels;
  RouterParams p;
  p.w1 = store.create(group, prefix + ".w1", xavier_init({in, hidden}, in, hidden, rng));
  p.b1 = store.create(group, prefix + ".b1", zeros_init({hidden}));
  p.w2 = store.create(group, prefix + ".w2", xavier_init({hidden, outputs}, hidden, outputs, rng));
  p.b2 = store.create(group, prefix + ".b2", zeros_init({outputs}));
  return p;
}

ad::Var pooled_descriptor(const ad::Var& f) {
  return ad::concat_cols(ad::gap(f), ad::gmp(f));
}

FeatureMap sae_forward(const FeatureMap& f, const SaeParams& p) {
  require_map(f, "sae_forward");
  if (p.conv_w.dim(1) != f.map.dim(1))
    throw std::invalid_argument("sae_forward: channel count mismatch");
  ad::Var mask = ad::sigmoid(ad::conv2d(f.map, p.conv_w, p.conv_b, 1, 0));
  return {ad::scale_spatial(f.map, mask), f.layer_index};
}

FeatureMap cae_forward(const FeatureMap& f, const CaeParams& p) {
  require_map(f, "cae_forward");
  if (p.mix_w.dim(0) != 2 * f.map.dim(1) || p.mix_w.dim(1) != f.map.dim(1))
    throw std::invalid_argument("cae_forward: channel count mismatch");
  ad::Var d = pooled_descriptor(f.map);
  ad::Var weights = ad::sigmoid(ad::linear(d, p.mix_w, p.mix_b));  // {B,C}
  return {ad::scale_channels(f.map, weights), f.layer_index};
}

FeatureMap sfu_forward(const FeatureMap& f_rgb, const FeatureMap& f_tir, const SfuParams& p) {
  require_map(f_rgb, "sfu_forward");
  require_map(f_tir, "sfu_forward");
  if (!f_rgb.map.value().same_shape(f_tir.map.value()))
    throw std::invalid_argument("sfu_forward: modality shape mismatch");
  ad::Var summed = ad::add(f_rgb.map, f_tir.map);
  ad::Var d = pooled_descriptor(summed);  // {B,2C}
  ad::Var z_rgb = ad::linear(ad::linear(d, p.reduce_w_rgb, p.reduce_b_rgb), p.expand_w_rgb,
                             p.expand_b_rgb);  // {B,C}
  ad::Var z_tir = ad::linear(ad::linear(d, p.reduce_w_tir, p.reduce_b_tir), p.expand_w_tir,
                             p.expand_b_tir);
  ad::Var w = ad::softmax_axis0(ad::stack0({z_rgb, z_tir}));  // {2,B,C}, sums to 1 per channel
  ad::Var fused = ad::add(ad::scale_channels(f_rgb.map, ad::index0(w, 0)),
                          ad::scale_channels(f_tir.map, ad::index0(w, 1)));
  return {fused, f_rgb.layer_index};
}

RouterSignal router_forward(const FeatureMap& f, const RouterParams& p) {
  require_map(f, "router_forward");
  if (p.w1.dim(0) != 2 * f.map.dim(1))
    throw std::invalid_argument("router_forward: descriptor dimensionality mismatch");
  ad::Var d = pooled_descriptor(f.map);
  ad::Var h = ad::linear(d, p.w1, p.b1);
  ad::Var gates = ad::relu(ad::tanh_(ad::linear(h, p.w2, p.b2)));
  // tanh of a large pre-activation rounds to exactly 1.0 in double precision;
  // the gate contract is the half-open interval [0,1), so clamp one ulp below.
  return {ad::clamp_max(gates, std::nextafter(1.0, 0.0))};
}

}  // namespace ddf
