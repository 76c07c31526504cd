#include "ddf/aggregation.hpp"

#include <stdexcept>

namespace ddf {

AfmParams make_afm(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::size_t reduction, std::mt19937_64& rng) {
  if (reduction == 0 || channels % reduction != 0)
    throw std::invalid_argument("make_afm: reduction must divide channel count");
  const std::size_t mid = channels / reduction;
  AfmParams p;
  p.reduce_w = store.create(group, prefix + ".reduce_w", xavier_init({channels, mid}, channels, mid, rng));
  p.reduce_b = store.create(group, prefix + ".reduce_b", zeros_init({mid}));
  p.expand_w =
      store.create(group, prefix + ".expand_w", xavier_init({mid, 6 * channels}, mid, 6 * channels, rng));
  p.expand_b = store.create(group, prefix + ".expand_b", zeros_init({6 * channels}));
  return p;
}

EfmParams make_efm(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::mt19937_64& rng) {
  EfmParams p;
  auto conv = [&](const std::string& name, std::size_t k) {
    return store.create(group, prefix + "." + name,
                        xavier_init({channels, channels, k, k}, channels * k * k, channels, rng));
  };
  auto bias = [&](const std::string& name) {
    return store.create(group, prefix + "." + name, zeros_init({channels}));
  };
  p.gate_w1 = conv("gate_w1", 1);
  p.gate_b1 = bias("gate_b1");
  p.gate_w2 = conv("gate_w2", 3);
  p.gate_b2 = bias("gate_b2");
  p.res_w1 = conv("res_w1", 1);
  p.res_b1 = bias("res_b1");
  p.res_w2 = conv("res_w2", 3);
  p.res_b2 = bias("res_b2");
  return p;
}

FeatureMap afm_forward(const std::array<FeatureMap, 6>& branch_feats, const AfmParams& p) {
  const Tensor& shape0 = branch_feats[0].map.value();
  std::vector<ad::Var> maps;
  for (const auto& f : branch_feats) {
    if (!f.map.value().same_shape(shape0))
      throw std::invalid_argument("afm_forward: branch shape mismatch");
    maps.push_back(f.map);
  }
  const std::size_t C = shape0.dim(1);
  if (p.reduce_w.dim(0) != C || p.expand_w.dim(1) != 6 * C)
    throw std::invalid_argument("afm_forward: channel count mismatch");

  ad::Var summed = ad::add_n(maps);
  ad::Var d = ad::gap(summed);                                       // {B,C}
  ad::Var logits = ad::linear(ad::linear(d, p.reduce_w, p.reduce_b), p.expand_w, p.expand_b);
  std::vector<ad::Var> per_branch;
  for (std::size_t k = 0; k < 6; ++k) per_branch.push_back(ad::slice_cols(logits, k * C, C));
  ad::Var w = ad::softmax_axis0(ad::stack0(per_branch));             // {6,B,C}
  std::vector<ad::Var> weighted;
  for (std::size_t k = 0; k < 6; ++k)
    weighted.push_back(ad::scale_channels(maps[k], ad::index0(w, k)));
  return {ad::add_n(weighted), branch_feats[0].layer_index};
}

namespace {
ad::Var conv_stack(const ad::Var& x, const ad::Var& w1, const ad::Var& b1, const ad::Var& w2,
                   const ad::Var& b2) {
  return ad::conv2d(ad::conv2d(x, w1, b1, 1, 0), w2, b2, 1, 1);
}
}  // namespace

FeatureMap efm_forward(const FeatureMap& f_m, const FeatureMap& f_ag, const EfmParams& p) {
  if (!f_m.map.value().same_shape(f_ag.map.value()))
    throw std::invalid_argument("efm_forward: shape mismatch");
  ad::Var gate = ad::sigmoid(conv_stack(f_ag.map, p.gate_w1, p.gate_b1, p.gate_w2, p.gate_b2));
  ad::Var res = ad::relu(conv_stack(f_ag.map, p.res_w1, p.res_b1, p.res_w2, p.res_b2));
  return {ad::add(ad::mul(f_m.map, gate), res), f_m.layer_index};
}

}  // namespace ddf
