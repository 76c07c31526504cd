#include "ddf/branch.hpp"

#include <sstream>
#include <stdexcept>

namespace ddf {

std::string attribute_name(AttributeId a) {
  switch (a) {
    case AttributeId::EI: return "EI";
    case AttributeId::TC: return "TC";
    case AttributeId::OCC: return "OCC";
    case AttributeId::LR: return "LR";
    case AttributeId::SA: return "SA";
    case AttributeId::GEN: return "GEN";
  }
  throw std::invalid_argument("attribute_name: bad id");
}

AttributeId attribute_from_name(const std::string& name) {
  for (AttributeId a : kAllAttributes)
    if (attribute_name(a) == name) return a;
  throw std::invalid_argument("attribute_from_name: unknown attribute '" + name + "'");
}

namespace {
ScfuParams make_scfu(ParamStore& store, const std::string& group, const std::string& prefix,
                     std::size_t channels, std::size_t reduction, std::mt19937_64& rng) {
  ScfuParams p;
  p.sae = make_sae(store, group, prefix + ".sae", channels, rng);
  p.cae = make_cae(store, group, prefix + ".cae", channels, rng);
  const std::size_t hidden = std::max<std::size_t>(1, 2 * channels / reduction);
  p.router = make_router(store, group, prefix + ".router", channels, hidden, 2, rng);
  return p;
}
}  // namespace

BranchParams make_branch(ParamStore& store, const std::string& group, const std::string& prefix,
                         std::size_t channels, std::size_t reduction, AttributeId attribute,
                         std::mt19937_64& rng) {
  BranchParams p;
  p.attribute = attribute;
  p.scfu_rgb = make_scfu(store, group, prefix + ".scfu_rgb", channels, reduction, rng);
  p.scfu_tir = make_scfu(store, group, prefix + ".scfu_tir", channels, reduction, rng);
  p.sfu = make_sfu(store, group, prefix + ".sfu", channels, reduction, rng);
  const std::size_t hidden = std::max<std::size_t>(1, 2 * channels / reduction);
  // The SFU router pools the channel-wise RGB++TIR concat, so its descriptor
  // is 4C wide.
  p.sfu_router = make_router(store, group, prefix + ".sfu_router", 2 * channels, hidden, 1, rng);
  return p;
}

std::pair<FeatureMap, RouterSignal> scfu_forward(const FeatureMap& f, const ScfuParams& p) {
  RouterSignal sig = router_forward(f, p.router);  // {B,2}
  ad::Var w_sae = ad::slice_cols(sig.weights, 0, 1);
  ad::Var w_cae = ad::slice_cols(sig.weights, 1, 1);
  FeatureMap sae_out = sae_forward(f, p.sae);
  FeatureMap cae_out = cae_forward(f, p.cae);
  ad::Var out = ad::add(
      f.map, ad::add(ad::scale_per_sample(sae_out.map, w_sae),
                     ad::scale_per_sample(cae_out.map, w_cae)));
  return {FeatureMap{out, f.layer_index}, sig};
}

BranchOutput branch_forward(const FeatureMap& f_rgb, const FeatureMap& f_tir,
                            const BranchParams& p) {
  if (!f_rgb.map.value().same_shape(f_tir.map.value()))
    throw std::invalid_argument("branch_forward: modality shape mismatch");
  auto [rgb_out, rgb_sig] = scfu_forward(f_rgb, p.scfu_rgb);
  auto [tir_out, tir_sig] = scfu_forward(f_tir, p.scfu_tir);
  FeatureMap joint{ad::concat_channels(rgb_out.map, tir_out.map), f_rgb.layer_index};
  RouterSignal sfu_sig = router_forward(joint, p.sfu_router);  // {B,1}
  FeatureMap fused = sfu_forward(rgb_out, tir_out, p.sfu);
  ad::Var gated = ad::scale_per_sample(fused.map, sfu_sig.weights);

  BranchOutput out;
  out.fused = FeatureMap{gated, f_rgb.layer_index};
  const std::size_t B = f_rgb.map.dim(0);
  out.gates.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    out.gates[b].sae_rgb = rgb_sig.weights.value().at(b, 0);
    out.gates[b].cae_rgb = rgb_sig.weights.value().at(b, 1);
    out.gates[b].sae_tir = tir_sig.weights.value().at(b, 0);
    out.gates[b].cae_tir = tir_sig.weights.value().at(b, 1);
    out.gates[b].sfu = sfu_sig.weights.value().at(b, 0);
  }
  return out;
}

std::vector<GateRecord> branch_structure_trace(
    const std::vector<std::pair<FeatureMap, FeatureMap>>& frames, const BranchParams& p) {
  if (frames.empty()) throw std::invalid_argument("branch_structure_trace: empty sequence");
  std::vector<GateRecord> trace;
  trace.reserve(frames.size());
  for (const auto& [rgb, tir] : frames) trace.push_back(branch_forward(rgb, tir, p).gates.at(0));
  return trace;
}

std::string gate_trace_csv(const std::vector<GateRecord>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "frame_index,w_sae_rgb,w_cae_rgb,w_sae_tir,w_cae_tir,w_sfu\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const GateRecord& g = trace[i];
    os << i << ',' << g.sae_rgb << ',' << g.cae_rgb << ',' << g.sae_tir << ',' << g.cae_tir
       << ',' << g.sfu << '\n';
  }
  return os.str();
}

}  // namespace ddf
