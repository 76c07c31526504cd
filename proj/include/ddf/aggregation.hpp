#pragma once

#include <array>
#include <string>

#include "ddf/fusion_units.hpp"

namespace ddf {

/// Adaptive aggregation over the six branch outputs, selective-kernel style:
/// sum the branches, GAP, reduce C->C/r, expand C/r->6C, softmax over the
/// branch axis per channel, then mix.
struct AfmParams {
  ad::Var reduce_w, reduce_b;  // {C,C/r},{C/r}
  ad::Var expand_w, expand_b;  // {C/r,6C},{6C}
};

/// Enhancement fusion: the aggregated feature drives a sigmoid gate over the
/// modality stream plus a ReLU residual. Each path is an independent
/// 1x1 -> 3x3 convolution stack, channel preserving.
struct EfmParams {
  ad::Var gate_w1, gate_b1;  // {C,C,1,1},{C}
  ad::Var gate_w2, gate_b2;  // {C,C,3,3},{C}
  ad::Var res_w1, res_b1;
  ad::Var res_w2, res_b2;
};

AfmParams make_afm(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::size_t reduction, std::mt19937_64& rng);
EfmParams make_efm(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::mt19937_64& rng);

FeatureMap afm_forward(const std::array<FeatureMap, 6>& branch_feats, const AfmParams& p);

/// output = f_m .* sigmoid(gate(f_ag)) + Relu(res(f_ag))
FeatureMap efm_forward(const FeatureMap& f_m, const FeatureMap& f_ag, const EfmParams& p);

}  // namespace ddf
