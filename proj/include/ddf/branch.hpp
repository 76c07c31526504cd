#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "ddf/fusion_units.hpp"

namespace ddf {

/// The six challenge attributes. GEN is always present in a model.
enum class AttributeId { EI, TC, OCC, LR, SA, GEN };

inline constexpr std::array<AttributeId, 6> kAllAttributes = {
    AttributeId::EI, AttributeId::TC, AttributeId::OCC,
    AttributeId::LR, AttributeId::SA, AttributeId::GEN};

std::string attribute_name(AttributeId a);
AttributeId attribute_from_name(const std::string& name);

/// One spatial-and-channel fusion unit: SAE + CAE, gated by a two-output
/// router and combined residually so a fully closed gate passes the input
/// through unchanged.
struct ScfuParams {
  SaeParams sae;
  CaeParams cae;
  RouterParams router;  // 2 outputs: (w_sae, w_cae)
};

/// Parameters of one attribute-specific dynamic fusion branch: two SCFUs
/// (one per modality) and one router-gated SFU.
struct BranchParams {
  ScfuParams scfu_rgb;
  ScfuParams scfu_tir;
  SfuParams sfu;
  RouterParams sfu_router;  // pools the RGB++TIR concat, 1 output
  AttributeId attribute = AttributeId::GEN;
};

/// Per-sample record of all five router outputs of a branch.
struct GateRecord {
  double sae_rgb = 0, cae_rgb = 0, sae_tir = 0, cae_tir = 0, sfu = 0;
};

struct BranchOutput {
  FeatureMap fused;
  std::vector<GateRecord> gates;  // one per sample in the batch
};

BranchParams make_branch(ParamStore& store, const std::string& group, const std::string& prefix,
                         std::size_t channels, std::size_t reduction, AttributeId attribute,
                         std::mt19937_64& rng);

/// f' = f + w_sae*SAE(f) + w_cae*CAE(f); returns the gated result and the
/// raw router signal {B,2}.
std::pair<FeatureMap, RouterSignal> scfu_forward(const FeatureMap& f, const ScfuParams& p);

BranchOutput branch_forward(const FeatureMap& f_rgb, const FeatureMap& f_tir,
                            const BranchParams& p);

/// Runs the branch over a frame sequence and returns one gate record per
/// frame (frame tensors are expected with B == 1). Values are identical to
/// what branch_forward would record frame by frame.
std::vector<GateRecord> branch_structure_trace(
    const std::vector<std::pair<FeatureMap, FeatureMap>>& frames, const BranchParams& p);

/// Delimited export: header plus one "frame_index,w_sae_rgb,..." row per frame.
std::string gate_trace_csv(const std::vector<GateRecord>& trace);

}  // namespace ddf
