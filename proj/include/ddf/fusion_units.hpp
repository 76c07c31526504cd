#pragma once

#include <random>
#include <string>

#include "ddf/autodiff.hpp"
#include "ddf/params.hpp"

namespace ddf {

/// A 4-D activation {B,C,H,W} flowing through the fusion pipeline, tagged
/// with the backbone layer that produced it (0 = untagged).
struct FeatureMap {
  ad::Var map;
  int layer_index = 0;
};

/// Per-sample gate weights, one per gated sub-output of a unit. Every entry
/// lies in [0,1): Relu(Tanh(x)) is bounded below by 0 and strictly below 1.
struct RouterSignal {
  ad::Var weights;  // {B,K}
};

// Spatial attention enhancement: a 1x1 convolution mixes channels into a
// single-channel map, the sigmoid of which gates the input spatially.
struct SaeParams {
  ad::Var conv_w;  // {1,C,1,1}
  ad::Var conv_b;  // {1}
};

// Channel attention enhancement: GAP and GMP descriptors are concatenated
// and mixed 2C->C; the sigmoid output reweights channels.
struct CaeParams {
  ad::Var mix_w;  // {2C,C}
  ad::Var mix_b;  // {C}
};

// Selective fusion: a shared pooled descriptor of the summed modalities
// drives two reduce/expand paths whose per-channel softmax selects between
// the modalities.
struct SfuParams {
  ad::Var reduce_w_rgb, reduce_b_rgb;  // {2C,C/r},{C/r}
  ad::Var expand_w_rgb, expand_b_rgb;  // {C/r,C},{C}
  ad::Var reduce_w_tir, reduce_b_tir;
  ad::Var expand_w_tir, expand_b_tir;
};

// Router: Relu(Tanh(MLP(GAP(f) ++ GMP(f)))). The MLP is two linear layers
// with no internal activation; the output dimension equals the number of
// gated sub-outputs of the owning unit.
struct RouterParams {
  ad::Var w1, b1;  // {2*Cin, hidden}
  ad::Var w2, b2;  // {hidden, K}
};

SaeParams make_sae(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::mt19937_64& rng);
CaeParams make_cae(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::mt19937_64& rng);
SfuParams make_sfu(ParamStore& store, const std::string& group, const std::string& prefix,
                   std::size_t channels, std::size_t reduction, std::mt19937_64& rng);
// `input_channels` is the channel count of the feature the router pools
// (C for a SCFU router, 2C for the SFU router fed the RGB++TIR concat);
// `hidden` is the MLP hidden width; `outputs` the gate count.
RouterParams make_router(ParamStore& store, const std::string& group, const std::string& prefix,
                         std::size_t input_channels, std::size_t hidden, std::size_t outputs,
                         std::mt19937_64& rng);

FeatureMap sae_forward(const FeatureMap& f, const SaeParams& p);
FeatureMap cae_forward(const FeatureMap& f, const CaeParams& p);
FeatureMap sfu_forward(const FeatureMap& f_rgb, const FeatureMap& f_tir, const SfuParams& p);
RouterSignal router_forward(const FeatureMap& f, const RouterParams& p);

/// GAP(f) ++ GMP(f) descriptor, {B,2C}. Shared by CAE, SFU and the router.
ad::Var pooled_descriptor(const ad::Var& f);

}  // namespace ddf
