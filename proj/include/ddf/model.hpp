#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ddf/aggregation.hpp"
#include "ddf/bbox.hpp"
#include "ddf/branch.hpp"

namespace ddf {

/// Small configurable two-stream convolutional backbone standing in for the
/// full-scale residual network; each layer is a stride-s 3x3 convolution
/// followed by ReLU, with a fusion module optionally inserted after the
/// layers listed in ddf_layers.
struct BackboneConfig {
  int input_resolution = 64;
  std::vector<std::size_t> channels = {16, 32, 64};
  std::vector<int> strides = {2, 2, 2};
  std::set<int> ddf_layers = {1, 2, 3};  // 1-based layer indices

  int total_stride() const {
    int s = 1;
    for (int st : strides) s *= st;
    return s;
  }
  int feature_grid() const { return input_resolution / total_stride(); }
};

struct PredictorConfig {
  std::size_t dim = 48;          // joint feature / token width
  int encoder_layers = 1;
  std::size_t ffn_dim = 96;
  bool positional_encoding = true;
};

struct ModelConfig {
  BackboneConfig backbone;
  PredictorConfig predictor;
  std::size_t reduction = 4;  // r for routers, SFU, AFM
  double gaussian_sigma_factor = 0.25;  // sigma = factor * box diagonal (grid units)
};

/// One hierarchical fusion block: six attribute branches, the adaptive
/// aggregation module and two per-modality enhancement modules.
struct DdfModuleParams {
  std::array<BranchParams, 6> branches;  // indexed by kAllAttributes order
  AfmParams afm;
  EfmParams efm_rgb;
  EfmParams efm_tir;
};

/// Topology selector used by the staged training protocol:
///  - Plain:        no fusion module at all (two-stream baseline)
///  - Stage1Bypass: one active branch, its fused map added residually to
///                  both streams (AFM and EFM removed)
///  - Stage2NoEfm:  all branches + AFM; aggregation added residually
///  - Full:         branches + AFM + EFM as in inference
enum class FusionMode { Plain, Stage1Bypass, Stage2NoEfm, Full };

struct TargetModelWeights {
  ad::Var w_cls;    // {D}
  ad::Var w_bbreg;  // {D}
};

/// Per-layer intermediate activations collected during a forward pass,
/// used by the trace/dump tooling.
struct LayerTrace {
  int layer_index = 0;
  std::array<FeatureMap, 6> branch_fused;
  std::array<std::vector<GateRecord>, 6> branch_gates;
  FeatureMap aggregated;
  FeatureMap enhanced_rgb;
  FeatureMap enhanced_tir;
};

struct ForwardTrace {
  std::vector<std::pair<FeatureMap, FeatureMap>> layer_outputs;  // post-DDF streams
  std::vector<LayerTrace> ddf;                                   // only for DDF layers
};

class TrackerModel {
public:
  TrackerModel(const ModelConfig& cfg, ParamStore& store, std::mt19937_64& rng);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return *store_; }

  /// Two-stream backbone with fusion modules applied after each configured
  /// layer; returns the joint projected feature {B,D,g,g}. Inputs are
  /// {B,3,R,R} image tensors sharing one resolution.
  ad::Var backbone_forward(const ad::Var& rgb, const ad::Var& tir, FusionMode mode,
                           AttributeId active_branch = AttributeId::GEN,
                           ForwardTrace* trace = nullptr) const;

  /// Applies one fusion module to a pair of same-layer streams.
  std::pair<FeatureMap, FeatureMap> ddf_forward(const FeatureMap& f_rgb, const FeatureMap& f_tir,
                                                const DdfModuleParams& p, FusionMode mode,
                                                AttributeId active_branch = AttributeId::GEN,
                                                LayerTrace* trace = nullptr) const;

  /// Encodes target state into a training feature: a Gaussian score map and
  /// an LTRB map (feature-grid units), each projected to D channels and
  /// summed onto x. `bbox` is in input-crop pixel coordinates.
  ad::Var encode_target_state(const ad::Var& x, const BBox& bbox) const;

  /// Test features receive a learned token embedding instead.
  ad::Var encode_test_state(const ad::Var& x) const;

  /// Transformer predictor: flattens the encoded maps to tokens, runs the
  /// encoder over the concatenated sequence and lets a single learned query
  /// attend over the outputs; a linear head splits the result into
  /// classification and regression weights.
  TargetModelWeights predictor_forward(const std::vector<ad::Var>& train_feats,
                                       const ad::Var& test_feat) const;

  /// score map {1,1,g,g} = <w_cls, feature> per location; box map {1,4,g,g}
  /// via a 3x3 head over the w_bbreg-modulated features, made positive with
  /// an exponential map.
  std::pair<ad::Var, ad::Var> target_model_apply(const ad::Var& test_feat,
                                                 const TargetModelWeights& w) const;

  /// Gaussian label map {1,1,g,g} with value 1 at the box center.
  Tensor gaussian_label(const BBox& bbox) const;
  /// LTRB distance map {1,4,g,g} in grid units plus the in-box cell mask {1,4,g,g}.
  std::pair<Tensor, Tensor> ltrb_target(const BBox& bbox) const;

  /// Decodes the box at grid cell (ci,cj) from the LTRB map values,
  /// returning crop-pixel coordinates.
  BBox decode_box(const Tensor& ltrb, std::size_t ci, std::size_t cj) const;

  const DdfModuleParams& ddf_params(int layer) const { return ddf_.at(layer); }
  bool has_ddf(int layer) const { return ddf_.count(layer) > 0; }

private:
  struct ConvLayer {
    ad::Var w, b;
    int stride = 1;
  };
  struct EncoderLayer {
    ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
    ad::Var ln1_g, ln1_b, ln2_g, ln2_b;
    ad::Var ff1_w, ff1_b, ff2_w, ff2_b;
  };

  ad::Var run_stream(const ad::Var& img, const std::vector<ConvLayer>& layers, int upto) const;
  ad::Var encoder_block(const ad::Var& tokens, const EncoderLayer& l) const;
  Tensor positional_encoding(std::size_t h, std::size_t w) const;

  ModelConfig cfg_;
  ParamStore* store_;
  std::vector<ConvLayer> stream_rgb_, stream_tir_;
  std::map<int, DdfModuleParams> ddf_;  // keyed by layer index
  ad::Var proj_w_, proj_b_;             // {D, Crgb+Ctir, 1, 1}
  std::vector<EncoderLayer> encoder_;
  ad::Var query_;                 // {1,D}
  ad::Var head_w_, head_b_;       // {D,2D},{2D}
  ad::Var score_proj_w_, score_proj_b_;  // {D,1,1,1},{D}
  ad::Var ltrb_proj_w_, ltrb_proj_b_;    // {D,4,1,1},{D}
  ad::Var test_token_;            // {D}
  ad::Var reg_head_w_, reg_head_b_;      // {4,D,3,3},{4}
};

}  // namespace ddf
