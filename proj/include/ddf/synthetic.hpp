#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ddf/bbox.hpp"
#include "ddf/branch.hpp"
#include "ddf/tensor.hpp"

namespace ddf {

/// Scene parameters of the synthetic RGBT clip generator. Frames are dense
/// double tensors in [0,1]; TIR is rendered as a single intensity field and
/// replicated to three channels so both streams share the stem layout.
struct SceneConfig {
  int canvas = 96;
  int frames_per_clip = 16;
  double target_min_size = 10.0;
  double target_max_size = 16.0;
  double max_speed = 1.5;
  double noise_sigma = 0.01;
  double alignment_jitter = 1.0;  // max Euclidean offset between the two GT centers

  // per-attribute degradation strengths
  double occ_coverage = 0.6;        // fraction of the target the occluder covers
  double occ_start = 0.4, occ_end = 0.8;  // interval as clip fractions
  double lr_factor = 4.0;           // downscale-upscale blur factor
  double ei_low = 0.15, ei_high = 1.9;    // RGB gain extremes
  double tc_start = 0.3, tc_end = 1.0;    // TIR crossover interval
  int distractor_count = 2;         // SA

  std::string frame_format = "raw";  // "raw" | "png"

  void validate() const;
};

/// One applied degradation, recorded per frame so tests and audits can
/// recompute its geometry independently of the rendered pixels.
struct DegradationEvent {
  int frame = 0;
  std::string kind;  // "occ" | "lr" | "ei" | "tc" | "sa"
  std::map<std::string, double> params;
};

struct ClipManifest {
  std::string clip_id;
  AttributeId attribute = AttributeId::GEN;
  std::uint64_t seed = 0;
  std::vector<Tensor> rgb;  // {3,H,W} per frame
  std::vector<Tensor> tir;  // {3,H,W} per frame
  std::vector<BBox> gt_rgb;
  std::vector<BBox> gt_tir;
  std::vector<DegradationEvent> degradations;

  std::size_t frames() const { return rgb.size(); }
};

/// Deterministic clip generation: the same (attribute, seed, config) always
/// produces a bit-identical manifest. clip_id only names the clip; the
/// per-clip RNG stream is derived from (seed, clip_id).
ClipManifest generate_clip(AttributeId attribute, std::uint64_t seed, const SceneConfig& config,
                           const std::string& clip_id);

struct ManifestIndex {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<std::string> clip_order;
  std::map<std::string, std::vector<std::string>> subsets;  // attr name (+ "all") -> clip ids
  std::map<std::string, AttributeId> attribute_of;
};

/// Builds disjoint per-attribute clip id sets plus an "all" split that is
/// their union. counts maps attribute -> number of clips (>=1).
ManifestIndex make_attribute_subsets(const SceneConfig& config,
                                     const std::map<AttributeId, int>& counts,
                                     std::uint64_t seed);

// ---- on-disk dataset ----
// <dir>/index.json plus <dir>/<clip_id>/manifest.json and one frame file per
// modality and frame ("raw" .tns tensors by default, 8-bit PNG otherwise).
void write_dataset(const std::filesystem::path& dir, const ManifestIndex& index,
                   const SceneConfig& config);
ManifestIndex read_index(const std::filesystem::path& dir);
ClipManifest load_clip(const std::filesystem::path& dir, const std::string& clip_id);
std::string index_json(const ManifestIndex& index);

}  // namespace ddf
