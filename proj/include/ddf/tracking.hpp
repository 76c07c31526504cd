#pragma once

#include <optional>
#include <vector>

#include "ddf/metrics.hpp"
#include "ddf/model.hpp"
#include "ddf/synthetic.hpp"

namespace ddf {

struct TrackConfig {
  int memory_capacity = 2;     // encoded training frames kept, first-frame entry is permanent
  int refresh_interval = 1;    // add a pseudo-label frame every k-th frame
  double score_floor = 0.05;   // below this peak score the frame is flagged lost
  double search_area_factor = 2.0;  // crop side = factor * sqrt(box area) (4x box area)
  double min_crop_side = 8.0;
};

/// Square crop around (cx,cy) with the given side, bilinearly resized to
/// out_res; out-of-frame samples clamp to the border.
Tensor crop_resize(const Tensor& frame, double cx, double cy, double side, int out_res);

/// Maps a box from full-frame coordinates into crop coordinates and back.
BBox frame_to_crop(const BBox& b, double cx, double cy, double side, int out_res);
BBox crop_to_frame(const BBox& b, double cx, double cy, double side, int out_res);

/// Rolling memory of encoded training features. The first entry (the
/// annotated first frame) is permanent; later entries are pseudo-label
/// frames replaced FIFO within the configured capacity.
class TrackState {
public:
  explicit TrackState(const TrackConfig& cfg) : cfg_(cfg) {}

  void initialize(Tensor encoded_feat, const BBox& estimate);
  void push_pseudo_label(Tensor encoded_feat);
  std::vector<ad::Var> memory_features() const;
  std::size_t memory_size() const { return memory_.size(); }

  const BBox& estimate() const { return estimate_; }
  void set_estimate(const BBox& b) { estimate_ = b; }

private:
  TrackConfig cfg_;
  std::vector<Tensor> memory_;
  BBox estimate_;
};

/// Runs the tracker over a clip: frame 0 seeds memory with the annotation,
/// every later frame crops the search region around the previous estimate,
/// localizes via the predictor-driven target model and decodes the box at
/// the score argmax. Frames whose peak score falls below the floor re-emit
/// the previous box with flag 1 and skip the memory update.
Trajectory track_sequence(const TrackerModel& model, const ClipManifest& clip,
                          const TrackConfig& cfg, FusionMode mode = FusionMode::Full);

}  // namespace ddf
