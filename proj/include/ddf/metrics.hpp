#pragma once

#include <map>
#include <string>
#include <vector>

#include "ddf/bbox.hpp"

namespace ddf {

/// Per-frame box predictions; flag != 0 marks a frame the tracker reported
/// as lost (the box is the carried-over previous estimate).
struct Trajectory {
  std::string clip_id;
  std::vector<BBox> boxes;
  std::vector<int> flags;
};

struct DualGroundTruth {
  std::vector<BBox> gt_rgb;
  std::vector<BBox> gt_tir;
};

struct Curve {
  std::vector<double> thresholds;
  std::vector<double> values;
};

struct MetricScores {
  double precision = 0.0;            // PR at the configured center-error threshold
  double success_auc = 0.0;          // SR: mean success over the 21-point overlap grid
  double normalized_precision = 0.0; // NPR: AUC over the 51-point normalized grid
  Curve precision_curve;             // thresholds 0..50 px
  Curve success_curve;               // thresholds 0..1, step 0.05
  Curve npr_curve;                   // thresholds 0..0.5, step 0.01
  std::size_t frames = 0;
  std::size_t sequences = 0;
};

struct MetricReport {
  MetricScores overall;
  std::map<std::string, MetricScores> per_attribute;
  double pr_threshold = 20.0;
  std::vector<std::string> warnings;
};

// ---- frame-level primitives ----
double center_error(const BBox& pred, const BBox& gt);
double overlap(const BBox& pred, const BBox& gt);  // intersection over union

// ---- sequence metrics (frame-pooled over the given pairs) ----
double precision_rate(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                      double threshold_px);
/// Mean over 21 overlap thresholds 0:0.05:1 of the fraction of frames with
/// overlap strictly above the threshold.
double success_rate_auc(const std::vector<BBox>& pred, const std::vector<BBox>& gt);
/// Center error is normalized component-wise by (gt_w, gt_h) before the
/// Euclidean norm; a frame counts at threshold tau when the normalized error
/// is strictly below tau. Returns the AUC over the 51-point grid [0,0.5].
double normalized_precision(const std::vector<BBox>& pred, const std::vector<BBox>& gt);
double normalized_precision_at(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                               double threshold);

MetricScores score_frames(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                          double pr_threshold, std::size_t sequences);

/// Per-metric maximum of two single-mode scores (curves element-wise).
/// The two inputs must describe the same frame/sequence sets.
MetricScores max_over_modes(const MetricScores& a, const MetricScores& b);
MetricReport max_over_modes(const MetricReport& a, const MetricReport& b);

/// Frame-pooled report over the dataset, overall plus per attribute subset;
/// empty subsets are omitted with a warning. attribute_of must tag every
/// trajectory's clip. Ground truth is single-mode here; the dual-mode
/// maximum is taken by the caller via max_over_modes.
MetricReport attribute_report(const std::vector<Trajectory>& trajectories,
                              const std::map<std::string, std::vector<BBox>>& gt_of,
                              const std::map<std::string, std::string>& attribute_of,
                              double pr_threshold);

std::string report_json(const MetricReport& report);
std::string curve_csv(const Curve& curve);

// trajectory text files: "frame_index x y w h flag" per line
std::string trajectory_text(const Trajectory& t);
Trajectory trajectory_from_text(const std::string& text, const std::string& clip_id);

}  // namespace ddf
