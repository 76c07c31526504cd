#include "ddf/tracking.hpp"

#include <cmath>
#include <stdexcept>

#include "ddf/kernels.hpp"

namespace ddf {

Tensor crop_resize(const Tensor& frame, double cx, double cy, double side, int out_res) {
  if (frame.rank() != 3) throw std::invalid_argument("crop_resize: {C,H,W} frame expected");
  const std::size_t C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  const int n = std::max(2, static_cast<int>(std::lround(side)));
  Tensor patch({C, static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
  const double x0 = cx - side / 2.0, y0 = cy - side / 2.0;
  const double step = side / static_cast<double>(n);
  for (std::size_t c = 0; c < C; ++c)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        // border-clamped nearest sample on the source grid
        const double sy = y0 + (i + 0.5) * step - 0.5;
        const double sx = x0 + (j + 0.5) * step - 0.5;
        const long yy = std::clamp<long>(std::lround(sy), 0, static_cast<long>(H) - 1);
        const long xx = std::clamp<long>(std::lround(sx), 0, static_cast<long>(W) - 1);
        patch[(c * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)) *
                  static_cast<std::size_t>(n) +
              static_cast<std::size_t>(j)] =
            frame[(c * H + static_cast<std::size_t>(yy)) * W + static_cast<std::size_t>(xx)];
      }
  return kernels::bilinear_resize(patch, static_cast<std::size_t>(out_res),
                                  static_cast<std::size_t>(out_res));
}

BBox frame_to_crop(const BBox& b, double cx, double cy, double side, int out_res) {
  const double scale = static_cast<double>(out_res) / side;
  return {(b.x - (cx - side / 2.0)) * scale, (b.y - (cy - side / 2.0)) * scale, b.w * scale,
          b.h * scale};
}

BBox crop_to_frame(const BBox& b, double cx, double cy, double side, int out_res) {
  const double scale = side / static_cast<double>(out_res);
  return {b.x * scale + (cx - side / 2.0), b.y * scale + (cy - side / 2.0), b.w * scale,
          b.h * scale};
}

void TrackState::initialize(Tensor encoded_feat, const BBox& estimate) {
  memory_.clear();
  memory_.push_back(std::move(encoded_feat));
  estimate_ = estimate;
}

void TrackState::push_pseudo_label(Tensor encoded_feat) {
  if (memory_.empty()) throw std::logic_error("TrackState: initialize first");
  if (static_cast<int>(memory_.size()) < std::max(1, cfg_.memory_capacity)) {
    memory_.push_back(std::move(encoded_feat));
    return;
  }
  if (cfg_.memory_capacity <= 1) return;  // only the permanent entry fits
  // FIFO among the non-permanent entries
  memory_.erase(memory_.begin() + 1);
  memory_.push_back(std::move(encoded_feat));
}

std::vector<ad::Var> TrackState::memory_features() const {
  std::vector<ad::Var> out;
  out.reserve(memory_.size());
  for (const Tensor& t : memory_) out.push_back(ad::constant(t));
  return out;
}

namespace {

Tensor to_batch(const Tensor& chw) {
  Tensor out({1, chw.dim(0), chw.dim(1), chw.dim(2)}, chw.vec());
  return out;
}

struct Localized {
  BBox box_crop;
  double peak = 0.0;
};

Localized localize(const TrackerModel& model, const Tensor& score, const Tensor& ltrb) {
  const std::size_t g = score.dim(2);
  std::size_t best_i = 0, best_j = 0;
  double best = score.at(0, 0, 0, 0);
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j)
      if (score.at(0, 0, i, j) > best) {
        best = score.at(0, 0, i, j);
        best_i = i;
        best_j = j;
      }
  return {model.decode_box(ltrb, best_i, best_j), best};
}

}  // namespace

Trajectory track_sequence(const TrackerModel& model, const ClipManifest& clip,
                          const TrackConfig& cfg, FusionMode mode) {
  if (clip.frames() == 0) throw std::invalid_argument("track_sequence: empty clip");
  if (clip.gt_rgb.empty()) throw std::invalid_argument("track_sequence: first-frame ground truth required");
  const int res = model.config().backbone.input_resolution;

  Trajectory traj;
  traj.clip_id = clip.clip_id;
  TrackState state(cfg);

  auto crop_side = [&](const BBox& b) {
    return std::max(cfg.min_crop_side, cfg.search_area_factor * std::sqrt(b.area()));
  };

  auto encode_frame = [&](std::size_t t, const BBox& around, const BBox& label) {
    const double side = crop_side(around);
    Tensor rgb = crop_resize(clip.rgb[t], around.cx(), around.cy(), side, res);
    Tensor tir = crop_resize(clip.tir[t], around.cx(), around.cy(), side, res);
    ad::Var x = model.backbone_forward(ad::constant(to_batch(rgb)), ad::constant(to_batch(tir)),
                                       mode);
    BBox label_crop = frame_to_crop(label, around.cx(), around.cy(), side, res);
    if (!label_crop.valid()) label_crop = {0, 0, 1, 1};
    return model.encode_target_state(x, label_crop).value();
  };

  const BBox init = clip.gt_rgb[0];
  state.initialize(encode_frame(0, init, init), init);
  traj.boxes.push_back(init);
  traj.flags.push_back(0);

  for (std::size_t t = 1; t < clip.frames(); ++t) {
    const BBox prev = state.estimate();
    const double side = crop_side(prev);
    Tensor rgb = crop_resize(clip.rgb[t], prev.cx(), prev.cy(), side, res);
    Tensor tir = crop_resize(clip.tir[t], prev.cx(), prev.cy(), side, res);
    ad::Var x = model.backbone_forward(ad::constant(to_batch(rgb)), ad::constant(to_batch(tir)),
                                       mode);
    ad::Var test = model.encode_test_state(x);
    TargetModelWeights w = model.predictor_forward(state.memory_features(), test);
    auto [score, ltrb] = model.target_model_apply(test, w);
    Localized loc = localize(model, score.value(), ltrb.value());

    if (loc.peak < cfg.score_floor) {
      traj.boxes.push_back(prev);
      traj.flags.push_back(1);
      continue;
    }
    BBox est = crop_to_frame(loc.box_crop, prev.cx(), prev.cy(), side, res);
    const double fw = static_cast<double>(clip.rgb[t].dim(2));
    const double fh = static_cast<double>(clip.rgb[t].dim(1));
    BBox clipped = est.clipped(fw, fh);
    if (!clipped.valid()) clipped = prev;
    state.set_estimate(clipped);
    traj.boxes.push_back(clipped);
    traj.flags.push_back(0);

    if (cfg.refresh_interval > 0 && t % static_cast<std::size_t>(cfg.refresh_interval) == 0)
      state.push_pseudo_label(encode_frame(t, clipped, clipped));
  }
  return traj;
}

}  // namespace ddf
