#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ddf {

/// Axis-aligned box in pixels, top-left corner plus size.
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;

  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
  double area() const { return w * h; }
  bool valid() const { return w > 0 && h > 0; }

  BBox clipped(double frame_w, double frame_h) const {
    const double x0 = std::clamp(x, 0.0, frame_w);
    const double y0 = std::clamp(y, 0.0, frame_h);
    const double x1 = std::clamp(x + w, 0.0, frame_w);
    const double y1 = std::clamp(y + h, 0.0, frame_h);
    return {x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
  }
};

inline double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  return (iw > 0 && ih > 0) ? iw * ih : 0.0;
}

}  // namespace ddf
