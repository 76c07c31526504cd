#include "ddf/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ddf {

using nlohmann::json;

namespace {

void check_lengths(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("metrics: trajectory/ground-truth length mismatch");
  if (pred.empty()) throw std::invalid_argument("metrics: empty trajectory");
}

Curve make_curve(double lo, double step, std::size_t points) {
  Curve c;
  c.thresholds.resize(points);
  c.values.assign(points, 0.0);
  for (std::size_t i = 0; i < points; ++i) c.thresholds[i] = lo + step * static_cast<double>(i);
  return c;
}

}  // namespace

double center_error(const BBox& pred, const BBox& gt) {
  return std::hypot(pred.cx() - gt.cx(), pred.cy() - gt.cy());
}

double overlap(const BBox& pred, const BBox& gt) {
  const double inter = intersection_area(pred, gt);
  const double uni = pred.area() + gt.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double precision_rate(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                      double threshold_px) {
  check_lengths(pred, gt);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (center_error(pred[i], gt[i]) <= threshold_px) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double success_rate_auc(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  check_lengths(pred, gt);
  double auc = 0.0;
  for (int k = 0; k <= 20; ++k) {
    const double tau = 0.05 * k;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (overlap(pred[i], gt[i]) > tau) ++hits;
    auc += static_cast<double>(hits) / static_cast<double>(pred.size());
  }
  return auc / 21.0;
}

namespace {
double normalized_error(const BBox& pred, const BBox& gt) {
  if (!(gt.w > 0.0) || !(gt.h > 0.0))
    throw std::invalid_argument("normalized_precision: degenerate ground-truth box");
  return std::hypot((pred.cx() - gt.cx()) / gt.w, (pred.cy() - gt.cy()) / gt.h);
}
}  // namespace

double normalized_precision_at(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                               double threshold) {
  check_lengths(pred, gt);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (normalized_error(pred[i], gt[i]) < threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double normalized_precision(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  check_lengths(pred, gt);
  double auc = 0.0;
  for (int k = 0; k <= 50; ++k) auc += normalized_precision_at(pred, gt, 0.01 * k);
  return auc / 51.0;
}

MetricScores score_frames(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                          double pr_threshold, std::size_t sequences) {
  check_lengths(pred, gt);
  MetricScores s;
  s.frames = pred.size();
  s.sequences = sequences;
  s.precision = precision_rate(pred, gt, pr_threshold);
  s.success_auc = success_rate_auc(pred, gt);
  s.normalized_precision = normalized_precision(pred, gt);
  s.precision_curve = make_curve(0.0, 1.0, 51);
  for (std::size_t i = 0; i < 51; ++i)
    s.precision_curve.values[i] = precision_rate(pred, gt, s.precision_curve.thresholds[i]);
  s.success_curve = make_curve(0.0, 0.05, 21);
  for (std::size_t i = 0; i < 21; ++i) {
    std::size_t hits = 0;
    for (std::size_t f = 0; f < pred.size(); ++f)
      if (overlap(pred[f], gt[f]) > s.success_curve.thresholds[i]) ++hits;
    s.success_curve.values[i] = static_cast<double>(hits) / static_cast<double>(pred.size());
  }
  s.npr_curve = make_curve(0.0, 0.01, 51);
  for (std::size_t i = 0; i < 51; ++i)
    s.npr_curve.values[i] = normalized_precision_at(pred, gt, s.npr_curve.thresholds[i]);
  return s;
}

MetricScores max_over_modes(const MetricScores& a, const MetricScores& b) {
  if (a.frames != b.frames || a.sequences != b.sequences)
    throw std::invalid_argument("max_over_modes: mismatched sequence sets");
  MetricScores out = a;
  out.precision = std::max(a.precision, b.precision);
  out.success_auc = std::max(a.success_auc, b.success_auc);
  out.normalized_precision = std::max(a.normalized_precision, b.normalized_precision);
  auto max_curve = [](Curve& dst, const Curve& other) {
    for (std::size_t i = 0; i < dst.values.size(); ++i)
      dst.values[i] = std::max(dst.values[i], other.values[i]);
  };
  max_curve(out.precision_curve, b.precision_curve);
  max_curve(out.success_curve, b.success_curve);
  max_curve(out.npr_curve, b.npr_curve);
  return out;
}

MetricReport max_over_modes(const MetricReport& a, const MetricReport& b) {
  if (a.per_attribute.size() != b.per_attribute.size())
    throw std::invalid_argument("max_over_modes: mismatched attribute sets");
  MetricReport out = a;
  out.overall = max_over_modes(a.overall, b.overall);
  for (auto& [attr, scores] : out.per_attribute) {
    auto it = b.per_attribute.find(attr);
    if (it == b.per_attribute.end())
      throw std::invalid_argument("max_over_modes: attribute sets differ");
    scores = max_over_modes(scores, it->second);
  }
  return out;
}

MetricReport attribute_report(const std::vector<Trajectory>& trajectories,
                              const std::map<std::string, std::vector<BBox>>& gt_of,
                              const std::map<std::string, std::string>& attribute_of,
                              double pr_threshold) {
  MetricReport report;
  report.pr_threshold = pr_threshold;

  std::vector<BBox> all_pred, all_gt;
  std::map<std::string, std::pair<std::vector<BBox>, std::vector<BBox>>> per_attr;
  std::map<std::string, std::size_t> seq_count;
  for (const Trajectory& t : trajectories) {
    auto git = gt_of.find(t.clip_id);
    if (git == gt_of.end())
      throw std::invalid_argument("attribute_report: missing ground truth for " + t.clip_id);
    auto ait = attribute_of.find(t.clip_id);
    if (ait == attribute_of.end())
      throw std::invalid_argument("attribute_report: clip without attribute tag: " + t.clip_id);
    if (t.boxes.size() != git->second.size())
      throw std::invalid_argument("attribute_report: trajectory length mismatch for " + t.clip_id);
    all_pred.insert(all_pred.end(), t.boxes.begin(), t.boxes.end());
    all_gt.insert(all_gt.end(), git->second.begin(), git->second.end());
    auto& bucket = per_attr[ait->second];
    bucket.first.insert(bucket.first.end(), t.boxes.begin(), t.boxes.end());
    bucket.second.insert(bucket.second.end(), git->second.begin(), git->second.end());
    seq_count[ait->second] += 1;
  }
  if (all_pred.empty()) throw std::invalid_argument("attribute_report: no trajectories");
  report.overall = score_frames(all_pred, all_gt, pr_threshold, trajectories.size());
  for (const auto& [attr, bucket] : per_attr) {
    if (bucket.first.empty()) {
      report.warnings.push_back("empty attribute subset omitted: " + attr);
      continue;
    }
    report.per_attribute[attr] =
        score_frames(bucket.first, bucket.second, pr_threshold, seq_count[attr]);
  }
  return report;
}

namespace {
json scores_to_json(const MetricScores& s) {
  auto curve = [](const Curve& c) {
    return json{{"thresholds", c.thresholds}, {"values", c.values}};
  };
  return json{{"precision", s.precision},
              {"success_auc", s.success_auc},
              {"normalized_precision", s.normalized_precision},
              {"frames", s.frames},
              {"sequences", s.sequences},
              {"precision_curve", curve(s.precision_curve)},
              {"success_curve", curve(s.success_curve)},
              {"npr_curve", curve(s.npr_curve)}};
}
}  // namespace

std::string report_json(const MetricReport& report) {
  json j;
  j["pr_threshold"] = report.pr_threshold;
  j["overall"] = scores_to_json(report.overall);
  json per;
  for (const auto& [attr, s] : report.per_attribute) per[attr] = scores_to_json(s);
  j["per_attribute"] = per;
  j["warnings"] = report.warnings;
  return j.dump(2);
}

std::string curve_csv(const Curve& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "threshold,value\n";
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    os << curve.thresholds[i] << ',' << curve.values[i] << '\n';
  return os.str();
}

std::string trajectory_text(const Trajectory& t) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < t.boxes.size(); ++i) {
    const BBox& b = t.boxes[i];
    os << i << ' ' << b.x << ' ' << b.y << ' ' << b.w << ' ' << b.h << ' '
       << (i < t.flags.size() ? t.flags[i] : 0) << '\n';
  }
  return os.str();
}

Trajectory trajectory_from_text(const std::string& text, const std::string& clip_id) {
  Trajectory t;
  t.clip_id = clip_id;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t idx;
    BBox b;
    int flag;
    if (!(ls >> idx >> b.x >> b.y >> b.w >> b.h >> flag))
      throw std::runtime_error("trajectory_from_text: malformed line '" + line + "'");
    t.boxes.push_back(b);
    t.flags.push_back(flag);
  }
  return t;
}

}  // namespace ddf
