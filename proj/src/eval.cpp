#include "udock/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "udock/detector.hpp"
#include "udock/errors.hpp"

namespace udock::eval {

DetectionLabel label_detection(const Box& pred_box,
                               const std::optional<Box>& gt_box,
                               double iou_threshold) {
  if (!gt_box) return DetectionLabel::Negative;
  return detector::iou(pred_box, *gt_box) >= iou_threshold
             ? DetectionLabel::PositiveCorrect
             : DetectionLabel::PositiveWrong;
}

namespace {

struct Scored {
  double confidence;
  DetectionLabel label;
};

std::vector<Scored> score_all(const std::vector<ScoredDetection>& detections,
                              double iou_threshold, long& n_pos, long& n_neg) {
  std::vector<Scored> scored;
  scored.reserve(detections.size());
  n_pos = n_neg = 0;
  for (const ScoredDetection& d : detections) {
    if (!std::isfinite(d.confidence))
      throw PreconditionViolation("roc: non-finite confidence");
    const DetectionLabel label =
        label_detection(d.predicted_box, d.gt_box, iou_threshold);
    if (d.gt_box)
      ++n_pos;
    else
      ++n_neg;
    scored.push_back({d.confidence, label});
  }
  if (n_pos == 0 || n_neg == 0) throw DegenerateLabels();
  return scored;
}

ConfusionCounts count_at_threshold(const std::vector<Scored>& scored,
                                   double threshold) {
  ConfusionCounts c;
  for (const Scored& s : scored) {
    const bool fires = s.confidence >= threshold;
    switch (s.label) {
      case DetectionLabel::PositiveCorrect:
        fires ? ++c.tp : ++c.fn;
        break;
      case DetectionLabel::PositiveWrong:
        fires ? ++c.fp : ++c.fn;
        break;
      case DetectionLabel::Negative:
        fires ? ++c.fp : ++c.tn;
        break;
    }
  }
  return c;
}

}  // namespace

RocCurve roc_curve(const std::vector<ScoredDetection>& detections,
                   double iou_threshold) {
  RocCurve curve;
  const std::vector<Scored> scored =
      score_all(detections, iou_threshold, curve.n_pos, curve.n_neg);

  std::vector<double> thresholds;
  thresholds.reserve(scored.size() + 2);
  thresholds.push_back(std::numeric_limits<double>::infinity());
  for (const Scored& s : scored) thresholds.push_back(s.confidence);
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  std::sort(thresholds.begin(), thresholds.end(),
            [](double a, double b) { return a > b; });
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  curve.points.reserve(thresholds.size());
  for (double t : thresholds) {
    RocPoint p;
    p.threshold = t;
    p.counts = count_at_threshold(scored, t);
    const long pos = p.counts.tp + p.counts.fn;
    const long neg = p.counts.fp + p.counts.tn;
    p.tpr = pos > 0 ? static_cast<double>(p.counts.tp) / pos : 0.0;
    p.fpr = neg > 0 ? static_cast<double>(p.counts.fp) / neg : 0.0;
    curve.points.push_back(p);
  }

  // trapezoid over the FPR-sorted sweep; threshold order already gives
  // nondecreasing FPR
  double auc = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  curve.auc = auc;
  return curve;
}

double mann_whitney_auc(const std::vector<ScoredDetection>& detections,
                        double iou_threshold) {
  long n_pos = 0, n_neg = 0;
  const std::vector<Scored> scored =
      score_all(detections, iou_threshold, n_pos, n_neg);
  // positives that fire as FP never enter TPR as successes, so the pairwise
  // statistic compares correct positives against everything negative-like
  double wins = 0.0;
  long pairs = 0;
  for (const Scored& p : scored) {
    if (p.label == DetectionLabel::Negative ||
        p.label == DetectionLabel::PositiveWrong)
      continue;
    for (const Scored& n : scored) {
      if (n.label != DetectionLabel::Negative) continue;
      ++pairs;
      if (p.confidence > n.confidence)
        wins += 1.0;
      else if (p.confidence == n.confidence)
        wins += 0.5;
    }
  }
  if (pairs == 0) throw DegenerateLabels();
  return wins / static_cast<double>(pairs);
}

PoseErrorStats pose_errors(
    const std::vector<std::pair<Pose, Pose>>& estimated_true) {
  if (estimated_true.empty())
    throw PreconditionViolation("pose_errors: no trials");
  PoseErrorStats stats;
  stats.orientation_deg.reserve(estimated_true.size());
  stats.position_mm.reserve(estimated_true.size());
  for (const auto& [est, truth] : estimated_true) {
    stats.orientation_deg.push_back(
        rotation_angle_deg(est.rotation, truth.rotation));
    stats.position_mm.push_back((est.translation - truth.translation).norm());
    try {
      stats.euler_delta_deg.push_back(est.euler_deg() - truth.euler_deg());
    } catch (const GimbalLock&) {
      // per-axis deltas undefined near the singularity; skip the record
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  stats.mean_orientation_deg = mean(stats.orientation_deg);
  stats.median_orientation_deg = median(stats.orientation_deg);
  stats.mean_position_mm = mean(stats.position_mm);
  stats.median_position_mm = median(stats.position_mm);
  return stats;
}

void write_roc_csv(const RocCurve& curve, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoFailure("cannot open for write: " + path);
  f << "# schema_version=1\n";
  f << "threshold,TP,FP,TN,FN,TPR,FPR\n";
  f.precision(17);
  for (const RocPoint& p : curve.points) {
    f << p.threshold << "," << p.counts.tp << "," << p.counts.fp << ","
      << p.counts.tn << "," << p.counts.fn << "," << p.tpr << "," << p.fpr
      << "\n";
  }
  if (!f) throw IoFailure("write failed: " + path);
}

void write_roc_summary_json(const RocCurve& curve, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoFailure("cannot open for write: " + path);
  f.precision(17);
  f << "{\"schema_version\":1,\"auc\":" << curve.auc
    << ",\"n_pos\":" << curve.n_pos << ",\"n_neg\":" << curve.n_neg << "}\n";
  if (!f) throw IoFailure("write failed: " + path);
}

}  // namespace udock::eval
