#pragma once

#include <optional>
#include <string>
#include <vector>

#include "udock/geometry.hpp"
#include "udock/scene.hpp"

namespace udock::eval {

struct ScoredDetection {
  std::string id;
  Box predicted_box;            // normalized
  double confidence = 0.0;
  std::optional<Box> gt_box;    // absent for background samples
};

enum class DetectionLabel { PositiveCorrect, PositiveWrong, Negative };

/// Classifies one detection against its ground truth: a foreground sample is
/// correct when the boxes overlap with IoU >= iou_threshold; background
/// samples are negatives.
DetectionLabel label_detection(const Box& pred_box,
                               const std::optional<Box>& gt_box,
                               double iou_threshold = 0.5);

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
};

struct RocPoint {
  double threshold = 0.0;
  ConfusionCounts counts;
  double tpr = 0.0;
  double fpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // ordered from threshold +inf to -inf
  double auc = 0.0;
  long n_pos = 0;
  long n_neg = 0;
};

/// Sweeps the confidence threshold over every distinct score (plus +/-inf
/// sentinels), counting one unit per sample: a correct foreground detection
/// is TP when it fires and FN when it does not; a wrong-box foreground
/// detection is FP when it fires and FN when it does not; backgrounds are
/// FP/TN. Ties share a threshold. AUC is the trapezoidal area over the
/// FPR-sorted curve. Throws DegenerateLabels when either class is absent.
RocCurve roc_curve(const std::vector<ScoredDetection>& detections,
                   double iou_threshold = 0.5);

/// Probability that a random correct-positive outscores a random negative
/// (ties count half); brute-force pairwise reference for the AUC.
double mann_whitney_auc(const std::vector<ScoredDetection>& detections,
                        double iou_threshold = 0.5);

struct PoseErrorStats {
  double mean_orientation_deg = 0.0;
  double median_orientation_deg = 0.0;
  double mean_position_mm = 0.0;
  double median_position_mm = 0.0;
  std::vector<double> orientation_deg;  // per trial
  std::vector<double> position_mm;
  std::vector<Vector3d> euler_delta_deg;  // per-axis deltas, when defined
};

/// Orientation error is the geodesic angle between the rotations; position
/// error is the Euclidean distance between the translations.
PoseErrorStats pose_errors(
    const std::vector<std::pair<Pose, Pose>>& estimated_true);

/// CSV columns: threshold, TP, FP, TN, FN, TPR, FPR.
void write_roc_csv(const RocCurve& curve, const std::string& path);

/// {"schema_version":1, "auc":..., "n_pos":..., "n_neg":...}
void write_roc_summary_json(const RocCurve& curve, const std::string& path);

}  // namespace udock::eval
