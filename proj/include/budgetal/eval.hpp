#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "budgetal/dataset.hpp"
#include "budgetal/detector.hpp"
#include "json.hpp"

namespace budgetal {

struct Detection {
  std::string image_id;
  Box box;
  int class_id = 0;
  double confidence = 0.0;
};

std::vector<Detection> flatten(const std::vector<PredictionSet>& sets);

enum class Interpolation { kElevenPoint, kAllPoint };

struct ClassAp {
  std::vector<double> ap;
  std::vector<bool> has_ground_truth;
};

// VOC protocol: per class, detections by descending confidence are matched
// greedily to the best-overlapping unmatched ground truth of their image
// (IoU >= threshold); a second hit on a matched box is a false positive.
ClassAp voc_ap(const std::vector<Detection>& detections, const std::vector<ImageRecord>& ground_truth,
               int num_classes, double iou_threshold, Interpolation interpolation = Interpolation::kElevenPoint);

// Area under a precision/recall curve given in detection-rank order.
double integrate_pr(const std::vector<double>& recall, const std::vector<double>& precision,
                    Interpolation interpolation);

// Mean over classes that have ground truth.
double mean_ap(const ClassAp& per_class);

// One row per class, one column per threshold.
std::vector<std::vector<double>> ap_table(const std::vector<Detection>& detections,
                                          const std::vector<ImageRecord>& ground_truth, int num_classes,
                                          const std::vector<double>& thresholds, Interpolation interpolation);

struct CurvePoint {
  double budget_percent = 0.0;
  double map = 0.0;
};

struct BudgetCurve {
  std::vector<CurvePoint> points;

  void validate() const;
};

struct BudgetRange {
  double lo = 0.0;
  double hi = 0.0;
  std::string name;
};

// Low, mid and high budget ranges, in percent.
const std::vector<BudgetRange>& standard_ranges();

// Normalized trapezoidal area of the curve between the sampled checkpoints
// nearest to lo and hi (ties go to the checkpoint inside the range).
// Throws ValidationError when both ends resolve to the same checkpoint.
double budget_average_map(const BudgetCurve& curve, double lo, double hi);

struct CurveSample {
  double spent = 0.0;
  double map = 0.0;
};

// budget_percent = 100 * spent / full_cost.
BudgetCurve run_curve(const std::vector<CurveSample>& samples, double full_cost);

void write_curve_csv(const BudgetCurve& curve, const std::filesystem::path& path);
BudgetCurve read_curve_csv(const std::filesystem::path& path);
nlohmann::json curve_to_json(const BudgetCurve& curve);

enum class Difficulty { kEasy = 0, kMedium = 1, kHard = 2 };

const char* to_string(Difficulty d);
Difficulty difficulty_from_string(const std::string& s);

// Class id -> group.
using DifficultyMapping = std::vector<Difficulty>;

// Majority group over the image's boxes; ties go to the harder group.
Difficulty image_difficulty(const ImageRecord& image, const DifficultyMapping& mapping);

struct BreakdownRow {
  int step = 0;
  Difficulty group = Difficulty::kEasy;
  Action action = Action::kWeak;
  double cost = 0.0;
  int count = 0;
};

// Nine rows (group x action) per step present in the log, in step order.
std::vector<BreakdownRow> difficulty_breakdown(const std::vector<ActionRecord>& actions_log,
                                               const DifficultyMapping& mapping, const Dataset& dataset,
                                               const CostModel& cost);

void write_breakdown_csv(const std::vector<BreakdownRow>& rows, const std::filesystem::path& path);
nlohmann::json breakdown_to_json(const std::vector<BreakdownRow>& rows);

}  // namespace budgetal
