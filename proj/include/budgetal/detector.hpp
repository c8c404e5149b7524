#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "budgetal/dataset.hpp"
#include "budgetal/geometry.hpp"
#include "json.hpp"

namespace budgetal {

// Detector output for one image. classes/confidences are the argmax/max of
// class_probs and are kept consistent by make_prediction_set.
struct PredictionSet {
  std::string image_id;
  std::vector<Box> boxes;
  std::vector<int> classes;
  std::vector<double> confidences;
  std::vector<std::vector<double>> class_probs;

  std::size_t size() const { return boxes.size(); }
  bool empty() const { return boxes.empty(); }
  // Throws ValidationError naming the image if an invariant is broken.
  void validate(int num_classes, double sum_tolerance = 1e-9) const;
};

// Builds a set from boxes and per-box probability vectors, deriving the
// class assignment and confidence.
PredictionSet make_prediction_set(std::string image_id, std::vector<Box> boxes,
                                  std::vector<std::vector<double>> class_probs);

// Keeps only predictions with confidence >= min_confidence.
PredictionSet filter_by_confidence(const PredictionSet& preds, double min_confidence);

inline constexpr double kMinPositiveConfidence = 0.05;

// Per-class learning-curve parameters of the synthetic detector.
struct SyntheticDetectorParams {
  std::vector<double> max_skill;  // sigma_max per class, in [0, 1]
  std::vector<double> tau;        // saturation scale per class, > 0
  double pseudo_weight = 0.5;     // w in (0, 1]
  double noise_scale = 0.25;
  double false_positive_rate = 1.5;
  // Upper bound of the random reduction of true-class mass at low skill.
  double confusion = 0.4;
  std::uint64_t seed = 0;

  // Defaults for C classes: skills and time constants spread so that some
  // classes are easy (fast, high ceiling) and some hard.
  static SyntheticDetectorParams defaults(int num_classes, std::uint64_t seed);
  int num_classes() const { return static_cast<int>(max_skill.size()); }
  void validate() const;
};

nlohmann::json to_json(const SyntheticDetectorParams& params);
SyntheticDetectorParams synthetic_params_from_json(const nlohmann::json& j, int num_classes, std::uint64_t seed);

struct SyntheticDetectorModel {
  std::vector<double> skill;  // sigma_c
  double noise_scale = 0.0;
  double false_positive_rate = 0.0;
  double confusion = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t version = 0;

  double mean_skill() const;
};

// sigma_c = sigma_max,c * (1 - exp(-(n_strong,c + w * n_pseudo,c) / tau_c)).
SyntheticDetectorModel train_synthetic(const std::vector<double>& strong_counts,
                                       const std::vector<double>& pseudo_counts,
                                       const SyntheticDetectorParams& params);

// Deterministic per (model seed, image id, model version). Random draws are
// keyed by image and box only, so a better model sees the same draws.
PredictionSet predict(const SyntheticDetectorModel& model, const ImageRecord& image);

// Reads the prediction JSON schema. Images listed in image_ids but absent
// from the file map to empty sets. Predictions below kMinPositiveConfidence
// are dropped after validation.
std::map<std::string, PredictionSet> ingest_predictions(const std::filesystem::path& path, int num_classes,
                                                        const std::vector<std::string>& image_ids = {});
std::map<std::string, PredictionSet> parse_predictions(const nlohmann::json& doc, int num_classes,
                                                       const std::vector<std::string>& image_ids = {});
nlohmann::json predictions_to_json(const std::vector<PredictionSet>& sets);

// What a detector is trained on: per-class instance counts.
struct TrainingSummary {
  std::vector<double> strong_counts;
  std::vector<double> pseudo_counts;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual PredictionSet predict(const ImageRecord& image) const = 0;
  // Scalar summary of model quality, if the backend has one.
  virtual double mean_skill() const { return 0.0; }
};

class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual std::shared_ptr<const Detector> train(const TrainingSummary& summary) const = 0;
};

class SyntheticDetector : public Detector {
 public:
  explicit SyntheticDetector(SyntheticDetectorModel model) : model_(std::move(model)) {}
  PredictionSet predict(const ImageRecord& image) const override { return budgetal::predict(model_, image); }
  double mean_skill() const override { return model_.mean_skill(); }
  const SyntheticDetectorModel& model() const { return model_; }

 private:
  SyntheticDetectorModel model_;
};

class SyntheticBackend : public DetectorBackend {
 public:
  explicit SyntheticBackend(SyntheticDetectorParams params) : params_(std::move(params)) { params_.validate(); }
  std::shared_ptr<const Detector> train(const TrainingSummary& summary) const override;
  const SyntheticDetectorParams& params() const { return params_; }

 private:
  SyntheticDetectorParams params_;
};

// Serves fixed predictions from an external detector regardless of what it
// is "trained" on.
class PredictionFileBackend : public DetectorBackend {
 public:
  explicit PredictionFileBackend(std::map<std::string, PredictionSet> predictions);
  std::shared_ptr<const Detector> train(const TrainingSummary& summary) const override;

 private:
  std::shared_ptr<const Detector> detector_;
};

}  // namespace budgetal
