#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "budgetal/dataset.hpp"
#include "budgetal/detector.hpp"
#include "budgetal/geometry.hpp"

namespace budgetal {

struct MinerParams {
  double alpha = 0.3;  // max IoU between kept boxes of one class
  int beta = 3;        // max pseudo labels per image
  double min_confidence = kMinPositiveConfidence;
};

struct PseudoLabelSet {
  std::string image_id;
  std::vector<std::size_t> selected;  // indices into the source PredictionSet
  std::vector<Box> boxes;
  std::vector<int> classes;
  std::vector<double> confidences;
  // Set when no prediction agreed with the weak label.
  bool no_consistent_prediction = false;
};

// Greedy per-class NMS: within each class the highest-confidence box is kept
// and boxes overlapping a kept one by IoU > alpha are suppressed. Returns
// kept indices in descending confidence order (ties by index).
std::vector<std::size_t> nms_per_class(const PredictionSet& preds, double alpha);

// Noise cleaning of teacher predictions against an image's weak label:
// drop classes absent from the weak label, per-class NMS at alpha, then keep
// the beta most confident survivors.
PseudoLabelSet mine_pseudo_labels(const PredictionSet& preds, const std::vector<std::uint8_t>& weak_label,
                                  const MinerParams& params = {});

// Per-class gt box counts over a set of images.
std::vector<double> class_counts(const Dataset& dataset, const std::set<std::string>& ids);

struct HybridRoundResult {
  std::shared_ptr<const Detector> teacher;
  std::shared_ptr<const Detector> student;
  std::vector<double> strong_counts;
  std::vector<double> pseudo_counts;
  std::map<std::string, PseudoLabelSet> pseudo_labels;
};

// Teacher on S, mine pseudo labels on W, student on S plus pseudo labels.
// Throws ValidationError when S is empty.
HybridRoundResult hybrid_round(const Dataset& dataset, const PoolState& pools, const DetectorBackend& backend,
                               const MinerParams& params = {});

// Copy of the W images with their mined boxes as "pseudo" annotations.
Dataset export_pseudo_labels(const Dataset& dataset, const std::map<std::string, PseudoLabelSet>& labels);

}  // namespace budgetal
