#pragma once

#include <array>
#include <string>
#include <vector>

#include "budgetal/detector.hpp"

namespace budgetal {

// IoU thresholds at which per-class AP forms the model-state vector.
inline constexpr std::array<double, 5> kStateIouThresholds = {0.5, 0.6, 0.7, 0.8, 0.9};

struct UncertaintyScore {
  std::string image_id;
  double value = 0.0;  // nats
};

// Mean over boxes of the classification entropy (natural log, 0 ln 0 = 0).
// An image with no predictions gets the maximum, ln C.
UncertaintyScore uncertainty(const PredictionSet& preds, int num_classes);

// Row-major flattening of a C x 5 table of per-class AP at kStateIouThresholds.
struct ModelState {
  std::vector<double> values;

  int num_classes() const { return static_cast<int>(values.size() / kStateIouThresholds.size()); }
};

ModelState model_state(const std::vector<std::vector<double>>& ap_table);

// [state..., s]
std::vector<double> lal_features(const ModelState& state, const UncertaintyScore& score);

}  // namespace budgetal
