#include "budgetal/scoring.hpp"

#include <cmath>

#include "budgetal/errors.hpp"

namespace budgetal {

UncertaintyScore uncertainty(const PredictionSet& preds, int num_classes) {
  if (num_classes < 2) throw ValidationError("uncertainty needs at least two classes");
  UncertaintyScore out{preds.image_id, 0.0};
  if (preds.empty()) {
    out.value = std::log(static_cast<double>(num_classes));
    return out;
  }
  double total = 0.0;
  for (const auto& p : preds.class_probs) {
    for (double v : p) {
      if (v > 0.0) total -= v * std::log(v);
    }
  }
  out.value = total / static_cast<double>(preds.size());
  return out;
}

ModelState model_state(const std::vector<std::vector<double>>& ap_table) {
  ModelState out;
  out.values.reserve(ap_table.size() * kStateIouThresholds.size());
  for (const auto& row : ap_table) {
    if (row.size() != kStateIouThresholds.size()) {
      throw ValidationError("model_state: each AP row needs one entry per IoU threshold");
    }
    for (double v : row) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("model_state: AP entries must lie in [0, 1]");
      out.values.push_back(v);
    }
  }
  return out;
}

std::vector<double> lal_features(const ModelState& state, const UncertaintyScore& score) {
  std::vector<double> v = state.values;
  v.push_back(score.value);
  return v;
}

}  // namespace budgetal
