#include "budgetal/pseudo.hpp"

#include <algorithm>
#include <numeric>

#include "budgetal/errors.hpp"

namespace budgetal {

std::vector<std::size_t> nms_per_class(const PredictionSet& preds, double alpha) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return preds.confidences[l] > preds.confidences[r]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (preds.classes[k] == preds.classes[i] && iou(preds.boxes[k], preds.boxes[i]) > alpha) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

PseudoLabelSet mine_pseudo_labels(const PredictionSet& preds, const std::vector<std::uint8_t>& weak_label,
                                  const MinerParams& params) {
  PseudoLabelSet out;
  out.image_id = preds.image_id;
  PredictionSet consistent;
  consistent.image_id = preds.image_id;
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto c = static_cast<std::size_t>(preds.classes[i]);
    if (c >= weak_label.size() || weak_label[c] == 0) continue;
    if (preds.confidences[i] < params.min_confidence) continue;
    consistent.boxes.push_back(preds.boxes[i]);
    consistent.classes.push_back(preds.classes[i]);
    consistent.confidences.push_back(preds.confidences[i]);
    source.push_back(i);
  }
  if (consistent.empty()) {
    out.no_consistent_prediction = true;
    return out;
  }
  auto kept = nms_per_class(consistent, params.alpha);
  if (static_cast<int>(kept.size()) > params.beta) kept.resize(static_cast<std::size_t>(std::max(params.beta, 0)));
  for (std::size_t k : kept) {
    out.selected.push_back(source[k]);
    out.boxes.push_back(consistent.boxes[k]);
    out.classes.push_back(consistent.classes[k]);
    out.confidences.push_back(consistent.confidences[k]);
  }
  return out;
}

std::vector<double> class_counts(const Dataset& dataset, const std::set<std::string>& ids) {
  std::vector<double> counts(static_cast<std::size_t>(dataset.num_classes()), 0.0);
  for (const auto& id : ids) {
    for (const auto& gt : dataset.image(id).gt_boxes) counts[static_cast<std::size_t>(gt.class_id)] += 1.0;
  }
  return counts;
}

HybridRoundResult hybrid_round(const Dataset& dataset, const PoolState& pools, const DetectorBackend& backend,
                               const MinerParams& params) {
  if (pools.strong.empty()) throw ValidationError("hybrid_round: no strongly labeled images to train a teacher");
  HybridRoundResult out;
  out.strong_counts = class_counts(dataset, pools.strong);
  out.pseudo_counts.assign(out.strong_counts.size(), 0.0);
  out.teacher = backend.train({out.strong_counts, out.pseudo_counts});
  for (const auto& id : pools.weak) {
    const auto& image = dataset.image(id);
    auto labels = mine_pseudo_labels(out.teacher->predict(image), image.weak_label, params);
    for (int c : labels.classes) out.pseudo_counts[static_cast<std::size_t>(c)] += 1.0;
    out.pseudo_labels.emplace(id, std::move(labels));
  }
  out.student = pools.weak.empty() ? out.teacher : backend.train({out.strong_counts, out.pseudo_counts});
  return out;
}

Dataset export_pseudo_labels(const Dataset& dataset, const std::map<std::string, PseudoLabelSet>& labels) {
  Dataset out;
  out.classes = dataset.classes;
  for (const auto& [id, set] : labels) {
    const auto& src = dataset.image(id);
    ImageRecord rec;
    rec.id = id;
    rec.width = src.width;
    rec.height = src.height;
    for (std::size_t i = 0; i < set.boxes.size(); ++i) rec.gt_boxes.push_back({set.boxes[i], set.classes[i], true});
    derive_weak_label(rec, dataset.num_classes());
    out.images.push_back(std::move(rec));
  }
  out.reindex();
  return out;
}

}  // namespace budgetal
