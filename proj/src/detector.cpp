#include "budgetal/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "budgetal/errors.hpp"
#include "budgetal/rng.hpp"

namespace budgetal {

using nlohmann::json;

void PredictionSet::validate(int num_classes, double sum_tolerance) const {
  const std::size_t m = boxes.size();
  auto fail = [&](const std::string& what) { throw ValidationError("predictions for '" + image_id + "': " + what); };
  if (classes.size() != m || confidences.size() != m || class_probs.size() != m) fail("list lengths differ");
  for (std::size_t i = 0; i < m; ++i) {
    const auto& p = class_probs[i];
    if (static_cast<int>(p.size()) != num_classes) fail("class_probs row has wrong length");
    double sum = 0.0;
    for (double v : p) {
      if (!(v >= 0.0) || !std::isfinite(v)) fail("negative or non-finite class probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > sum_tolerance) fail("class_probs row does not sum to 1");
    if (!boxes[i].valid()) fail("degenerate box");
    const auto best = std::max_element(p.begin(), p.end());
    if (classes[i] != static_cast<int>(best - p.begin()) || confidences[i] != *best) {
      fail("class/confidence disagree with class_probs");
    }
  }
}

PredictionSet make_prediction_set(std::string image_id, std::vector<Box> boxes,
                                  std::vector<std::vector<double>> class_probs) {
  PredictionSet out;
  out.image_id = std::move(image_id);
  out.boxes = std::move(boxes);
  out.class_probs = std::move(class_probs);
  if (out.boxes.size() != out.class_probs.size()) {
    throw ValidationError("predictions for '" + out.image_id + "': boxes and class_probs lengths differ");
  }
  for (const auto& p : out.class_probs) {
    if (p.empty()) throw ValidationError("predictions for '" + out.image_id + "': empty class_probs row");
    const auto best = std::max_element(p.begin(), p.end());
    out.classes.push_back(static_cast<int>(best - p.begin()));
    out.confidences.push_back(*best);
  }
  return out;
}

PredictionSet filter_by_confidence(const PredictionSet& preds, double min_confidence) {
  PredictionSet out;
  out.image_id = preds.image_id;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds.confidences[i] < min_confidence) continue;
    out.boxes.push_back(preds.boxes[i]);
    out.classes.push_back(preds.classes[i]);
    out.confidences.push_back(preds.confidences[i]);
    out.class_probs.push_back(preds.class_probs[i]);
  }
  return out;
}

SyntheticDetectorParams SyntheticDetectorParams::defaults(int num_classes, std::uint64_t seed) {
  SyntheticDetectorParams p;
  p.seed = seed;
  for (int k = 0; k < num_classes; ++k) {
    // Golden-ratio stride gives an evenly spread, non-monotone hardness.
    const double hardness = std::fmod(0.5 + 0.6180339887498949 * k, 1.0);
    p.max_skill.push_back(0.97 - 0.25 * hardness);
    p.tau.push_back(4.0 + 20.0 * hardness);
  }
  return p;
}

void SyntheticDetectorParams::validate() const {
  if (max_skill.size() != tau.size()) throw ConfigError("detector: max_skill and tau lengths differ");
  for (double s : max_skill) {
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("detector: max_skill must lie in [0, 1]");
  }
  for (double t : tau) {
    if (!(t > 0.0)) throw ConfigError("detector: tau must be positive");
  }
  if (!(pseudo_weight > 0.0 && pseudo_weight <= 1.0)) throw ConfigError("detector: pseudo_weight must lie in (0, 1]");
  if (!(noise_scale >= 0.0) || !(false_positive_rate >= 0.0)) {
    throw ConfigError("detector: noise_scale and false_positive_rate must be >= 0");
  }
  if (!(confusion >= 0.0 && confusion <= 1.0)) throw ConfigError("detector: confusion must lie in [0, 1]");
}

json to_json(const SyntheticDetectorParams& p) {
  return {{"max_skill", p.max_skill},        {"tau", p.tau},
          {"pseudo_weight", p.pseudo_weight}, {"noise_scale", p.noise_scale},
          {"false_positive_rate", p.false_positive_rate}, {"confusion", p.confusion},
          {"seed", p.seed}};
}

SyntheticDetectorParams synthetic_params_from_json(const json& j, int num_classes, std::uint64_t seed) {
  auto p = SyntheticDetectorParams::defaults(num_classes, seed);
  if (j.is_null()) return p;
  try {
    if (j.contains("max_skill")) p.max_skill = j.at("max_skill").get<std::vector<double>>();
    if (j.contains("tau")) p.tau = j.at("tau").get<std::vector<double>>();
    p.pseudo_weight = j.value("pseudo_weight", p.pseudo_weight);
    p.noise_scale = j.value("noise_scale", p.noise_scale);
    p.false_positive_rate = j.value("false_positive_rate", p.false_positive_rate);
    p.confusion = j.value("confusion", p.confusion);
    p.seed = j.value("seed", p.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("detector params: ") + e.what());
  }
  if (p.num_classes() != num_classes) throw ConfigError("detector params: per-class arrays must have one entry per class");
  p.validate();
  return p;
}

double SyntheticDetectorModel::mean_skill() const {
  if (skill.empty()) return 0.0;
  return std::accumulate(skill.begin(), skill.end(), 0.0) / static_cast<double>(skill.size());
}

SyntheticDetectorModel train_synthetic(const std::vector<double>& strong_counts,
                                       const std::vector<double>& pseudo_counts,
                                       const SyntheticDetectorParams& params) {
  const auto num_classes = static_cast<std::size_t>(params.num_classes());
  if (strong_counts.size() != num_classes || pseudo_counts.size() != num_classes) {
    throw ValidationError("train_synthetic: count vectors must have one entry per class");
  }
  SyntheticDetectorModel model;
  model.noise_scale = params.noise_scale;
  model.false_positive_rate = params.false_positive_rate;
  model.confusion = params.confusion;
  model.seed = params.seed;
  std::uint64_t version = 0x5eed;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (strong_counts[c] < 0.0 || pseudo_counts[c] < 0.0) throw ValidationError("train_synthetic: negative count");
    const double effective = strong_counts[c] + params.pseudo_weight * pseudo_counts[c];
    const double sigma = params.max_skill[c] * (1.0 - std::exp(-effective / params.tau[c]));
    model.skill.push_back(sigma);
    version = mix_seed(version, std::bit_cast<std::uint64_t>(sigma));
  }
  model.version = version;
  return model;
}

namespace {

Box jitter_box(const Box& gt, double magnitude, int width, int height, Rng& rng) {
  const double w = gt.width();
  const double h = gt.height();
  Box b{gt.xmin + rng.normal() * magnitude * w, gt.ymin + rng.normal() * magnitude * h,
        gt.xmax + rng.normal() * magnitude * w, gt.ymax + rng.normal() * magnitude * h};
  if (width > 0) {
    b.xmin = std::clamp(b.xmin, 0.0, static_cast<double>(width));
    b.xmax = std::clamp(b.xmax, 0.0, static_cast<double>(width));
  }
  if (height > 0) {
    b.ymin = std::clamp(b.ymin, 0.0, static_cast<double>(height));
    b.ymax = std::clamp(b.ymax, 0.0, static_cast<double>(height));
  }
  if (!b.valid()) return gt;
  return b;
}

}  // namespace

PredictionSet predict(const SyntheticDetectorModel& model, const ImageRecord& image) {
  const int num_classes = static_cast<int>(model.skill.size());
  // Every gt box and the false-positive draw get their own stream, so two
  // models differing only in skill see the same random numbers.
  const std::uint64_t base = mix_seed(model.seed, fnv1a(image.id));
  std::vector<Box> boxes;
  std::vector<std::vector<double>> probs;

  for (std::size_t k = 0; k < image.gt_boxes.size(); ++k) {
    const auto& gt = image.gt_boxes[k];
    Rng rng(mix_seed(base, k + 1));
    const double sigma = model.skill[static_cast<std::size_t>(gt.class_id)];
    if (!(rng.uniform() < sigma)) continue;
    boxes.push_back(model.noise_scale > 0.0
                        ? jitter_box(gt.box, model.noise_scale * (1.0 - sigma), image.width, image.height, rng)
                        : gt.box);
    // True-class mass runs from 1/C at sigma = 0 to exactly 1 at sigma = 1.
    const double retained = sigma * (1.0 - (1.0 - sigma) * model.confusion * rng.uniform());
    const double true_mass = 1.0 - (1.0 - 1.0 / num_classes) * (1.0 - retained);
    std::vector<double> p(static_cast<std::size_t>(num_classes), 0.0);
    double weight_sum = 0.0;
    for (int j = 0; j < num_classes; ++j) {
      if (j == gt.class_id) continue;
      p[static_cast<std::size_t>(j)] = rng.uniform() + 1e-3;
      weight_sum += p[static_cast<std::size_t>(j)];
    }
    double other_mass = 0.0;
    for (int j = 0; j < num_classes; ++j) {
      if (j == gt.class_id) continue;
      auto& v = p[static_cast<std::size_t>(j)];
      v = weight_sum > 0.0 ? (1.0 - true_mass) * v / weight_sum : 0.0;
      other_mass += v;
    }
    p[static_cast<std::size_t>(gt.class_id)] = 1.0 - other_mass;
    probs.push_back(std::move(p));
  }

  Rng rng(mix_seed(base, 0));
  const int false_positives = rng.poisson(model.false_positive_rate * (1.0 - model.mean_skill()));
  const double img_w = image.width > 0 ? image.width : 500.0;
  const double img_h = image.height > 0 ? image.height : 375.0;
  for (int k = 0; k < false_positives; ++k) {
    const double bw = rng.uniform(0.1, 0.5) * img_w;
    const double bh = rng.uniform(0.1, 0.5) * img_h;
    const double x0 = rng.uniform(0.0, img_w - bw);
    const double y0 = rng.uniform(0.0, img_h - bh);
    boxes.push_back({x0, y0, x0 + bw, y0 + bh});
    std::vector<double> p(static_cast<std::size_t>(num_classes));
    double sum = 0.0;
    for (auto& v : p) {
      v = 1.0 + 0.3 * rng.uniform();
      sum += v;
    }
    for (auto& v : p) v /= sum;
    probs.push_back(std::move(p));
  }
  return make_prediction_set(image.id, std::move(boxes), std::move(probs));
}

std::map<std::string, PredictionSet> parse_predictions(const json& doc, int num_classes,
                                                       const std::vector<std::string>& image_ids) {
  std::map<std::string, PredictionSet> out;
  for (const auto& id : image_ids) out[id].image_id = id;
  try {
    for (const auto& rec : doc.at("predictions")) {
      const auto id = rec.at("image_id").get<std::string>();
      std::vector<Box> boxes;
      for (const auto& b : rec.at("boxes")) {
        const auto v = b.get<std::vector<double>>();
        if (v.size() != 4) throw ValidationError("predictions for '" + id + "': box must have 4 numbers");
        boxes.push_back({v[0], v[1], v[2], v[3]});
      }
      auto probs = rec.at("class_probs").get<std::vector<std::vector<double>>>();
      for (const auto& p : probs) {
        if (static_cast<int>(p.size()) != num_classes) {
          throw ValidationError("predictions for '" + id + "': class_probs row has wrong length");
        }
      }
      auto set = make_prediction_set(id, std::move(boxes), std::move(probs));
      set.validate(num_classes, 1e-6);
      auto& slot = out[id];
      if (!slot.empty()) throw ValidationError("predictions for '" + id + "' listed twice");
      slot = filter_by_confidence(set, kMinPositiveConfidence);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed predictions: ") + e.what());
  }
  return out;
}

std::map<std::string, PredictionSet> ingest_predictions(const std::filesystem::path& path, int num_classes,
                                                        const std::vector<std::string>& image_ids) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open predictions file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("malformed predictions " + path.string() + ": " + e.what());
  }
  return parse_predictions(doc, num_classes, image_ids);
}

json predictions_to_json(const std::vector<PredictionSet>& sets) {
  json preds = json::array();
  for (const auto& s : sets) {
    json boxes = json::array();
    for (const auto& b : s.boxes) boxes.push_back(b.to_array());
    preds.push_back({{"image_id", s.image_id}, {"boxes", std::move(boxes)}, {"class_probs", s.class_probs}});
  }
  return {{"predictions", std::move(preds)}};
}

std::shared_ptr<const Detector> SyntheticBackend::train(const TrainingSummary& summary) const {
  return std::make_shared<SyntheticDetector>(train_synthetic(summary.strong_counts, summary.pseudo_counts, params_));
}

namespace {

class FixedPredictions : public Detector {
 public:
  explicit FixedPredictions(std::map<std::string, PredictionSet> preds) : preds_(std::move(preds)) {}
  PredictionSet predict(const ImageRecord& image) const override {
    auto it = preds_.find(image.id);
    if (it == preds_.end()) {
      PredictionSet empty;
      empty.image_id = image.id;
      return empty;
    }
    return it->second;
  }

 private:
  std::map<std::string, PredictionSet> preds_;
};

}  // namespace

PredictionFileBackend::PredictionFileBackend(std::map<std::string, PredictionSet> predictions)
    : detector_(std::make_shared<FixedPredictions>(std::move(predictions))) {}

std::shared_ptr<const Detector> PredictionFileBackend::train(const TrainingSummary&) const { return detector_; }

}  // namespace budgetal
