#include "budgetal/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "budgetal/errors.hpp"

namespace budgetal {

std::vector<Detection> flatten(const std::vector<PredictionSet>& sets) {
  std::vector<Detection> out;
  for (const auto& s : sets) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out.push_back({s.image_id, s.boxes[i], s.classes[i], s.confidences[i]});
    }
  }
  return out;
}

double integrate_pr(const std::vector<double>& recall, const std::vector<double>& precision,
                    Interpolation interpolation) {
  if (interpolation == Interpolation::kElevenPoint) {
    double ap = 0.0;
    for (int i = 0; i <= 10; ++i) {
      const double t = i / 10.0;
      double p = 0.0;
      for (std::size_t k = 0; k < recall.size(); ++k) {
        if (recall[k] >= t) p = std::max(p, precision[k]);
      }
      ap += p;
    }
    return ap / 11.0;
  }
  std::vector<double> mrec = {0.0};
  std::vector<double> mpre = {0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  }
  return ap;
}

namespace {

struct ClassIndex {
  // image id -> gt boxes of this class
  std::unordered_map<std::string, std::vector<Box>> boxes;
  int count = 0;
};

std::vector<ClassIndex> index_ground_truth(const std::vector<ImageRecord>& ground_truth, int num_classes) {
  std::vector<ClassIndex> out(static_cast<std::size_t>(num_classes));
  for (const auto& rec : ground_truth) {
    for (const auto& gt : rec.gt_boxes) {
      auto& ci = out[static_cast<std::size_t>(gt.class_id)];
      ci.boxes[rec.id].push_back(gt.box);
      ++ci.count;
    }
  }
  return out;
}

double class_ap(const std::vector<const Detection*>& dets, const ClassIndex& gt, double iou_threshold,
                Interpolation interpolation) {
  if (gt.count == 0) return 0.0;
  std::unordered_map<std::string, std::vector<bool>> matched;
  for (const auto& [id, boxes] : gt.boxes) matched[id].assign(boxes.size(), false);
  std::vector<double> recall;
  std::vector<double> precision;
  recall.reserve(dets.size());
  precision.reserve(dets.size());
  double tp = 0.0;
  double fp = 0.0;
  for (const Detection* d : dets) {
    bool hit = false;
    auto it = gt.boxes.find(d->image_id);
    if (it != gt.boxes.end()) {
      double best = -1.0;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        const double o = iou(d->box, it->second[j]);
        if (o > best) {
          best = o;
          best_j = j;
        }
      }
      if (best >= iou_threshold) {
        auto& flags = matched[d->image_id];
        if (!flags[best_j]) {
          flags[best_j] = true;
          hit = true;
        }
      }
    }
    (hit ? tp : fp) += 1.0;
    recall.push_back(tp / gt.count);
    precision.push_back(tp / (tp + fp));
  }
  return integrate_pr(recall, precision, interpolation);
}

std::vector<std::vector<const Detection*>> sorted_by_class(const std::vector<Detection>& detections,
                                                          int num_classes) {
  std::vector<std::vector<const Detection*>> out(static_cast<std::size_t>(num_classes));
  for (const auto& d : detections) {
    if (d.class_id < 0 || d.class_id >= num_classes) throw ValidationError("detection class out of range");
    out[static_cast<std::size_t>(d.class_id)].push_back(&d);
  }
  for (auto& v : out) {
    std::stable_sort(v.begin(), v.end(),
                     [](const Detection* l, const Detection* r) { return l->confidence > r->confidence; });
  }
  return out;
}

}  // namespace

ClassAp voc_ap(const std::vector<Detection>& detections, const std::vector<ImageRecord>& ground_truth,
               int num_classes, double iou_threshold, Interpolation interpolation) {
  const auto gt = index_ground_truth(ground_truth, num_classes);
  const auto by_class = sorted_by_class(detections, num_classes);
  ClassAp out;
  for (int c = 0; c < num_classes; ++c) {
    const auto& ci = gt[static_cast<std::size_t>(c)];
    out.has_ground_truth.push_back(ci.count > 0);
    out.ap.push_back(class_ap(by_class[static_cast<std::size_t>(c)], ci, iou_threshold, interpolation));
  }
  return out;
}

double mean_ap(const ClassAp& per_class) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t c = 0; c < per_class.ap.size(); ++c) {
    if (!per_class.has_ground_truth[c]) continue;
    sum += per_class.ap[c];
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

std::vector<std::vector<double>> ap_table(const std::vector<Detection>& detections,
                                          const std::vector<ImageRecord>& ground_truth, int num_classes,
                                          const std::vector<double>& thresholds, Interpolation interpolation) {
  const auto gt = index_ground_truth(ground_truth, num_classes);
  const auto by_class = sorted_by_class(detections, num_classes);
  std::vector<std::vector<double>> table(static_cast<std::size_t>(num_classes));
  for (std::size_t c = 0; c < table.size(); ++c) {
    for (double t : thresholds) table[c].push_back(class_ap(by_class[c], gt[c], t, interpolation));
  }
  return table;
}

void BudgetCurve::validate() const {
  if (points.empty()) throw ValidationError("budget curve has no points");
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!(points[i].budget_percent > points[i - 1].budget_percent)) {
      throw ValidationError("budget curve must be strictly increasing in budget");
    }
  }
}

const std::vector<BudgetRange>& standard_ranges() {
  static const std::vector<BudgetRange> ranges = {{10.0, 30.0, "low"}, {30.0, 50.0, "mid"}, {50.0, 100.0, "high"}};
  return ranges;
}

namespace {

std::size_t nearest_checkpoint(const std::vector<CurvePoint>& pts, double target, bool prefer_above) {
  std::size_t best = 0;
  double best_dist = std::abs(pts[0].budget_percent - target);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dist = std::abs(pts[i].budget_percent - target);
    if (dist < best_dist || (dist == best_dist && prefer_above)) {
      best = i;
      best_dist = dist;
    }
  }
  return best;
}

}  // namespace

double budget_average_map(const BudgetCurve& curve, double lo, double hi) {
  curve.validate();
  if (!(hi > lo)) throw ValidationError("budget range must have hi > lo");
  const auto& pts = curve.points;
  const std::size_t first = nearest_checkpoint(pts, lo, true);
  const std::size_t last = nearest_checkpoint(pts, hi, false);
  if (last <= first) throw ValidationError("fewer than two curve points fall in the budget range");
  double area = 0.0;
  for (std::size_t i = first; i < last; ++i) {
    area += (pts[i + 1].budget_percent - pts[i].budget_percent) * 0.5 * (pts[i].map + pts[i + 1].map);
  }
  return area / (pts[last].budget_percent - pts[first].budget_percent);
}

BudgetCurve run_curve(const std::vector<CurveSample>& samples, double full_cost) {
  if (samples.empty()) throw ValidationError("run log is empty");
  if (!(full_cost > 0.0)) throw ValidationError("full annotation cost must be positive");
  BudgetCurve curve;
  for (const auto& s : samples) curve.points.push_back({100.0 * s.spent / full_cost, s.map});
  curve.validate();
  return curve;
}

void write_curve_csv(const BudgetCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "budget_percent,map\n" << std::setprecision(17);
  for (const auto& p : curve.points) out << p.budget_percent << ',' << p.map << '\n';
}

BudgetCurve read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open curve file " + path.string());
  BudgetCurve curve;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("budget_percent", 0) == 0) continue;
    std::istringstream row(line);
    CurvePoint p;
    char comma = 0;
    if (!(row >> p.budget_percent >> comma >> p.map) || comma != ',') {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected budget_percent,map");
    }
    curve.points.push_back(p);
  }
  curve.validate();
  return curve;
}

nlohmann::json curve_to_json(const BudgetCurve& curve) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : curve.points) pts.push_back({{"budget_percent", p.budget_percent}, {"map", p.map}});
  return pts;
}

const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy:
      return "easy";
    case Difficulty::kMedium:
      return "medium";
    case Difficulty::kHard:
      return "hard";
  }
  return "?";
}

Difficulty difficulty_from_string(const std::string& s) {
  if (s == "easy") return Difficulty::kEasy;
  if (s == "medium") return Difficulty::kMedium;
  if (s == "hard") return Difficulty::kHard;
  throw ConfigError("unknown difficulty group '" + s + "'");
}

Difficulty image_difficulty(const ImageRecord& image, const DifficultyMapping& mapping) {
  std::array<int, 3> votes{};
  for (const auto& gt : image.gt_boxes) {
    if (gt.class_id < 0 || static_cast<std::size_t>(gt.class_id) >= mapping.size()) {
      throw ValidationError("class " + std::to_string(gt.class_id) + " has no difficulty group");
    }
    ++votes[static_cast<std::size_t>(mapping[static_cast<std::size_t>(gt.class_id)])];
  }
  int best = 2;
  for (int g = 2; g >= 0; --g) {
    if (votes[static_cast<std::size_t>(g)] > votes[static_cast<std::size_t>(best)]) best = g;
  }
  return static_cast<Difficulty>(best);
}

std::vector<BreakdownRow> difficulty_breakdown(const std::vector<ActionRecord>& actions_log,
                                               const DifficultyMapping& mapping, const Dataset& dataset,
                                               const CostModel& cost) {
  if (static_cast<int>(mapping.size()) != dataset.num_classes()) {
    throw ValidationError("difficulty mapping must cover every class");
  }
  std::map<int, std::array<BreakdownRow, 9>> steps;
  for (const auto& rec : actions_log) {
    auto [it, inserted] = steps.try_emplace(rec.step);
    if (inserted) {
      for (int g = 0; g < 3; ++g) {
        for (int a = 0; a < 3; ++a) {
          it->second[static_cast<std::size_t>(3 * g + a)] = {rec.step, static_cast<Difficulty>(g),
                                                             static_cast<Action>(a), 0.0, 0};
        }
      }
    }
    const auto group = image_difficulty(dataset.image(rec.image_id), mapping);
    auto& cell = it->second[static_cast<std::size_t>(3 * static_cast<int>(group) + static_cast<int>(rec.action))];
    ++cell.count;
  }
  std::vector<BreakdownRow> out;
  for (auto& [step, cells] : steps) {
    for (auto& cell : cells) {
      const double unit = cell.action == Action::kWeak ? cost.weak : cell.action == Action::kStrong ? cost.strong : cost.upgrade;
      cell.cost = unit * cell.count;
    }
    out.insert(out.end(), cells.begin(), cells.end());
  }
  return out;
}

void write_breakdown_csv(const std::vector<BreakdownRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "step,group,annotation,cost,count\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.step << ',' << to_string(r.group) << ',' << to_string(r.action) << ',' << r.cost << ',' << r.count << '\n';
  }
}

nlohmann::json breakdown_to_json(const std::vector<BreakdownRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"step", r.step},
                   {"group", to_string(r.group)},
                   {"annotation", to_string(r.action)},
                   {"cost", r.cost},
                   {"count", r.count}});
  }
  return out;
}

}  // namespace budgetal
