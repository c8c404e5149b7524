#include "budgetal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "budgetal/errors.hpp"
#include "budgetal/rng.hpp"

namespace budgetal {

using nlohmann::json;

void derive_weak_label(ImageRecord& image, int num_classes) {
  image.weak_label.assign(static_cast<std::size_t>(num_classes), 0);
  for (const auto& gt : image.gt_boxes) image.weak_label[static_cast<std::size_t>(gt.class_id)] = 1;
}

const ImageRecord& Dataset::image(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown image id '" + id + "'");
  return images[it->second];
}

void Dataset::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!index_.emplace(images[i].id, i).second) {
      throw ValidationError("duplicate image id '" + images[i].id + "'");
    }
  }
}

Dataset parse_dataset(const json& doc) {
  Dataset out;
  try {
    out.classes = doc.at("classes").get<std::vector<std::string>>();
    const int num_classes = static_cast<int>(out.classes.size());
    if (num_classes < 1) throw ValidationError("dataset declares no classes");
    for (const auto& item : doc.at("images")) {
      ImageRecord rec;
      rec.id = item.at("id").get<std::string>();
      rec.width = item.value("width", 0);
      rec.height = item.value("height", 0);
      for (const auto& b : item.at("boxes")) {
        GroundTruthBox gt;
        const auto xyxy = b.at("xyxy").get<std::vector<double>>();
        if (xyxy.size() != 4) throw ValidationError("image '" + rec.id + "': xyxy must have 4 numbers");
        gt.box = {xyxy[0], xyxy[1], xyxy[2], xyxy[3]};
        gt.class_id = b.at("class").get<int>();
        gt.pseudo = b.value("pseudo", false);
        if (!gt.box.valid()) throw ValidationError("image '" + rec.id + "': degenerate box");
        if (gt.class_id < 0 || gt.class_id >= num_classes) {
          throw ValidationError("image '" + rec.id + "': class_id " + std::to_string(gt.class_id) +
                                " out of range");
        }
        rec.gt_boxes.push_back(gt);
      }
      derive_weak_label(rec, num_classes);
      out.images.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset: ") + e.what());
  }
  out.reindex();
  return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("malformed dataset " + path.string() + ": " + e.what());
  }
  return parse_dataset(doc);
}

json dataset_to_json(const Dataset& dataset) {
  json images = json::array();
  for (const auto& rec : dataset.images) {
    json boxes = json::array();
    for (const auto& gt : rec.gt_boxes) {
      json b = {{"xyxy", gt.box.to_array()}, {"class", gt.class_id}};
      if (gt.pseudo) b["pseudo"] = true;
      boxes.push_back(std::move(b));
    }
    images.push_back({{"id", rec.id}, {"width", rec.width}, {"height", rec.height}, {"boxes", std::move(boxes)}});
  }
  return {{"classes", dataset.classes}, {"images", std::move(images)}};
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << dataset_to_json(dataset).dump(1) << '\n';
}

CostModel CostModel::make(double strong, double weak, double total_budget, double step_fraction) {
  CostModel m;
  m.strong = strong;
  m.weak = weak;
  m.upgrade = strong - weak;
  m.total_budget = total_budget;
  m.step_budget = step_fraction * total_budget;
  return m;
}

void CostModel::validate() const {
  if (!(strong > 0 && weak > 0 && upgrade > 0 && total_budget > 0 && step_budget > 0)) {
    throw ConfigError("cost model: all costs and budgets must be positive");
  }
  if (!(strong > weak)) throw ConfigError("cost model: strong cost must exceed weak cost");
  if (!(step_budget > strong)) throw ConfigError("cost model: step budget must exceed one strong annotation");
}

const char* to_string(Action action) {
  switch (action) {
    case Action::kWeak:
      return "weak";
    case Action::kStrong:
      return "strong";
    case Action::kUpgrade:
      return "upgrade";
  }
  return "?";
}

double SelectionPlan::cost(const CostModel& model) const {
  return model.strong * static_cast<double>(strong.size()) + model.weak * static_cast<double>(weak.size()) +
         model.upgrade * static_cast<double>(upgrade.size());
}

json plan_to_json(const SelectionPlan& plan) {
  json j = {{"strong", plan.strong}, {"weak", plan.weak}, {"upgrade", plan.upgrade}};
  if (plan.terminal) j["terminal"] = true;
  if (plan.rounding_fallback) j["rounding_fallback"] = true;
  if (plan.relaxation == WindowRelaxation::kFinalBudget) j["window"] = "final_budget";
  if (plan.relaxation == WindowRelaxation::kPoolExhausted) j["window"] = "pool_exhausted";
  if (!plan.note.empty()) j["note"] = plan.note;
  return j;
}

PoolInit init_pools(const Dataset& dataset, const CostModel& cost, double warmup_fraction, std::uint64_t seed) {
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction must lie in (0, 1)");
  }
  const double warmup_budget = warmup_fraction * cost.total_budget;
  const auto count = static_cast<std::size_t>(std::floor(warmup_budget / cost.strong + kBudgetTolerance));
  if (count == 0) throw ConfigError("warm-up budget is smaller than one strong annotation");

  std::vector<std::string> ids;
  ids.reserve(dataset.images.size());
  for (const auto& rec : dataset.images) ids.push_back(rec.id);
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);

  PoolInit out;
  const std::size_t take = std::min(count, ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i < take) {
      out.pools.strong.insert(ids[i]);
      out.ledger.actions_log.push_back({0, ids[i], Action::kStrong});
    } else {
      out.pools.unlabeled.insert(ids[i]);
    }
  }
  out.ledger.spent = cost.strong * static_cast<double>(take);
  out.ledger.step_spends.push_back(out.ledger.spent);
  return out;
}

PoolInit apply_plan(const PoolState& pools, const BudgetLedger& ledger, const SelectionPlan& plan,
                    const CostModel& cost, int step_index) {
  std::set<std::string> seen;
  auto claim = [&](const std::string& id) {
    if (!seen.insert(id).second) throw ValidationError("image '" + id + "' appears in more than one action");
  };
  for (const auto& id : plan.strong) {
    claim(id);
    if (!pools.unlabeled.contains(id)) throw ValidationError("strong target '" + id + "' is not unlabeled");
  }
  for (const auto& id : plan.weak) {
    claim(id);
    if (!pools.unlabeled.contains(id)) throw ValidationError("weak target '" + id + "' is not unlabeled");
  }
  for (const auto& id : plan.upgrade) {
    claim(id);
    if (!pools.weak.contains(id)) throw ValidationError("upgrade target '" + id + "' is not weakly labeled");
  }
  const double spend = plan.cost(cost);
  if (ledger.spent + spend > cost.total_budget + kBudgetTolerance) {
    std::ostringstream msg;
    msg << "plan costs " << spend << " s but only " << ledger.remaining(cost) << " s remain";
    throw BudgetExceededError(msg.str());
  }

  PoolInit out{pools, ledger};
  for (const auto& id : plan.strong) {
    out.pools.unlabeled.erase(id);
    out.pools.strong.insert(id);
    out.ledger.actions_log.push_back({step_index, id, Action::kStrong});
  }
  for (const auto& id : plan.weak) {
    out.pools.unlabeled.erase(id);
    out.pools.weak.insert(id);
    out.ledger.actions_log.push_back({step_index, id, Action::kWeak});
  }
  for (const auto& id : plan.upgrade) {
    out.pools.weak.erase(id);
    out.pools.strong.insert(id);
    out.ledger.actions_log.push_back({step_index, id, Action::kUpgrade});
  }
  out.ledger.spent += spend;
  out.ledger.step_spends.push_back(spend);
  return out;
}

std::vector<Candidate> candidates(const PoolState& pools) {
  std::vector<Candidate> out;
  out.reserve(pools.unlabeled.size() + pools.weak.size());
  auto u = pools.unlabeled.begin();
  auto w = pools.weak.begin();
  while (u != pools.unlabeled.end() || w != pools.weak.end()) {
    if (w == pools.weak.end() || (u != pools.unlabeled.end() && *u < *w)) {
      out.push_back({*u++, false});
    } else {
      out.push_back({*w++, true});
    }
  }
  return out;
}

}  // namespace budgetal
