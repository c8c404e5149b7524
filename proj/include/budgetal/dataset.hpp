#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "budgetal/geometry.hpp"
#include "json.hpp"

namespace budgetal {

// Budget comparisons are made with this absolute slack (seconds) so that
// sums like 10 * 1.6 do not spuriously exceed 16.
inline constexpr double kBudgetTolerance = 1e-9;

struct GroundTruthBox {
  Box box;
  int class_id = 0;
  bool pseudo = false;
};

struct ImageRecord {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<GroundTruthBox> gt_boxes;
  // Image-level class presence, derived from gt_boxes.
  std::vector<std::uint8_t> weak_label;
};

// Recomputes weak_label from the boxes.
void derive_weak_label(ImageRecord& image, int num_classes);

struct Dataset {
  std::vector<std::string> classes;
  std::vector<ImageRecord> images;

  int num_classes() const { return static_cast<int>(classes.size()); }
  const ImageRecord& image(const std::string& id) const;
  // Total cost of strongly annotating every image.
  double full_strong_cost(double strong_cost) const { return strong_cost * static_cast<double>(images.size()); }
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const nlohmann::json& doc);
nlohmann::json dataset_to_json(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

struct CostModel {
  double strong = 34.5;   // a
  double weak = 1.6;      // b
  double upgrade = 32.9;  // c
  double total_budget = 0.0;
  double step_budget = 0.0;  // d

  // c = a - b, d = step_fraction * total.
  static CostModel make(double strong, double weak, double total_budget, double step_fraction = 0.05);
  void validate() const;
};

enum class Action { kWeak, kStrong, kUpgrade };

const char* to_string(Action action);

struct PoolState {
  std::set<std::string> unlabeled;
  std::set<std::string> weak;
  std::set<std::string> strong;

  std::size_t size() const { return unlabeled.size() + weak.size() + strong.size(); }
};

struct ActionRecord {
  int step = 0;
  std::string image_id;
  Action action = Action::kWeak;
};

struct BudgetLedger {
  double spent = 0.0;
  std::vector<double> step_spends;
  std::vector<ActionRecord> actions_log;

  double remaining(const CostModel& cost) const { return cost.total_budget - spent; }
};

// Why a plan is allowed to fall outside the (d - a, d] spend window.
enum class WindowRelaxation { kNone, kFinalBudget, kPoolExhausted };

struct SelectionPlan {
  std::vector<std::string> strong;   // x1: U -> S
  std::vector<std::string> weak;     // x2: U -> W
  std::vector<std::string> upgrade;  // x3: W -> S

  bool terminal = false;
  bool rounding_fallback = false;
  WindowRelaxation relaxation = WindowRelaxation::kNone;
  std::string note;

  bool empty() const { return strong.empty() && weak.empty() && upgrade.empty(); }
  double cost(const CostModel& model) const;
  std::size_t size() const { return strong.size() + weak.size() + upgrade.size(); }
};

nlohmann::json plan_to_json(const SelectionPlan& plan);

struct PoolInit {
  PoolState pools;
  BudgetLedger ledger;
};

// Seeded warm-up: a random strongly annotated subset whose cost fits in
// warmup_fraction * total_budget (maximal such prefix of a seeded shuffle).
PoolInit init_pools(const Dataset& dataset, const CostModel& cost, double warmup_fraction, std::uint64_t seed);

// Applies a plan as one active step. Throws without mutating on any violation.
PoolInit apply_plan(const PoolState& pools, const BudgetLedger& ledger, const SelectionPlan& plan,
                    const CostModel& cost, int step_index);

struct Candidate {
  std::string id;
  bool weak = false;  // psi: image already weakly annotated
};

// One entry per image in U and W, sorted by id.
std::vector<Candidate> candidates(const PoolState& pools);

}  // namespace budgetal
