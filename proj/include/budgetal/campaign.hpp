#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "budgetal/dataset.hpp"
#include "budgetal/detector.hpp"
#include "budgetal/eval.hpp"
#include "budgetal/lal.hpp"
#include "budgetal/policy_rl.hpp"
#include "budgetal/pseudo.hpp"
#include "budgetal/scoring.hpp"
#include "budgetal/selection.hpp"
#include "json.hpp"

namespace budgetal {

enum class TrainingMode { kHybrid, kStrongOnly };

// Everything a closed-loop run needs apart from the selection policy.
struct SimulationSpec {
  std::shared_ptr<const Dataset> pool;
  std::shared_ptr<const Dataset> test;  // evaluation images
  std::shared_ptr<const DetectorBackend> backend;
  CostModel cost;
  double warmup_fraction = 0.1;
  TrainingMode training = TrainingMode::kHybrid;
  MinerParams miner;
  std::uint64_t seed = 0;
};

enum class PolicyKind { kRandom, kUncertainty, kSmallestUncertainty, kOptUs, kOptLal, kRl };

const char* to_string(PolicyKind kind);
PolicyKind policy_from_string(const std::string& s);

struct PolicySpec {
  PolicyKind kind = PolicyKind::kRandom;
  std::shared_ptr<const LalModel> lal;
  std::shared_ptr<const QFunction> q;
  double rl_epsilon = 0.0;
};

struct StepRecord {
  int step = 0;
  SelectionPlan plan;
  double step_spend = 0.0;
  double spent = 0.0;
  double budget_percent = 0.0;
  double map = 0.0;
  ModelState state;
  std::size_t unlabeled = 0;
  std::size_t weak = 0;
  std::size_t strong = 0;
  double pseudo_labels = 0.0;
  std::optional<RLAction> rl_action;
};

nlohmann::json to_json(const StepRecord& record);

// One warm-up plus a sequence of active steps. The constructor performs the
// warm-up, trains on it and evaluates; each step() applies a plan, runs the
// hybrid (or strong-only) training round and evaluates the student.
class Campaign {
 public:
  explicit Campaign(SimulationSpec spec);

  const SimulationSpec& spec() const { return spec_; }
  const CostModel& cost() const { return spec_.cost; }
  const PoolState& pools() const { return pools_; }
  const BudgetLedger& ledger() const { return ledger_; }
  const std::vector<StepRecord>& log() const { return log_; }
  const ModelState& state() const { return log_.back().state; }
  double map() const { return log_.back().map; }
  double remaining() const { return ledger_.remaining(spec_.cost); }
  int next_step() const { return static_cast<int>(log_.size()); }
  const Detector& student() const { return *student_; }
  const Detector& teacher() const { return *teacher_; }

  std::vector<Candidate> candidates() const;
  // Uncertainty of the current student on each candidate.
  std::vector<double> scores(const std::vector<Candidate>& cands) const;

  const StepRecord& step(const SelectionPlan& plan, std::optional<RLAction> rl_action = std::nullopt);

  // mAP@0.5 (11-point) of a detector on the test images.
  double evaluate_map(const Detector& detector) const;

 private:
  void train_and_evaluate(StepRecord& record);

  SimulationSpec spec_;
  PoolState pools_;
  BudgetLedger ledger_;
  std::shared_ptr<const Detector> teacher_;
  std::shared_ptr<const Detector> student_;
  std::vector<StepRecord> log_;
};

// Plan for the campaign's next step. step_seed drives RS and RL exploration.
SelectionPlan choose_plan(const Campaign& campaign, const PolicySpec& policy, const std::vector<Candidate>& cands,
                          const std::vector<double>& scores, std::uint64_t step_seed = 0,
                          std::optional<RLAction>* rl_action = nullptr);

struct RunResult {
  std::vector<StepRecord> log;
  BudgetLedger ledger;
  BudgetCurve curve;
  // Budget-average mAP per standard range; empty when the curve does not
  // cover the range.
  std::vector<std::optional<double>> budget_average;
  std::string stop_reason;
};

// Runs until the budget or the pool is exhausted or the policy returns an
// empty plan.
RunResult run_campaign(const SimulationSpec& sim, const PolicySpec& policy);

std::vector<std::optional<double>> standard_budget_averages(const BudgetCurve& curve);

// RL environment over a simulation: each episode is a fresh campaign with
// the episode seed; reward is the step's mAP increment.
class CampaignEnvironment : public RlEnvironment {
 public:
  explicit CampaignEnvironment(SimulationSpec sim) : sim_(std::move(sim)) {}
  int state_dim() const override;
  ModelState reset(std::uint64_t episode_seed) override;
  StepOutcome step(const RLAction& action) override;

 private:
  SimulationSpec sim_;
  std::unique_ptr<Campaign> campaign_;
};

}  // namespace budgetal
