#include "budgetal/campaign.hpp"

#include <algorithm>
#include <cmath>

#include "budgetal/errors.hpp"
#include "budgetal/rng.hpp"

namespace budgetal {

using nlohmann::json;

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kRandom:
      return "rs";
    case PolicyKind::kUncertainty:
      return "us";
    case PolicyKind::kSmallestUncertainty:
      return "sus";
    case PolicyKind::kOptUs:
      return "opt-us";
    case PolicyKind::kOptLal:
      return "opt-lal";
    case PolicyKind::kRl:
      return "rl";
  }
  return "?";
}

PolicyKind policy_from_string(const std::string& s) {
  for (auto k : {PolicyKind::kRandom, PolicyKind::kUncertainty, PolicyKind::kSmallestUncertainty, PolicyKind::kOptUs,
                 PolicyKind::kOptLal, PolicyKind::kRl}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown policy '" + s + "' (expected rs, us, sus, opt-us, opt-lal or rl)");
}

json to_json(const StepRecord& r) {
  json j = {{"step", r.step},
            {"plan", plan_to_json(r.plan)},
            {"step_spend", r.step_spend},
            {"spent", r.spent},
            {"budget_percent", r.budget_percent},
            {"map", r.map},
            {"pools", {{"unlabeled", r.unlabeled}, {"weak", r.weak}, {"strong", r.strong}}},
            {"pseudo_labels", r.pseudo_labels},
            {"model_state", r.state.values}};
  if (r.rl_action) j["rl_action"] = r.rl_action->name();
  return j;
}

Campaign::Campaign(SimulationSpec spec) : spec_(std::move(spec)) {
  if (!spec_.pool || !spec_.backend) throw ConfigError("simulation needs a pool dataset and a detector backend");
  if (!spec_.test) spec_.test = spec_.pool;
  if (spec_.test->num_classes() != spec_.pool->num_classes()) {
    throw ConfigError("test dataset must use the pool's class list");
  }
  spec_.cost.validate();
  auto init = init_pools(*spec_.pool, spec_.cost, spec_.warmup_fraction, mix_seed(spec_.seed, 0x3a2b));
  pools_ = std::move(init.pools);
  ledger_ = std::move(init.ledger);

  StepRecord warmup;
  warmup.step = 0;
  warmup.plan.strong.assign(pools_.strong.begin(), pools_.strong.end());
  warmup.step_spend = ledger_.spent;
  train_and_evaluate(warmup);
  log_.push_back(std::move(warmup));
}

std::vector<Candidate> Campaign::candidates() const { return budgetal::candidates(pools_); }

std::vector<double> Campaign::scores(const std::vector<Candidate>& cands) const {
  std::vector<double> out;
  out.reserve(cands.size());
  const int num_classes = spec_.pool->num_classes();
  for (const auto& c : cands) out.push_back(uncertainty(student_->predict(spec_.pool->image(c.id)), num_classes).value);
  return out;
}

const StepRecord& Campaign::step(const SelectionPlan& plan, std::optional<RLAction> rl_action) {
  if (spec_.training == TrainingMode::kStrongOnly && !plan.weak.empty()) {
    throw ValidationError("strong-only training cannot take weak annotations");
  }
  const int index = next_step();
  auto next = apply_plan(pools_, ledger_, plan, spec_.cost, index);
  pools_ = std::move(next.pools);
  ledger_ = std::move(next.ledger);
  StepRecord record;
  record.step = index;
  record.plan = plan;
  record.step_spend = ledger_.step_spends.back();
  record.rl_action = rl_action;
  train_and_evaluate(record);
  log_.push_back(std::move(record));
  return log_.back();
}

double Campaign::evaluate_map(const Detector& detector) const {
  std::vector<PredictionSet> preds;
  preds.reserve(spec_.test->images.size());
  for (const auto& img : spec_.test->images) preds.push_back(detector.predict(img));
  return mean_ap(voc_ap(flatten(preds), spec_.test->images, spec_.test->num_classes(), 0.5));
}

void Campaign::train_and_evaluate(StepRecord& record) {
  const int num_classes = spec_.pool->num_classes();
  if (spec_.training == TrainingMode::kHybrid) {
    auto round = hybrid_round(*spec_.pool, pools_, *spec_.backend, spec_.miner);
    teacher_ = std::move(round.teacher);
    student_ = std::move(round.student);
    for (double c : round.pseudo_counts) record.pseudo_labels += c;
  } else {
    const auto strong = class_counts(*spec_.pool, pools_.strong);
    teacher_ = spec_.backend->train({strong, std::vector<double>(strong.size(), 0.0)});
    student_ = teacher_;
  }

  std::vector<PredictionSet> preds;
  preds.reserve(spec_.test->images.size());
  for (const auto& img : spec_.test->images) preds.push_back(student_->predict(img));
  const auto detections = flatten(preds);
  record.map = mean_ap(voc_ap(detections, spec_.test->images, num_classes, 0.5));
  const std::vector<double> thresholds(kStateIouThresholds.begin(), kStateIouThresholds.end());
  record.state = model_state(ap_table(detections, spec_.test->images, num_classes, thresholds, Interpolation::kAllPoint));

  record.spent = ledger_.spent;
  record.budget_percent = 100.0 * ledger_.spent / spec_.pool->full_strong_cost(spec_.cost.strong);
  record.unlabeled = pools_.unlabeled.size();
  record.weak = pools_.weak.size();
  record.strong = pools_.strong.size();
}

SelectionPlan choose_plan(const Campaign& campaign, const PolicySpec& policy, const std::vector<Candidate>& cands,
                          const std::vector<double>& scores, std::uint64_t step_seed,
                          std::optional<RLAction>* rl_action) {
  const auto& cost = campaign.cost();
  const double remaining = campaign.remaining();
  const bool strong_only = campaign.spec().training == TrainingMode::kStrongOnly;
  const auto mode = strong_only ? AnnotationMode::kStrongOnly : AnnotationMode::kWeakFirst;
  switch (policy.kind) {
    case PolicyKind::kRandom:
      return select_random(cands, cost, remaining, step_seed, mode);
    case PolicyKind::kUncertainty:
      return select_uncertainty(cands, scores, UncertaintyOrder::kDescending, cost, remaining, mode);
    case PolicyKind::kSmallestUncertainty:
      return select_uncertainty(cands, scores, UncertaintyOrder::kAscending, cost, remaining, mode);
    default:
      break;
  }
  if (strong_only) throw ConfigError(std::string("policy ") + to_string(policy.kind) + " requires hybrid training");
  if (cands.empty()) {
    SelectionPlan terminal;
    terminal.terminal = true;
    terminal.note = "no candidates";
    return terminal;
  }
  switch (policy.kind) {
    case PolicyKind::kOptUs:
      return select_optimization(cands, build_objective_us(scores), cost, remaining);
    case PolicyKind::kOptLal: {
      if (!policy.lal) throw ConfigError("opt-lal policy needs a fitted LAL model");
      const auto gains = predict_gains(*policy.lal, campaign.state(), scores);
      return select_optimization(cands, build_objective_lal(gains.weak, gains.strong), cost, remaining);
    }
    case PolicyKind::kRl: {
      if (!policy.q) throw ConfigError("rl policy needs a trained Q function");
      auto sel = rl_select(*policy.q, campaign.state(), policy.rl_epsilon, cands, scores, cost, remaining, step_seed);
      if (rl_action != nullptr) *rl_action = sel.action;
      return sel.plan;
    }
    default:
      break;
  }
  throw ConfigError("unsupported policy");
}

std::vector<std::optional<double>> standard_budget_averages(const BudgetCurve& curve) {
  std::vector<std::optional<double>> out;
  for (const auto& r : standard_ranges()) {
    try {
      out.emplace_back(budget_average_map(curve, r.lo, r.hi));
    } catch (const ValidationError&) {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

RunResult run_campaign(const SimulationSpec& sim, const PolicySpec& policy) {
  Campaign campaign(sim);
  RunResult out;
  const bool needs_scores = policy.kind != PolicyKind::kRandom;
  for (;;) {
    const auto cands = campaign.candidates();
    if (cands.empty()) {
      out.stop_reason = "pool exhausted";
      break;
    }
    const auto scores = needs_scores ? campaign.scores(cands) : std::vector<double>{};
    std::optional<RLAction> rl_action;
    const auto step_seed = mix_seed(sim.seed, static_cast<std::uint64_t>(campaign.next_step()));
    auto plan = choose_plan(campaign, policy, cands, scores, step_seed, &rl_action);
    if (plan.empty()) {
      out.stop_reason = plan.note.empty() ? "empty plan" : plan.note;
      break;
    }
    try {
      campaign.step(plan, rl_action);
    } catch (const std::exception& e) {
      throw std::runtime_error("step " + std::to_string(campaign.next_step()) + ": " + e.what());
    }
  }
  out.log = campaign.log();
  out.ledger = campaign.ledger();
  std::vector<CurveSample> samples;
  for (const auto& r : out.log) samples.push_back({r.spent, r.map});
  out.curve = run_curve(samples, sim.pool->full_strong_cost(sim.cost.strong));
  out.budget_average = standard_budget_averages(out.curve);
  return out;
}

int CampaignEnvironment::state_dim() const {
  return sim_.pool->num_classes() * static_cast<int>(kStateIouThresholds.size());
}

ModelState CampaignEnvironment::reset(std::uint64_t episode_seed) {
  SimulationSpec spec = sim_;
  spec.seed = episode_seed;
  campaign_ = std::make_unique<Campaign>(std::move(spec));
  return campaign_->state();
}

StepOutcome CampaignEnvironment::step(const RLAction& action) {
  if (!campaign_) throw ValidationError("environment stepped before reset");
  StepOutcome out;
  const auto cands = campaign_->candidates();
  const auto scores = campaign_->scores(cands);
  const auto plan = materialize_action(action, cands, scores, campaign_->cost(), campaign_->remaining());
  if (plan.empty()) {
    out.next_state = campaign_->state();
    out.terminal = true;
    return out;
  }
  const double before = campaign_->map();
  campaign_->step(plan, action);
  out.reward = campaign_->map() - before;
  out.next_state = campaign_->state();
  const double cheapest = std::min(campaign_->cost().weak, campaign_->cost().upgrade);
  out.terminal = campaign_->candidates().empty() || campaign_->remaining() < cheapest - kBudgetTolerance;
  return out;
}

}  // namespace budgetal
