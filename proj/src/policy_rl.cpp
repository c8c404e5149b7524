#include "budgetal/policy_rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "budgetal/errors.hpp"

namespace budgetal {

using nlohmann::json;

RLAction RLAction::from_index(int i) {
  if (i < 0 || i >= kCount) throw ValidationError("RL action index out of range");
  return {static_cast<DifficultyPreference>(i / 2), static_cast<AnnotationType>(i % 2)};
}

std::string RLAction::name() const {
  static const char* kDifficulty[] = {"low", "medium", "high"};
  return std::string(kDifficulty[static_cast<int>(difficulty)]) + "/" +
         (annotation == AnnotationType::kWeak ? "weak" : "strong");
}

json to_json(const RlHyperparams& h) {
  return {{"hidden", h.hidden},
          {"learning_rate", h.learning_rate},
          {"gamma", h.gamma},
          {"epsilon_start", h.epsilon_start},
          {"epsilon_end", h.epsilon_end},
          {"init_range", h.init_range}};
}

RlHyperparams rl_hyperparams_from_json(const json& j) {
  RlHyperparams h;
  if (j.is_null()) return h;
  h.hidden = j.value("hidden", h.hidden);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.gamma = j.value("gamma", h.gamma);
  h.epsilon_start = j.value("epsilon_start", h.epsilon_start);
  h.epsilon_end = j.value("epsilon_end", h.epsilon_end);
  h.init_range = j.value("init_range", h.init_range);
  if (h.hidden < 1 || !(h.learning_rate > 0.0) || !(h.gamma >= 0.0 && h.gamma <= 1.0) ||
      !(h.epsilon_start >= 0.0 && h.epsilon_start <= 1.0) || !(h.epsilon_end >= 0.0 && h.epsilon_end <= 1.0)) {
    throw ConfigError("invalid RL hyperparameters");
  }
  return h;
}

QFunction::QFunction(int state_dim, int hidden, double init_range, std::uint64_t seed)
    : state_dim_(state_dim), hidden_(hidden) {
  Rng rng(seed);
  const int in = state_dim + RLAction::kCount;
  w1_.resize(static_cast<std::size_t>(hidden * in));
  for (auto& w : w1_) w = rng.uniform(-init_range, init_range);
  b1_.assign(static_cast<std::size_t>(hidden), 0.0);
  w2_.resize(static_cast<std::size_t>(hidden));
  for (auto& w : w2_) w = rng.uniform(-init_range, init_range);
}

std::vector<double> QFunction::input(const ModelState& state, const RLAction& action) const {
  if (static_cast<int>(state.values.size()) != state_dim_) throw ValidationError("Q input has wrong state length");
  std::vector<double> x = state.values;
  x.resize(static_cast<std::size_t>(state_dim_ + RLAction::kCount), 0.0);
  x[static_cast<std::size_t>(state_dim_ + action.index())] = 1.0;
  return x;
}

double QFunction::value(const ModelState& state, const RLAction& action) const {
  const auto x = input(state, action);
  const std::size_t in = x.size();
  double out = b2_;
  for (int h = 0; h < hidden_; ++h) {
    double a = b1_[static_cast<std::size_t>(h)];
    for (std::size_t i = 0; i < in; ++i) a += w1_[static_cast<std::size_t>(h) * in + i] * x[i];
    out += w2_[static_cast<std::size_t>(h)] * std::tanh(a);
  }
  return out;
}

std::array<double, RLAction::kCount> QFunction::values(const ModelState& state) const {
  std::array<double, RLAction::kCount> out{};
  for (int i = 0; i < RLAction::kCount; ++i) out[static_cast<std::size_t>(i)] = value(state, RLAction::from_index(i));
  return out;
}

RLAction QFunction::greedy(const ModelState& state) const {
  const auto v = values(state);
  return RLAction::from_index(static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()));
}

double QFunction::max_value(const ModelState& state) const {
  const auto v = values(state);
  return *std::max_element(v.begin(), v.end());
}

void QFunction::regress(const ModelState& state, const RLAction& action, double target, double learning_rate) {
  const auto x = input(state, action);
  const std::size_t in = x.size();
  std::vector<double> hidden(static_cast<std::size_t>(hidden_));
  double out = b2_;
  for (int h = 0; h < hidden_; ++h) {
    double a = b1_[static_cast<std::size_t>(h)];
    for (std::size_t i = 0; i < in; ++i) a += w1_[static_cast<std::size_t>(h) * in + i] * x[i];
    hidden[static_cast<std::size_t>(h)] = std::tanh(a);
    out += w2_[static_cast<std::size_t>(h)] * hidden[static_cast<std::size_t>(h)];
  }
  const double err = out - target;
  for (int h = 0; h < hidden_; ++h) {
    const auto hs = static_cast<std::size_t>(h);
    const double grad_pre = err * w2_[hs] * (1.0 - hidden[hs] * hidden[hs]);
    w2_[hs] -= learning_rate * err * hidden[hs];
    b1_[hs] -= learning_rate * grad_pre;
    for (std::size_t i = 0; i < in; ++i) w1_[hs * in + i] -= learning_rate * grad_pre * x[i];
  }
  b2_ -= learning_rate * err;
}

json QFunction::to_json() const {
  return {{"state_dim", state_dim_}, {"hidden", hidden_}, {"w1", w1_}, {"b1", b1_}, {"w2", w2_}, {"b2", b2_}};
}

QFunction QFunction::from_json(const json& j) {
  QFunction q;
  try {
    q.state_dim_ = j.at("state_dim").get<int>();
    q.hidden_ = j.at("hidden").get<int>();
    q.w1_ = j.at("w1").get<std::vector<double>>();
    q.b1_ = j.at("b1").get<std::vector<double>>();
    q.w2_ = j.at("w2").get<std::vector<double>>();
    q.b2_ = j.at("b2").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed Q weights: ") + e.what());
  }
  const auto hidden = static_cast<std::size_t>(q.hidden_);
  if (q.w1_.size() != hidden * static_cast<std::size_t>(q.state_dim_ + RLAction::kCount) || q.b1_.size() != hidden ||
      q.w2_.size() != hidden) {
    throw ParseError("malformed Q weights: inconsistent shapes");
  }
  return q;
}

void QFunction::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

QFunction QFunction::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open Q weights " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("malformed Q weights " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

QFunction q_update(QFunction q, const Transition& t, double learning_rate, double gamma) {
  const double target = t.terminal ? t.reward : t.reward + gamma * q.max_value(t.next_state);
  q.regress(t.state, t.action, target, learning_rate);
  return q;
}

SelectionPlan materialize_action(const RLAction& action, const std::vector<Candidate>& cands,
                                 const std::vector<double>& scores, const CostModel& cost, double remaining) {
  if (scores.size() != cands.size()) throw ValidationError("rl_select: scores must cover all candidates");
  SelectionPlan plan;
  if (cands.empty()) {
    plan.terminal = true;
    plan.note = "no candidates";
    return plan;
  }
  std::vector<std::size_t> by_score(cands.size());
  std::iota(by_score.begin(), by_score.end(), 0);
  std::stable_sort(by_score.begin(), by_score.end(), [&](std::size_t l, std::size_t r) { return scores[l] < scores[r]; });
  const std::size_t n = cands.size();
  std::array<std::vector<std::size_t>, 3> terciles;
  for (std::size_t r = 0; r < n; ++r) terciles[r * 3 / n].push_back(by_score[r]);
  for (auto& t : terciles) std::sort(t.begin(), t.end());  // id order

  const bool want_weak = action.annotation == AnnotationType::kWeak;
  auto eligible = [&](std::size_t k, bool weak_action) { return weak_action ? !cands[k].weak : true; };
  const int chosen = static_cast<int>(action.difficulty);
  std::vector<int> visit = {chosen};
  for (int dist = 1; dist <= 2; ++dist) {
    for (int t : {chosen - dist, chosen + dist}) {
      if (t >= 0 && t < 3) visit.push_back(t);
    }
  }
  const bool chosen_has_any = std::any_of(terciles[static_cast<std::size_t>(chosen)].begin(),
                                          terciles[static_cast<std::size_t>(chosen)].end(),
                                          [&](std::size_t k) { return eligible(k, want_weak); });

  const double budget = std::min(cost.step_budget, remaining);
  double spend = 0.0;
  std::vector<bool> used(n, false);
  bool spilled_type = false;
  for (bool weak_action : {want_weak, !want_weak}) {
    for (int t : visit) {
      for (std::size_t k : terciles[static_cast<std::size_t>(t)]) {
        if (used[k] || !eligible(k, weak_action)) continue;
        const bool upgrade = cands[k].weak;
        const double c = weak_action ? cost.weak : (upgrade ? cost.upgrade : cost.strong);
        if (spend + c > budget + kBudgetTolerance) continue;
        used[k] = true;
        spend += c;
        if (weak_action != want_weak) spilled_type = true;
        (weak_action ? plan.weak : upgrade ? plan.upgrade : plan.strong).push_back(cands[k].id);
      }
    }
  }
  if (!chosen_has_any) plan.note = "chosen tercile had no eligible images; used nearest tercile";
  if (spilled_type) plan.note += std::string(plan.note.empty() ? "" : "; ") + "filled with the other annotation type";
  if (plan.empty()) {
    plan.terminal = true;
    plan.note = "no affordable action";
  } else if (spend <= cost.step_budget - cost.strong + kBudgetTolerance) {
    plan.relaxation = remaining < cost.step_budget - kBudgetTolerance ? WindowRelaxation::kFinalBudget
                                                                      : WindowRelaxation::kPoolExhausted;
  }
  return plan;
}

RlSelection rl_select(const QFunction& q, const ModelState& state, double epsilon, const std::vector<Candidate>& cands,
                      const std::vector<double>& scores, const CostModel& cost, double remaining, std::uint64_t seed) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must lie in [0, 1]");
  Rng rng(seed);
  RlSelection out;
  if (rng.uniform() < epsilon) {
    out.action = RLAction::from_index(static_cast<int>(rng.index(RLAction::kCount)));
    out.explored = true;
  } else {
    out.action = q.greedy(state);
  }
  out.plan = materialize_action(out.action, cands, scores, cost, remaining);
  return out;
}

QFunction train_agent(RlEnvironment& env, int n_episodes, const RlHyperparams& hyper, std::uint64_t seed,
                      TrainingReport* report) {
  QFunction q(env.state_dim(), hyper.hidden, hyper.init_range, seed);
  Rng rng(mix_seed(seed, 0xa11ce));
  for (int e = 0; e < n_episodes; ++e) {
    const double frac = n_episodes > 1 ? static_cast<double>(e) / (n_episodes - 1) : 0.0;
    const double epsilon = hyper.epsilon_start + (hyper.epsilon_end - hyper.epsilon_start) * frac;
    ModelState state = env.reset(mix_seed(seed, static_cast<std::uint64_t>(e) + 1));
    double episode_return = 0.0;
    for (;;) {
      const RLAction action = rng.uniform() < epsilon ? RLAction::from_index(static_cast<int>(rng.index(RLAction::kCount)))
                                                      : q.greedy(state);
      const StepOutcome outcome = env.step(action);
      episode_return += outcome.reward;
      q = q_update(std::move(q), {state, action, outcome.reward, outcome.next_state, outcome.terminal},
                   hyper.learning_rate, hyper.gamma);
      if (outcome.terminal) break;
      state = outcome.next_state;
    }
    if (report != nullptr) report->episode_returns.push_back(episode_return);
  }
  return q;
}

}  // namespace budgetal
