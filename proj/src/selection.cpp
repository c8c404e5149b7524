#include "budgetal/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "budgetal/errors.hpp"
#include "budgetal/rng.hpp"

namespace budgetal {

bool BudgetWindow::admits(double cost) const {
  if (cost > upper + kBudgetTolerance) return false;
  if (relaxed()) return cost >= lower - kBudgetTolerance;
  return cost > lower + kBudgetTolerance;
}

namespace {

double max_spend(const std::vector<Candidate>& cands, const CostModel& cost) {
  double total = 0.0;
  for (const auto& c : cands) total += c.weak ? cost.upgrade : cost.strong;
  return total;
}

WindowRelaxation classify_short_step(double spend, const CostModel& cost, double remaining) {
  if (spend > cost.step_budget - cost.strong + kBudgetTolerance) return WindowRelaxation::kNone;
  return remaining < cost.step_budget - kBudgetTolerance ? WindowRelaxation::kFinalBudget
                                                         : WindowRelaxation::kPoolExhausted;
}

}  // namespace

BudgetWindow step_window(const std::vector<Candidate>& cands, const CostModel& cost, double remaining) {
  BudgetWindow w;
  w.upper = std::min(cost.step_budget, remaining);
  w.lower = cost.step_budget - cost.strong;
  const double reachable = max_spend(cands, cost);
  if (remaining < cost.step_budget - kBudgetTolerance) {
    w.relaxation = WindowRelaxation::kFinalBudget;
  } else if (reachable <= w.lower + kBudgetTolerance) {
    w.relaxation = WindowRelaxation::kPoolExhausted;
  }
  if (w.relaxed()) w.lower = std::max(0.0, std::min(w.upper, reachable) - cost.strong);
  return w;
}

SelectionPlan greedy_fill(const std::vector<std::string>& unlabeled_order, const std::vector<std::string>& weak_order,
                          AnnotationMode mode, const CostModel& cost, double remaining) {
  SelectionPlan plan;
  const double budget = std::min(cost.step_budget, remaining);
  double spend = 0.0;
  bool unlabeled_used_up = true;
  const double unit = mode == AnnotationMode::kWeakFirst ? cost.weak : cost.strong;
  for (const auto& id : unlabeled_order) {
    if (spend + unit > budget + kBudgetTolerance) {
      unlabeled_used_up = false;
      break;
    }
    (mode == AnnotationMode::kWeakFirst ? plan.weak : plan.strong).push_back(id);
    spend += unit;
  }
  if (unlabeled_used_up) {
    for (const auto& id : weak_order) {
      if (spend + cost.upgrade > budget + kBudgetTolerance) break;
      plan.upgrade.push_back(id);
      spend += cost.upgrade;
    }
  }
  if (plan.empty()) {
    plan.terminal = true;
    plan.note = "no affordable action";
  } else {
    plan.relaxation = classify_short_step(plan.cost(cost), cost, remaining);
  }
  return plan;
}

SelectionPlan select_random(const std::vector<Candidate>& cands, const CostModel& cost, double remaining,
                            std::uint64_t seed, AnnotationMode mode) {
  std::vector<std::string> unlabeled;
  std::vector<std::string> weak;
  for (const auto& c : cands) (c.weak ? weak : unlabeled).push_back(c.id);
  Rng rng(seed);
  rng.shuffle(unlabeled);
  rng.shuffle(weak);
  return greedy_fill(unlabeled, weak, mode, cost, remaining);
}

SelectionPlan select_uncertainty(const std::vector<Candidate>& cands, const std::vector<double>& scores,
                                 UncertaintyOrder order, const CostModel& cost, double remaining,
                                 AnnotationMode mode) {
  if (scores.size() != cands.size()) throw ValidationError("select_uncertainty: scores must cover all candidates");
  std::vector<std::size_t> idx(cands.size());
  std::iota(idx.begin(), idx.end(), 0);
  // cands are id-sorted, so a stable sort breaks ties by id.
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) {
    return order == UncertaintyOrder::kDescending ? scores[l] > scores[r] : scores[l] < scores[r];
  });
  std::vector<std::string> unlabeled;
  std::vector<std::string> weak;
  for (auto i : idx) (cands[i].weak ? weak : unlabeled).push_back(cands[i].id);
  return greedy_fill(unlabeled, weak, mode, cost, remaining);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ObjectiveCoefficients build_objective_us(const std::vector<double>& scores) {
  ObjectiveCoefficients out;
  out.pivot = median(scores);
  out.strong = scores;
  out.upgrade = scores;
  out.weak.reserve(scores.size());
  for (double s : scores) out.weak.push_back(out.pivot - s);
  return out;
}

ObjectiveCoefficients build_objective_lal(const std::vector<double>& weak_gains, const std::vector<double>& strong_gains) {
  if (weak_gains.size() != strong_gains.size()) throw ValidationError("build_objective_lal: length mismatch");
  ObjectiveCoefficients out;
  out.strong = strong_gains;
  out.upgrade = strong_gains;
  out.weak = weak_gains;
  return out;
}

namespace {

enum class Segment { kToWeak, kWeakToStrong, kToStrong, kToUpgrade };

struct Increment {
  std::size_t item;
  int order;  // position within the item's hull
  Segment kind;
  double cost;
  double gain;
  double slope() const { return gain / cost; }
};

}  // namespace

FractionalSolution solve_relaxed_lp(const ObjectiveCoefficients& coeffs, const std::vector<bool>& psi,
                                    const CostModel& cost, const BudgetWindow& window) {
  const std::size_t n = psi.size();
  if (coeffs.strong.size() != n || coeffs.weak.size() != n || coeffs.upgrade.size() != n) {
    throw ValidationError("solve_relaxed_lp: coefficient and psi lengths differ");
  }
  std::vector<Increment> incs;
  incs.reserve(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    if (psi[k]) {
      incs.push_back({k, 0, Segment::kToUpgrade, cost.upgrade, coeffs.upgrade[k]});
      continue;
    }
    const double weak_slope = coeffs.weak[k] / cost.weak;
    const double step_slope = (coeffs.strong[k] - coeffs.weak[k]) / (cost.strong - cost.weak);
    if (weak_slope >= step_slope) {
      incs.push_back({k, 0, Segment::kToWeak, cost.weak, coeffs.weak[k]});
      incs.push_back({k, 1, Segment::kWeakToStrong, cost.strong - cost.weak, coeffs.strong[k] - coeffs.weak[k]});
    } else {
      incs.push_back({k, 0, Segment::kToStrong, cost.strong, coeffs.strong[k]});
    }
  }
  std::stable_sort(incs.begin(), incs.end(), [](const Increment& l, const Increment& r) {
    if (l.slope() != r.slope()) return l.slope() > r.slope();
    if (l.item != r.item) return l.item < r.item;
    return l.order < r.order;
  });

  std::vector<double> taken(incs.size(), 0.0);
  double spend = 0.0;
  std::size_t pos = 0;
  // Positive-slope increments up to the upper bound.
  for (; pos < incs.size() && incs[pos].slope() > 0.0; ++pos) {
    const double room = window.upper - spend;
    if (room <= 0.0) break;
    const double t = std::min(1.0, room / incs[pos].cost);
    taken[pos] = t;
    spend += t * incs[pos].cost;
    if (t < 1.0) {
      ++pos;
      break;
    }
  }
  // Cheapest-loss increments until the lower bound is reached.
  if (spend < window.lower) {
    for (std::size_t i = 0; i < incs.size() && spend < window.lower; ++i) {
      if (taken[i] >= 1.0) continue;
      const double need = window.lower - spend;
      const double t = std::min(1.0 - taken[i], need / incs[i].cost);
      taken[i] += t;
      spend += t * incs[i].cost;
    }
    if (spend < window.lower - kBudgetTolerance) {
      throw InfeasibleError("relaxed LP infeasible: candidates cannot reach the step's minimum spend");
    }
  }

  FractionalSolution out;
  out.x1.assign(n, 0.0);
  out.x2.assign(n, 0.0);
  out.x3.assign(n, 0.0);
  for (std::size_t i = 0; i < incs.size(); ++i) {
    const double t = taken[i];
    if (t <= 0.0) continue;
    const std::size_t k = incs[i].item;
    switch (incs[i].kind) {
      case Segment::kToWeak:
        out.x2[k] += t;
        break;
      case Segment::kWeakToStrong:
        out.x2[k] -= t;
        out.x1[k] += t;
        break;
      case Segment::kToStrong:
        out.x1[k] += t;
        break;
      case Segment::kToUpgrade:
        out.x3[k] += t;
        break;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    out.x2[k] = std::clamp(out.x2[k], 0.0, 1.0);
    out.objective_value += coeffs.strong[k] * out.x1[k] + coeffs.weak[k] * out.x2[k] + coeffs.upgrade[k] * out.x3[k];
    out.cost += cost.strong * out.x1[k] + cost.weak * out.x2[k] + cost.upgrade * out.x3[k];
  }
  return out;
}

double plan_objective(const ObjectiveCoefficients& coeffs, const BinaryPlan& plan) {
  double total = 0.0;
  for (std::size_t k = 0; k < plan.x1.size(); ++k) {
    if (plan.x1[k]) total += coeffs.strong[k];
    if (plan.x2[k]) total += coeffs.weak[k];
    if (plan.x3[k]) total += coeffs.upgrade[k];
  }
  return total;
}

double plan_cost(const CostModel& cost, const BinaryPlan& plan) {
  double n1 = 0.0;
  double n2 = 0.0;
  double n3 = 0.0;
  for (std::size_t k = 0; k < plan.x1.size(); ++k) {
    n1 += plan.x1[k] ? 1.0 : 0.0;
    n2 += plan.x2[k] ? 1.0 : 0.0;
    n3 += plan.x3[k] ? 1.0 : 0.0;
  }
  return cost.strong * n1 + cost.weak * n2 + cost.upgrade * n3;
}

bool plan_exclusive(const BinaryPlan& plan, const std::vector<bool>& psi) {
  for (std::size_t k = 0; k < psi.size(); ++k) {
    if (plan.x3[k] && !psi[k]) return false;
    if ((plan.x1[k] || plan.x2[k]) && psi[k]) return false;
    if (plan.x1[k] && plan.x2[k]) return false;
  }
  return true;
}

std::vector<double> rounding_thresholds(const FractionalSolution& frac) {
  std::vector<double> cuts = {0.0, 1.0};
  for (std::size_t k = 0; k < frac.x1.size(); ++k) {
    cuts.push_back(frac.x1[k]);
    cuts.push_back(1.0 - frac.x2[k]);
    cuts.push_back(frac.x3[k]);
  }
  for (auto& c : cuts) c = std::clamp(c, 0.0, 1.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<double> out;
  out.reserve(2 * cuts.size());
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    out.push_back(cuts[i]);
    if (i + 1 < cuts.size()) out.push_back(0.5 * (cuts[i] + cuts[i + 1]));
  }
  return out;
}

BinaryPlan threshold_plan(const FractionalSolution& frac, double eps, const ObjectiveCoefficients& coeffs,
                          const CostModel& cost) {
  const std::size_t n = frac.x1.size();
  BinaryPlan plan;
  plan.x1.resize(n);
  plan.x2.resize(n);
  plan.x3.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    plan.x1[k] = frac.x1[k] > eps;
    plan.x2[k] = frac.x2[k] > 1.0 - eps;
    plan.x3[k] = frac.x3[k] > eps;
  }
  plan.objective = plan_objective(coeffs, plan);
  plan.cost = plan_cost(cost, plan);
  return plan;
}

namespace {

// Drops the lowest-gain actions until under the upper bound, then adds the
// highest-gain affordable actions until the window admits the plan.
BinaryPlan repair(BinaryPlan plan, const ObjectiveCoefficients& coeffs, const std::vector<bool>& psi,
                  const CostModel& cost, const BudgetWindow& window) {
  const std::size_t n = psi.size();
  plan.cost = plan_cost(cost, plan);
  while (plan.cost > window.upper + kBudgetTolerance) {
    std::size_t worst = n;
    double worst_gain = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool selected = plan.x1[k] || plan.x2[k] || plan.x3[k];
      if (!selected) continue;
      const double g = plan.x1[k] ? coeffs.strong[k] : plan.x2[k] ? coeffs.weak[k] : coeffs.upgrade[k];
      if (worst == n || g < worst_gain) {
        worst = k;
        worst_gain = g;
      }
    }
    if (worst == n) break;
    plan.x1[worst] = plan.x2[worst] = plan.x3[worst] = false;
    plan.cost = plan_cost(cost, plan);
  }
  while (!window.admits(plan.cost)) {
    std::size_t best = n;
    int best_action = -1;
    double best_gain = 0.0;
    auto consider = [&](std::size_t k, int action, double c, double g) {
      if (plan.cost + c > window.upper + kBudgetTolerance) return;
      if (best == n || g > best_gain) {
        best = k;
        best_action = action;
        best_gain = g;
      }
    };
    for (std::size_t k = 0; k < n; ++k) {
      if (plan.x1[k] || plan.x2[k] || plan.x3[k]) continue;
      if (psi[k]) {
        consider(k, 3, cost.upgrade, coeffs.upgrade[k]);
      } else {
        consider(k, 1, cost.strong, coeffs.strong[k]);
        consider(k, 2, cost.weak, coeffs.weak[k]);
      }
    }
    if (best == n) break;
    if (best_action == 1) plan.x1[best] = true;
    if (best_action == 2) plan.x2[best] = true;
    if (best_action == 3) plan.x3[best] = true;
    plan.cost = plan_cost(cost, plan);
  }
  plan.objective = plan_objective(coeffs, plan);
  plan.fallback = true;
  return plan;
}

}  // namespace

BinaryPlan round_solution(const FractionalSolution& frac, const ObjectiveCoefficients& coeffs,
                          const std::vector<bool>& psi, const CostModel& cost, const BudgetWindow& window) {
  const auto sweep = rounding_thresholds(frac);
  const BinaryPlan* best = nullptr;
  std::vector<BinaryPlan> plans;
  plans.reserve(sweep.size());
  for (double eps : sweep) plans.push_back(threshold_plan(frac, eps, coeffs, cost));
  for (const auto& p : plans) {
    if (!plan_exclusive(p, psi) || !window.admits(p.cost)) continue;
    if (best == nullptr || p.objective > best->objective) best = &p;
  }
  if (best != nullptr) return *best;

  // Start the repair from the cheapest plan over the upper bound, or from the
  // most expensive plan if every one falls short.
  const BinaryPlan* start = nullptr;
  for (const auto& p : plans) {
    if (!plan_exclusive(p, psi)) continue;
    if (p.cost > window.upper + kBudgetTolerance) {
      if (start == nullptr || start->cost <= window.upper + kBudgetTolerance || p.cost < start->cost) start = &p;
    } else if (start == nullptr || (start->cost <= window.upper + kBudgetTolerance && p.cost > start->cost)) {
      start = &p;
    }
  }
  if (start == nullptr) throw InfeasibleError("round_solution: no exclusive threshold plan");
  return repair(*start, coeffs, psi, cost, window);
}

SelectionPlan to_selection_plan(const BinaryPlan& plan, const std::vector<Candidate>& cands) {
  SelectionPlan out;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    if (plan.x1[k]) out.strong.push_back(cands[k].id);
    if (plan.x2[k]) out.weak.push_back(cands[k].id);
    if (plan.x3[k]) out.upgrade.push_back(cands[k].id);
  }
  out.rounding_fallback = plan.fallback;
  return out;
}

SelectionPlan select_optimization(const std::vector<Candidate>& cands, const ObjectiveCoefficients& coeffs,
                                  const CostModel& cost, double remaining) {
  SelectionPlan terminal;
  terminal.terminal = true;
  if (cands.empty()) {
    terminal.note = "no candidates";
    return terminal;
  }
  const auto window = step_window(cands, cost, remaining);
  std::vector<bool> psi;
  psi.reserve(cands.size());
  for (const auto& c : cands) psi.push_back(c.weak);
  FractionalSolution frac;
  try {
    frac = solve_relaxed_lp(coeffs, psi, cost, window);
  } catch (const InfeasibleError&) {
    terminal.note = "budget window unreachable";
    return terminal;
  }
  auto plan = to_selection_plan(round_solution(frac, coeffs, psi, cost, window), cands);
  plan.relaxation = window.relaxation;
  if (plan.empty()) {
    plan.terminal = true;
    plan.note = "no action with positive value fits";
  }
  return plan;
}

}  // namespace budgetal
