#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "budgetal/dataset.hpp"

namespace budgetal {

enum class UncertaintyOrder { kDescending, kAscending };

// kWeakFirst: weak-annotate U, then upgrade W once U is used up (hybrid runs).
// kStrongOnly: strong-annotate U only (fully supervised runs).
enum class AnnotationMode { kWeakFirst, kStrongOnly };

// Spend window of one active step: cost must lie in (lower, upper], or in
// [lower, upper] when the window is relaxed.
struct BudgetWindow {
  double lower = 0.0;
  double upper = 0.0;
  WindowRelaxation relaxation = WindowRelaxation::kNone;

  bool relaxed() const { return relaxation != WindowRelaxation::kNone; }
  bool admits(double cost) const;
};

// Regular window is (d - a, min(d, remaining)]. When remaining < d, or the
// candidates cannot even reach d - a, the lower bound drops to
// max(0, min(upper, max_cost) - a) and becomes inclusive.
BudgetWindow step_window(const std::vector<Candidate>& cands, const CostModel& cost, double remaining);

// Consumes the given orders greedily until nothing else fits in
// min(d, remaining). Marks the plan terminal when it is empty.
SelectionPlan greedy_fill(const std::vector<std::string>& unlabeled_order, const std::vector<std::string>& weak_order,
                          AnnotationMode mode, const CostModel& cost, double remaining);

SelectionPlan select_random(const std::vector<Candidate>& cands, const CostModel& cost, double remaining,
                            std::uint64_t seed, AnnotationMode mode = AnnotationMode::kWeakFirst);

// scores are aligned with cands. Ties are broken by id.
SelectionPlan select_uncertainty(const std::vector<Candidate>& cands, const std::vector<double>& scores,
                                 UncertaintyOrder order, const CostModel& cost, double remaining,
                                 AnnotationMode mode = AnnotationMode::kWeakFirst);

// Per-candidate linear gains of the three actions.
struct ObjectiveCoefficients {
  std::vector<double> strong;   // on x1
  std::vector<double> weak;     // on x2
  std::vector<double> upgrade;  // on x3
  double pivot = 0.0;           // mu; 0 for learned objectives

  std::size_t size() const { return strong.size(); }
};

double median(std::vector<double> values);

// gain(strong) = gain(upgrade) = s, gain(weak) = median(s) - s.
ObjectiveCoefficients build_objective_us(const std::vector<double>& scores);
ObjectiveCoefficients build_objective_lal(const std::vector<double>& weak_gains, const std::vector<double>& strong_gains);

struct FractionalSolution {
  std::vector<double> x1;
  std::vector<double> x2;
  std::vector<double> x3;
  double objective_value = 0.0;
  double cost = 0.0;
};

// Exact LP relaxation over the closed window [lower, upper]. Each image is a
// small multiple-choice item (nothing / weak / strong, or nothing / upgrade);
// taking the upper-hull increments of all items in decreasing gain-per-cost
// order traces the concave optimum as a function of spend. Throws
// InfeasibleError when the candidates cannot reach the lower bound.
FractionalSolution solve_relaxed_lp(const ObjectiveCoefficients& coeffs, const std::vector<bool>& psi,
                                    const CostModel& cost, const BudgetWindow& window);

struct BinaryPlan {
  std::vector<bool> x1;
  std::vector<bool> x2;
  std::vector<bool> x3;
  double objective = 0.0;
  double cost = 0.0;
  bool fallback = false;
};

double plan_objective(const ObjectiveCoefficients& coeffs, const BinaryPlan& plan);
double plan_cost(const CostModel& cost, const BinaryPlan& plan);
bool plan_exclusive(const BinaryPlan& plan, const std::vector<bool>& psi);

// Every threshold at which the rounding can change, plus midpoints and the
// ends 0 and 1.
std::vector<double> rounding_thresholds(const FractionalSolution& frac);

// x1 = [x1 > eps], x2 = [x2 > 1 - eps], x3 = [x3 > eps].
BinaryPlan threshold_plan(const FractionalSolution& frac, double eps, const ObjectiveCoefficients& coeffs,
                          const CostModel& cost);

// Best window-feasible plan over the threshold sweep; greedy repair
// (fallback = true) when no threshold is feasible.
BinaryPlan round_solution(const FractionalSolution& frac, const ObjectiveCoefficients& coeffs,
                          const std::vector<bool>& psi, const CostModel& cost, const BudgetWindow& window);

SelectionPlan to_selection_plan(const BinaryPlan& plan, const std::vector<Candidate>& cands);

// LP relaxation + threshold rounding for the given coefficients.
SelectionPlan select_optimization(const std::vector<Candidate>& cands, const ObjectiveCoefficients& coeffs,
                                  const CostModel& cost, double remaining);

}  // namespace budgetal
