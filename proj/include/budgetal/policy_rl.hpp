#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "budgetal/dataset.hpp"
#include "budgetal/rng.hpp"
#include "budgetal/scoring.hpp"
#include "json.hpp"

namespace budgetal {

enum class DifficultyPreference { kLow = 0, kMedium = 1, kHigh = 2 };
enum class AnnotationType { kWeak = 0, kStrong = 1 };

// One cell of the 3 x 2 (uncertainty tercile x annotation type) action grid.
struct RLAction {
  DifficultyPreference difficulty = DifficultyPreference::kLow;
  AnnotationType annotation = AnnotationType::kWeak;

  static constexpr int kCount = 6;
  int index() const { return 2 * static_cast<int>(difficulty) + static_cast<int>(annotation); }
  static RLAction from_index(int i);
  std::string name() const;
  friend bool operator==(const RLAction&, const RLAction&) = default;
};

struct RlHyperparams {
  int hidden = 32;
  double learning_rate = 0.01;
  double gamma = 1.0;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double init_range = 0.1;
};

nlohmann::json to_json(const RlHyperparams& h);
RlHyperparams rl_hyperparams_from_json(const nlohmann::json& j);

// Q(state, action): one tanh hidden layer over [state, one-hot(action)].
class QFunction {
 public:
  QFunction() = default;
  QFunction(int state_dim, int hidden, double init_range, std::uint64_t seed);

  int state_dim() const { return state_dim_; }
  int hidden() const { return hidden_; }
  double value(const ModelState& state, const RLAction& action) const;
  std::array<double, RLAction::kCount> values(const ModelState& state) const;
  RLAction greedy(const ModelState& state) const;
  double max_value(const ModelState& state) const;

  // One SGD step on 1/2 (Q(state, action) - target)^2.
  void regress(const ModelState& state, const RLAction& action, double target, double learning_rate);

  nlohmann::json to_json() const;
  static QFunction from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static QFunction load(const std::filesystem::path& path);

  friend bool operator==(const QFunction&, const QFunction&) = default;

 private:
  std::vector<double> input(const ModelState& state, const RLAction& action) const;

  int state_dim_ = 0;
  int hidden_ = 0;
  std::vector<double> w1_;  // hidden x (state_dim + 6), row-major
  std::vector<double> b1_;
  std::vector<double> w2_;
  double b2_ = 0.0;
};

struct Transition {
  ModelState state;
  RLAction action;
  double reward = 0.0;
  ModelState next_state;
  bool terminal = false;
};

// Moves Q(state, action) toward reward + gamma * max_a Q(next_state, a)
// (reward alone when terminal).
QFunction q_update(QFunction q, const Transition& t, double learning_rate, double gamma);

struct RlSelection {
  RLAction action;
  SelectionPlan plan;
  bool explored = false;
};

// Epsilon-greedy choice of a grid cell, materialized as a plan over the
// candidates of the chosen uncertainty tercile (lowest scores = kLow), id
// order, spilling into the nearest terciles until nothing more fits.
RlSelection rl_select(const QFunction& q, const ModelState& state, double epsilon, const std::vector<Candidate>& cands,
                      const std::vector<double>& scores, const CostModel& cost, double remaining, std::uint64_t seed);

// Plan for a fixed grid cell.
SelectionPlan materialize_action(const RLAction& action, const std::vector<Candidate>& cands,
                                 const std::vector<double>& scores, const CostModel& cost, double remaining);

struct StepOutcome {
  double reward = 0.0;
  ModelState next_state;
  bool terminal = false;
};

class RlEnvironment {
 public:
  virtual ~RlEnvironment() = default;
  virtual int state_dim() const = 0;
  virtual ModelState reset(std::uint64_t episode_seed) = 0;
  virtual StepOutcome step(const RLAction& action) = 0;
};

struct TrainingReport {
  std::vector<double> episode_returns;
};

// Epsilon annealed linearly from epsilon_start to epsilon_end over episodes.
QFunction train_agent(RlEnvironment& env, int n_episodes, const RlHyperparams& hyper, std::uint64_t seed,
                      TrainingReport* report = nullptr);

}  // namespace budgetal
