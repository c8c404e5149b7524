#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "budgetal/scoring.hpp"
#include "json.hpp"

namespace budgetal {

struct SimulationSpec;

enum class GainAction { kWeak, kStrong };

const char* to_string(GainAction action);
GainAction gain_action_from_string(const std::string& s);

// One observed step: features before the step, the dominant action type
// and the per-image mAP increment it produced.
struct GainSample {
  std::vector<double> features;
  GainAction action = GainAction::kWeak;
  double observed_delta = 0.0;
};

void write_samples_jsonl(const std::vector<GainSample>& samples, const std::filesystem::path& path);
std::vector<GainSample> read_samples_jsonl(const std::filesystem::path& path);

enum class RegressorKind { kKernelSvr, kRidge };

struct RegressorParams {
  RegressorKind kind = RegressorKind::kKernelSvr;
  double regularization = 1.0;   // box constraint C for SVR, lambda for ridge
  double insensitivity = 0.001;  // epsilon of the loss
  double kernel_width = 0.0;     // 0 = median pairwise distance
  int max_sweeps = 500;
  double tolerance = 1e-10;
};

nlohmann::json to_json(const RegressorParams& p);
RegressorParams regressor_params_from_json(const nlohmann::json& j);

inline constexpr std::size_t kMinTrainingSamples = 10;

// Regresses the mAP gain of one action type from [model state, uncertainty].
// The kernel model is an epsilon-insensitive RBF regression around the mean
// target, fit by exact coordinate descent on its box-constrained dual.
class GainRegressor {
 public:
  GainRegressor() = default;

  // Uses the samples tagged with `action`; throws ValidationError when fewer
  // than kMinTrainingSamples remain.
  static GainRegressor fit(const std::vector<GainSample>& samples, GainAction action, const RegressorParams& params = {});

  bool fitted() const { return fitted_; }
  GainAction action() const { return action_; }
  double training_loss() const { return training_loss_; }
  double predict(const std::vector<double>& features) const;

  nlohmann::json to_json() const;
  static GainRegressor from_json(const nlohmann::json& j);

 private:
  bool fitted_ = false;
  GainAction action_ = GainAction::kWeak;
  RegressorKind kind_ = RegressorKind::kKernelSvr;
  double intercept_ = 0.0;
  double width_ = 1.0;
  std::vector<std::vector<double>> support_;
  std::vector<double> dual_;
  std::vector<double> linear_;  // ridge weights
  std::vector<double> feature_mean_;
  double training_loss_ = 0.0;
};

struct LalModel {
  GainRegressor weak;
  GainRegressor strong;

  nlohmann::json to_json() const;
  static LalModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static LalModel load(const std::filesystem::path& path);
};

LalModel fit_lal(const std::vector<GainSample>& samples, const RegressorParams& params = {});

struct PredictedGains {
  std::vector<double> weak;
  std::vector<double> strong;
};

// Features of candidate k are [state, scores[k]].
PredictedGains predict_gains(const LalModel& model, const ModelState& state, const std::vector<double>& scores);

// Throws ConfigError when the two class lists share a name.
void require_disjoint_classes(const std::vector<std::string>& train_classes,
                              const std::vector<std::string>& eval_classes);

// Runs n_episodes seeded episodes on the training simulation. Each step
// annotates a batch of images either weakly or strongly (the two alternate),
// picked at random in even episodes and by uncertainty in odd ones, and
// records one sample: [O_t, mean batch uncertainty] and the mAP change per
// image. max_steps = 0 runs each episode to budget or pool exhaustion.
std::vector<GainSample> collect_training_pairs(const SimulationSpec& sim, int n_episodes, std::uint64_t seed,
                                               int max_steps = 0, int batch = 10);

}  // namespace budgetal
