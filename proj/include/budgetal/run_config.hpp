#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "budgetal/campaign.hpp"
#include "budgetal/eval.hpp"
#include "budgetal/lal.hpp"
#include "budgetal/policy_rl.hpp"
#include "budgetal/synthetic_data.hpp"
#include "json.hpp"

namespace budgetal {

// Either a dataset file or a generated synthetic dataset.
struct DatasetSource {
  std::optional<std::filesystem::path> path;
  SyntheticDatasetSpec synthetic;
};

struct CostConfig {
  double strong = 34.5;
  double weak = 1.6;
  std::optional<double> upgrade;       // must equal strong - weak when given
  std::optional<double> total_budget;  // default: strong cost of the whole pool
  double step_fraction = 0.05;
  std::optional<double> step_budget;   // default: step_fraction * total
};

struct DetectorConfig {
  std::string type = "synthetic";  // "synthetic" | "predictions"
  nlohmann::json synthetic;        // partial SyntheticDetectorParams, resolved per class count
  std::filesystem::path predictions;
};

struct LalConfig {
  std::optional<std::filesystem::path> model;
  int episodes = 6;
  int max_steps = 0;
  int batch = 10;
  SyntheticDatasetSpec aux_dataset{200, 20, "aux", "aux", 101, 4};
  RegressorParams regressor;
};

struct RlConfig {
  std::optional<std::filesystem::path> model;
  int episodes = 30;
  double epsilon = 0.0;  // exploration while running the trained policy
  RlHyperparams hyper;
};

struct RunConfig {
  DatasetSource dataset;
  std::optional<DatasetSource> test_dataset;
  CostConfig cost;
  double warmup_fraction = 0.1;
  PolicyKind policy = PolicyKind::kRandom;
  TrainingMode training = TrainingMode::kHybrid;
  DetectorConfig detector;
  MinerParams miner;
  LalConfig lal;
  RlConfig rl;
  std::optional<std::vector<Difficulty>> difficulty;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/out";
};

const char* to_string(TrainingMode mode);

// Relative paths inside the config resolve against base_dir. Unknown keys
// are rejected.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Everything needed to execute a run, with every default made explicit.
struct PreparedRun {
  RunConfig config;
  SimulationSpec sim;
  PolicySpec policy;
  DifficultyMapping difficulty;
  nlohmann::json resolved;
};

// Loads datasets, builds the detector backend, and loads or trains the LAL
// model / Q function the policy needs. log receives progress lines (may be
// null).
PreparedRun prepare_run(const RunConfig& config, std::ostream* log = nullptr);

// Simulation over the auxiliary dataset used to train LAL and RL. Throws
// ConfigError when its class names overlap the evaluation classes.
SimulationSpec auxiliary_simulation(const RunConfig& config, const std::vector<std::string>& eval_classes);

struct RunArtifacts {
  RunResult result;
  nlohmann::json summary;
};

// Runs the campaign and writes run.jsonl, curve.csv, summary.json,
// resolved-config.json and breakdown.csv into out_dir.
RunArtifacts execute_run(const PreparedRun& run, const std::filesystem::path& out_dir);

nlohmann::json summary_json(const PreparedRun& run, const RunResult& result);

}  // namespace budgetal
