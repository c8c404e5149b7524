#include "budgetal/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "budgetal/errors.hpp"

namespace budgetal {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

fs::path resolve_path(const std::string& p, const fs::path& base) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path;
}

DatasetSource parse_source(const json& j, const fs::path& base, const std::string& where) {
  DatasetSource src;
  if (j.is_string()) {
    src.path = resolve_path(j.get<std::string>(), base);
    return src;
  }
  reject_unknown_keys(j, {"path", "synthetic"}, where);
  if (j.contains("path") == j.contains("synthetic")) {
    throw ConfigError(where + " needs exactly one of 'path' or 'synthetic'");
  }
  if (j.contains("path")) {
    src.path = resolve_path(j.at("path").get<std::string>(), base);
  } else {
    reject_unknown_keys(j.at("synthetic"), {"images", "classes", "class_prefix", "id_prefix", "seed", "max_boxes"},
                        where + ".synthetic");
    src.synthetic = synthetic_dataset_spec_from_json(j.at("synthetic"));
  }
  return src;
}

json source_to_json(const DatasetSource& src) {
  if (src.path) return src.path->string();
  return {{"synthetic", to_json(src.synthetic)}};
}

Dataset materialize(const DatasetSource& src) {
  return src.path ? load_dataset(*src.path) : make_synthetic_dataset(src.synthetic);
}

std::optional<double> optional_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::optional<fs::path> optional_path(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return resolve_path(j.at(key).get<std::string>(), base);
}

json optional_to_json(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

TrainingMode training_from_string(const std::string& s) {
  if (s == "hybrid") return TrainingMode::kHybrid;
  if (s == "strong-only") return TrainingMode::kStrongOnly;
  throw ConfigError("training must be 'hybrid' or 'strong-only', got '" + s + "'");
}

// Easiest third of the classes (highest ceiling, fastest learning) first.
DifficultyMapping default_difficulty(const SimulationSpec& sim, int num_classes) {
  std::vector<int> order(static_cast<std::size_t>(num_classes));
  std::iota(order.begin(), order.end(), 0);
  if (const auto* synth = dynamic_cast<const SyntheticBackend*>(sim.backend.get())) {
    const auto& p = synth->params();
    std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
      const double hl = p.max_skill[static_cast<std::size_t>(l)] / p.tau[static_cast<std::size_t>(l)];
      const double hr = p.max_skill[static_cast<std::size_t>(r)] / p.tau[static_cast<std::size_t>(r)];
      return hl > hr;
    });
  }
  DifficultyMapping mapping(static_cast<std::size_t>(num_classes), Difficulty::kMedium);
  for (int rank = 0; rank < num_classes; ++rank) {
    const int group = std::min(2, rank * 3 / num_classes);
    mapping[static_cast<std::size_t>(order[static_cast<std::size_t>(rank)])] = static_cast<Difficulty>(group);
  }
  return mapping;
}

std::shared_ptr<const DetectorBackend> make_backend(const RunConfig& config, const Dataset& pool, const Dataset& test,
                                                    json& resolved) {
  const int num_classes = pool.num_classes();
  if (config.detector.type == "synthetic") {
    auto params = synthetic_params_from_json(config.detector.synthetic, num_classes, config.seed);
    resolved = to_json(params);
    resolved["type"] = "synthetic";
    return std::make_shared<SyntheticBackend>(std::move(params));
  }
  std::vector<std::string> ids;
  for (const auto& img : pool.images) ids.push_back(img.id);
  for (const auto& img : test.images) ids.push_back(img.id);
  resolved = {{"type", "predictions"}, {"path", config.detector.predictions.string()}};
  return std::make_shared<PredictionFileBackend>(ingest_predictions(config.detector.predictions, num_classes, ids));
}

}  // namespace

const char* to_string(TrainingMode mode) { return mode == TrainingMode::kHybrid ? "hybrid" : "strong-only"; }

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    reject_unknown_keys(j,
                        {"dataset", "test_dataset", "cost", "warmup_fraction", "policy", "training", "detector", "miner",
                         "rounding", "lal", "rl", "difficulty", "seed", "output_dir"},
                        "run config");
    if (!j.contains("dataset")) throw ConfigError("run config needs 'dataset'");
    c.dataset = parse_source(j.at("dataset"), base_dir, "dataset");
    if (j.contains("test_dataset") && !j.at("test_dataset").is_null()) {
      c.test_dataset = parse_source(j.at("test_dataset"), base_dir, "test_dataset");
    }

    if (j.contains("cost")) {
      const auto& cj = j.at("cost");
      reject_unknown_keys(cj, {"strong", "weak", "upgrade", "total_budget", "step_fraction", "step_budget"}, "cost");
      c.cost.strong = cj.value("strong", c.cost.strong);
      c.cost.weak = cj.value("weak", c.cost.weak);
      c.cost.upgrade = optional_number(cj, "upgrade");
      c.cost.total_budget = optional_number(cj, "total_budget");
      c.cost.step_fraction = cj.value("step_fraction", c.cost.step_fraction);
      c.cost.step_budget = optional_number(cj, "step_budget");
      if (c.cost.upgrade && std::abs(*c.cost.upgrade - (c.cost.strong - c.cost.weak)) > 1e-9) {
        throw ConfigError("cost.upgrade must equal strong - weak");
      }
    }
    if (!(c.cost.step_fraction > 0.0 && c.cost.step_fraction <= 1.0)) {
      throw ConfigError("cost.step_fraction must lie in (0, 1]");
    }

    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    if (!(c.warmup_fraction > 0.0 && c.warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must lie in (0, 1)");
    c.policy = policy_from_string(j.value("policy", std::string("rs")));
    c.training = training_from_string(j.value("training", std::string("hybrid")));

    if (j.contains("detector")) {
      const auto& dj = j.at("detector");
      if (!dj.is_object()) throw ConfigError("detector must be a JSON object");
      c.detector.type = dj.value("type", std::string("synthetic"));
      if (c.detector.type == "synthetic") {
        reject_unknown_keys(dj,
                            {"type", "max_skill", "tau", "pseudo_weight", "noise_scale", "false_positive_rate",
                             "confusion", "seed"},
                            "detector");
        c.detector.synthetic = dj;
        c.detector.synthetic.erase("type");
      } else if (c.detector.type == "predictions") {
        reject_unknown_keys(dj, {"type", "path"}, "detector");
        if (!dj.contains("path")) throw ConfigError("predictions detector needs 'path'");
        c.detector.predictions = resolve_path(dj.at("path").get<std::string>(), base_dir);
      } else {
        throw ConfigError("detector.type must be 'synthetic' or 'predictions'");
      }
    }

    if (j.contains("miner")) {
      const auto& mj = j.at("miner");
      reject_unknown_keys(mj, {"alpha", "beta", "min_confidence"}, "miner");
      c.miner.alpha = mj.value("alpha", c.miner.alpha);
      c.miner.beta = mj.value("beta", c.miner.beta);
      c.miner.min_confidence = mj.value("min_confidence", c.miner.min_confidence);
    }
    if (!(c.miner.alpha >= 0.0 && c.miner.alpha <= 1.0) || c.miner.beta < 1 || !(c.miner.min_confidence >= 0.0)) {
      throw ConfigError("miner: alpha must lie in [0, 1], beta >= 1, min_confidence >= 0");
    }

    if (j.contains("rounding")) {
      const auto& rj = j.at("rounding");
      reject_unknown_keys(rj, {"sweep", "fallback"}, "rounding");
      if (rj.value("sweep", std::string("values-and-midpoints")) != "values-and-midpoints" ||
          rj.value("fallback", std::string("greedy-repair")) != "greedy-repair") {
        throw ConfigError("rounding supports only sweep=values-and-midpoints, fallback=greedy-repair");
      }
    }

    if (j.contains("lal")) {
      const auto& lj = j.at("lal");
      reject_unknown_keys(lj, {"model", "episodes", "max_steps", "batch", "aux_dataset", "regressor"}, "lal");
      c.lal.model = optional_path(lj, "model", base_dir);
      c.lal.episodes = lj.value("episodes", c.lal.episodes);
      c.lal.max_steps = lj.value("max_steps", c.lal.max_steps);
      c.lal.batch = lj.value("batch", c.lal.batch);
      if (lj.contains("aux_dataset")) {
        json merged = to_json(c.lal.aux_dataset);
        merged.update(lj.at("aux_dataset"));
        c.lal.aux_dataset = synthetic_dataset_spec_from_json(merged);
      }
      c.lal.regressor = regressor_params_from_json(lj.value("regressor", json(nullptr)));
    }
    if (c.lal.episodes < 1 || c.lal.max_steps < 0 || c.lal.batch < 1) {
      throw ConfigError("lal: episodes >= 1, max_steps >= 0 and batch >= 1");
    }

    if (j.contains("rl")) {
      const auto& rj = j.at("rl");
      reject_unknown_keys(rj, {"model", "episodes", "epsilon", "hyperparams"}, "rl");
      c.rl.model = optional_path(rj, "model", base_dir);
      c.rl.episodes = rj.value("episodes", c.rl.episodes);
      c.rl.epsilon = rj.value("epsilon", c.rl.epsilon);
      c.rl.hyper = rl_hyperparams_from_json(rj.value("hyperparams", json(nullptr)));
    }
    if (c.rl.episodes < 1 || !(c.rl.epsilon >= 0.0 && c.rl.epsilon <= 1.0)) {
      throw ConfigError("rl: episodes >= 1 and epsilon in [0, 1]");
    }

    if (j.contains("difficulty") && !j.at("difficulty").is_null()) {
      std::vector<Difficulty> mapping;
      for (const auto& v : j.at("difficulty")) mapping.push_back(difficulty_from_string(v.get<std::string>()));
      c.difficulty = std::move(mapping);
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = resolve_path(j.at("output_dir").get<std::string>(), base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

SimulationSpec auxiliary_simulation(const RunConfig& config, const std::vector<std::string>& eval_classes) {
  auto pool_spec = config.lal.aux_dataset;
  pool_spec.classes = static_cast<int>(eval_classes.size());
  auto test_spec = pool_spec;
  test_spec.seed = pool_spec.seed + 1;
  test_spec.images = std::max(1, pool_spec.images / 2);
  test_spec.id_prefix = pool_spec.id_prefix + "test";
  auto pool = std::make_shared<const Dataset>(make_synthetic_dataset(pool_spec));
  require_disjoint_classes(pool->classes, eval_classes);

  SimulationSpec sim;
  sim.pool = pool;
  sim.test = std::make_shared<const Dataset>(make_synthetic_dataset(test_spec));
  const json detector_params = config.detector.type == "synthetic" ? config.detector.synthetic : json(nullptr);
  sim.backend = std::make_shared<SyntheticBackend>(
      synthetic_params_from_json(detector_params, pool->num_classes(), config.seed));
  sim.cost = CostModel::make(config.cost.strong, config.cost.weak, pool->full_strong_cost(config.cost.strong),
                             config.cost.step_fraction);
  sim.warmup_fraction = config.warmup_fraction;
  sim.miner = config.miner;
  sim.seed = config.seed;
  return sim;
}

PreparedRun prepare_run(const RunConfig& config, std::ostream* log) {
  PreparedRun run;
  run.config = config;
  auto pool = std::make_shared<const Dataset>(materialize(config.dataset));
  if (pool->images.empty()) throw ConfigError("dataset has no images");

  DatasetSource test_source;
  if (config.test_dataset) {
    test_source = *config.test_dataset;
  } else if (config.dataset.path) {
    test_source = config.dataset;
  } else {
    test_source.synthetic = config.dataset.synthetic;
    test_source.synthetic.seed = config.dataset.synthetic.seed + 1;
    test_source.synthetic.images = std::max(1, config.dataset.synthetic.images / 2);
    test_source.synthetic.id_prefix = config.dataset.synthetic.id_prefix + "test";
  }
  auto test = test_source.path && config.dataset.path && *test_source.path == *config.dataset.path
                  ? pool
                  : std::make_shared<const Dataset>(materialize(test_source));
  if (test->classes != pool->classes) throw ConfigError("test dataset must use the pool's class list");

  const double total = config.cost.total_budget.value_or(pool->full_strong_cost(config.cost.strong));
  auto cost = CostModel::make(config.cost.strong, config.cost.weak, total, config.cost.step_fraction);
  if (config.cost.step_budget) cost.step_budget = *config.cost.step_budget;
  cost.validate();
  if (cost.total_budget > pool->full_strong_cost(cost.strong) + kBudgetTolerance) {
    throw ConfigError("cost.total_budget exceeds the cost of labeling the whole pool strongly");
  }

  json detector_json;
  run.sim.pool = pool;
  run.sim.test = test;
  run.sim.backend = make_backend(config, *pool, *test, detector_json);
  run.sim.cost = cost;
  run.sim.warmup_fraction = config.warmup_fraction;
  run.sim.training = config.training;
  run.sim.miner = config.miner;
  run.sim.seed = config.seed;

  run.policy.kind = config.policy;
  const bool learned = config.policy == PolicyKind::kOptLal || config.policy == PolicyKind::kRl;
  if (config.training == TrainingMode::kStrongOnly &&
      (learned || config.policy == PolicyKind::kOptUs)) {
    throw ConfigError(std::string("policy ") + to_string(config.policy) + " requires hybrid training");
  }
  const int state_dim = pool->num_classes() * static_cast<int>(kStateIouThresholds.size());
  if (config.policy == PolicyKind::kOptLal) {
    if (config.lal.model) {
      run.policy.lal = std::make_shared<const LalModel>(LalModel::load(*config.lal.model));
    } else {
      if (log) *log << "collecting LAL training pairs over " << config.lal.episodes << " episodes\n";
      const auto aux = auxiliary_simulation(config, pool->classes);
      const auto samples = collect_training_pairs(aux, config.lal.episodes, mix_seed(config.seed, 0x1a1),
                                                  config.lal.max_steps, config.lal.batch);
      if (log) *log << "fitting LAL regressors on " << samples.size() << " samples\n";
      run.policy.lal = std::make_shared<const LalModel>(fit_lal(samples, config.lal.regressor));
    }
  }
  if (config.policy == PolicyKind::kRl) {
    if (config.rl.model) {
      run.policy.q = std::make_shared<const QFunction>(QFunction::load(*config.rl.model));
    } else {
      if (log) *log << "training RL agent over " << config.rl.episodes << " episodes\n";
      CampaignEnvironment env(auxiliary_simulation(config, pool->classes));
      run.policy.q = std::make_shared<const QFunction>(
          train_agent(env, config.rl.episodes, config.rl.hyper, mix_seed(config.seed, 0x71)));
    }
    if (run.policy.q->state_dim() != state_dim) {
      throw ConfigError("Q function expects state dimension " + std::to_string(run.policy.q->state_dim()) + ", run has " +
                        std::to_string(state_dim));
    }
    run.policy.rl_epsilon = config.rl.epsilon;
  }

  if (config.difficulty) {
    if (static_cast<int>(config.difficulty->size()) != pool->num_classes()) {
      throw ConfigError("difficulty mapping needs one entry per class");
    }
    run.difficulty = *config.difficulty;
  } else {
    run.difficulty = default_difficulty(run.sim, pool->num_classes());
  }

  json difficulty = json::array();
  for (auto d : run.difficulty) difficulty.push_back(to_string(d));
  run.resolved = {
      {"dataset", source_to_json(config.dataset)},
      {"test_dataset", source_to_json(test_source)},
      {"cost",
       {{"strong", cost.strong},
        {"weak", cost.weak},
        {"upgrade", cost.upgrade},
        {"total_budget", cost.total_budget},
        {"step_fraction", config.cost.step_fraction},
        {"step_budget", cost.step_budget}}},
      {"warmup_fraction", config.warmup_fraction},
      {"policy", to_string(config.policy)},
      {"training", to_string(config.training)},
      {"detector", detector_json},
      {"miner", {{"alpha", config.miner.alpha}, {"beta", config.miner.beta}, {"min_confidence", config.miner.min_confidence}}},
      {"rounding", {{"sweep", "values-and-midpoints"}, {"fallback", "greedy-repair"}}},
      {"lal",
       {{"model", optional_to_json(config.lal.model)},
        {"episodes", config.lal.episodes},
        {"max_steps", config.lal.max_steps},
        {"batch", config.lal.batch},
        {"aux_dataset", to_json(config.lal.aux_dataset)},
        {"regressor", to_json(config.lal.regressor)}}},
      {"rl",
       {{"model", optional_to_json(config.rl.model)},
        {"episodes", config.rl.episodes},
        {"epsilon", config.rl.epsilon},
        {"hyperparams", to_json(config.rl.hyper)}}},
      {"difficulty", difficulty},
      {"seed", config.seed},
      {"output_dir", config.output_dir.string()}};
  return run;
}

json summary_json(const PreparedRun& run, const RunResult& result) {
  const auto& cost = run.sim.cost;
  const double full = run.sim.pool->full_strong_cost(cost.strong);
  json averages = json::object();
  const auto& ranges = standard_ranges();
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    averages[ranges[i].name] = result.budget_average[i] ? json(*result.budget_average[i]) : json(nullptr);
  }
  char label[64];
  std::snprintf(label, sizeof label, "a=%g,b=%g", cost.strong, cost.weak);
  return {{"policy", to_string(run.policy.kind)},
          {"training", to_string(run.sim.training)},
          {"seed", run.sim.seed},
          {"cost", {{"strong", cost.strong}, {"weak", cost.weak}, {"upgrade", cost.upgrade},
                    {"ratio", cost.strong / cost.weak}, {"label", label}}},
          {"total_budget", cost.total_budget},
          {"step_budget", cost.step_budget},
          {"steps", static_cast<int>(result.log.size()) - 1},
          {"stop_reason", result.stop_reason},
          {"spent", result.ledger.spent},
          {"budget_percent", 100.0 * result.ledger.spent / full},
          {"final_map", result.log.back().map},
          {"budget_average_map", averages}};
}

RunArtifacts execute_run(const PreparedRun& run, const fs::path& out_dir) {
  RunArtifacts out;
  out.result = run_campaign(run.sim, run.policy);
  out.summary = summary_json(run, out.result);

  fs::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream f(out_dir / name);
    if (!f) throw ConfigError("cannot write " + (out_dir / name).string());
    return f;
  };
  {
    auto f = open("run.jsonl");
    for (const auto& record : out.result.log) f << to_json(record).dump() << '\n';
  }
  write_curve_csv(out.result.curve, out_dir / "curve.csv");
  open("summary.json") << out.summary.dump(2) << '\n';
  open("resolved-config.json") << run.resolved.dump(2) << '\n';
  write_breakdown_csv(difficulty_breakdown(out.result.ledger.actions_log, run.difficulty, *run.sim.pool, run.sim.cost),
                      out_dir / "breakdown.csv");
  return out;
}

}  // namespace budgetal
