#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "budgetal/campaign.hpp"
#include "budgetal/errors.hpp"
#include "budgetal/eval.hpp"
#include "budgetal/lal.hpp"
#include "budgetal/policy_rl.hpp"
#include "budgetal/pseudo.hpp"
#include "budgetal/run_config.hpp"
#include "budgetal/synthetic_data.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace budgetal;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_with_overrides(const CommonOptions& opt) {
  auto config = load_run_config(opt.config);
  if (opt.seed) config.seed = *opt.seed;
  if (!opt.out.empty()) config.output_dir = opt.out;
  return config;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

int cmd_run(const CommonOptions& opt) {
  const auto config = load_with_overrides(opt);
  const auto run = prepare_run(config, &std::cerr);
  const auto artifacts = execute_run(run, config.output_dir);
  std::cout << artifacts.summary.dump(2) << '\n';
  return 0;
}

int cmd_metric(const std::string& curve_path, std::optional<double> lo, std::optional<double> hi) {
  const auto curve = read_curve_csv(curve_path);
  json out;
  if (lo || hi) {
    if (!lo || !hi) throw ConfigError("--lo and --hi must be given together");
    out = {{"lo", *lo}, {"hi", *hi}, {"budget_average_map", budget_average_map(curve, *lo, *hi)}};
  } else {
    const auto values = standard_budget_averages(curve);
    const auto& ranges = standard_ranges();
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      out[ranges[i].name] = values[i] ? json(*values[i]) : json(nullptr);
    }
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_mine(const std::string& predictions_path, const std::string& dataset_path, const MinerParams& params,
             const std::string& out_dir) {
  const auto dataset = load_dataset(dataset_path);
  std::vector<std::string> ids;
  for (const auto& img : dataset.images) ids.push_back(img.id);
  const auto predictions = ingest_predictions(predictions_path, dataset.num_classes(), ids);
  std::map<std::string, PseudoLabelSet> labels;
  int total = 0;
  int without = 0;
  for (const auto& [id, preds] : predictions) {
    auto set = mine_pseudo_labels(preds, dataset.image(id).weak_label, params);
    total += static_cast<int>(set.boxes.size());
    without += set.no_consistent_prediction ? 1 : 0;
    labels.emplace(id, std::move(set));
  }
  const fs::path out = fs::path(out_dir) / "pseudo_labels.json";
  write_json(out, dataset_to_json(export_pseudo_labels(dataset, labels)));
  std::cout << json{{"images", labels.size()}, {"pseudo_labels", total}, {"images_without_consistent_prediction", without},
                    {"output", out.string()}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_lal_collect(const CommonOptions& opt, std::optional<int> episodes) {
  auto config = load_with_overrides(opt);
  if (episodes) config.lal.episodes = *episodes;
  const auto pool = config.dataset.path ? load_dataset(*config.dataset.path) : make_synthetic_dataset(config.dataset.synthetic);
  const auto sim = auxiliary_simulation(config, pool.classes);
  const auto samples = collect_training_pairs(sim, config.lal.episodes, mix_seed(config.seed, 0x1a1),
                                              config.lal.max_steps, config.lal.batch);
  fs::create_directories(config.output_dir);
  const auto out = config.output_dir / "lal_samples.jsonl";
  write_samples_jsonl(samples, out);
  std::cout << json{{"samples", samples.size()}, {"output", out.string()}}.dump(2) << '\n';
  return 0;
}

int cmd_lal_fit(const std::string& samples_path, const std::string& config_path, const std::string& out_dir) {
  RegressorParams params;
  if (!config_path.empty()) params = load_run_config(config_path).lal.regressor;
  const auto samples = read_samples_jsonl(samples_path);
  const auto model = fit_lal(samples, params);
  const fs::path out = fs::path(out_dir) / "lal_model.json";
  fs::create_directories(out_dir);
  model.save(out);
  std::cout << json{{"samples", samples.size()},
                    {"weak_training_loss", model.weak.training_loss()},
                    {"strong_training_loss", model.strong.training_loss()},
                    {"output", out.string()}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_rl_train(const CommonOptions& opt, std::optional<int> episodes) {
  auto config = load_with_overrides(opt);
  if (episodes) config.rl.episodes = *episodes;
  const auto pool = config.dataset.path ? load_dataset(*config.dataset.path) : make_synthetic_dataset(config.dataset.synthetic);
  CampaignEnvironment env(auxiliary_simulation(config, pool.classes));
  TrainingReport report;
  const auto q = train_agent(env, config.rl.episodes, config.rl.hyper, mix_seed(config.seed, 0x71), &report);
  fs::create_directories(config.output_dir);
  const auto out = config.output_dir / "q_function.json";
  q.save(out);
  std::cout << json{{"episodes", config.rl.episodes}, {"episode_returns", report.episode_returns}, {"output", out.string()}}
                   .dump(2)
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budgeted active annotation for object detection"};
  app.require_subcommand(1);

  CommonOptions run_opt;
  auto* run = app.add_subcommand("run", "Run a seeded active-annotation campaign");
  run->add_option("--config", run_opt.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", run_opt.seed, "Override the config seed");
  run->add_option("--out", run_opt.out, "Output directory (overrides config)");

  std::string curve_path;
  std::optional<double> lo;
  std::optional<double> hi;
  auto* metric = app.add_subcommand("metric", "Budget-Average mAP of a curve CSV");
  metric->add_option("--curve", curve_path, "Curve CSV (budget_percent,map)")->required()->check(CLI::ExistingFile);
  metric->add_option("--lo", lo, "Range start in percent");
  metric->add_option("--hi", hi, "Range end in percent");

  std::string predictions_path;
  std::string dataset_path;
  std::string mine_out = ".";
  MinerParams miner;
  auto* mine = app.add_subcommand("mine", "Mine pseudo labels from detector predictions");
  mine->add_option("--predictions", predictions_path, "Prediction JSON")->required()->check(CLI::ExistingFile);
  mine->add_option("--dataset", dataset_path, "Dataset JSON (weak labels come from its boxes)")
      ->required()
      ->check(CLI::ExistingFile);
  mine->add_option("--alpha", miner.alpha, "Same-class IoU limit")->check(CLI::Range(0.0, 1.0));
  mine->add_option("--beta", miner.beta, "Pseudo labels per image")->check(CLI::PositiveNumber);
  mine->add_option("--out", mine_out, "Output directory");

  CommonOptions collect_opt;
  std::optional<int> collect_episodes;
  auto* collect = app.add_subcommand("lal-collect", "Collect LAL training pairs on the auxiliary dataset");
  collect->add_option("--config", collect_opt.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  collect->add_option("--seed", collect_opt.seed, "Override the config seed");
  collect->add_option("--episodes", collect_episodes, "Override lal.episodes")->check(CLI::PositiveNumber);
  collect->add_option("--out", collect_opt.out, "Output directory");

  std::string samples_path;
  std::string fit_config;
  std::string fit_out = ".";
  auto* fit = app.add_subcommand("lal-fit", "Fit the weak and strong gain regressors");
  fit->add_option("--samples", samples_path, "Samples JSONL from lal-collect")->required()->check(CLI::ExistingFile);
  fit->add_option("--config", fit_config, "Run config JSON (regressor settings)")->check(CLI::ExistingFile);
  fit->add_option("--out", fit_out, "Output directory");

  CommonOptions rl_opt;
  std::optional<int> rl_episodes;
  auto* rl = app.add_subcommand("rl-train", "Train the Q-learning policy on the auxiliary dataset");
  rl->add_option("--config", rl_opt.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  rl->add_option("--seed", rl_opt.seed, "Override the config seed");
  rl->add_option("--episodes", rl_episodes, "Override rl.episodes")->check(CLI::PositiveNumber);
  rl->add_option("--out", rl_opt.out, "Output directory");

  SyntheticDatasetSpec gen_spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-dataset", "Write a synthetic dataset JSON");
  gen->add_option("--images", gen_spec.images, "Number of images")->check(CLI::PositiveNumber);
  gen->add_option("--classes", gen_spec.classes, "Number of classes")->check(CLI::Range(2, 1000));
  gen->add_option("--max-boxes", gen_spec.max_boxes, "Boxes per image upper bound")->check(CLI::PositiveNumber);
  gen->add_option("--class-prefix", gen_spec.class_prefix, "Class name prefix");
  gen->add_option("--id-prefix", gen_spec.id_prefix, "Image id prefix");
  gen->add_option("--seed", gen_spec.seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opt);
    if (*metric) return cmd_metric(curve_path, lo, hi);
    if (*mine) return cmd_mine(predictions_path, dataset_path, miner, mine_out);
    if (*collect) return cmd_lal_collect(collect_opt, collect_episodes);
    if (*fit) return cmd_lal_fit(samples_path, fit_config, fit_out);
    if (*rl) return cmd_rl_train(rl_opt, rl_episodes);
    if (*gen) {
      save_dataset(make_synthetic_dataset(gen_spec), gen_out);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
