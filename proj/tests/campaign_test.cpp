#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "budgetal/campaign.hpp"
#include "budgetal/errors.hpp"
#include "budgetal/run_config.hpp"
#include "support/fixtures.hpp"

using namespace budgetal;
using nlohmann::json;

namespace {

json small_config(const std::string& policy, int images = 60, std::uint64_t seed = 5) {
  return {{"dataset", {{"synthetic", {{"images", images}, {"classes", 6}, {"seed", seed}}}}},
          {"policy", policy},
          {"seed", seed},
          {"lal", {{"episodes", 4}, {"aux_dataset", {{"images", 80}}}}},
          {"rl", {{"episodes", 2}}}};
}

RunArtifacts run_in(const json& config, const std::filesystem::path& out) {
  auto parsed = parse_run_config(config);
  parsed.output_dir = out;
  return execute_run(prepare_run(parsed), out);
}

int run_cli(const std::string& args, const std::filesystem::path& stdout_file) {
  const std::string cmd = std::string(BUDGETAL_CLI_PATH) + " " + args + " > " + stdout_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Campaign, WarmupStepIsLogged) {
  const auto sim = fixtures::small_simulation(1);
  Campaign c(sim);
  ASSERT_EQ(c.log().size(), 1u);
  EXPECT_EQ(c.log()[0].step, 0);
  EXPECT_EQ(c.pools().strong.size(), 12u);
  EXPECT_EQ(c.log()[0].state.values.size(), 5u * 8u);
  EXPECT_GE(c.map(), 0.0);
  EXPECT_LE(c.map(), 1.0);
}

TEST(Campaign, WarmupIsSharedAcrossPolicies) {
  const auto sim = fixtures::small_simulation(2);
  PolicySpec rs;
  PolicySpec us;
  us.kind = PolicyKind::kUncertainty;
  const auto a = run_campaign(sim, rs);
  const auto b = run_campaign(sim, us);
  EXPECT_EQ(a.log[0].map, b.log[0].map);
  EXPECT_EQ(a.ledger.actions_log.front().image_id, b.ledger.actions_log.front().image_id);
}

TEST(RunCampaign, LedgerInvariantsPerPolicy) {
  for (auto kind : {PolicyKind::kRandom, PolicyKind::kUncertainty, PolicyKind::kSmallestUncertainty, PolicyKind::kOptUs}) {
    PolicySpec policy;
    policy.kind = kind;
    const auto sim = fixtures::small_simulation(3);
    const auto r = run_campaign(sim, policy);
    const auto& cost = sim.cost;
    double total = 0.0;
    for (std::size_t i = 0; i < r.log.size(); ++i) {
      const auto& rec = r.log[i];
      total += rec.step_spend;
      EXPECT_NEAR(rec.spent, total, 1e-6);
      EXPECT_LE(rec.spent, cost.total_budget + 1e-9);
      EXPECT_EQ(rec.unlabeled + rec.weak + rec.strong, sim.pool->images.size());
      if (i > 0 && i + 1 < r.log.size() && rec.plan.relaxation == WindowRelaxation::kNone) {
        EXPECT_GT(rec.step_spend, cost.step_budget - cost.strong) << to_string(kind) << " step " << i;
        EXPECT_LE(rec.step_spend, cost.step_budget + 1e-9);
      }
    }
    EXPECT_FALSE(r.stop_reason.empty());
    EXPECT_EQ(r.curve.points.size(), r.log.size());
  }
}

TEST(RunCampaign, StrongOnlyNeverWeakLabels) {
  PolicySpec policy;
  const auto r = run_campaign(fixtures::small_simulation(4, 120, 8, TrainingMode::kStrongOnly), policy);
  for (const auto& a : r.ledger.actions_log) EXPECT_EQ(a.action, Action::kStrong);
  PolicySpec opt;
  opt.kind = PolicyKind::kOptUs;
  EXPECT_THROW(run_campaign(fixtures::small_simulation(4, 120, 8, TrainingMode::kStrongOnly), opt), ConfigError);
}

TEST(RunCampaign, CheapStrongCostVariantCompletes) {
  PolicySpec policy;
  policy.kind = PolicyKind::kOptUs;
  const auto expensive = run_campaign(fixtures::small_simulation(5), policy);
  const auto cheap = run_campaign(fixtures::small_simulation(5, 120, 8, TrainingMode::kHybrid, 7.0, 1.6), policy);
  EXPECT_FALSE(expensive.log.empty());
  EXPECT_FALSE(cheap.log.empty());
  EXPECT_GT(cheap.log.back().budget_percent, 90.0);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_run_config(json{{"dataset", "x.json"}, {"polcy", "rs"}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"dataset", "x.json"}, {"policy", "best"}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"policy", "rs"}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"dataset", "x.json"}, {"cost", {{"strong", 34.5}, {"weak", 1.6}, {"upgrade", 30}}}}),
               ConfigError);
  EXPECT_THROW(parse_run_config(json{{"dataset", "x.json"}, {"rounding", {{"sweep", "grid"}}}}), ConfigError);
}

TEST(RunConfig, ResolvedConfigListsDefaults) {
  const auto run = prepare_run(parse_run_config(small_config("rs")));
  for (const char* key : {"dataset", "test_dataset", "cost", "warmup_fraction", "policy", "training", "detector",
                          "miner", "rounding", "seed"}) {
    EXPECT_TRUE(run.resolved.contains(key)) << key;
  }
  EXPECT_DOUBLE_EQ(run.resolved["cost"]["upgrade"].get<double>(), 34.5 - 1.6);
  EXPECT_EQ(run.difficulty.size(), 6u);
}

TEST(ExecuteRun, TinyDatasetWritesArtifacts) {
  fixtures::TempDir dir("run");
  const auto art = run_in(small_config("opt-us", 30), dir.path());
  for (const char* f : {"run.jsonl", "curve.csv", "summary.json", "resolved-config.json", "breakdown.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_GT(art.result.log.size(), 3u);
  EXPECT_NEAR(art.result.log.back().budget_percent, 100.0, 5.0);
  EXPECT_EQ(art.summary["policy"], "opt-us");
  const auto curve = read_curve_csv(dir / "curve.csv");
  EXPECT_EQ(curve.points.size(), art.result.log.size());
}

TEST(ExecuteRun, ByteIdenticalLogsForFixedSeed) {
  for (const char* policy : {"rs", "sus", "opt-lal", "rl"}) {
    fixtures::TempDir a("det");
    fixtures::TempDir b("det");
    run_in(small_config(policy), a.path());
    run_in(small_config(policy), b.path());
    EXPECT_EQ(fixtures::read_text(a / "run.jsonl"), fixtures::read_text(b / "run.jsonl")) << policy;
    EXPECT_FALSE(fixtures::read_text(a / "run.jsonl").empty());
  }
}

TEST(ExecuteRun, SummaryLabelsCostRatio) {
  fixtures::TempDir a("cost");
  fixtures::TempDir b("cost");
  auto cheap = small_config("rs");
  cheap["cost"] = {{"strong", 7.0}, {"weak", 1.6}};
  const auto s1 = run_in(small_config("rs"), a.path()).summary;
  const auto s2 = run_in(cheap, b.path()).summary;
  EXPECT_EQ(s1["cost"]["label"], "a=34.5,b=1.6");
  EXPECT_EQ(s2["cost"]["label"], "a=7,b=1.6");
  EXPECT_NEAR(s2["cost"]["ratio"].get<double>(), 7.0 / 1.6, 1e-12);
}

TEST(Cli, RunAndMetricRoundTrip) {
  fixtures::TempDir dir("cli");
  fixtures::write_text(dir / "config.json", small_config("us", 60).dump());
  ASSERT_EQ(run_cli("run --config " + (dir / "config.json").string() + " --out " + (dir / "out").string(),
                    dir / "run.txt"),
            0)
      << fixtures::read_text(dir / "run.txt");
  const auto summary = json::parse(fixtures::read_text(dir / "out" / "summary.json"));
  ASSERT_EQ(run_cli("metric --curve " + (dir / "out" / "curve.csv").string(), dir / "metric.txt"), 0);
  const auto metric = json::parse(fixtures::read_text(dir / "metric.txt"));
  for (const char* range : {"low", "mid", "high"}) {
    const auto& want = summary["budget_average_map"][range];
    if (want.is_null()) {
      EXPECT_TRUE(metric[range].is_null());
    } else {
      EXPECT_NEAR(metric[range].get<double>(), want.get<double>(), 1e-12) << range;
    }
  }
}

TEST(Cli, MineAndConfigErrors) {
  fixtures::TempDir dir("cli");
  Dataset ds;
  ds.classes = {"a", "b", "c"};
  ds.images = {fixtures::image("x", {{Box{0, 0, 10, 10}, 0}}, 3), fixtures::image("y", {{Box{0, 0, 10, 10}, 1}}, 3)};
  ds.reindex();
  save_dataset(ds, dir / "ds.json");
  const json preds = {{"predictions",
                       {{{"image_id", "x"}, {"boxes", {{0, 0, 10, 10}, {1, 1, 9, 9}}}, {"class_probs", {{.8, .1, .1}, {.1, .1, .8}}}}}}};
  fixtures::write_text(dir / "p.json", preds.dump());
  ASSERT_EQ(run_cli("mine --predictions " + (dir / "p.json").string() + " --dataset " + (dir / "ds.json").string() +
                        " --out " + dir.path().string(),
                    dir / "mine.txt"),
            0)
      << fixtures::read_text(dir / "mine.txt");
  const auto mined = load_dataset(dir / "pseudo_labels.json");
  ASSERT_EQ(mined.images.size(), 2u);
  EXPECT_EQ(mined.image("x").gt_boxes.size(), 1u);
  EXPECT_TRUE(mined.image("y").gt_boxes.empty());

  fixtures::write_text(dir / "bad.json", json{{"dataset", "ds.json"}, {"policy", "nope"}}.dump());
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string(), dir / "bad.txt"), 2);
}

TEST(Cli, LalAndRlWrappers) {
  fixtures::TempDir dir("cli");
  fixtures::write_text(dir / "config.json", small_config("opt-lal", 60).dump());
  const auto cfg = (dir / "config.json").string();
  ASSERT_EQ(run_cli("lal-collect --config " + cfg + " --out " + dir.path().string(), dir / "c.txt"), 0)
      << fixtures::read_text(dir / "c.txt");
  ASSERT_EQ(run_cli("lal-fit --samples " + (dir / "lal_samples.jsonl").string() + " --out " + dir.path().string(),
                    dir / "f.txt"),
            0)
      << fixtures::read_text(dir / "f.txt");
  EXPECT_NO_THROW(LalModel::load(dir / "lal_model.json"));
  ASSERT_EQ(run_cli("rl-train --config " + cfg + " --episodes 1 --out " + dir.path().string(), dir / "r.txt"), 0)
      << fixtures::read_text(dir / "r.txt");
  EXPECT_EQ(QFunction::load(dir / "q_function.json").state_dim(), 30);
}
