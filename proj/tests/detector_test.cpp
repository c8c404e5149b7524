#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "budgetal/detector.hpp"
#include "budgetal/errors.hpp"
#include "budgetal/eval.hpp"
#include "budgetal/synthetic_data.hpp"
#include "support/fixtures.hpp"

using namespace budgetal;
using nlohmann::json;

namespace {

SyntheticDetectorParams flat_params(int classes, double max_skill, double tau) {
  SyntheticDetectorParams p;
  p.max_skill.assign(static_cast<std::size_t>(classes), max_skill);
  p.tau.assign(static_cast<std::size_t>(classes), tau);
  return p;
}

SyntheticDetectorModel fixed_skill(int classes, double sigma, double noise, double fp_rate) {
  SyntheticDetectorModel m;
  m.skill.assign(static_cast<std::size_t>(classes), sigma);
  m.noise_scale = noise;
  m.false_positive_rate = fp_rate;
  return m;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += rx[i] / n, my += ry[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(TrainSynthetic, ZeroExamplesGiveZeroSkill) {
  const auto params = SyntheticDetectorParams::defaults(20, 0);
  const auto m = train_synthetic(std::vector<double>(20, 0.0), std::vector<double>(20, 0.0), params);
  for (double s : m.skill) EXPECT_EQ(s, 0.0);
}

TEST(TrainSynthetic, SaturatesAtMaxSkill) {
  const auto params = flat_params(2, 0.9, 50);
  const auto m = train_synthetic({1e6, 1e6}, {0, 0}, params);
  EXPECT_NEAR(m.skill[0], 0.9, 1e-12);
}

TEST(TrainSynthetic, HandEvaluatedSkillCurve) {
  const auto params = flat_params(1, 0.9, 50);
  const auto m = train_synthetic({50}, {0}, params);
  EXPECT_NEAR(m.skill[0], 0.5689, 1e-4);
  EXPECT_NEAR(m.skill[0], 0.9 * (1.0 - std::exp(-1.0)), 1e-12);
}

TEST(TrainSynthetic, PseudoExamplesCountWithWeight) {
  auto params = flat_params(1, 0.9, 50);
  params.pseudo_weight = 0.5;
  const auto a = train_synthetic({0}, {100}, params);
  const auto b = train_synthetic({50}, {0}, params);
  EXPECT_NEAR(a.skill[0], b.skill[0], 1e-12);
}

TEST(TrainSynthetic, StrictlyIncreasingInBothCounts) {
  const auto params = SyntheticDetectorParams::defaults(6, 3);
  for (double n = 0; n < 60; n += 3) {
    const auto lo = train_synthetic(std::vector<double>(6, n), std::vector<double>(6, n), params);
    const auto more_strong = train_synthetic(std::vector<double>(6, n + 1), std::vector<double>(6, n), params);
    const auto more_pseudo = train_synthetic(std::vector<double>(6, n), std::vector<double>(6, n + 1), params);
    for (std::size_t c = 0; c < 6; ++c) {
      EXPECT_GT(more_strong.skill[c], lo.skill[c]);
      EXPECT_GT(more_pseudo.skill[c], lo.skill[c]);
      EXPECT_LE(more_strong.skill[c], params.max_skill[c]);
    }
  }
}

TEST(TrainSynthetic, RejectsBadInput) {
  const auto params = SyntheticDetectorParams::defaults(3, 0);
  EXPECT_THROW(train_synthetic({1, 2}, {0, 0, 0}, params), ValidationError);
  EXPECT_THROW(train_synthetic({-1, 0, 0}, {0, 0, 0}, params), ValidationError);
  auto bad = params;
  bad.pseudo_weight = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Predict, NoSkillNoFalsePositivesIsEmpty) {
  const auto img = fixtures::image("a", {{Box{0, 0, 50, 50}, 0}, {Box{60, 60, 90, 90}, 1}}, 3);
  EXPECT_TRUE(predict(fixed_skill(3, 0.0, 0.25, 0.0), img).empty());
}

TEST(Predict, PerfectDetectorReproducesGroundTruth) {
  const auto img = fixtures::image("a", {{Box{0, 0, 50, 50}, 0}, {Box{60, 60, 90, 90}, 2}}, 3);
  const auto p = predict(fixed_skill(3, 1.0, 0.0, 0.0), img);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.boxes[0], img.gt_boxes[0].box);
  EXPECT_EQ(p.boxes[1], img.gt_boxes[1].box);
  EXPECT_EQ(p.classes[0], 0);
  EXPECT_EQ(p.classes[1], 2);
  EXPECT_DOUBLE_EQ(p.confidences[0], 1.0);
  EXPECT_DOUBLE_EQ(p.confidences[1], 1.0);
}

TEST(Predict, DeterministicAndSatisfiesInvariants) {
  SyntheticDatasetSpec spec;
  spec.images = 50;
  const auto ds = make_synthetic_dataset(spec);
  const auto params = SyntheticDetectorParams::defaults(20, 9);
  const auto model = train_synthetic(std::vector<double>(20, 8), std::vector<double>(20, 4), params);
  for (const auto& img : ds.images) {
    const auto a = predict(model, img);
    const auto b = predict(model, img);
    EXPECT_EQ(predictions_to_json({a}), predictions_to_json({b}));
    EXPECT_NO_THROW(a.validate(20));
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a.confidences[i], *std::max_element(a.class_probs[i].begin(), a.class_probs[i].end()));
    }
  }
}

TEST(Predict, SimulatedMapTracksMeanSkill) {
  SyntheticDatasetSpec spec;
  spec.images = 80;
  spec.classes = 10;
  std::vector<double> skill;
  std::vector<double> map;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = 100 + seed;
    const auto ds = make_synthetic_dataset(spec);
    const auto params = SyntheticDetectorParams::defaults(10, seed);
    for (double n : {0.5, 2.0, 5.0, 10.0, 20.0, 40.0}) {
      const auto model = train_synthetic(std::vector<double>(10, n), std::vector<double>(10, 0.0), params);
      std::vector<PredictionSet> sets;
      for (const auto& img : ds.images) sets.push_back(predict(model, img));
      skill.push_back(model.mean_skill());
      map.push_back(mean_ap(voc_ap(flatten(sets), ds.images, 10, 0.5)));
    }
  }
  EXPECT_GT(spearman(skill, map), 0.0);
}

TEST(IngestPredictions, RejectsRowsNotSummingToOne) {
  json doc = {{"predictions", {{{"image_id", "bad-img"}, {"boxes", {{0, 0, 10, 10}}}, {"class_probs", {{0.5, 0.49}}}}}}};
  try {
    parse_predictions(doc, 2);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("bad-img"), std::string::npos);
  }
}

TEST(IngestPredictions, EmptyArrayGivesEmptySets) {
  const auto out = parse_predictions(json{{"predictions", json::array()}}, 3, {"a", "b"});
  ASSERT_EQ(out.size(), 2u);
  for (const auto& [id, set] : out) EXPECT_TRUE(set.empty());
}

TEST(IngestPredictions, CountsPerImageFromFile) {
  fixtures::TempDir dir("pred");
  json doc = {{"predictions",
               {{{"image_id", "a"},
                 {"boxes", {{0, 0, 10, 10}, {5, 5, 20, 20}, {1, 1, 4, 4}}},
                 {"class_probs", {{0.7, 0.3}, {0.2, 0.8}, {0.5, 0.5}}}},
                {{"image_id", "b"}, {"boxes", json::array()}, {"class_probs", json::array()}}}}};
  fixtures::write_text(dir / "p.json", doc.dump());
  const auto out = ingest_predictions(dir / "p.json", 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.at("a").size(), 3u);
  EXPECT_EQ(out.at("b").size(), 0u);
  EXPECT_EQ(out.at("a").classes[1], 1);
  EXPECT_DOUBLE_EQ(out.at("a").confidences[0], 0.7);
}

TEST(IngestPredictions, DropsLowConfidence) {
  std::vector<double> flat(25, 0.04);
  json doc = {{"predictions", {{{"image_id", "a"}, {"boxes", {{0, 0, 10, 10}}}, {"class_probs", {flat}}}}}};
  EXPECT_TRUE(parse_predictions(doc, 25).at("a").empty());
}
