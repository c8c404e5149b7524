#include "budgetal/lal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "budgetal/campaign.hpp"
#include "budgetal/errors.hpp"
#include "budgetal/rng.hpp"
#include "budgetal/selection.hpp"

namespace budgetal {

using nlohmann::json;

const char* to_string(GainAction action) { return action == GainAction::kWeak ? "weak" : "strong"; }

GainAction gain_action_from_string(const std::string& s) {
  if (s == "weak") return GainAction::kWeak;
  if (s == "strong") return GainAction::kStrong;
  throw ParseError("unknown action type '" + s + "'");
}

void write_samples_jsonl(const std::vector<GainSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& s : samples) {
    out << json{{"v", s.features}, {"action", to_string(s.action)}, {"delta", s.observed_delta}}.dump() << '\n';
  }
}

std::vector<GainSample> read_samples_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open samples file " + path.string());
  std::vector<GainSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      GainSample s;
      s.features = j.at("v").get<std::vector<double>>();
      s.action = gain_action_from_string(j.at("action").get<std::string>());
      s.observed_delta = j.at("delta").get<double>();
      for (double v : s.features) {
        if (!std::isfinite(v)) throw ValidationError("non-finite feature");
      }
      if (!(s.observed_delta >= -1.0 && s.observed_delta <= 1.0)) throw ValidationError("delta outside [-1, 1]");
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

json to_json(const RegressorParams& p) {
  return {{"kind", p.kind == RegressorKind::kKernelSvr ? "svr" : "ridge"},
          {"regularization", p.regularization},
          {"insensitivity", p.insensitivity},
          {"kernel_width", p.kernel_width},
          {"max_sweeps", p.max_sweeps},
          {"tolerance", p.tolerance}};
}

RegressorParams regressor_params_from_json(const json& j) {
  RegressorParams p;
  if (j.is_null()) return p;
  const auto kind = j.value("kind", std::string("svr"));
  if (kind == "svr") {
    p.kind = RegressorKind::kKernelSvr;
  } else if (kind == "ridge") {
    p.kind = RegressorKind::kRidge;
  } else {
    throw ConfigError("regressor kind must be 'svr' or 'ridge'");
  }
  p.regularization = j.value("regularization", p.regularization);
  p.insensitivity = j.value("insensitivity", p.insensitivity);
  p.kernel_width = j.value("kernel_width", p.kernel_width);
  p.max_sweeps = j.value("max_sweeps", p.max_sweeps);
  p.tolerance = j.value("tolerance", p.tolerance);
  if (!(p.regularization > 0.0) || !(p.insensitivity >= 0.0) || !(p.kernel_width >= 0.0) || p.max_sweeps < 1) {
    throw ConfigError("invalid regressor parameters");
  }
  return p;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace

GainRegressor GainRegressor::fit(const std::vector<GainSample>& samples, GainAction action,
                                 const RegressorParams& params) {
  std::vector<GainSample> data;
  for (const auto& s : samples) {
    if (s.action == action) data.push_back(s);
  }
  if (data.size() < kMinTrainingSamples) {
    throw ValidationError(std::string("too few ") + to_string(action) + " samples to fit a gain regressor (" +
                          std::to_string(data.size()) + ")");
  }
  const std::size_t dim = data.front().features.size();
  for (const auto& s : data) {
    if (s.features.size() != dim) throw ValidationError("gain samples have inconsistent feature lengths");
  }
  // Canonical order makes the fit independent of sample order.
  std::sort(data.begin(), data.end(), [](const GainSample& l, const GainSample& r) {
    if (l.features != r.features) return l.features < r.features;
    return l.observed_delta < r.observed_delta;
  });

  const std::size_t n = data.size();
  GainRegressor model;
  model.action_ = action;
  model.kind_ = params.kind;
  model.fitted_ = true;
  double mean = 0.0;
  for (const auto& s : data) mean += s.observed_delta;
  model.intercept_ = mean / static_cast<double>(n);

  if (params.kind == RegressorKind::kRidge) {
    model.feature_mean_.assign(dim, 0.0);
    for (const auto& s : data) {
      for (std::size_t j = 0; j < dim; ++j) model.feature_mean_[j] += s.features[j] / static_cast<double>(n);
    }
    Eigen::MatrixXd x(n, dim);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) x(i, j) = data[i].features[j] - model.feature_mean_[j];
      y(i) = data[i].observed_delta - model.intercept_;
    }
    Eigen::MatrixXd gram = x.transpose() * x;
    gram.diagonal().array() += params.regularization;
    const Eigen::VectorXd w = gram.ldlt().solve(x.transpose() * y);
    model.linear_.assign(w.data(), w.data() + w.size());
  } else {
    std::vector<double> dists;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = std::sqrt(squared_distance(data[i].features, data[j].features));
        if (d > 0.0) dists.push_back(d);
      }
    }
    model.width_ = params.kernel_width > 0.0 ? params.kernel_width : (dists.empty() ? 1.0 : median(dists));
    const double gamma = 1.0 / (2.0 * model.width_ * model.width_);
    std::vector<double> kernel(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        kernel[i * n + j] = std::exp(-gamma * squared_distance(data[i].features, data[j].features));
      }
    }
    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = data[i].observed_delta - model.intercept_;
    // min 1/2 b'Kb - r'b + eps |b|_1  s.t. |b_i| <= C
    std::vector<double> beta(n, 0.0);
    std::vector<double> kb(n, 0.0);
    const double box = params.regularization;
    for (int sweep = 0; sweep < params.max_sweeps; ++sweep) {
      double max_change = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double kii = kernel[i * n + i];
        const double z = beta[i] - (kb[i] - residual[i]) / kii;
        const double shrunk = std::copysign(std::max(std::abs(z) - params.insensitivity / kii, 0.0), z);
        const double next = std::clamp(shrunk, -box, box);
        const double change = next - beta[i];
        if (change != 0.0) {
          for (std::size_t j = 0; j < n; ++j) kb[j] += change * kernel[j * n + i];
          beta[i] = next;
          max_change = std::max(max_change, std::abs(change));
        }
      }
      if (max_change < params.tolerance) break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (beta[i] == 0.0) continue;
      model.support_.push_back(data[i].features);
      model.dual_.push_back(beta[i]);
    }
  }
  double loss = 0.0;
  for (const auto& s : data) loss += std::max(0.0, std::abs(model.predict(s.features) - s.observed_delta) - params.insensitivity);
  model.training_loss_ = loss / static_cast<double>(n);
  return model;
}

double GainRegressor::predict(const std::vector<double>& features) const {
  if (!fitted_) throw ValidationError("gain regressor used before fitting");
  double out = intercept_;
  if (kind_ == RegressorKind::kRidge) {
    if (features.size() != linear_.size()) throw ValidationError("feature length mismatch");
    for (std::size_t j = 0; j < linear_.size(); ++j) out += linear_[j] * (features[j] - feature_mean_[j]);
    return out;
  }
  const double gamma = 1.0 / (2.0 * width_ * width_);
  for (std::size_t i = 0; i < support_.size(); ++i) {
    if (features.size() != support_[i].size()) throw ValidationError("feature length mismatch");
    out += dual_[i] * std::exp(-gamma * squared_distance(support_[i], features));
  }
  return out;
}

json GainRegressor::to_json() const {
  return {{"action", budgetal::to_string(action_)},
          {"kind", kind_ == RegressorKind::kKernelSvr ? "svr" : "ridge"},
          {"intercept", intercept_},
          {"width", width_},
          {"support", support_},
          {"dual", dual_},
          {"linear", linear_},
          {"feature_mean", feature_mean_},
          {"training_loss", training_loss_}};
}

GainRegressor GainRegressor::from_json(const json& j) {
  GainRegressor r;
  try {
    r.action_ = gain_action_from_string(j.at("action").get<std::string>());
    r.kind_ = j.at("kind").get<std::string>() == "ridge" ? RegressorKind::kRidge : RegressorKind::kKernelSvr;
    r.intercept_ = j.at("intercept").get<double>();
    r.width_ = j.at("width").get<double>();
    r.support_ = j.at("support").get<std::vector<std::vector<double>>>();
    r.dual_ = j.at("dual").get<std::vector<double>>();
    r.linear_ = j.at("linear").get<std::vector<double>>();
    r.feature_mean_ = j.at("feature_mean").get<std::vector<double>>();
    r.training_loss_ = j.value("training_loss", 0.0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed gain regressor: ") + e.what());
  }
  if (r.support_.size() != r.dual_.size() || r.linear_.size() != r.feature_mean_.size()) {
    throw ParseError("malformed gain regressor: inconsistent parameter lengths");
  }
  r.fitted_ = true;
  return r;
}

json LalModel::to_json() const { return {{"weak", weak.to_json()}, {"strong", strong.to_json()}}; }

LalModel LalModel::from_json(const json& j) {
  LalModel m;
  try {
    m.weak = GainRegressor::from_json(j.at("weak"));
    m.strong = GainRegressor::from_json(j.at("strong"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed LAL model: ") + e.what());
  }
  return m;
}

void LalModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

LalModel LalModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open LAL model " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("malformed LAL model " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

LalModel fit_lal(const std::vector<GainSample>& samples, const RegressorParams& params) {
  return {GainRegressor::fit(samples, GainAction::kWeak, params), GainRegressor::fit(samples, GainAction::kStrong, params)};
}

PredictedGains predict_gains(const LalModel& model, const ModelState& state, const std::vector<double>& scores) {
  PredictedGains out;
  out.weak.reserve(scores.size());
  out.strong.reserve(scores.size());
  for (double s : scores) {
    const auto v = lal_features(state, {"", s});
    out.weak.push_back(model.weak.predict(v));
    out.strong.push_back(model.strong.predict(v));
  }
  return out;
}

void require_disjoint_classes(const std::vector<std::string>& train_classes,
                              const std::vector<std::string>& eval_classes) {
  for (const auto& c : train_classes) {
    if (std::find(eval_classes.begin(), eval_classes.end(), c) != eval_classes.end()) {
      throw ConfigError("LAL training classes must be disjoint from evaluation classes; '" + c + "' is in both");
    }
  }
}

std::vector<GainSample> collect_training_pairs(const SimulationSpec& sim, int n_episodes, std::uint64_t seed,
                                               int max_steps, int batch) {
  if (n_episodes < 0 || batch < 1) throw ConfigError("LAL collection needs n_episodes >= 0 and batch >= 1");
  std::vector<GainSample> out;
  for (int e = 0; e < n_episodes; ++e) {
    SimulationSpec episode = sim;
    episode.seed = mix_seed(seed, static_cast<std::uint64_t>(e));
    episode.training = TrainingMode::kHybrid;
    Campaign campaign(episode);
    const bool by_uncertainty = e % 2 == 1;
    bool weak_turn = (mix_seed(episode.seed, 0x77) & 1U) == 0U;
    for (int step = 0; max_steps == 0 || step < max_steps; ++step, weak_turn = !weak_turn) {
      const auto cands = campaign.candidates();
      if (cands.empty()) break;
      const auto scores = campaign.scores(cands);

      std::vector<std::size_t> order(cands.size());
      std::iota(order.begin(), order.end(), 0);
      if (by_uncertainty) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return scores[l] > scores[r]; });
      } else {
        Rng rng(mix_seed(episode.seed, static_cast<std::uint64_t>(step + 1)));
        rng.shuffle(order);
      }

      const auto& cost = campaign.cost();
      const bool any_unlabeled =
          std::any_of(cands.begin(), cands.end(), [](const Candidate& c) { return !c.weak; });
      const bool weak = weak_turn && any_unlabeled;
      SelectionPlan plan;
      double spend = 0.0;
      double score_sum = 0.0;
      for (auto i : order) {
        if (static_cast<int>(plan.size()) >= batch) break;
        if (weak && cands[i].weak) continue;
        const double unit = weak ? cost.weak : (cands[i].weak ? cost.upgrade : cost.strong);
        if (spend + unit > campaign.remaining() + kBudgetTolerance) continue;
        (weak ? plan.weak : (cands[i].weak ? plan.upgrade : plan.strong)).push_back(cands[i].id);
        spend += unit;
        score_sum += scores[i];
      }
      if (plan.empty()) break;

      GainSample sample;
      sample.features = lal_features(campaign.state(), {"", score_sum / static_cast<double>(plan.size())});
      sample.action = weak ? GainAction::kWeak : GainAction::kStrong;
      const double before = campaign.map();
      campaign.step(plan);
      sample.observed_delta = (campaign.map() - before) / static_cast<double>(plan.size());
      out.push_back(std::move(sample));
    }
  }
  return out;
}

}  // namespace budgetal
