#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>

#include "budgetal/campaign.hpp"
#include "budgetal/dataset.hpp"
#include "budgetal/detector.hpp"
#include "budgetal/synthetic_data.hpp"
#include "json.hpp"

namespace fixtures {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("budgetal-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline budgetal::ImageRecord image(const std::string& id, std::vector<std::pair<budgetal::Box, int>> boxes,
                                   int num_classes) {
  budgetal::ImageRecord rec;
  rec.id = id;
  rec.width = 500;
  rec.height = 375;
  for (auto& [b, c] : boxes) rec.gt_boxes.push_back({b, c, false});
  budgetal::derive_weak_label(rec, num_classes);
  return rec;
}

// Small closed-loop simulation over synthetic data.
inline budgetal::SimulationSpec small_simulation(std::uint64_t seed, int images = 120, int classes = 8,
                                                 budgetal::TrainingMode mode = budgetal::TrainingMode::kHybrid,
                                                 double strong = 34.5, double weak = 1.6) {
  using namespace budgetal;
  SyntheticDatasetSpec pool_spec;
  pool_spec.images = images;
  pool_spec.classes = classes;
  pool_spec.seed = seed + 11;
  SyntheticDatasetSpec test_spec = pool_spec;
  test_spec.images = images / 2;
  test_spec.id_prefix = "test";
  test_spec.seed = seed + 12;
  SimulationSpec sim;
  sim.pool = std::make_shared<Dataset>(make_synthetic_dataset(pool_spec));
  sim.test = std::make_shared<Dataset>(make_synthetic_dataset(test_spec));
  sim.backend = std::make_shared<SyntheticBackend>(SyntheticDetectorParams::defaults(classes, seed));
  sim.cost = CostModel::make(strong, weak, sim.pool->full_strong_cost(strong));
  sim.training = mode;
  sim.seed = seed;
  return sim;
}

}  // namespace fixtures
