#pragma once

#include <cstdint>
#include <string>

#include "budgetal/dataset.hpp"
#include "json.hpp"

namespace budgetal {

// VOC-shaped synthetic images: a few boxes each, long-tailed class
// frequencies, 500 x 375 canvas.
struct SyntheticDatasetSpec {
  int images = 400;
  int classes = 20;
  std::string class_prefix = "class";
  std::string id_prefix = "img";
  std::uint64_t seed = 1;
  int max_boxes = 4;
};

nlohmann::json to_json(const SyntheticDatasetSpec& spec);
SyntheticDatasetSpec synthetic_dataset_spec_from_json(const nlohmann::json& j);

Dataset make_synthetic_dataset(const SyntheticDatasetSpec& spec);

}  // namespace budgetal
