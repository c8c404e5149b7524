#include "budgetal/synthetic_data.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "budgetal/errors.hpp"
#include "budgetal/rng.hpp"

namespace budgetal {

using nlohmann::json;

json to_json(const SyntheticDatasetSpec& spec) {
  return {{"images", spec.images},       {"classes", spec.classes}, {"class_prefix", spec.class_prefix},
          {"id_prefix", spec.id_prefix}, {"seed", spec.seed},       {"max_boxes", spec.max_boxes}};
}

SyntheticDatasetSpec synthetic_dataset_spec_from_json(const json& j) {
  SyntheticDatasetSpec s;
  try {
    s.images = j.value("images", s.images);
    s.classes = j.value("classes", s.classes);
    s.class_prefix = j.value("class_prefix", s.class_prefix);
    s.id_prefix = j.value("id_prefix", s.id_prefix);
    s.seed = j.value("seed", s.seed);
    s.max_boxes = j.value("max_boxes", s.max_boxes);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic dataset spec: ") + e.what());
  }
  if (s.images < 1 || s.classes < 2 || s.max_boxes < 1) throw ConfigError("synthetic dataset spec: bad sizes");
  return s;
}

Dataset make_synthetic_dataset(const SyntheticDatasetSpec& spec) {
  Dataset out;
  char buf[64];
  for (int c = 0; c < spec.classes; ++c) {
    std::snprintf(buf, sizeof buf, "_%02d", c);
    out.classes.push_back(spec.class_prefix + buf);
  }
  // Zipf-like class frequencies.
  std::vector<double> cdf;
  double total = 0.0;
  for (int c = 0; c < spec.classes; ++c) {
    total += 1.0 / (1.0 + 0.25 * c);
    cdf.push_back(total);
  }
  Rng rng(spec.seed);
  const int digits = static_cast<int>(std::to_string(spec.images).size());
  for (int i = 0; i < spec.images; ++i) {
    ImageRecord rec;
    std::snprintf(buf, sizeof buf, "_%0*d", digits, i);
    rec.id = spec.id_prefix + buf;
    rec.width = 500;
    rec.height = 375;
    const int n_boxes = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(spec.max_boxes)));
    for (int b = 0; b < n_boxes; ++b) {
      const double u = rng.uniform() * total;
      int cls = 0;
      while (cls + 1 < spec.classes && cdf[static_cast<std::size_t>(cls)] <= u) ++cls;
      const double w = rng.uniform(0.1, 0.6) * rec.width;
      const double h = rng.uniform(0.1, 0.6) * rec.height;
      const double x0 = rng.uniform(0.0, rec.width - w);
      const double y0 = rng.uniform(0.0, rec.height - h);
      rec.gt_boxes.push_back({{x0, y0, x0 + w, y0 + h}, cls, false});
    }
    derive_weak_label(rec, spec.classes);
    out.images.push_back(std::move(rec));
  }
  out.reindex();
  return out;
}

}  // namespace budgetal
