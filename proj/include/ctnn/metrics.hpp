#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctnn/raster.hpp"

namespace ctnn {

struct ClassMetrics {
  int class_id = 0;
  std::int64_t true_positive = 0;
  std::int64_t false_positive = 0;
  std::int64_t false_negative = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::int64_t pixels = 0; // pixels compared (mask applied)
  double accuracy = 0.0;
  double macro_f1 = 0.0; // mean F1 over all classes, absent classes score 0
  std::vector<ClassMetrics> per_class;
  Eigen::MatrixX<std::int64_t> confusion; // rows = reference, cols = predicted
};

// Pixel-level comparison of two label rasters of the same shape and class
// count. valid_mask, when given, marks pixels to include (1 = include); it
// must have rows*cols entries.
MetricsReport evaluate(const LabelRaster& predicted, const LabelRaster& reference,
                       const std::vector<std::uint8_t>* valid_mask = nullptr);

nlohmann::json metrics_to_json(const MetricsReport& report);
std::string metrics_to_table(const MetricsReport& report);

} // namespace ctnn
