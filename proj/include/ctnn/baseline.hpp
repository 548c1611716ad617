#pragma once

#include <cstdint>
#include <vector>

#include "ctnn/nn.hpp"
#include "ctnn/raster.hpp"

namespace ctnn {

// Per-pixel multinomial logistic regression, the structure-free reference
// point for the graph model. Features are standardized per band over the
// training pixels; optimization is full-batch momentum SGD from a zero
// initialization.
struct BaselineConfig {
  double learning_rate = 0.5;
  double momentum = 0.9;
  double l2 = 1e-4;
  int epochs = 200;
};

struct BaselineModel {
  Matrix weight;       // bands x classes
  Vector bias;         // classes
  Vector feature_mean; // per band
  Vector feature_std;  // per band, zero-variance bands use 1
  int num_classes = 0;
  std::vector<double> loss_history;
};

BaselineModel train_baseline(const std::vector<const FeatureRaster*>& features,
                             const std::vector<const LabelRaster*>& labels,
                             const BaselineConfig& config);

LabelRaster baseline_predict(const BaselineModel& model, const FeatureRaster& features);

} // namespace ctnn
