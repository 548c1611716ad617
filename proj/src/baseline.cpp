#include "ctnn/baseline.hpp"

#include <cmath>

#include "ctnn/errors.hpp"

namespace ctnn {

namespace {

// Stack the per-pixel feature vectors of every tile into one design matrix.
Matrix stack_features(const std::vector<const FeatureRaster*>& features,
                      std::int64_t bands, std::int64_t total_pixels) {
  Matrix x(total_pixels, bands);
  std::int64_t row = 0;
  for (const FeatureRaster* raster : features) {
    const std::int64_t pixels = raster->rows() * raster->cols();
    for (std::int64_t p = 0; p < pixels; ++p) {
      for (std::int64_t b = 0; b < bands; ++b) {
        x(row, b) = raster->at(p, b);
      }
      ++row;
    }
  }
  return x;
}

} // namespace

BaselineModel train_baseline(const std::vector<const FeatureRaster*>& features,
                             const std::vector<const LabelRaster*>& labels,
                             const BaselineConfig& config) {
  require(!features.empty(), ErrorCode::bad_argument, "baseline needs at least one tile");
  require(features.size() == labels.size(), ErrorCode::bad_argument,
          "baseline needs matching feature and label tiles");
  require(config.epochs > 0, ErrorCode::bad_argument, "baseline epochs must be positive");
  require(config.learning_rate > 0.0, ErrorCode::bad_argument,
          "baseline learning rate must be positive");

  const std::int64_t bands = features[0]->bands();
  const int num_classes = labels[0]->num_classes();
  std::int64_t total_pixels = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    require(features[i]->bands() == bands, ErrorCode::dimension_mismatch,
            "baseline tiles disagree on feature bands");
    require(labels[i]->num_classes() == num_classes, ErrorCode::dimension_mismatch,
            "baseline tiles disagree on class count");
    require(features[i]->rows() == labels[i]->rows() &&
                features[i]->cols() == labels[i]->cols(),
            ErrorCode::dimension_mismatch, "baseline feature and label shapes differ");
    total_pixels += features[i]->rows() * features[i]->cols();
  }

  Matrix x = stack_features(features, bands, total_pixels);
  Eigen::VectorXi y(total_pixels);
  std::int64_t row = 0;
  for (const LabelRaster* raster : labels) {
    const std::int64_t pixels = raster->rows() * raster->cols();
    for (std::int64_t p = 0; p < pixels; ++p) {
      y[row++] = raster->at(p);
    }
  }

  BaselineModel model;
  model.num_classes = num_classes;
  model.feature_mean = x.colwise().mean();
  Vector var = (x.rowwise() - model.feature_mean.transpose())
                   .array()
                   .square()
                   .colwise()
                   .mean();
  model.feature_std = var.array().sqrt();
  for (std::int64_t b = 0; b < bands; ++b) {
    if (model.feature_std[b] == 0.0) {
      model.feature_std[b] = 1.0;
    }
  }
  x = (x.rowwise() - model.feature_mean.transpose()).array().rowwise() /
      model.feature_std.transpose().array();

  model.weight = Matrix::Zero(bands, num_classes);
  model.bias = Vector::Zero(num_classes);
  Matrix weight_grad = Matrix::Zero(bands, num_classes);
  Vector bias_grad = Vector::Zero(num_classes);

  std::vector<ParamView> params;
  params.push_back({"weight", model.weight.data(), weight_grad.data(), bands,
                    num_classes, true});
  params.push_back({"bias", model.bias.data(), bias_grad.data(), num_classes, 1, false});

  MomentumOptimizer optimizer;
  optimizer.learning_rate = config.learning_rate;
  optimizer.momentum = config.momentum;
  optimizer.decay = 1.0;
  optimizer.l2 = config.l2;
  optimizer.init(params);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Matrix logits = (x * model.weight).rowwise() + model.bias.transpose();
    SoftmaxXentResult result = softmax_xent(logits, y);
    require(std::isfinite(result.loss), ErrorCode::numeric_failure,
            "baseline loss is not finite");
    model.loss_history.push_back(result.loss + optimizer.penalty(params));

    weight_grad = x.transpose() * result.grad;
    bias_grad = result.grad.colwise().sum();
    optimizer.step(params, epoch);
  }

  return model;
}

LabelRaster baseline_predict(const BaselineModel& model, const FeatureRaster& features) {
  require(features.bands() == model.weight.rows(), ErrorCode::dimension_mismatch,
          "feature bands do not match the baseline model");
  const std::int64_t pixels = features.rows() * features.cols();
  Matrix x(pixels, features.bands());
  for (std::int64_t p = 0; p < pixels; ++p) {
    for (std::int64_t b = 0; b < features.bands(); ++b) {
      x(p, b) = (features.at(p, b) - model.feature_mean[b]) / model.feature_std[b];
    }
  }
  Matrix logits = (x * model.weight).rowwise() + model.bias.transpose();
  Eigen::VectorXi predicted = argmax_rows(logits);
  std::vector<std::uint8_t> classes(static_cast<std::size_t>(pixels));
  for (std::int64_t p = 0; p < pixels; ++p) {
    classes[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(predicted[p]);
  }
  return LabelRaster(features.rows(), features.cols(), model.num_classes,
                     std::move(classes));
}

} // namespace ctnn
