#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "ctnn/hash.hpp"
#include "ctnn/hierarchy.hpp"
#include "ctnn/model.hpp"
#include "ctnn/serial.hpp"
#include "ctnn/topology.hpp"
#include "test_util.hpp"

using namespace ctnn;
using test::TempDir;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Small two-bump terrain with a feature raster that mirrors the labels.
struct Scene {
  ElevationGrid grid;
  FeatureRaster features;
  LabelRaster labels;
};

Scene make_scene(double elevation_scale = 1.0) {
  const std::int64_t rows = 4;
  const std::int64_t cols = 4;
  std::vector<double> values = {0.1, 0.2, 2.1, 2.2, 0.3, 1.1, 2.3, 4.1,
                                0.4, 1.2, 2.4, 4.2, 0.6, 0.7, 2.6, 2.7};
  for (double& v : values) {
    v *= elevation_scale;
  }
  std::vector<double> feature_values;
  std::vector<std::uint8_t> label_values;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      feature_values.push_back(values[r * cols + c]);
      feature_values.push_back(c >= 2 ? 1.0 : -1.0);
      label_values.push_back(c >= 2 ? 1 : 0);
    }
  }
  return {ElevationGrid(rows, cols, std::move(values)),
          FeatureRaster(rows, cols, 2, std::move(feature_values)),
          LabelRaster(rows, cols, 2, std::move(label_values))};
}

ModelConfig small_config(ConvType type) {
  ModelConfig config;
  config.precisions = {1.0, 2.0};
  config.hops = {2, 2};
  config.channels = {4, 4};
  config.conv_type = type;
  config.learning_rate = 1e-2;
  config.epochs = 3;
  config.seed = 13;
  return config;
}

std::vector<std::string> param_names(Model& model) {
  std::vector<std::string> names;
  for (const ParamView& p : model.params()) {
    names.push_back(p.name);
  }
  return names;
}

bool contains(const std::vector<std::string>& names, const std::string& needle) {
  return std::find(names.begin(), names.end(), needle) != names.end();
}

std::vector<double> param_values(Model& model) {
  std::vector<double> out;
  for (const ParamView& p : model.params()) {
    out.insert(out.end(), p.value, p.value + p.size());
  }
  return out;
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("enum parsing round-trips and rejects unknown names") {
  CHECK(conv_type_from_string("cheby") == ConvType::cheby);
  CHECK(conv_type_from_string("diffusion") == ConvType::diffusion);
  CHECK(conv_type_from_string("none") == ConvType::none);
  CHECK(to_string(ConvType::diffusion) == "diffusion");
  CHECK_ERROR(conv_type_from_string("fourier"), ErrorCode::bad_argument);

  CHECK(loss_weighting_from_string("uniform") == LossWeighting::uniform);
  CHECK(loss_weighting_from_string("pixel_count") == LossWeighting::pixel_count);
  CHECK_ERROR(loss_weighting_from_string("area"), ErrorCode::bad_argument);
  CHECK(pool_weighting_from_string("pixel_count") == PoolWeighting::pixel_count);
  CHECK_ERROR(pool_weighting_from_string(""), ErrorCode::bad_argument);
}

TEST_CASE("config validation rejects malformed hyperparameters") {
  ModelConfig config = small_config(ConvType::cheby);
  config.validate();

  auto broken = config;
  broken.precisions.clear();
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.hops = {2};
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.channels = {4, 4, 4};
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.hops = {0, 2};
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.channels = {4, 0};
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.learning_rate = 0.0;
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.momentum = 1.0;
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.decay = 0.0;
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.l2 = -0.1;
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.epochs = -1;
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
  broken = config;
  broken.epsilon = 0.5; // not below precisions[0] / 4
  CHECK_ERROR(broken.validate(), ErrorCode::bad_argument);
}

TEST_CASE("config JSON round-trips and fills defaults") {
  ModelConfig config = small_config(ConvType::diffusion);
  config.loss_weighting = LossWeighting::uniform;
  config.pool_weighting = PoolWeighting::pixel_count;
  config.lambda_max = LambdaMaxMode::bipartite;
  config.epsilon = 0.1;
  const ModelConfig back = config_from_json(config_to_json(config), "test");
  CHECK(back.precisions == config.precisions);
  CHECK(back.hops == config.hops);
  CHECK(back.channels == config.channels);
  CHECK(back.connectivity == config.connectivity);
  CHECK(back.conv_type == config.conv_type);
  CHECK(back.learning_rate == config.learning_rate);
  CHECK(back.momentum == config.momentum);
  CHECK(back.decay == config.decay);
  CHECK(back.l2 == config.l2);
  CHECK(back.epochs == config.epochs);
  CHECK(back.seed == config.seed);
  CHECK(back.epsilon == config.epsilon);
  CHECK(back.loss_weighting == config.loss_weighting);
  CHECK(back.pool_weighting == config.pool_weighting);
  CHECK(back.lambda_max == config.lambda_max);

  nlohmann::json minimal;
  minimal["precisions"] = {0.5};
  minimal["hops"] = {3};
  minimal["channels"] = {8};
  const ModelConfig defaults = config_from_json(minimal, "test");
  CHECK(defaults.conv_type == ConvType::cheby);
  CHECK(defaults.learning_rate == 1e-4);
  CHECK(defaults.epochs == 70);
  CHECK(defaults.loss_weighting == LossWeighting::pixel_count);
  CHECK(defaults.lambda_max == LambdaMaxMode::power);

  nlohmann::json bad = minimal;
  bad["conv_type"] = "wavelet";
  CHECK_ERROR(config_from_json(bad, "test"), ErrorCode::bad_argument);
  CHECK_ERROR(config_from_json(nlohmann::json::array(), "test"),
              ErrorCode::malformed_header);
  nlohmann::json missing;
  missing["precisions"] = {0.5};
  CHECK_ERROR(config_from_json(missing, "test"), ErrorCode::malformed_header);
}

TEST_CASE("build_model wires the expected parameters deterministically") {
  Model cheby = build_model(small_config(ConvType::cheby), 2, 3);
  const auto names = param_names(cheby);
  CHECK(contains(names, "down0.conv1.w0"));
  CHECK(contains(names, "down0.conv1.w1"));
  CHECK(contains(names, "down0.norm1.gamma"));
  CHECK(contains(names, "down1.conv2.bias"));
  CHECK(contains(names, "up0.conv1.w0"));
  CHECK(contains(names, "up0.norm2.beta"));
  CHECK(contains(names, "head.w"));
  CHECK(contains(names, "head.bias"));
  CHECK(std::ssize(cheby.up) == 1);
  CHECK(cheby.head.weight.rows() == 4);
  CHECK(cheby.head.weight.cols() == 3);

  Model again = build_model(small_config(ConvType::cheby), 2, 3);
  CHECK(param_values(cheby) == param_values(again));

  Model diffusion = build_model(small_config(ConvType::diffusion), 2, 3);
  const auto diff_names = param_names(diffusion);
  CHECK(contains(diff_names, "down0.conv1.wf0"));
  CHECK(contains(diff_names, "down0.conv1.wr1"));
  Model plain = build_model(small_config(ConvType::none), 2, 3);
  CHECK(contains(param_names(plain), "down0.conv1.w"));

  CHECK_ERROR(build_model(small_config(ConvType::cheby), 0, 3), ErrorCode::bad_argument);
  CHECK_ERROR(build_model(small_config(ConvType::cheby), 2, 1), ErrorCode::bad_argument);
  CHECK_ERROR(build_model(small_config(ConvType::cheby), 2, 300), ErrorCode::bad_argument);
}

TEST_CASE("make_sample aggregates features and validates consistency") {
  const Scene scene = make_scene();
  const ModelConfig config = small_config(ConvType::cheby);
  const TreeHierarchy hierarchy =
      build_hierarchy(scene.grid, config.precisions, config.connectivity, config.seed);
  Model model = build_model(config, 2, 2);

  const Sample sample = make_sample(model, hierarchy, scene.features, &scene.labels, "t0");
  CHECK(sample.name == "t0");
  CHECK(sample.node_count() == hierarchy.trees[0].node_count());
  const Matrix expected_x = aggregate_features(hierarchy.trees[0], scene.features);
  CHECK((sample.x - expected_x).cwiseAbs().maxCoeff() == 0.0);
  const NodeLabels node_labels = aggregate_labels(hierarchy.trees[0], scene.labels);
  CHECK((sample.labels.array() == node_labels.labels.array()).all());
  CHECK((sample.loss_weights - node_labels.pixel_counts).cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::ssize(sample.ops) == 2);
  CHECK(std::ssize(sample.maps) == 1);
  CHECK(std::ssize(sample.pool_weights) == 2);

  const Sample unlabeled = make_sample(model, hierarchy, scene.features, nullptr, "t1");
  CHECK(unlabeled.labels.size() == 0);

  const TreeHierarchy wrong_precisions =
      build_hierarchy(scene.grid, {1.0, 4.0}, config.connectivity, config.seed);
  CHECK_ERROR(make_sample(model, wrong_precisions, scene.features, nullptr, "t"),
              ErrorCode::inconsistent_input);
  const TreeHierarchy wrong_conn =
      build_hierarchy(scene.grid, config.precisions, Connectivity::eight, config.seed);
  CHECK_ERROR(make_sample(model, wrong_conn, scene.features, nullptr, "t"),
              ErrorCode::inconsistent_input);
  const FeatureRaster wrong_bands(4, 4, 1, std::vector<double>(16, 0.0));
  CHECK_ERROR(make_sample(model, hierarchy, wrong_bands, nullptr, "t"),
              ErrorCode::inconsistent_input);
  const LabelRaster wrong_classes(4, 4, 3, std::vector<std::uint8_t>(16, 0));
  CHECK_ERROR(make_sample(model, hierarchy, scene.features, &wrong_classes, "t"),
              ErrorCode::inconsistent_input);
}

TEST_CASE("model_forward produces logits per finest node") {
  const Scene scene = make_scene();
  for (const ConvType type : {ConvType::cheby, ConvType::diffusion, ConvType::none}) {
    const ModelConfig config = small_config(type);
    const TreeHierarchy hierarchy =
        build_hierarchy(scene.grid, config.precisions, config.connectivity, config.seed);
    Model model = build_model(config, 2, 2);
    const Sample sample = make_sample(model, hierarchy, scene.features, &scene.labels, "t");

    const Matrix train_logits = model_forward(model, sample, /*training=*/true, nullptr);
    CHECK(train_logits.rows() == sample.node_count());
    CHECK(train_logits.cols() == 2);
    CHECK(train_logits.allFinite());

    Model fresh = build_model(config, 2, 2);
    const Matrix eval_logits = model_forward(fresh, sample, /*training=*/false, nullptr);
    CHECK(eval_logits.allFinite());

    const Eigen::VectorXi classes = predict_nodes(fresh, sample);
    CHECK(classes.size() == sample.node_count());
    CHECK(classes.minCoeff() >= 0);
    CHECK(classes.maxCoeff() < 2);
  }
}

TEST_CASE("constant features give one constant class under conv none") {
  const Scene scene = make_scene();
  const ModelConfig config = small_config(ConvType::none);
  const TreeHierarchy hierarchy =
      build_hierarchy(scene.grid, config.precisions, config.connectivity, config.seed);
  Model model = build_model(config, 1, 2);
  const FeatureRaster constant(4, 4, 1, std::vector<double>(16, 0.75));
  const Sample sample = make_sample(model, hierarchy, constant, nullptr, "t");
  const Eigen::VectorXi classes = predict_nodes(model, sample);
  for (std::int64_t i = 1; i < classes.size(); ++i) {
    CHECK(classes(i) == classes(0));
  }
}

TEST_CASE("conv none in eval mode acts row-locally") {
  const ElevationGrid grid(1, 5, {1.0, 3.0, 2.0, 4.0, 1.1});
  ModelConfig config;
  config.precisions = {1.0};
  config.hops = {1};
  config.channels = {4};
  config.conv_type = ConvType::none;
  config.seed = 5;
  const TreeHierarchy hierarchy =
      build_hierarchy(grid, config.precisions, config.connectivity, config.seed);
  Model model = build_model(config, 1, 2);

  std::vector<double> base(5, 0.5);
  const Sample sample_a = make_sample(
      model, hierarchy, FeatureRaster(1, 5, 1, std::vector<double>(base)), nullptr, "a");
  base[2] = -3.0;
  const Sample sample_b = make_sample(
      model, hierarchy, FeatureRaster(1, 5, 1, std::move(base)), nullptr, "b");

  const Matrix logits_a = model_forward(model, sample_a, false, nullptr);
  const Matrix logits_b = model_forward(model, sample_b, false, nullptr);
  const std::int64_t changed = hierarchy.trees[0].pixel_to_node[2];
  for (std::int64_t i = 0; i < logits_a.rows(); ++i) {
    if (i == changed) {
      CHECK((logits_a.row(i) - logits_b.row(i)).cwiseAbs().maxCoeff() > 0.0);
    } else {
      CHECK((logits_a.row(i) - logits_b.row(i)).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("train_model records history deterministically") {
  const Scene scene_a = make_scene();
  const Scene scene_b = make_scene(1.5);
  const ModelConfig config = small_config(ConvType::cheby);
  const TreeHierarchy hier_a =
      build_hierarchy(scene_a.grid, config.precisions, config.connectivity, config.seed);
  const TreeHierarchy hier_b =
      build_hierarchy(scene_b.grid, config.precisions, config.connectivity, config.seed);

  const auto run = [&] {
    Model model = build_model(config, 2, 2);
    std::vector<Sample> samples = {
        make_sample(model, hier_a, scene_a.features, &scene_a.labels, "a"),
        make_sample(model, hier_b, scene_b.features, &scene_b.labels, "b")};
    int callbacks = 0;
    train_model(model, samples, [&](const EpochStats& stats) {
      CHECK(stats.epoch == callbacks);
      ++callbacks;
    });
    CHECK(callbacks == config.epochs);
    return model;
  };

  Model first = run();
  REQUIRE(std::ssize(first.history) == config.epochs);
  for (int e = 0; e < config.epochs; ++e) {
    CHECK(first.history[e].epoch == e);
    CHECK(std::isfinite(first.history[e].loss));
    CHECK(first.history[e].accuracy >= 0.0);
    CHECK(first.history[e].accuracy <= 1.0);
    CHECK(first.history[e].l2_penalty >= 0.0);
  }

  Model second = run();
  CHECK(param_values(first) == param_values(second));
  for (int e = 0; e < config.epochs; ++e) {
    CHECK(first.history[e].loss == second.history[e].loss);
    CHECK(first.history[e].accuracy == second.history[e].accuracy);
  }

  ModelConfig idle = config;
  idle.epochs = 0;
  Model untouched = build_model(idle, 2, 2);
  const std::vector<double> before = param_values(untouched);
  std::vector<Sample> samples = {
      make_sample(untouched, hier_a, scene_a.features, &scene_a.labels, "a")};
  train_model(untouched, samples);
  CHECK(param_values(untouched) == before);
  CHECK(untouched.history.empty());

  Model unlabeled_model = build_model(config, 2, 2);
  std::vector<Sample> unlabeled = {
      make_sample(unlabeled_model, hier_a, scene_a.features, nullptr, "a")};
  CHECK_ERROR(train_model(unlabeled_model, unlabeled), ErrorCode::bad_argument);
  std::vector<Sample> empty;
  CHECK_ERROR(train_model(unlabeled_model, empty), ErrorCode::bad_argument);
}

TEST_CASE("training reports divergence as a numeric failure") {
  const Scene scene = make_scene();
  ModelConfig config = small_config(ConvType::cheby);
  config.learning_rate = 1e18;
  config.epochs = 25;
  const TreeHierarchy hierarchy =
      build_hierarchy(scene.grid, config.precisions, config.connectivity, config.seed);
  Model model = build_model(config, 2, 2);
  std::vector<Sample> samples = {
      make_sample(model, hierarchy, scene.features, &scene.labels, "a")};
  CHECK_ERROR(train_model(model, samples), ErrorCode::numeric_failure);
}

TEST_CASE("whole-model gradients match finite differences") {
  const Scene scene = make_scene();
  ModelConfig config = small_config(ConvType::cheby);
  config.seed = 21;
  const TreeHierarchy hierarchy =
      build_hierarchy(scene.grid, config.precisions, config.connectivity, config.seed);
  Model model = build_model(config, 2, 2);
  const Sample sample = make_sample(model, hierarchy, scene.features, &scene.labels, "t");

  model.zero_grads();
  ForwardCache cache;
  const Matrix logits = model_forward(model, sample, true, &cache);
  const SoftmaxXentResult xent = softmax_xent(logits, sample.labels);
  model_backward(model, sample, cache, xent.grad);

  const auto loss = [&] {
    return softmax_xent(model_forward(model, sample, true, nullptr), sample.labels).loss;
  };
  const double h = 1e-6;
  for (const ParamView& p : model.params()) {
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = loss();
      p.value[i] = saved - h;
      const double down = loss();
      p.value[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      CHECK_MESSAGE(rel_err(p.grad[i], fd) <= 1e-4,
                    p.name << "[" << i << "]: analytic " << p.grad[i] << " vs fd " << fd);
    }
  }
}

TEST_CASE("checkpoints round-trip the whole model state") {
  TempDir dir;
  const Scene scene = make_scene();
  ModelConfig config = small_config(ConvType::cheby);
  config.epochs = 2;
  const TreeHierarchy hierarchy =
      build_hierarchy(scene.grid, config.precisions, config.connectivity, config.seed);
  Model model = build_model(config, 2, 2);
  std::vector<Sample> samples = {
      make_sample(model, hierarchy, scene.features, &scene.labels, "a")};
  train_model(model, samples);
  save_checkpoint(model, dir.file("ckpt.json"));

  Model back = load_checkpoint(dir.file("ckpt.json"));
  CHECK(param_values(back) == param_values(model));
  CHECK(back.input_channels == 2);
  CHECK(back.num_classes == 2);
  CHECK(back.config.precisions == config.precisions);
  REQUIRE(back.history.size() == model.history.size());
  for (std::size_t e = 0; e < model.history.size(); ++e) {
    CHECK(back.history[e].loss == model.history[e].loss);
  }
  const auto state_a = model.state_buffers();
  const auto state_b = back.state_buffers();
  REQUIRE(state_a.size() == state_b.size());
  for (std::size_t i = 0; i < state_a.size(); ++i) {
    for (std::int64_t k = 0; k < state_a[i].size(); ++k) {
      CHECK(state_a[i].value[k] == state_b[i].value[k]);
    }
  }
  const Eigen::VectorXi picks_back = predict_nodes(back, samples[0]);
  const Eigen::VectorXi picks_orig = predict_nodes(model, samples[0]);
  CHECK((picks_back.array() == picks_orig.array()).all());

  SUBCASE("non-finite parameter bytes") {
    auto payload = serial::read_file(dir.file("ckpt.bin"));
    for (int i = 0; i < 8; ++i) {
      payload[i] = 0xff;
    }
    serial::write_file(dir.file("ckpt.bin"), payload);
    CHECK_ERROR(load_checkpoint(dir.file("ckpt.json")), ErrorCode::corrupt_payload);
  }
  SUBCASE("truncated payload") {
    auto payload = serial::read_file(dir.file("ckpt.bin"));
    payload.resize(payload.size() - 8);
    serial::write_file(dir.file("ckpt.bin"), payload);
    CHECK_ERROR(load_checkpoint(dir.file("ckpt.json")), ErrorCode::corrupt_payload);
  }
  SUBCASE("renamed parameter") {
    auto header = serial::load_json(dir.file("ckpt.json"));
    header["params"][0]["name"] = "down0.conv1.w9";
    serial::save_json(dir.file("ckpt.json"), header);
    CHECK_ERROR(load_checkpoint(dir.file("ckpt.json")), ErrorCode::corrupt_payload);
  }
  SUBCASE("wrong version") {
    auto header = serial::load_json(dir.file("ckpt.json"));
    header["version"] = 9;
    serial::save_json(dir.file("ckpt.json"), header);
    CHECK_ERROR(load_checkpoint(dir.file("ckpt.json")), ErrorCode::version_mismatch);
  }
  SUBCASE("missing config") {
    auto header = serial::load_json(dir.file("ckpt.json"));
    header.erase("config");
    serial::save_json(dir.file("ckpt.json"), header);
    CHECK_ERROR(load_checkpoint(dir.file("ckpt.json")), ErrorCode::malformed_header);
  }
}

TEST_CASE("mix_seed derives distinct deterministic streams") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(1, 3));
  CHECK(mix_seed(1, 2) != mix_seed(2, 2));
  CHECK(mix_seed(0, 0) != 0);
}

} // TEST_SUITE("model")
