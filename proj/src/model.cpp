#include "ctnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctnn/errors.hpp"
#include "ctnn/hash.hpp"
#include "ctnn/serial.hpp"

namespace ctnn {

ConvType conv_type_from_string(const std::string& name) {
  if (name == "cheby") {
    return ConvType::cheby;
  }
  if (name == "diffusion") {
    return ConvType::diffusion;
  }
  if (name == "none") {
    return ConvType::none;
  }
  fail(ErrorCode::bad_argument, "unknown conv_type \"" + name + "\"");
}

std::string to_string(ConvType type) {
  switch (type) {
  case ConvType::cheby:
    return "cheby";
  case ConvType::diffusion:
    return "diffusion";
  case ConvType::none:
    return "none";
  }
  return "unknown";
}

LossWeighting loss_weighting_from_string(const std::string& name) {
  if (name == "uniform") {
    return LossWeighting::uniform;
  }
  if (name == "pixel_count") {
    return LossWeighting::pixel_count;
  }
  fail(ErrorCode::bad_argument, "unknown loss_weighting \"" + name + "\"");
}

std::string to_string(LossWeighting weighting) {
  return weighting == LossWeighting::uniform ? "uniform" : "pixel_count";
}

PoolWeighting pool_weighting_from_string(const std::string& name) {
  if (name == "uniform") {
    return PoolWeighting::uniform;
  }
  if (name == "pixel_count") {
    return PoolWeighting::pixel_count;
  }
  fail(ErrorCode::bad_argument, "unknown pool_weighting \"" + name + "\"");
}

std::string to_string(PoolWeighting weighting) {
  return weighting == PoolWeighting::uniform ? "uniform" : "pixel_count";
}

void ModelConfig::validate() const {
  require(!precisions.empty(), ErrorCode::bad_argument, "config needs at least one precision");
  for (std::size_t l = 0; l + 1 < precisions.size(); ++l) {
    precision_ratio(precisions[l], precisions[l + 1]);
  }
  require(precisions.front() > 0.0, ErrorCode::bad_argument, "precisions must be positive");
  require(std::ssize(hops) == levels(), ErrorCode::bad_argument,
          "hops must list one entry per level");
  require(std::ssize(channels) == levels(), ErrorCode::bad_argument,
          "channels must list one entry per level");
  for (int h : hops) {
    require(h >= 1, ErrorCode::bad_argument, "hops entries must be at least 1");
  }
  for (int c : channels) {
    require(c >= 1, ErrorCode::bad_argument, "channels entries must be at least 1");
  }
  require(learning_rate > 0.0, ErrorCode::bad_argument, "learning_rate must be positive");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::bad_argument,
          "momentum must lie in [0, 1)");
  require(decay > 0.0 && decay <= 1.0, ErrorCode::bad_argument,
          "decay must lie in (0, 1]");
  require(l2 >= 0.0, ErrorCode::bad_argument, "l2 must be non-negative");
  require(epochs >= 0, ErrorCode::bad_argument, "epochs must be non-negative");
  require(epsilon == 0.0 || (epsilon > 0.0 && epsilon < precisions.front() / 4.0),
          ErrorCode::bad_argument, "epsilon must lie in (0, precisions[0] / 4) or be 0");
}

nlohmann::json config_to_json(const ModelConfig& config) {
  nlohmann::json j;
  j["precisions"] = config.precisions;
  j["hops"] = config.hops;
  j["channels"] = config.channels;
  j["connectivity"] = static_cast<int>(config.connectivity);
  j["conv_type"] = to_string(config.conv_type);
  j["learning_rate"] = config.learning_rate;
  j["momentum"] = config.momentum;
  j["decay"] = config.decay;
  j["l2"] = config.l2;
  j["epochs"] = config.epochs;
  j["seed"] = config.seed;
  j["epsilon"] = config.epsilon;
  j["loss_weighting"] = to_string(config.loss_weighting);
  j["pool_weighting"] = to_string(config.pool_weighting);
  j["lambda_max"] = to_string(config.lambda_max);
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j, const std::string& origin) {
  require(j.is_object(), ErrorCode::malformed_header, origin + ": config must be an object");
  ModelConfig config;
  require(j.contains("precisions") && j["precisions"].is_array(),
          ErrorCode::malformed_header, origin + ": config needs a precisions array");
  config.precisions = j["precisions"].get<std::vector<double>>();
  require(j.contains("hops") && j["hops"].is_array(), ErrorCode::malformed_header,
          origin + ": config needs a hops array");
  config.hops = j["hops"].get<std::vector<int>>();
  require(j.contains("channels") && j["channels"].is_array(), ErrorCode::malformed_header,
          origin + ": config needs a channels array");
  config.channels = j["channels"].get<std::vector<int>>();
  config.connectivity = connectivity_from_int(
      static_cast<int>(j.value("connectivity", 4)));
  config.conv_type = conv_type_from_string(j.value("conv_type", "cheby"));
  config.learning_rate = j.value("learning_rate", 1e-4);
  config.momentum = j.value("momentum", 0.9);
  config.decay = j.value("decay", 0.99);
  config.l2 = j.value("l2", 5e-2);
  config.epochs = j.value("epochs", 70);
  config.seed = j.value("seed", std::uint64_t{1});
  config.epsilon = j.value("epsilon", 0.0);
  config.loss_weighting =
      loss_weighting_from_string(j.value("loss_weighting", "pixel_count"));
  config.pool_weighting = pool_weighting_from_string(j.value("pool_weighting", "uniform"));
  config.lambda_max = lambda_max_mode_from_string(j.value("lambda_max", "power"));
  config.validate();
  return config;
}

GraphConv GraphConv::create(ConvType type, int hops, std::int64_t in_channels,
                            std::int64_t out_channels, Rng& rng) {
  GraphConv conv;
  conv.type = type;
  switch (type) {
  case ConvType::cheby:
    conv.cheby = ChebyConv::create(hops, in_channels, out_channels, rng);
    break;
  case ConvType::diffusion:
    conv.diffusion = DiffusionConv::create(hops, in_channels, out_channels, rng);
    break;
  case ConvType::none:
    conv.dense = DenseLayer::create(in_channels, out_channels, rng);
    break;
  }
  return conv;
}

void GraphConv::collect(std::vector<ParamView>& out, const std::string& prefix) {
  switch (type) {
  case ConvType::cheby:
    cheby.collect(out, prefix);
    break;
  case ConvType::diffusion:
    diffusion.collect(out, prefix);
    break;
  case ConvType::none:
    dense.collect(out, prefix);
    break;
  }
}

void GraphConv::zero_grads() {
  switch (type) {
  case ConvType::cheby:
    cheby.zero_grads();
    break;
  case ConvType::diffusion:
    diffusion.zero_grads();
    break;
  case ConvType::none:
    dense.zero_grads();
    break;
  }
}

namespace {

Matrix conv_forward(const GraphConv& conv, const LevelOps& ops, const Matrix& x,
                    ChebyCache* cheby_cache, DiffusionCache* diff_cache) {
  switch (conv.type) {
  case ConvType::cheby:
    return cheby_forward(ops.lhat, x, conv.cheby, cheby_cache);
  case ConvType::diffusion:
    return diffusion_forward(ops.diffusion, x, conv.diffusion, diff_cache);
  case ConvType::none:
    return dense_forward(x, conv.dense);
  }
  fail(ErrorCode::internal, "unreachable conv type");
}

Matrix conv_backward(GraphConv& conv, const LevelOps& ops, const ChebyCache& cheby_cache,
                     const DiffusionCache& diff_cache, const Matrix& input,
                     const Matrix& grad_out) {
  switch (conv.type) {
  case ConvType::cheby:
    return cheby_backward(ops.lhat, conv.cheby, cheby_cache, grad_out);
  case ConvType::diffusion:
    return diffusion_backward(ops.diffusion, conv.diffusion, diff_cache, grad_out);
  case ConvType::none:
    return dense_backward(conv.dense, input, grad_out);
  }
  fail(ErrorCode::internal, "unreachable conv type");
}

Matrix block_forward(ConvBlock& block, const LevelOps& ops, const Matrix& x, bool training,
                     BlockCache& cache) {
  cache.type = block.conv1.type;
  cache.in1 = x;
  const Matrix pre1 = conv_forward(block.conv1, ops, x, &cache.cheby1, &cache.diff1);
  cache.relu_in1 = node_norm_forward(block.norm1, pre1, training, &cache.norm1);
  cache.in2 = relu(cache.relu_in1);
  const Matrix pre2 = conv_forward(block.conv2, ops, cache.in2, &cache.cheby2, &cache.diff2);
  cache.relu_in2 = node_norm_forward(block.norm2, pre2, training, &cache.norm2);
  return relu(cache.relu_in2);
}

Matrix block_backward(ConvBlock& block, const LevelOps& ops, const BlockCache& cache,
                      const Matrix& grad_out) {
  const Matrix d2 = relu_backward(grad_out, cache.relu_in2);
  const Matrix dpre2 = node_norm_backward(block.norm2, cache.norm2, d2);
  const Matrix da1 = conv_backward(block.conv2, ops, cache.cheby2, cache.diff2, cache.in2,
                                   dpre2);
  const Matrix d1 = relu_backward(da1, cache.relu_in1);
  const Matrix dpre1 = node_norm_backward(block.norm1, cache.norm1, d1);
  return conv_backward(block.conv1, ops, cache.cheby1, cache.diff1, cache.in1, dpre1);
}

} // namespace

Model build_model(const ModelConfig& config, std::int64_t input_channels, int num_classes) {
  config.validate();
  require(input_channels >= 1, ErrorCode::bad_argument,
          "model needs at least one input channel");
  require(num_classes >= 2 && num_classes <= 256, ErrorCode::bad_argument,
          "num_classes must be in [2, 256]");

  Model model;
  model.config = config;
  model.input_channels = input_channels;
  model.num_classes = num_classes;
  Rng rng(config.seed);
  const std::int64_t levels = config.levels();

  for (std::int64_t l = 0; l < levels; ++l) {
    const std::int64_t in1 = l == 0 ? input_channels : config.channels[l - 1];
    ConvBlock block;
    block.conv1 =
        GraphConv::create(config.conv_type, config.hops[l], in1, config.channels[l], rng);
    block.norm1 = NodeNorm::create(config.channels[l]);
    block.conv2 = GraphConv::create(config.conv_type, config.hops[l], config.channels[l],
                                    config.channels[l], rng);
    block.norm2 = NodeNorm::create(config.channels[l]);
    model.down.push_back(std::move(block));
  }
  // Decoder blocks are created coarse-to-fine, matching the order they run.
  model.up.resize(levels > 0 ? levels - 1 : 0);
  for (std::int64_t l = levels - 2; l >= 0; --l) {
    const std::int64_t in1 = config.channels[l] + config.channels[l + 1];
    ConvBlock block;
    block.conv1 =
        GraphConv::create(config.conv_type, config.hops[l], in1, config.channels[l], rng);
    block.norm1 = NodeNorm::create(config.channels[l]);
    block.conv2 = GraphConv::create(config.conv_type, config.hops[l], config.channels[l],
                                    config.channels[l], rng);
    block.norm2 = NodeNorm::create(config.channels[l]);
    model.up[l] = std::move(block);
  }
  model.head = DenseLayer::create(config.channels[0], num_classes, rng);
  return model;
}

std::vector<ParamView> Model::params() {
  std::vector<ParamView> out;
  for (std::size_t l = 0; l < down.size(); ++l) {
    const std::string prefix = "down" + std::to_string(l);
    down[l].conv1.collect(out, prefix + ".conv1");
    down[l].norm1.collect(out, prefix + ".norm1");
    down[l].conv2.collect(out, prefix + ".conv2");
    down[l].norm2.collect(out, prefix + ".norm2");
  }
  for (std::size_t l = 0; l < up.size(); ++l) {
    const std::string prefix = "up" + std::to_string(l);
    up[l].conv1.collect(out, prefix + ".conv1");
    up[l].norm1.collect(out, prefix + ".norm1");
    up[l].conv2.collect(out, prefix + ".conv2");
    up[l].norm2.collect(out, prefix + ".norm2");
  }
  head.collect(out, "head");
  return out;
}

std::vector<ParamView> Model::state_buffers() {
  std::vector<ParamView> out;
  for (std::size_t l = 0; l < down.size(); ++l) {
    const std::string prefix = "down" + std::to_string(l);
    down[l].norm1.collect_state(out, prefix + ".norm1");
    down[l].norm2.collect_state(out, prefix + ".norm2");
  }
  for (std::size_t l = 0; l < up.size(); ++l) {
    const std::string prefix = "up" + std::to_string(l);
    up[l].norm1.collect_state(out, prefix + ".norm1");
    up[l].norm2.collect_state(out, prefix + ".norm2");
  }
  return out;
}

void Model::zero_grads() {
  for (ConvBlock& block : down) {
    block.conv1.zero_grads();
    block.norm1.zero_grads();
    block.conv2.zero_grads();
    block.norm2.zero_grads();
  }
  for (ConvBlock& block : up) {
    block.conv1.zero_grads();
    block.norm1.zero_grads();
    block.conv2.zero_grads();
    block.norm2.zero_grads();
  }
  head.zero_grads();
}

namespace {

LevelOps make_level_ops(const ContourTree& tree, ConvType type, LambdaMaxMode mode) {
  LevelOps ops;
  if (type == ConvType::none) {
    return ops;
  }
  const Adjacency adjacency = node_adjacency(tree);
  if (type == ConvType::cheby) {
    ops.lhat = scaled_laplacian(adjacency.symmetric, mode);
  } else {
    ops.diffusion = diffusion_ops(adjacency.directed);
  }
  return ops;
}

} // namespace

Sample make_sample(const Model& model, const TreeHierarchy& hierarchy,
                   const FeatureRaster& features, const LabelRaster* labels,
                   const std::string& name) {
  const ModelConfig& config = model.config;
  require(hierarchy.level_count() == config.levels(), ErrorCode::inconsistent_input,
          "hierarchy has " + std::to_string(hierarchy.level_count()) +
              " levels, model expects " + std::to_string(config.levels()));
  require(hierarchy.precisions == config.precisions, ErrorCode::inconsistent_input,
          "hierarchy precisions do not match the model config");
  require(hierarchy.connectivity == config.connectivity, ErrorCode::inconsistent_input,
          "hierarchy connectivity does not match the model config");
  const ContourTree& finest = hierarchy.trees.front();
  require(features.bands() == model.input_channels, ErrorCode::inconsistent_input,
          "feature raster has " + std::to_string(features.bands()) +
              " bands, model expects " + std::to_string(model.input_channels));

  Sample sample;
  sample.name = name;
  sample.x = aggregate_features(finest, features);
  if (labels != nullptr) {
    require(labels->num_classes() == model.num_classes, ErrorCode::inconsistent_input,
            "label raster classes do not match the model");
    const NodeLabels node_labels = aggregate_labels(finest, *labels);
    sample.labels = node_labels.labels;
    sample.loss_weights = node_labels.pixel_counts;
  } else {
    sample.loss_weights.resize(finest.node_count());
    for (const auto& node : finest.nodes) {
      sample.loss_weights(node.id) = static_cast<double>(node.members.size());
    }
  }
  for (const ContourTree& tree : hierarchy.trees) {
    sample.ops.push_back(make_level_ops(tree, config.conv_type, config.lambda_max));
    Vector counts(tree.node_count());
    for (const auto& node : tree.nodes) {
      counts(node.id) = static_cast<double>(node.members.size());
    }
    sample.pool_weights.push_back(std::move(counts));
  }
  sample.maps = hierarchy.maps;
  return sample;
}

namespace {

Matrix do_pool(const Sample& sample, std::int64_t level, const Matrix& fine,
               PoolWeighting weighting) {
  if (weighting == PoolWeighting::pixel_count) {
    return pool_weighted(fine, sample.maps[level], sample.pool_weights[level]);
  }
  return pool(fine, sample.maps[level]);
}

Matrix do_pool_backward(const Sample& sample, std::int64_t level, const Matrix& coarse_grad,
                        PoolWeighting weighting) {
  if (weighting == PoolWeighting::pixel_count) {
    return pool_weighted_backward(coarse_grad, sample.maps[level],
                                  sample.pool_weights[level]);
  }
  return pool_backward(coarse_grad, sample.maps[level]);
}

} // namespace

Matrix model_forward(Model& model, const Sample& sample, bool training,
                     ForwardCache* cache) {
  const std::int64_t levels = model.config.levels();
  require(std::ssize(sample.ops) == levels, ErrorCode::inconsistent_input,
          "sample level count does not match the model");
  require(std::ssize(sample.maps) == levels - 1, ErrorCode::inconsistent_input,
          "sample pooling maps do not match the model");
  require(sample.x.cols() == model.input_channels, ErrorCode::dimension_mismatch,
          "sample feature width does not match the model");

  ForwardCache scratch;
  if (cache == nullptr) {
    cache = &scratch;
  }
  cache->training = training;
  cache->down.assign(levels, {});
  cache->down_out.assign(levels, {});
  cache->up.assign(levels - 1, {});

  Matrix h = sample.x;
  for (std::int64_t l = 0; l < levels; ++l) {
    if (l > 0) {
      h = do_pool(sample, l - 1, h, model.config.pool_weighting);
    }
    h = block_forward(model.down[l], sample.ops[l], h, training, cache->down[l]);
    cache->down_out[l] = h;
  }

  Matrix u = cache->down_out[levels - 1];
  for (std::int64_t l = levels - 2; l >= 0; --l) {
    const Matrix unpooled = unpool(u, sample.maps[l]);
    Matrix concat(cache->down_out[l].rows(), cache->down_out[l].cols() + unpooled.cols());
    concat << cache->down_out[l], unpooled;
    u = block_forward(model.up[l], sample.ops[l], concat, training, cache->up[l]);
  }
  cache->head_in = u;
  return dense_forward(u, model.head);
}

void model_backward(Model& model, const Sample& sample, const ForwardCache& cache,
                    const Matrix& grad_logits) {
  const std::int64_t levels = model.config.levels();
  require(std::ssize(cache.down_out) == levels, ErrorCode::internal,
          "forward cache does not match the model");

  std::vector<Matrix> down_grad(levels);
  for (std::int64_t l = 0; l < levels; ++l) {
    down_grad[l] =
        Matrix::Zero(cache.down_out[l].rows(), cache.down_out[l].cols());
  }

  Matrix u_grad = dense_backward(model.head, cache.head_in, grad_logits);
  for (std::int64_t l = 0; l <= levels - 2; ++l) {
    const Matrix dcat = block_backward(model.up[l], sample.ops[l], cache.up[l], u_grad);
    const std::int64_t skip_cols = cache.down_out[l].cols();
    down_grad[l] += dcat.leftCols(skip_cols);
    u_grad = unpool_backward(dcat.rightCols(dcat.cols() - skip_cols), sample.maps[l]);
    if (l == levels - 2) {
      down_grad[levels - 1] += u_grad;
    }
  }
  if (levels == 1) {
    down_grad[0] += u_grad;
  }

  for (std::int64_t l = levels - 1; l >= 1; --l) {
    const Matrix dh = block_backward(model.down[l], sample.ops[l], cache.down[l],
                                     down_grad[l]);
    down_grad[l - 1] += do_pool_backward(sample, l - 1, dh, model.config.pool_weighting);
  }
  block_backward(model.down[0], sample.ops[0], cache.down[0], down_grad[0]);
}

void train_model(Model& model, std::vector<Sample>& samples,
                 const std::function<void(const EpochStats&)>& on_epoch) {
  require(!samples.empty(), ErrorCode::bad_argument, "training needs at least one sample");
  for (const Sample& sample : samples) {
    require(sample.labels.size() == sample.node_count(), ErrorCode::bad_argument,
            "sample \"" + sample.name + "\" has no labels");
  }

  const std::vector<ParamView> params = model.params();
  MomentumOptimizer optimizer;
  optimizer.learning_rate = model.config.learning_rate;
  optimizer.momentum = model.config.momentum;
  optimizer.decay = model.config.decay;
  optimizer.l2 = model.config.l2;
  optimizer.init(params);

  const int start_epoch = static_cast<int>(model.history.size());
  for (int epoch = start_epoch; epoch < start_epoch + model.config.epochs; ++epoch) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(model.config.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }

    double loss_sum = 0.0;
    std::int64_t correct = 0;
    std::int64_t total = 0;
    for (std::size_t idx : order) {
      Sample& sample = samples[idx];
      model.zero_grads();
      ForwardCache cache;
      const Matrix logits = model_forward(model, sample, /*training=*/true, &cache);
      const Vector* weights = model.config.loss_weighting == LossWeighting::pixel_count
                                  ? &sample.loss_weights
                                  : nullptr;
      const SoftmaxXentResult xent = softmax_xent(logits, sample.labels, weights);
      require(std::isfinite(xent.loss), ErrorCode::numeric_failure,
              "loss diverged at epoch " + std::to_string(epoch) + " on sample \"" +
                  sample.name + "\"");
      model_backward(model, sample, cache, xent.grad);
      optimizer.step(params, epoch);

      loss_sum += xent.loss;
      const Eigen::VectorXi predicted = argmax_rows(logits);
      for (std::int64_t i = 0; i < predicted.size(); ++i) {
        correct += predicted(i) == sample.labels(i) ? 1 : 0;
      }
      total += predicted.size();
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(samples.size());
    stats.l2_penalty = optimizer.penalty(params);
    stats.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total)
                               : 0.0;
    model.history.push_back(stats);
    if (on_epoch) {
      on_epoch(stats);
    }
  }
}

Eigen::VectorXi predict_nodes(Model& model, const Sample& sample) {
  const Matrix logits = model_forward(model, sample, /*training=*/false, nullptr);
  return argmax_rows(logits);
}

namespace {

constexpr const char* kCheckpointFormat = "ctnn-checkpoint";
constexpr int kCheckpointVersion = 1;

} // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& header_path) {
  // ParamViews are used read-only here.
  Model& mutable_model = const_cast<Model&>(model);
  const std::vector<ParamView> params = mutable_model.params();
  const std::vector<ParamView> buffers = mutable_model.state_buffers();

  std::filesystem::path payload_file = header_path;
  payload_file.replace_extension(".bin");
  std::vector<std::uint8_t> payload;
  nlohmann::json param_list = nlohmann::json::array();
  for (const ParamView& p : params) {
    nlohmann::json entry;
    entry["name"] = p.name;
    entry["rows"] = p.rows;
    entry["cols"] = p.cols;
    entry["l2"] = p.weight_decay;
    param_list.push_back(entry);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      serial::append_f64(payload, p.value[i]);
    }
  }
  nlohmann::json buffer_list = nlohmann::json::array();
  for (const ParamView& b : buffers) {
    nlohmann::json entry;
    entry["name"] = b.name;
    entry["size"] = b.size();
    buffer_list.push_back(entry);
    for (std::int64_t i = 0; i < b.size(); ++i) {
      serial::append_f64(payload, b.value[i]);
    }
  }
  serial::write_file(payload_file, payload);

  nlohmann::json history = nlohmann::json::array();
  for (const EpochStats& stats : model.history) {
    nlohmann::json entry;
    entry["epoch"] = stats.epoch;
    entry["loss"] = stats.loss;
    entry["l2_penalty"] = stats.l2_penalty;
    entry["accuracy"] = stats.accuracy;
    history.push_back(entry);
  }

  nlohmann::json header;
  header["format"] = kCheckpointFormat;
  header["version"] = kCheckpointVersion;
  header["config"] = config_to_json(model.config);
  header["input_channels"] = model.input_channels;
  header["num_classes"] = model.num_classes;
  header["params"] = param_list;
  header["buffers"] = buffer_list;
  header["history"] = history;
  header["payload"] = payload_file.filename().string();
  serial::save_json(header_path, header);
}

Model load_checkpoint(const std::filesystem::path& header_path) {
  nlohmann::json header =
      serial::load_header(header_path, kCheckpointFormat, kCheckpointVersion);
  const std::string origin = header_path.string();
  require(header.contains("config"), ErrorCode::malformed_header,
          origin + ": missing config");
  const ModelConfig config = config_from_json(header["config"], origin);
  const std::int64_t input_channels = serial::require_int(header, "input_channels", origin);
  const std::int64_t num_classes = serial::require_int(header, "num_classes", origin);

  Model model = build_model(config, input_channels, static_cast<int>(num_classes));
  const std::vector<ParamView> params = model.params();
  const std::vector<ParamView> buffers = model.state_buffers();

  require(header.contains("params") && header["params"].is_array() &&
              header["params"].size() == params.size(),
          ErrorCode::corrupt_payload, origin + ": parameter list does not match the config");
  require(header.contains("buffers") && header["buffers"].is_array() &&
              header["buffers"].size() == buffers.size(),
          ErrorCode::corrupt_payload, origin + ": buffer list does not match the config");

  const auto payload = serial::read_file(serial::payload_path(header_path, header));
  serial::Reader reader(payload, origin);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const nlohmann::json& entry = header["params"][i];
    require(serial::require_string(entry, "name", origin) == params[i].name &&
                serial::require_int(entry, "rows", origin) == params[i].rows &&
                serial::require_int(entry, "cols", origin) == params[i].cols,
            ErrorCode::corrupt_payload,
            origin + ": parameter \"" + params[i].name + "\" does not match the config");
    for (std::int64_t k = 0; k < params[i].size(); ++k) {
      const double value = reader.read_f64();
      require(std::isfinite(value), ErrorCode::corrupt_payload,
              origin + ": non-finite parameter value");
      params[i].value[k] = value;
    }
  }
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    const nlohmann::json& entry = header["buffers"][i];
    require(serial::require_string(entry, "name", origin) == buffers[i].name &&
                serial::require_int(entry, "size", origin) == buffers[i].size(),
            ErrorCode::corrupt_payload,
            origin + ": buffer \"" + buffers[i].name + "\" does not match the config");
    for (std::int64_t k = 0; k < buffers[i].size(); ++k) {
      const double value = reader.read_f64();
      require(std::isfinite(value), ErrorCode::corrupt_payload,
              origin + ": non-finite buffer value");
      buffers[i].value[k] = value;
    }
  }
  reader.expect_end();

  if (header.contains("history") && header["history"].is_array()) {
    for (const auto& entry : header["history"]) {
      EpochStats stats;
      stats.epoch = static_cast<int>(serial::require_int(entry, "epoch", origin));
      stats.loss = serial::require_double(entry, "loss", origin);
      stats.l2_penalty = serial::require_double(entry, "l2_penalty", origin);
      stats.accuracy = serial::require_double(entry, "accuracy", origin);
      model.history.push_back(stats);
    }
  }
  return model;
}

} // namespace ctnn
