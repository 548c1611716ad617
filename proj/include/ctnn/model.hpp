#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ctnn/hierarchy.hpp"
#include "ctnn/nn.hpp"
#include "ctnn/raster.hpp"
#include "ctnn/topology.hpp"

namespace ctnn {

enum class ConvType { cheby, diffusion, none };
enum class LossWeighting { uniform, pixel_count };
enum class PoolWeighting { uniform, pixel_count };

ConvType conv_type_from_string(const std::string& name);
std::string to_string(ConvType type);
LossWeighting loss_weighting_from_string(const std::string& name);
std::string to_string(LossWeighting weighting);
PoolWeighting pool_weighting_from_string(const std::string& name);
std::string to_string(PoolWeighting weighting);

// Architecture and training hyperparameters. Vectors are indexed by
// hierarchy level, finest precision first, and must share one length.
struct ModelConfig {
  std::vector<double> precisions;
  std::vector<int> hops;
  std::vector<int> channels;
  Connectivity connectivity = Connectivity::four;
  ConvType conv_type = ConvType::cheby;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double decay = 0.99;
  double l2 = 5e-2;
  int epochs = 70;
  std::uint64_t seed = 1;
  double epsilon = 0.0; // tie-break noise bound; 0 selects precisions[0] / 8
  LossWeighting loss_weighting = LossWeighting::pixel_count;
  PoolWeighting pool_weighting = PoolWeighting::uniform;
  LambdaMaxMode lambda_max = LambdaMaxMode::power;

  std::int64_t levels() const { return std::ssize(precisions); }
  void validate() const;
};

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j, const std::string& origin);

// One graph convolution of the configured type; only the member matching
// the type is populated.
struct GraphConv {
  ConvType type = ConvType::cheby;
  ChebyConv cheby;
  DiffusionConv diffusion;
  DenseLayer dense;

  static GraphConv create(ConvType type, int hops, std::int64_t in_channels,
                          std::int64_t out_channels, Rng& rng);
  void collect(std::vector<ParamView>& out, const std::string& prefix);
  void zero_grads();
};

// conv -> norm -> relu, twice.
struct ConvBlock {
  GraphConv conv1;
  NodeNorm norm1;
  GraphConv conv2;
  NodeNorm norm2;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;       // mean data loss over samples
  double l2_penalty = 0.0; // 0.5 * l2 * ||W||^2 after the epoch
  double accuracy = 0.0;   // node accuracy over the epoch's forward passes
};

// U-shaped contour-tree network: an encoder block per hierarchy level with
// pooling in between, a decoder block per non-bottom level consuming the
// skip connection and the unpooled coarse features, and a linear class head
// on the finest level.
struct Model {
  ModelConfig config;
  std::int64_t input_channels = 0;
  int num_classes = 0;
  std::vector<ConvBlock> down; // levels() blocks
  std::vector<ConvBlock> up;   // levels() - 1 blocks, index = level
  DenseLayer head;
  std::vector<EpochStats> history;

  std::vector<ParamView> params();
  std::vector<ParamView> state_buffers();
  void zero_grads();
};

Model build_model(const ModelConfig& config, std::int64_t input_channels, int num_classes);

// Per-level graph operators for one terrain, derived from its hierarchy.
struct LevelOps {
  SparseMatrix lhat;
  DiffusionOps diffusion;
};

// One training or inference example: node features and labels on the finest
// tree plus everything the network needs from the hierarchy.
struct Sample {
  std::string name;
  Matrix x;
  Eigen::VectorXi labels;      // empty when labels are unavailable
  Vector loss_weights;         // level-0 pixel counts
  std::vector<LevelOps> ops;
  std::vector<PoolingMap> maps;
  std::vector<Vector> pool_weights; // pixel counts per level

  std::int64_t node_count() const { return x.rows(); }
};

Sample make_sample(const Model& model, const TreeHierarchy& hierarchy,
                   const FeatureRaster& features, const LabelRaster* labels,
                   const std::string& name);

struct BlockCache {
  ConvType type = ConvType::cheby;
  ChebyCache cheby1, cheby2;
  DiffusionCache diff1, diff2;
  Matrix in1, in2;       // convolution inputs
  NodeNormCache norm1, norm2;
  Matrix relu_in1, relu_in2;
};

struct ForwardCache {
  std::vector<BlockCache> down;
  std::vector<Matrix> down_out; // skip connections, one per level
  std::vector<BlockCache> up;
  Matrix head_in;
  bool training = true;
};

// Runs the network on one sample. Training mode updates normalization
// running statistics; pass a cache to enable model_backward.
Matrix model_forward(Model& model, const Sample& sample, bool training,
                     ForwardCache* cache);

// Accumulates parameter gradients for d loss / d logits.
void model_backward(Model& model, const Sample& sample, const ForwardCache& cache,
                    const Matrix& grad_logits);

// Momentum SGD over the sample list, batch size 1, sample order reshuffled
// each epoch from the model seed. Appends to model.history and reports each
// finished epoch through on_epoch when given.
void train_model(Model& model, std::vector<Sample>& samples,
                 const std::function<void(const EpochStats&)>& on_epoch = {});

// Inference-mode class per finest-level node.
Eigen::VectorXi predict_nodes(Model& model, const Sample& sample);

void save_checkpoint(const Model& model, const std::filesystem::path& header_path);
Model load_checkpoint(const std::filesystem::path& header_path);

} // namespace ctnn
