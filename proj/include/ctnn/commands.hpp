#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ctnn/baseline.hpp"
#include "ctnn/model.hpp"
#include "ctnn/synth.hpp"

namespace ctnn {

// One training or evaluation tile named in a run config. Paths are resolved
// against the config file's directory.
struct TileEntry {
  std::string name;
  std::filesystem::path elevation;
  std::filesystem::path features;
  std::filesystem::path labels;
};

// Parsed run config: the model block plus tile lists and output directory.
struct RunConfig {
  ModelConfig model;
  BaselineConfig baseline;
  std::vector<TileEntry> train;
  std::vector<TileEntry> eval;
  std::filesystem::path out_dir;
};

RunConfig load_run_config(const std::filesystem::path& path);

// Flag-level overrides applied on top of a loaded run config.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> precisions;
  std::optional<int> connectivity;
  std::optional<std::string> conv_type;
  std::optional<std::vector<int>> hops;
  std::optional<std::vector<int>> channels;
  std::optional<int> epochs;
  std::optional<std::string> out_dir;
};

struct BuildTreeOptions {
  std::filesystem::path elevation; // raster container or ESRI .asc
  std::vector<double> precisions;
  int connectivity = 4;
  std::uint64_t seed = 1;
  double epsilon = 0.0; // 0 selects precisions[0] / 8
  std::filesystem::path out;
  std::filesystem::path dot; // optional Graphviz dump of the finest tree
};

struct TrainOptions {
  std::filesystem::path config;
  ConfigOverrides overrides;
};

struct PredictOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path elevation;
  std::filesystem::path features;
  std::filesystem::path out;
};

struct EvalOptions {
  std::filesystem::path predicted;
  std::filesystem::path reference;
  std::filesystem::path mask; // optional elevation whose nodata pixels are skipped
  std::filesystem::path out;  // optional JSON report path
};

struct SynthOptions {
  std::filesystem::path out_dir;
  int tiles = 1;
  SynthConfig config;
};

struct BaselineOptions {
  std::filesystem::path config;
  std::optional<int> epochs;
  std::filesystem::path out; // optional JSON report path
};

void cmd_build_tree(const BuildTreeOptions& options, std::ostream& out);
void cmd_train(const TrainOptions& options, std::ostream& out);
void cmd_predict(const PredictOptions& options, std::ostream& out);
void cmd_eval(const EvalOptions& options, std::ostream& out);
void cmd_synth(const SynthOptions& options, std::ostream& out);
void cmd_baseline(const BaselineOptions& options, std::ostream& out);

} // namespace ctnn
