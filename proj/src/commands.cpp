#include "ctnn/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include "ctnn/errors.hpp"
#include "ctnn/hash.hpp"
#include "ctnn/metrics.hpp"
#include "ctnn/serial.hpp"

namespace ctnn {

namespace {

namespace fs = std::filesystem;

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

fs::path resolve_path(const fs::path& base, const std::string& raw) {
  fs::path path(raw);
  return path.is_absolute() ? path : base / path;
}

// Accepts both the JSON raster container and ESRI ASCII grids.
ElevationGrid load_terrain(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".asc") {
    return import_esri_ascii(path);
  }
  return load_elevation(path);
}

void require_exists(const fs::path& path, const std::string& role) {
  require(!path.empty(), ErrorCode::bad_argument, "missing " + role + " path");
  require(fs::exists(path), ErrorCode::io_failure,
          role + " not found: " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream stream(path, std::ios::binary);
  stream << text;
  require(stream.good(), ErrorCode::io_failure, "cannot write " + path.string());
}

void apply_overrides(RunConfig& config, const ConfigOverrides& overrides) {
  if (overrides.seed) {
    config.model.seed = *overrides.seed;
  }
  if (overrides.precisions) {
    config.model.precisions = *overrides.precisions;
  }
  if (overrides.connectivity) {
    config.model.connectivity = connectivity_from_int(*overrides.connectivity);
  }
  if (overrides.conv_type) {
    config.model.conv_type = conv_type_from_string(*overrides.conv_type);
  }
  if (overrides.hops) {
    config.model.hops = *overrides.hops;
  }
  if (overrides.channels) {
    config.model.channels = *overrides.channels;
  }
  if (overrides.epochs) {
    config.model.epochs = *overrides.epochs;
  }
  if (overrides.out_dir) {
    config.out_dir = fs::path(*overrides.out_dir);
  }
  config.model.validate();
}

std::vector<TileEntry> parse_tiles(const nlohmann::json& j, const std::string& key,
                                   const fs::path& base, const std::string& origin) {
  std::vector<TileEntry> tiles;
  if (!j.contains(key)) {
    return tiles;
  }
  require(j[key].is_array(), ErrorCode::malformed_header,
          origin + ": \"" + key + "\" must be an array");
  std::int64_t index = 0;
  for (const nlohmann::json& entry : j[key]) {
    require(entry.is_object(), ErrorCode::malformed_header,
            origin + ": tile entries must be objects");
    TileEntry tile;
    tile.name = entry.value("name", key + std::to_string(index));
    if (entry.contains("elevation")) {
      tile.elevation = resolve_path(base, serial::require_string(entry, "elevation", origin));
    }
    if (entry.contains("features")) {
      tile.features = resolve_path(base, serial::require_string(entry, "features", origin));
    }
    if (entry.contains("labels")) {
      tile.labels = resolve_path(base, serial::require_string(entry, "labels", origin));
    }
    tiles.push_back(std::move(tile));
    ++index;
  }
  return tiles;
}

nlohmann::json tiles_to_json(const std::vector<TileEntry>& tiles) {
  nlohmann::json out = nlohmann::json::array();
  for (const TileEntry& tile : tiles) {
    nlohmann::json entry;
    entry["name"] = tile.name;
    if (!tile.elevation.empty()) {
      entry["elevation"] = tile.elevation.string();
    }
    if (!tile.features.empty()) {
      entry["features"] = tile.features.string();
    }
    if (!tile.labels.empty()) {
      entry["labels"] = tile.labels.string();
    }
    out.push_back(std::move(entry));
  }
  return out;
}

nlohmann::json baseline_to_json(const BaselineConfig& config) {
  nlohmann::json j;
  j["learning_rate"] = config.learning_rate;
  j["momentum"] = config.momentum;
  j["l2"] = config.l2;
  j["epochs"] = config.epochs;
  return j;
}

struct LoadedTile {
  TileEntry entry;
  FeatureRaster features;
  LabelRaster labels;
};

LoadedTile load_supervised_tile(const TileEntry& entry, bool need_elevation) {
  if (need_elevation) {
    require_exists(entry.elevation, "elevation for tile \"" + entry.name + "\"");
  }
  require_exists(entry.features, "features for tile \"" + entry.name + "\"");
  require_exists(entry.labels, "labels for tile \"" + entry.name + "\"");
  LoadedTile tile;
  tile.entry = entry;
  tile.features = load_features(entry.features);
  tile.labels = load_labels(entry.labels);
  require(tile.features.rows() == tile.labels.rows() &&
              tile.features.cols() == tile.labels.cols(),
          ErrorCode::dimension_mismatch,
          "tile \"" + entry.name + "\" features and labels disagree on shape");
  return tile;
}

} // namespace

RunConfig load_run_config(const fs::path& path) {
  require_exists(path, "run config");
  const std::string origin = path.filename().string();
  const nlohmann::json j = serial::load_json(path);
  require(j.is_object(), ErrorCode::malformed_header, origin + ": expected a JSON object");
  require(j.contains("model"), ErrorCode::malformed_header,
          origin + ": missing \"model\" block");

  RunConfig config;
  config.model = config_from_json(j["model"], origin);
  if (j.contains("baseline")) {
    const nlohmann::json& b = j["baseline"];
    require(b.is_object(), ErrorCode::malformed_header,
            origin + ": \"baseline\" must be an object");
    config.baseline.learning_rate = b.value("learning_rate", config.baseline.learning_rate);
    config.baseline.momentum = b.value("momentum", config.baseline.momentum);
    config.baseline.l2 = b.value("l2", config.baseline.l2);
    config.baseline.epochs = b.value("epochs", config.baseline.epochs);
  }

  const fs::path base = path.parent_path();
  config.train = parse_tiles(j, "train", base, origin);
  config.eval = parse_tiles(j, "eval", base, origin);
  if (j.contains("out_dir")) {
    config.out_dir = resolve_path(base, serial::require_string(j, "out_dir", origin));
  }
  return config;
}

void cmd_build_tree(const BuildTreeOptions& options, std::ostream& out) {
  require_exists(options.elevation, "elevation");
  require(!options.out.empty(), ErrorCode::bad_argument, "missing output path");

  const ElevationGrid grid = load_terrain(options.elevation);
  const TreeHierarchy hierarchy =
      build_hierarchy(grid, options.precisions, connectivity_from_int(options.connectivity),
                      options.seed, options.epsilon);

  for (std::int64_t level = 0; level < hierarchy.level_count(); ++level) {
    const ContourTree& tree = hierarchy.trees[level];
    out << "level " << level << ": precision " << format_double(tree.precision) << ", "
        << tree.nodes.size() << " nodes, " << tree.edges.size() << " edges\n";
  }

  if (hierarchy.level_count() == 1) {
    save_tree(hierarchy.trees[0], options.out);
  } else {
    save_hierarchy(hierarchy, options.out);
  }
  out << "wrote " << options.out.string() << "\n";

  if (!options.dot.empty()) {
    write_text(options.dot, tree_to_dot(hierarchy.trees[0]));
    out << "wrote " << options.dot.string() << "\n";
  }
}

void cmd_train(const TrainOptions& options, std::ostream& out) {
  RunConfig config = load_run_config(options.config);
  apply_overrides(config, options.overrides);
  require(!config.train.empty(), ErrorCode::bad_argument,
          "run config lists no training tiles");
  require(!config.out_dir.empty(), ErrorCode::bad_argument,
          "run config needs an out_dir (or pass --out)");

  std::vector<LoadedTile> tiles;
  for (const TileEntry& entry : config.train) {
    tiles.push_back(load_supervised_tile(entry, /*need_elevation=*/true));
  }

  const std::int64_t bands = tiles[0].features.bands();
  const int num_classes = tiles[0].labels.num_classes();
  for (const LoadedTile& tile : tiles) {
    require(tile.features.bands() == bands, ErrorCode::dimension_mismatch,
            "training tiles disagree on feature bands");
    require(tile.labels.num_classes() == num_classes, ErrorCode::dimension_mismatch,
            "training tiles disagree on class count");
  }

  Model model = build_model(config.model, bands, num_classes);

  std::vector<Sample> samples;
  for (const LoadedTile& tile : tiles) {
    const ElevationGrid grid = load_terrain(tile.entry.elevation);
    const TreeHierarchy hierarchy =
        build_hierarchy(grid, config.model.precisions, config.model.connectivity,
                        config.model.seed, config.model.epsilon);
    Sample sample =
        make_sample(model, hierarchy, tile.features, &tile.labels, tile.entry.name);
    out << "tile \"" << tile.entry.name << "\": " << sample.node_count()
        << " nodes at level 0\n";
    samples.push_back(std::move(sample));
  }

  out << "training " << samples.size() << " tiles for " << config.model.epochs
      << " epochs (" << to_string(config.model.conv_type) << ", "
      << config.model.levels() << " levels)\n";
  train_model(model, samples, [&out](const EpochStats& stats) {
    char line[128];
    std::snprintf(line, sizeof(line), "epoch %d: loss %.6f accuracy %.4f penalty %.6f",
                  stats.epoch, stats.loss, stats.accuracy, stats.l2_penalty);
    out << line << "\n";
  });

  fs::create_directories(config.out_dir);
  nlohmann::json snapshot;
  snapshot["model"] = config_to_json(config.model);
  snapshot["baseline"] = baseline_to_json(config.baseline);
  snapshot["train"] = tiles_to_json(config.train);
  if (!config.eval.empty()) {
    snapshot["eval"] = tiles_to_json(config.eval);
  }
  snapshot["out_dir"] = config.out_dir.string();
  serial::save_json(config.out_dir / "config.json", snapshot);

  std::string csv = "epoch,loss,l2_penalty,accuracy\n";
  for (const EpochStats& stats : model.history) {
    csv += std::to_string(stats.epoch);
    csv += ',';
    csv += format_double(stats.loss);
    csv += ',';
    csv += format_double(stats.l2_penalty);
    csv += ',';
    csv += format_double(stats.accuracy);
    csv += '\n';
  }
  write_text(config.out_dir / "history.csv", csv);

  const fs::path checkpoint_path = config.out_dir / "checkpoint.json";
  save_checkpoint(model, checkpoint_path);
  out << "wrote " << checkpoint_path.string() << "\n";
}

void cmd_predict(const PredictOptions& options, std::ostream& out) {
  require_exists(options.checkpoint, "checkpoint");
  require_exists(options.elevation, "elevation");
  require_exists(options.features, "features");
  require(!options.out.empty(), ErrorCode::bad_argument, "missing output path");

  Model model = load_checkpoint(options.checkpoint);
  const ElevationGrid grid = load_terrain(options.elevation);
  const FeatureRaster features = load_features(options.features);
  const TreeHierarchy hierarchy =
      build_hierarchy(grid, model.config.precisions, model.config.connectivity,
                      model.config.seed, model.config.epsilon);
  const Sample sample = make_sample(model, hierarchy, features, nullptr,
                                    options.elevation.stem().string());
  const Eigen::VectorXi nodes = predict_nodes(model, sample);
  const LabelRaster predicted =
      project_to_pixels(hierarchy.trees[0], nodes, model.num_classes);
  save_labels(predicted, options.out);
  out << "predicted " << grid.rows() << "x" << grid.cols() << " pixels over "
      << sample.node_count() << " nodes\n";
  out << "wrote " << options.out.string() << "\n";
}

void cmd_eval(const EvalOptions& options, std::ostream& out) {
  require_exists(options.predicted, "predicted raster");
  require_exists(options.reference, "reference raster");

  const LabelRaster predicted = load_labels(options.predicted);
  const LabelRaster reference = load_labels(options.reference);

  MetricsReport report;
  if (!options.mask.empty()) {
    require_exists(options.mask, "mask raster");
    const ElevationGrid mask = load_terrain(options.mask);
    require(mask.rows() == reference.rows() && mask.cols() == reference.cols(),
            ErrorCode::dimension_mismatch, "mask shape does not match the rasters");
    std::vector<std::uint8_t> valid(static_cast<std::size_t>(mask.size()));
    for (std::int64_t p = 0; p < mask.size(); ++p) {
      valid[static_cast<std::size_t>(p)] = mask.valid(p) ? 1 : 0;
    }
    report = evaluate(predicted, reference, &valid);
  } else {
    report = evaluate(predicted, reference);
  }

  out << metrics_to_table(report);
  if (!options.out.empty()) {
    serial::save_json(options.out, metrics_to_json(report));
    out << "wrote " << options.out.string() << "\n";
  }
}

void cmd_synth(const SynthOptions& options, std::ostream& out) {
  require(options.tiles >= 1, ErrorCode::bad_argument, "tile count must be at least 1");
  require(!options.out_dir.empty(), ErrorCode::bad_argument, "missing output directory");
  fs::create_directories(options.out_dir);

  nlohmann::json manifest;
  manifest["format"] = "ctnn-manifest";
  manifest["version"] = 1;
  nlohmann::json config_json;
  config_json["rows"] = options.config.rows;
  config_json["cols"] = options.config.cols;
  config_json["bands"] = options.config.bands;
  config_json["num_bumps"] = options.config.num_bumps;
  config_json["relief"] = options.config.relief;
  config_json["noise_sigma"] = options.config.noise_sigma;
  config_json["water_fraction"] = options.config.water_fraction;
  config_json["occlusion_fraction"] = options.config.occlusion_fraction;
  config_json["tree_precision"] = options.config.tree_precision;
  config_json["seed"] = options.config.seed;
  config_json["connectivity"] = static_cast<int>(options.config.connectivity);
  config_json["tiles"] = options.tiles;
  manifest["config"] = config_json;
  manifest["tiles"] = nlohmann::json::array();

  for (int t = 0; t < options.tiles; ++t) {
    SynthConfig tile_config = options.config;
    tile_config.seed = mix_seed(options.config.seed, static_cast<std::uint64_t>(t));
    const SynthSample sample = make_synth_sample(tile_config);

    char name[16];
    std::snprintf(name, sizeof(name), "tile%02d", t);
    const std::string elevation_name = std::string(name) + ".elevation.json";
    const std::string features_name = std::string(name) + ".features.json";
    const std::string labels_name = std::string(name) + ".labels.json";
    save_elevation(sample.elevation, options.out_dir / elevation_name);
    save_features(sample.features, options.out_dir / features_name);
    save_labels(sample.labels, options.out_dir / labels_name);

    const std::int64_t pixels = sample.elevation.size();
    std::int64_t water = 0;
    std::int64_t occluded = 0;
    for (std::int64_t p = 0; p < pixels; ++p) {
      water += sample.labels.at(p) == 1 ? 1 : 0;
      occluded += sample.occluded[static_cast<std::size_t>(p)] != 0 ? 1 : 0;
    }

    nlohmann::json entry;
    entry["name"] = name;
    entry["elevation"] = elevation_name;
    entry["features"] = features_name;
    entry["labels"] = labels_name;
    entry["seed"] = tile_config.seed;
    entry["water_fraction"] = static_cast<double>(water) / static_cast<double>(pixels);
    entry["occluded_fraction"] =
        static_cast<double>(occluded) / static_cast<double>(pixels);
    manifest["tiles"].push_back(entry);

    char line[128];
    std::snprintf(line, sizeof(line), "%s: %lldx%lld, water %.1f%%, occluded %.1f%%",
                  name, static_cast<long long>(sample.elevation.rows()),
                  static_cast<long long>(sample.elevation.cols()),
                  100.0 * static_cast<double>(water) / static_cast<double>(pixels),
                  100.0 * static_cast<double>(occluded) / static_cast<double>(pixels));
    out << line << "\n";
  }

  serial::save_json(options.out_dir / "manifest.json", manifest);
  out << "wrote " << (options.out_dir / "manifest.json").string() << "\n";
}

void cmd_baseline(const BaselineOptions& options, std::ostream& out) {
  RunConfig config = load_run_config(options.config);
  if (options.epochs) {
    config.baseline.epochs = *options.epochs;
  }
  require(!config.train.empty(), ErrorCode::bad_argument,
          "run config lists no training tiles");

  std::vector<LoadedTile> train_tiles;
  for (const TileEntry& entry : config.train) {
    train_tiles.push_back(load_supervised_tile(entry, /*need_elevation=*/false));
  }
  std::vector<const FeatureRaster*> features;
  std::vector<const LabelRaster*> labels;
  for (const LoadedTile& tile : train_tiles) {
    features.push_back(&tile.features);
    labels.push_back(&tile.labels);
  }

  const BaselineModel model = train_baseline(features, labels, config.baseline);
  out << "baseline: " << train_tiles.size() << " tiles, " << config.baseline.epochs
      << " epochs, final loss " << format_double(model.loss_history.back()) << "\n";

  const std::vector<TileEntry>& eval_entries =
      config.eval.empty() ? config.train : config.eval;
  std::vector<std::uint8_t> predicted_all;
  std::vector<std::uint8_t> reference_all;
  for (const TileEntry& entry : eval_entries) {
    const LoadedTile tile = load_supervised_tile(entry, /*need_elevation=*/false);
    const LabelRaster predicted = baseline_predict(model, tile.features);
    require(tile.labels.num_classes() == model.num_classes,
            ErrorCode::dimension_mismatch,
            "evaluation tiles disagree with the training class count");
    predicted_all.insert(predicted_all.end(), predicted.classes().begin(),
                         predicted.classes().end());
    reference_all.insert(reference_all.end(), tile.labels.classes().begin(),
                         tile.labels.classes().end());
  }

  const std::int64_t total = std::ssize(predicted_all);
  const LabelRaster pooled_predicted(1, total, model.num_classes,
                                     std::move(predicted_all));
  const LabelRaster pooled_reference(1, total, model.num_classes,
                                     std::move(reference_all));
  const MetricsReport report = evaluate(pooled_predicted, pooled_reference);
  out << metrics_to_table(report);
  if (!options.out.empty()) {
    serial::save_json(options.out, metrics_to_json(report));
    out << "wrote " << options.out.string() << "\n";
  }
}

} // namespace ctnn
