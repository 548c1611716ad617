#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctnn/commands.hpp"
#include "ctnn/errors.hpp"

namespace {

void setup_build_tree(CLI::App& app) {
  auto options = std::make_shared<ctnn::BuildTreeOptions>();
  CLI::App* cmd = app.add_subcommand(
      "build-tree", "Build a contour tree or multi-precision hierarchy from elevation data");
  cmd->add_option("--elevation", options->elevation,
                  "Elevation raster (.json container or ESRI .asc)")
      ->required();
  cmd->add_option("--precisions", options->precisions,
                  "Quantization steps, finest first (one value builds a single tree)")
      ->required()
      ->delimiter(',');
  cmd->add_option("--connectivity", options->connectivity, "Pixel connectivity, 4 or 8")
      ->check(CLI::IsMember({4, 8}));
  cmd->add_option("--seed", options->seed, "Tie-break noise seed");
  cmd->add_option("--epsilon", options->epsilon,
                  "Tie-break noise bound (0 selects precisions[0] / 8)");
  cmd->add_option("--out", options->out, "Output container header path")->required();
  cmd->add_option("--dot", options->dot, "Also write the finest tree as Graphviz DOT");
  cmd->callback([options] { ctnn::cmd_build_tree(*options, std::cout); });
}

void add_override_flags(CLI::App* cmd, const std::shared_ptr<ctnn::TrainOptions>& options) {
  auto seed = std::make_shared<std::uint64_t>();
  auto precisions = std::make_shared<std::vector<double>>();
  auto connectivity = std::make_shared<int>();
  auto conv_type = std::make_shared<std::string>();
  auto hops = std::make_shared<std::vector<int>>();
  auto channels = std::make_shared<std::vector<int>>();
  auto epochs = std::make_shared<int>();
  auto out_dir = std::make_shared<std::string>();

  CLI::Option* seed_opt = cmd->add_option("--seed", *seed, "Override the model seed");
  CLI::Option* precisions_opt =
      cmd->add_option("--precisions", *precisions, "Override hierarchy precisions")
          ->delimiter(',');
  CLI::Option* connectivity_opt =
      cmd->add_option("--connectivity", *connectivity, "Override pixel connectivity")
          ->check(CLI::IsMember({4, 8}));
  CLI::Option* conv_opt =
      cmd->add_option("--conv-type", *conv_type, "Override the graph convolution type")
          ->check(CLI::IsMember({"cheby", "diffusion", "none"}));
  CLI::Option* hops_opt =
      cmd->add_option("--hops", *hops, "Override per-level hop counts")->delimiter(',');
  CLI::Option* channels_opt =
      cmd->add_option("--channels", *channels, "Override per-level channel widths")
          ->delimiter(',');
  CLI::Option* epochs_opt = cmd->add_option("--epochs", *epochs, "Override epoch count");
  CLI::Option* out_opt = cmd->add_option("--out", *out_dir, "Override the output directory");

  cmd->callback([options, seed, seed_opt, precisions, precisions_opt, connectivity,
                 connectivity_opt, conv_type, conv_opt, hops, hops_opt, channels,
                 channels_opt, epochs, epochs_opt, out_dir, out_opt] {
    if (seed_opt->count() > 0) {
      options->overrides.seed = *seed;
    }
    if (precisions_opt->count() > 0) {
      options->overrides.precisions = *precisions;
    }
    if (connectivity_opt->count() > 0) {
      options->overrides.connectivity = *connectivity;
    }
    if (conv_opt->count() > 0) {
      options->overrides.conv_type = *conv_type;
    }
    if (hops_opt->count() > 0) {
      options->overrides.hops = *hops;
    }
    if (channels_opt->count() > 0) {
      options->overrides.channels = *channels;
    }
    if (epochs_opt->count() > 0) {
      options->overrides.epochs = *epochs;
    }
    if (out_opt->count() > 0) {
      options->overrides.out_dir = *out_dir;
    }
    ctnn::cmd_train(*options, std::cout);
  });
}

void setup_train(CLI::App& app) {
  auto options = std::make_shared<ctnn::TrainOptions>();
  CLI::App* cmd = app.add_subcommand("train", "Train a model from a run config");
  cmd->add_option("--config", options->config, "Run config JSON")->required();
  add_override_flags(cmd, options);
}

void setup_predict(CLI::App& app) {
  auto options = std::make_shared<ctnn::PredictOptions>();
  CLI::App* cmd = app.add_subcommand("predict", "Predict pixel classes with a checkpoint");
  cmd->add_option("--checkpoint", options->checkpoint, "Checkpoint header path")->required();
  cmd->add_option("--elevation", options->elevation,
                  "Elevation raster (.json container or ESRI .asc)")
      ->required();
  cmd->add_option("--features", options->features, "Feature raster")->required();
  cmd->add_option("--out", options->out, "Output label raster path")->required();
  cmd->callback([options] { ctnn::cmd_predict(*options, std::cout); });
}

void setup_eval(CLI::App& app) {
  auto options = std::make_shared<ctnn::EvalOptions>();
  CLI::App* cmd = app.add_subcommand("eval", "Compare a predicted label raster to truth");
  cmd->add_option("--pred", options->predicted, "Predicted label raster")->required();
  cmd->add_option("--truth", options->reference, "Reference label raster")->required();
  cmd->add_option("--mask", options->mask,
                  "Elevation raster whose nodata pixels are excluded");
  cmd->add_option("--out", options->out, "Also write the report as JSON");
  cmd->callback([options] { ctnn::cmd_eval(*options, std::cout); });
}

void setup_synth(CLI::App& app) {
  auto options = std::make_shared<ctnn::SynthOptions>();
  auto size = std::make_shared<std::int64_t>(96);
  auto connectivity = std::make_shared<int>(4);
  CLI::App* cmd = app.add_subcommand("synth", "Generate a synthetic flooded-terrain dataset");
  cmd->add_option("--out", options->out_dir, "Output directory")->required();
  cmd->add_option("--tiles", options->tiles, "Number of tiles")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", options->config.seed, "Dataset seed");
  CLI::Option* size_opt =
      cmd->add_option("--size", *size, "Tile side length in pixels (at least 16)")
          ->check(CLI::Range(std::int64_t{16}, std::int64_t{4096}));
  cmd->add_option("--bands", options->config.bands, "Feature band count")
      ->check(CLI::Range(2, 64));
  cmd->add_option("--bumps", options->config.num_bumps, "Number of terrain bumps")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--noise-sigma", options->config.noise_sigma,
                  "Gaussian noise on the signal band")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--water-fraction", options->config.water_fraction,
                  "Target share of water pixels")
      ->check(CLI::Range(0.05, 0.95));
  cmd->add_option("--occlusion-fraction", options->config.occlusion_fraction,
                  "Share of pixels with destroyed class signal")
      ->check(CLI::Range(0.0, 0.9));
  cmd->add_option("--tree-precision", options->config.tree_precision,
                  "Quantization step the labels respect")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--connectivity", *connectivity, "Pixel connectivity, 4 or 8")
      ->check(CLI::IsMember({4, 8}));
  cmd->callback([options, size, size_opt, connectivity] {
    if (size_opt->count() > 0) {
      options->config.rows = *size;
      options->config.cols = *size;
    }
    options->config.connectivity = ctnn::connectivity_from_int(*connectivity);
    ctnn::cmd_synth(*options, std::cout);
  });
}

void setup_baseline(CLI::App& app) {
  auto options = std::make_shared<ctnn::BaselineOptions>();
  auto epochs = std::make_shared<int>();
  CLI::App* cmd = app.add_subcommand(
      "baseline", "Train and evaluate the per-pixel logistic baseline");
  cmd->add_option("--config", options->config, "Run config JSON")->required();
  CLI::Option* epochs_opt =
      cmd->add_option("--epochs", *epochs, "Override baseline epoch count");
  cmd->add_option("--out", options->out, "Also write the report as JSON");
  cmd->callback([options, epochs, epochs_opt] {
    if (epochs_opt->count() > 0) {
      options->epochs = *epochs;
    }
    ctnn::cmd_baseline(*options, std::cout);
  });
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contour tree neural network pipeline"};
  app.set_version_flag("--version", "ctnn 0.1.0");
  app.require_subcommand(1);

  setup_build_tree(app);
  setup_train(app);
  setup_predict(app);
  setup_eval(app);
  setup_synth(app);
  setup_baseline(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ctnn::Error& e) {
    std::cerr << "error (" << ctnn::error_code_name(e.code()) << "): " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error (internal): " << e.what() << "\n";
    return 2;
  }
  return 0;
}
