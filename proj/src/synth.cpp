#include "ctnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "ctnn/errors.hpp"
#include "ctnn/hash.hpp"
#include "ctnn/nn.hpp"

namespace ctnn {

namespace {

double gaussian(Rng& rng) {
  // Box-Muller; 1 - uniform() keeps the log argument in (0, 1].
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace

SynthSample make_synth_sample(const SynthConfig& config) {
  require(config.rows >= 8 && config.cols >= 8, ErrorCode::bad_argument,
          "synthetic grids must be at least 8x8");
  require(config.bands >= 1, ErrorCode::bad_argument,
          "synthetic features need at least the signal band");
  require(config.num_bumps >= 1, ErrorCode::bad_argument, "num_bumps must be positive");
  require(config.relief > 0.0, ErrorCode::bad_argument, "relief must be positive");
  require(config.noise_sigma >= 0.0, ErrorCode::bad_argument,
          "noise_sigma must be non-negative");
  require(config.water_fraction > 0.0 && config.water_fraction < 1.0,
          ErrorCode::bad_argument, "water_fraction must lie in (0, 1)");
  require(config.occlusion_fraction >= 0.0 && config.occlusion_fraction < 1.0,
          ErrorCode::bad_argument, "occlusion_fraction must lie in [0, 1)");
  require(config.tree_precision > 0.0, ErrorCode::bad_argument,
          "tree_precision must be positive");

  const std::int64_t rows = config.rows;
  const std::int64_t cols = config.cols;
  const std::int64_t n = rows * cols;
  const double extent = static_cast<double>(std::min(rows, cols));

  // Terrain: random smooth bumps, roughly a third of them pits so that
  // isolated basins below the water level exist. The first bump is always a
  // deep wide pit, so every tile has a lake whose core lies well below the
  // waterline (and its swapped canopy belt).
  Rng terrain_rng(mix_seed(config.seed, 0));
  std::vector<double> values(n, 0.0);
  for (int b = 0; b < config.num_bumps; ++b) {
    const double cy = terrain_rng.uniform(0.0, static_cast<double>(rows));
    const double cx = terrain_rng.uniform(0.0, static_cast<double>(cols));
    const bool pit = b == 0 || terrain_rng.uniform() < 0.35;
    const double radius = b == 0 ? terrain_rng.uniform(extent / 4.0, extent / 3.0)
                                 : terrain_rng.uniform(extent / 8.0, extent / 3.0);
    const double low = b == 0 ? 0.8 : 0.4;
    const double amplitude =
        (pit ? -1.0 : 1.0) * config.relief * terrain_rng.uniform(low, 1.0);
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t c = 0; c < cols; ++c) {
        const double dy = static_cast<double>(r) - cy;
        const double dx = static_cast<double>(c) - cx;
        values[r * cols + c] +=
            amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
      }
    }
  }
  ElevationGrid elevation(rows, cols, std::move(values));

  // Water level: the quantized level at the water_fraction quantile.
  const QuantizedGrid quantized = quantize(elevation, config.tree_precision);
  std::vector<std::int64_t> sorted_levels(quantized.levels());
  std::sort(sorted_levels.begin(), sorted_levels.end());
  const std::int64_t water_level =
      sorted_levels[static_cast<std::int64_t>(config.water_fraction *
                                              static_cast<double>(n - 1))];

  // Flood-fill from the deepest pixel across at-or-below-level pixels; basins
  // not connected to it stay land. Levels are constant per flat zone, so the
  // labels are too.
  const std::int64_t lowest =
      std::min_element(elevation.values().begin(), elevation.values().end()) -
      elevation.values().begin();
  std::vector<std::uint8_t> water(n, 0);
  if (quantized.level(lowest) <= water_level) {
    std::deque<std::int64_t> frontier{lowest};
    water[lowest] = 1;
    while (!frontier.empty()) {
      const std::int64_t p = frontier.front();
      frontier.pop_front();
      for_each_neighbor(rows, cols, p / cols, p % cols, config.connectivity,
                        [&](std::int64_t q) {
                          if (!water[q] && quantized.level(q) <= water_level) {
                            water[q] = 1;
                            frontier.push_back(q);
                          }
                        });
    }
  }

  // Occlusion: a canopy belt along the waterline. The occlusion_fraction
  // of pixels whose elevation is closest to the water level get their class
  // signal swapped, so the flood boundary itself is hidden from any
  // per-pixel view and can only be placed from terrain structure.
  const double waterline = static_cast<double>(water_level) * config.tree_precision;
  std::vector<double> distance(n);
  for (std::int64_t p = 0; p < n; ++p) {
    distance[p] = std::abs(elevation.at(p) - waterline);
  }
  std::vector<double> sorted_distance(distance);
  std::sort(sorted_distance.begin(), sorted_distance.end());
  const double belt =
      sorted_distance[static_cast<std::int64_t>(config.occlusion_fraction *
                                                static_cast<double>(n - 1))];
  std::vector<std::uint8_t> occluded(n, 0);
  if (config.occlusion_fraction > 0.0) {
    for (std::int64_t p = 0; p < n; ++p) {
      occluded[p] = distance[p] < belt ? 1 : 0;
    }
  }

  // Features: class-dependent means plus noise on the first two bands, both
  // sign-swapped under occlusion so occluded pixels look exactly like the
  // wrong class to any per-pixel model. The remaining bands are nuisance.
  Rng feature_rng(mix_seed(config.seed, 2));
  const int signal_bands = std::min(config.bands, 2);
  std::vector<double> features(static_cast<std::size_t>(n) * config.bands, 0.0);
  for (std::int64_t p = 0; p < n; ++p) {
    const double signal = (water[p] ? 1.0 : -1.0) * (occluded[p] ? -1.0 : 1.0);
    double* row = &features[p * config.bands];
    for (int b = 0; b < signal_bands; ++b) {
      row[b] = signal + config.noise_sigma * gaussian(feature_rng);
    }
    for (int b = signal_bands; b < config.bands; ++b) {
      row[b] = gaussian(feature_rng);
    }
  }

  SynthSample sample;
  sample.elevation = std::move(elevation);
  sample.features = FeatureRaster(rows, cols, config.bands, std::move(features));
  sample.labels = LabelRaster(rows, cols, 2, std::move(water));
  sample.occluded = std::move(occluded);
  return sample;
}

} // namespace ctnn
