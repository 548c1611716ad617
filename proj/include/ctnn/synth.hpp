#pragma once

#include <cstdint>
#include <vector>

#include "ctnn/raster.hpp"

namespace ctnn {

// Synthetic flooded-terrain generator. Terrain is a sum of random smooth
// bumps; the water class is the flood-fill of the deepest point across
// pixels whose quantized level sits at or below a level chosen to hit
// water_fraction, so labels are constant on contour-tree nodes built at
// tree_precision. Feature bands are
//   0, 1: class signal (+1 water, -1 land) plus independent noise, both
//         sign-flipped where occluded so those pixels look like the wrong
//         class (one signal band if bands == 1)
//   2+:   standard normal nuisance bands
// Occlusion mimics a canopy belt along the waterline: the occlusion_fraction
// of pixels nearest the water level in elevation get swapped signals. No
// per-pixel rule can recover them, and even elevation-ring consensus fails
// inside the belt; placing the boundary needs the contour-tree neighborhood
// (clean water a few hops below, clean land a few hops above, and no clean
// water at all around dry basins).
struct SynthConfig {
  std::int64_t rows = 96;
  std::int64_t cols = 96;
  int bands = 3;
  int num_bumps = 12;
  double relief = 4.0;            // bump amplitude scale
  double noise_sigma = 0.5;       // feature noise on the signal band
  double water_fraction = 0.35;   // target share of below-level pixels
  double occlusion_fraction = 0.25;
  double tree_precision = 0.05;   // labels are constant on zones at this step
  std::uint64_t seed = 1;
  Connectivity connectivity = Connectivity::four;
};

struct SynthSample {
  ElevationGrid elevation;
  FeatureRaster features;
  LabelRaster labels; // 0 = land, 1 = water
  std::vector<std::uint8_t> occluded;
};

SynthSample make_synth_sample(const SynthConfig& config);

} // namespace ctnn
