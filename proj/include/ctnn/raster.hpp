#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ctnn {

// Pixel neighborhood used for flat zones and merge-tree sweeps.
enum class Connectivity : int {
  four = 4,  // edge-adjacent neighbors
  eight = 8, // edge- and corner-adjacent neighbors
};

Connectivity connectivity_from_int(int value);

// Row-major elevation field with an optional nodata mask.
//
// `values` has rows*cols entries. `nodata` is either empty (all pixels valid)
// or rows*cols bytes where 1 marks a missing pixel. Valid pixels are finite.
class ElevationGrid {
public:
  ElevationGrid() = default;
  ElevationGrid(std::int64_t rows, std::int64_t cols, std::vector<double> values,
                std::vector<std::uint8_t> nodata = {});

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t size() const { return rows_ * cols_; }

  double at(std::int64_t r, std::int64_t c) const { return values_[r * cols_ + c]; }
  double at(std::int64_t pixel) const { return values_[pixel]; }

  bool valid(std::int64_t r, std::int64_t c) const { return valid(r * cols_ + c); }
  bool valid(std::int64_t pixel) const {
    return nodata_.empty() || nodata_[pixel] == 0;
  }
  bool has_nodata() const { return !nodata_.empty(); }
  std::int64_t valid_count() const;

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  const std::vector<std::uint8_t>& nodata() const { return nodata_; }

private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> nodata_;
};

// Integer level field produced by snapping elevations to a precision step.
class QuantizedGrid {
public:
  QuantizedGrid() = default;
  QuantizedGrid(std::int64_t rows, std::int64_t cols, double precision,
                std::vector<std::int64_t> levels, std::vector<std::uint8_t> nodata = {});

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t size() const { return rows_ * cols_; }
  double precision() const { return precision_; }

  std::int64_t level(std::int64_t r, std::int64_t c) const { return levels_[r * cols_ + c]; }
  std::int64_t level(std::int64_t pixel) const { return levels_[pixel]; }

  bool valid(std::int64_t pixel) const { return nodata_.empty() || nodata_[pixel] == 0; }

  const std::vector<std::int64_t>& levels() const { return levels_; }
  const std::vector<std::uint8_t>& nodata() const { return nodata_; }

private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  double precision_ = 0.0;
  std::vector<std::int64_t> levels_;
  std::vector<std::uint8_t> nodata_;
};

// Per-pixel feature vectors, stored row-major with bands interleaved:
// values[(r * cols + c) * bands + b].
class FeatureRaster {
public:
  FeatureRaster() = default;
  FeatureRaster(std::int64_t rows, std::int64_t cols, std::int64_t bands,
                std::vector<double> values);

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t bands() const { return bands_; }

  double at(std::int64_t pixel, std::int64_t band) const {
    return values_[pixel * bands_ + band];
  }
  double& at(std::int64_t pixel, std::int64_t band) {
    return values_[pixel * bands_ + band];
  }

  const std::vector<double>& values() const { return values_; }

private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::int64_t bands_ = 0;
  std::vector<double> values_;
};

// Per-pixel class ids in [0, num_classes).
class LabelRaster {
public:
  LabelRaster() = default;
  LabelRaster(std::int64_t rows, std::int64_t cols, int num_classes,
              std::vector<std::uint8_t> classes);

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  int num_classes() const { return num_classes_; }

  std::uint8_t at(std::int64_t pixel) const { return classes_[pixel]; }
  std::uint8_t at(std::int64_t r, std::int64_t c) const { return classes_[r * cols_ + c]; }

  const std::vector<std::uint8_t>& classes() const { return classes_; }

private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  int num_classes_ = 0;
  std::vector<std::uint8_t> classes_;
};

// Snap every valid pixel to an integer multiple of `precision`. Ties round
// half away from zero so that e.g. 0.5 -> 1 and -0.5 -> -1 at precision 1.
QuantizedGrid quantize(const ElevationGrid& grid, double precision);

std::int64_t quantize_value(double value, double precision);

// Break elevation ties by adding deterministic per-pixel noise drawn from
// (-epsilon, epsilon). The noise is keyed by (seed, row, col), so a pixel's
// perturbed value does not depend on grid traversal order. The sign of the
// noise is chosen so the pixel keeps its quantized level at the finest
// precision `quantum`; epsilon must be positive and below quantum / 4. If two
// perturbed values still collide, the colliding pixels are re-drawn with a
// bumped key until all values are unique.
ElevationGrid perturb_unique(const ElevationGrid& grid, std::uint64_t seed,
                             double epsilon, double quantum);

// Raster container I/O. A raster is a JSON header next to a little-endian
// binary payload; see README for the layout.
ElevationGrid load_elevation(const std::filesystem::path& header_path);
FeatureRaster load_features(const std::filesystem::path& header_path);
LabelRaster load_labels(const std::filesystem::path& header_path);

void save_elevation(const ElevationGrid& grid, const std::filesystem::path& header_path);
void save_features(const FeatureRaster& raster, const std::filesystem::path& header_path);
void save_labels(const LabelRaster& raster, const std::filesystem::path& header_path);

// Import an ESRI ASCII grid (.asc) as an elevation field. Cells equal to
// NODATA_value become masked pixels.
ElevationGrid import_esri_ascii(const std::filesystem::path& path);

// Invoke fn(neighbor_pixel) for each in-bounds neighbor of (r, c).
template <typename Fn>
void for_each_neighbor(std::int64_t rows, std::int64_t cols, std::int64_t r,
                       std::int64_t c, Connectivity connectivity, Fn&& fn) {
  const bool diagonal = connectivity == Connectivity::eight;
  for (std::int64_t dr = -1; dr <= 1; ++dr) {
    for (std::int64_t dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) {
        continue;
      }
      if (!diagonal && dr != 0 && dc != 0) {
        continue;
      }
      const std::int64_t nr = r + dr;
      const std::int64_t nc = c + dc;
      if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) {
        continue;
      }
      fn(nr * cols + nc);
    }
  }
}

} // namespace ctnn
