#include "ctnn/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ctnn/errors.hpp"
#include "ctnn/hash.hpp"
#include "ctnn/serial.hpp"

namespace ctnn {

const char* error_code_name(ErrorCode code) {
  switch (code) {
  case ErrorCode::usage:
    return "usage";
  case ErrorCode::malformed_header:
    return "malformed_header";
  case ErrorCode::version_mismatch:
    return "version_mismatch";
  case ErrorCode::dimension_mismatch:
    return "dimension_mismatch";
  case ErrorCode::non_finite_value:
    return "non_finite_value";
  case ErrorCode::class_range:
    return "class_range";
  case ErrorCode::duplicate_values:
    return "duplicate_values";
  case ErrorCode::bad_argument:
    return "bad_argument";
  case ErrorCode::inconsistent_input:
    return "inconsistent_input";
  case ErrorCode::io_failure:
    return "io_failure";
  case ErrorCode::corrupt_payload:
    return "corrupt_payload";
  case ErrorCode::numeric_failure:
    return "numeric_failure";
  case ErrorCode::internal:
    return "internal";
  }
  return "unknown";
}

Connectivity connectivity_from_int(int value) {
  if (value == 4) {
    return Connectivity::four;
  }
  if (value == 8) {
    return Connectivity::eight;
  }
  fail(ErrorCode::bad_argument, "connectivity must be 4 or 8, got " + std::to_string(value));
}

namespace {

void check_shape(std::int64_t rows, std::int64_t cols) {
  require(rows >= 1 && cols >= 1, ErrorCode::bad_argument,
          "raster shape must be at least 1x1, got " + std::to_string(rows) + "x" +
              std::to_string(cols));
}

void check_mask(const std::vector<std::uint8_t>& nodata, std::int64_t size) {
  require(nodata.empty() || std::ssize(nodata) == size, ErrorCode::dimension_mismatch,
          "nodata mask size does not match raster size");
  for (std::uint8_t flag : nodata) {
    require(flag == 0 || flag == 1, ErrorCode::corrupt_payload,
            "nodata mask entries must be 0 or 1");
  }
}

} // namespace

ElevationGrid::ElevationGrid(std::int64_t rows, std::int64_t cols,
                             std::vector<double> values, std::vector<std::uint8_t> nodata)
    : rows_(rows), cols_(cols), values_(std::move(values)), nodata_(std::move(nodata)) {
  check_shape(rows_, cols_);
  require(std::ssize(values_) == size(), ErrorCode::dimension_mismatch,
          "elevation value count does not match rows*cols");
  check_mask(nodata_, size());
  for (std::int64_t p = 0; p < size(); ++p) {
    require(!valid(p) || std::isfinite(values_[p]), ErrorCode::non_finite_value,
            "elevation at pixel " + std::to_string(p) + " is not finite");
  }
}

std::int64_t ElevationGrid::valid_count() const {
  if (nodata_.empty()) {
    return size();
  }
  return std::count(nodata_.begin(), nodata_.end(), std::uint8_t{0});
}

QuantizedGrid::QuantizedGrid(std::int64_t rows, std::int64_t cols, double precision,
                             std::vector<std::int64_t> levels,
                             std::vector<std::uint8_t> nodata)
    : rows_(rows), cols_(cols), precision_(precision), levels_(std::move(levels)),
      nodata_(std::move(nodata)) {
  check_shape(rows_, cols_);
  require(precision_ > 0.0 && std::isfinite(precision_), ErrorCode::bad_argument,
          "precision must be positive and finite");
  require(std::ssize(levels_) == size(), ErrorCode::dimension_mismatch,
          "level count does not match rows*cols");
  check_mask(nodata_, size());
}

FeatureRaster::FeatureRaster(std::int64_t rows, std::int64_t cols, std::int64_t bands,
                             std::vector<double> values)
    : rows_(rows), cols_(cols), bands_(bands), values_(std::move(values)) {
  check_shape(rows_, cols_);
  require(bands_ >= 1, ErrorCode::bad_argument, "feature raster needs at least one band");
  require(std::ssize(values_) == rows_ * cols_ * bands_, ErrorCode::dimension_mismatch,
          "feature value count does not match rows*cols*bands");
  for (double v : values_) {
    require(std::isfinite(v), ErrorCode::non_finite_value,
            "feature raster contains a non-finite value");
  }
}

LabelRaster::LabelRaster(std::int64_t rows, std::int64_t cols, int num_classes,
                         std::vector<std::uint8_t> classes)
    : rows_(rows), cols_(cols), num_classes_(num_classes), classes_(std::move(classes)) {
  check_shape(rows_, cols_);
  require(num_classes_ >= 2 && num_classes_ <= 256, ErrorCode::bad_argument,
          "num_classes must be in [2, 256]");
  require(std::ssize(classes_) == rows_ * cols_, ErrorCode::dimension_mismatch,
          "label count does not match rows*cols");
  for (std::uint8_t c : classes_) {
    require(c < num_classes_, ErrorCode::class_range,
            "label " + std::to_string(int(c)) + " outside [0, " +
                std::to_string(num_classes_) + ")");
  }
}

std::int64_t quantize_value(double value, double precision) {
  return std::llround(value / precision);
}

QuantizedGrid quantize(const ElevationGrid& grid, double precision) {
  require(precision > 0.0 && std::isfinite(precision), ErrorCode::bad_argument,
          "precision must be positive and finite");
  std::vector<std::int64_t> levels(grid.size(), 0);
  for (std::int64_t p = 0; p < grid.size(); ++p) {
    if (grid.valid(p)) {
      levels[p] = quantize_value(grid.at(p), precision);
    }
  }
  return QuantizedGrid(grid.rows(), grid.cols(), precision, std::move(levels),
                       grid.nodata());
}

namespace {

// Uniform double in the open interval (0, 1).
double unit_open(std::uint64_t h) {
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

double draw_noise(std::uint64_t seed, std::int64_t pixel, std::uint64_t salt,
                  double value, double epsilon, double quantum) {
  const std::uint64_t h =
      splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(pixel) + 1)) ^ salt);
  const double magnitude = unit_open(h) * epsilon;
  const double sign = (h & 1) ? 1.0 : -1.0;
  const std::int64_t level = quantize_value(value, quantum);
  // Keep the pixel in its quantization bin; with epsilon < quantum / 4 at
  // least one direction stays inside.
  double candidate = value + sign * magnitude;
  if (quantize_value(candidate, quantum) != level) {
    candidate = value - sign * magnitude;
  }
  require(quantize_value(candidate, quantum) == level, ErrorCode::internal,
          "perturbation moved a pixel across a quantization boundary");
  return candidate;
}

} // namespace

ElevationGrid perturb_unique(const ElevationGrid& grid, std::uint64_t seed,
                             double epsilon, double quantum) {
  require(quantum > 0.0 && std::isfinite(quantum), ErrorCode::bad_argument,
          "quantum must be positive and finite");
  require(epsilon > 0.0 && epsilon < quantum / 4.0, ErrorCode::bad_argument,
          "epsilon must lie in (0, quantum / 4)");

  std::vector<double> values = grid.values();
  std::vector<std::int64_t> pixels;
  pixels.reserve(grid.size());
  for (std::int64_t p = 0; p < grid.size(); ++p) {
    if (grid.valid(p)) {
      pixels.push_back(p);
      values[p] = draw_noise(seed, p, 0, grid.at(p), epsilon, quantum);
    }
  }

  // Re-draw colliding pixels with a bumped salt until all values are unique.
  std::vector<std::uint64_t> salt(grid.size(), 0);
  for (int round = 0; round < 64; ++round) {
    std::vector<std::int64_t> order = pixels;
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
      return values[a] < values[b] || (values[a] == values[b] && a < b);
    });
    std::vector<std::int64_t> colliding;
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (values[order[i]] == values[order[i - 1]]) {
        if (colliding.empty() || colliding.back() != order[i - 1]) {
          colliding.push_back(order[i - 1]);
        }
        colliding.push_back(order[i]);
      }
    }
    if (colliding.empty()) {
      return ElevationGrid(grid.rows(), grid.cols(), std::move(values), grid.nodata());
    }
    for (std::int64_t p : colliding) {
      salt[p] += 1;
      values[p] = draw_noise(seed, p, salt[p], grid.at(p), epsilon, quantum);
    }
  }
  fail(ErrorCode::internal, "perturbation failed to separate tied values");
}

namespace {

constexpr const char* kRasterFormat = "ctnn-raster";
constexpr int kRasterVersion = 1;

nlohmann::json load_raster_header(const std::filesystem::path& path,
                                  const std::string& kind, std::int64_t& rows,
                                  std::int64_t& cols) {
  nlohmann::json header = serial::load_header(path, kRasterFormat, kRasterVersion);
  const std::string actual_kind = serial::require_string(header, "kind", path.string());
  require(actual_kind == kind, ErrorCode::malformed_header,
          path.string() + ": expected kind \"" + kind + "\", found \"" + actual_kind + "\"");
  rows = serial::require_int(header, "rows", path.string());
  cols = serial::require_int(header, "cols", path.string());
  require(rows >= 1 && cols >= 1, ErrorCode::malformed_header,
          path.string() + ": rows and cols must be positive");
  return header;
}

void check_dtype(const nlohmann::json& header, const std::filesystem::path& path,
                 const std::string& expected) {
  const std::string dtype = serial::require_string(header, "dtype", path.string());
  require(dtype == expected, ErrorCode::malformed_header,
          path.string() + ": expected dtype \"" + expected + "\", found \"" + dtype + "\"");
}

} // namespace

ElevationGrid load_elevation(const std::filesystem::path& header_path) {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  nlohmann::json header = load_raster_header(header_path, "elevation", rows, cols);
  check_dtype(header, header_path, "f64");
  const bool has_mask = header.value("nodata", false);

  const auto payload = serial::read_file(serial::payload_path(header_path, header));
  const std::size_t expected =
      static_cast<std::size_t>(rows * cols) * (8 + (has_mask ? 1 : 0));
  require(payload.size() == expected, ErrorCode::dimension_mismatch,
          header_path.string() + ": payload holds " + std::to_string(payload.size()) +
              " bytes, expected " + std::to_string(expected));

  serial::Reader reader(payload, header_path.string());
  std::vector<double> values(static_cast<std::size_t>(rows * cols));
  for (double& v : values) {
    v = reader.read_f64();
  }
  std::vector<std::uint8_t> nodata;
  if (has_mask) {
    nodata.resize(values.size());
    for (std::uint8_t& flag : nodata) {
      flag = reader.read_u8();
    }
  }
  reader.expect_end();
  return ElevationGrid(rows, cols, std::move(values), std::move(nodata));
}

FeatureRaster load_features(const std::filesystem::path& header_path) {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  nlohmann::json header = load_raster_header(header_path, "features", rows, cols);
  check_dtype(header, header_path, "f64");
  const std::int64_t bands = serial::require_int(header, "bands", header_path.string());
  require(bands >= 1, ErrorCode::malformed_header,
          header_path.string() + ": bands must be positive");

  const auto payload = serial::read_file(serial::payload_path(header_path, header));
  const std::size_t expected = static_cast<std::size_t>(rows * cols * bands) * 8;
  require(payload.size() == expected, ErrorCode::dimension_mismatch,
          header_path.string() + ": payload holds " + std::to_string(payload.size()) +
              " bytes, expected " + std::to_string(expected));

  serial::Reader reader(payload, header_path.string());
  std::vector<double> values(static_cast<std::size_t>(rows * cols * bands));
  for (double& v : values) {
    v = reader.read_f64();
  }
  reader.expect_end();
  return FeatureRaster(rows, cols, bands, std::move(values));
}

LabelRaster load_labels(const std::filesystem::path& header_path) {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  nlohmann::json header = load_raster_header(header_path, "labels", rows, cols);
  check_dtype(header, header_path, "u8");
  const std::int64_t classes = serial::require_int(header, "classes", header_path.string());
  require(classes >= 2 && classes <= 256, ErrorCode::malformed_header,
          header_path.string() + ": classes must be in [2, 256]");

  const auto payload = serial::read_file(serial::payload_path(header_path, header));
  const std::size_t expected = static_cast<std::size_t>(rows * cols);
  require(payload.size() == expected, ErrorCode::dimension_mismatch,
          header_path.string() + ": payload holds " + std::to_string(payload.size()) +
              " bytes, expected " + std::to_string(expected));
  return LabelRaster(rows, cols, static_cast<int>(classes),
                     std::vector<std::uint8_t>(payload.begin(), payload.end()));
}

namespace {

std::filesystem::path sibling_payload(const std::filesystem::path& header_path) {
  std::filesystem::path p = header_path;
  p.replace_extension(".bin");
  return p;
}

} // namespace

void save_elevation(const ElevationGrid& grid, const std::filesystem::path& header_path) {
  const auto payload_file = sibling_payload(header_path);
  std::vector<std::uint8_t> payload;
  payload.reserve(static_cast<std::size_t>(grid.size()) * 9);
  for (double v : grid.values()) {
    serial::append_f64(payload, v);
  }
  if (grid.has_nodata()) {
    for (std::uint8_t flag : grid.nodata()) {
      serial::append_u8(payload, flag);
    }
  }
  serial::write_file(payload_file, payload);

  nlohmann::json header;
  header["format"] = kRasterFormat;
  header["version"] = kRasterVersion;
  header["kind"] = "elevation";
  header["rows"] = grid.rows();
  header["cols"] = grid.cols();
  header["bands"] = 1;
  header["dtype"] = "f64";
  header["nodata"] = grid.has_nodata();
  header["payload"] = payload_file.filename().string();
  serial::save_json(header_path, header);
}

void save_features(const FeatureRaster& raster, const std::filesystem::path& header_path) {
  const auto payload_file = sibling_payload(header_path);
  std::vector<std::uint8_t> payload;
  payload.reserve(raster.values().size() * 8);
  for (double v : raster.values()) {
    serial::append_f64(payload, v);
  }
  serial::write_file(payload_file, payload);

  nlohmann::json header;
  header["format"] = kRasterFormat;
  header["version"] = kRasterVersion;
  header["kind"] = "features";
  header["rows"] = raster.rows();
  header["cols"] = raster.cols();
  header["bands"] = raster.bands();
  header["dtype"] = "f64";
  header["payload"] = payload_file.filename().string();
  serial::save_json(header_path, header);
}

void save_labels(const LabelRaster& raster, const std::filesystem::path& header_path) {
  const auto payload_file = sibling_payload(header_path);
  std::vector<std::uint8_t> payload(raster.classes().begin(), raster.classes().end());
  serial::write_file(payload_file, payload);

  nlohmann::json header;
  header["format"] = kRasterFormat;
  header["version"] = kRasterVersion;
  header["kind"] = "labels";
  header["rows"] = raster.rows();
  header["cols"] = raster.cols();
  header["bands"] = 1;
  header["dtype"] = "u8";
  header["classes"] = raster.num_classes();
  header["payload"] = payload_file.filename().string();
  serial::save_json(header_path, header);
}

ElevationGrid import_esri_ascii(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_failure, "cannot open " + path.string());

  std::int64_t rows = -1;
  std::int64_t cols = -1;
  double nodata_value = 0.0;
  bool has_nodata_value = false;

  // Header lines are "<key> <value>" pairs; data begins at the first token
  // that is not a known key.
  std::string token;
  while (in >> token) {
    std::string key = token;
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    if (key == "ncols" || key == "nrows" || key == "xllcorner" || key == "yllcorner" ||
        key == "xllcenter" || key == "yllcenter" || key == "cellsize" ||
        key == "nodata_value") {
      double value = 0.0;
      require(static_cast<bool>(in >> value), ErrorCode::malformed_header,
              path.string() + ": header key \"" + token + "\" has no value");
      if (key == "ncols") {
        cols = static_cast<std::int64_t>(value);
      } else if (key == "nrows") {
        rows = static_cast<std::int64_t>(value);
      } else if (key == "nodata_value") {
        nodata_value = value;
        has_nodata_value = true;
      }
    } else {
      break;
    }
    token.clear();
  }
  require(rows >= 1 && cols >= 1, ErrorCode::malformed_header,
          path.string() + ": missing nrows/ncols header");

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(rows * cols));
  if (!token.empty()) {
    std::istringstream first(token);
    double value = 0.0;
    require(static_cast<bool>(first >> value), ErrorCode::corrupt_payload,
            path.string() + ": unexpected token \"" + token + "\" in data section");
    values.push_back(value);
  }
  double value = 0.0;
  while (in >> value) {
    values.push_back(value);
  }
  require(std::ssize(values) == rows * cols, ErrorCode::dimension_mismatch,
          path.string() + ": expected " + std::to_string(rows * cols) + " cells, found " +
              std::to_string(values.size()));

  std::vector<std::uint8_t> nodata;
  if (has_nodata_value) {
    nodata.assign(values.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] == nodata_value) {
        nodata[i] = 1;
        values[i] = 0.0;
        any = true;
      }
    }
    if (!any) {
      nodata.clear();
    }
  }
  return ElevationGrid(rows, cols, std::move(values), std::move(nodata));
}

} // namespace ctnn
