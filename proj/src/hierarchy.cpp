#include "ctnn/hierarchy.hpp"

#include <cmath>

#include "ctnn/errors.hpp"
#include "ctnn/serial.hpp"

namespace ctnn {

std::int64_t precision_ratio(double fine, double coarse) {
  require(fine > 0.0 && coarse > fine, ErrorCode::bad_argument,
          "precisions must be positive and strictly increasing");
  const double ratio = coarse / fine;
  const std::int64_t rounded = std::llround(ratio);
  require(rounded >= 2 && std::abs(ratio - static_cast<double>(rounded)) <= 1e-9 * ratio,
          ErrorCode::bad_argument,
          "precision ratio " + std::to_string(ratio) +
              " is not an integer; fine levels would straddle coarse bins");
  return rounded;
}

std::int64_t coarsen_level(std::int64_t fine_level, std::int64_t ratio) {
  // Round half away from zero, consistent with quantize_value.
  const std::int64_t q = fine_level / ratio;
  const std::int64_t r = fine_level % ratio;
  if (2 * std::abs(r) >= ratio) {
    return q + (fine_level >= 0 ? 1 : -1);
  }
  return q;
}

TreeHierarchy build_hierarchy(const ElevationGrid& grid,
                              const std::vector<double>& precisions,
                              Connectivity connectivity, std::uint64_t seed,
                              double epsilon) {
  require(!precisions.empty(), ErrorCode::bad_argument,
          "hierarchy needs at least one precision");
  for (std::size_t l = 0; l + 1 < precisions.size(); ++l) {
    precision_ratio(precisions[l], precisions[l + 1]);
  }
  require(grid.valid_count() > 0, ErrorCode::bad_argument,
          "elevation grid has no valid pixels");

  TreeHierarchy hierarchy;
  hierarchy.precisions = precisions;
  hierarchy.connectivity = connectivity;
  hierarchy.seed = seed;
  hierarchy.epsilon = epsilon > 0.0 ? epsilon : precisions.front() / 8.0;

  const ElevationGrid perturbed =
      perturb_unique(grid, seed, hierarchy.epsilon, precisions.front());
  const MergeTree join = build_join_tree(perturbed, connectivity);
  const MergeTree split = build_split_tree(perturbed, connectivity);
  const ContourTree augmented = merge_trees(perturbed, join, split);
  const QuantizedGrid finest = quantize(perturbed, precisions.front());
  hierarchy.trees.push_back(collapse_contours(augmented, finest));

  // Coarser levels contract the previous tree through the integer level map,
  // never re-quantizing elevations, so each fine node lands in exactly one
  // coarse node even when a fine bin straddles a coarse bin boundary.
  for (std::size_t l = 1; l < precisions.size(); ++l) {
    const ContourTree& fine = hierarchy.trees.back();
    const std::int64_t ratio = precision_ratio(precisions[l - 1], precisions[l]);
    std::vector<std::int64_t> levels(fine.node_count());
    for (std::int64_t i = 0; i < fine.node_count(); ++i) {
      levels[i] = coarsen_level(fine.nodes[i].level, ratio);
    }
    PoolingMap map;
    map.n_fine = fine.node_count();
    hierarchy.trees.push_back(contract_tree(fine, levels, precisions[l], &map.assignment));
    map.n_coarse = hierarchy.trees.back().node_count();
    hierarchy.maps.push_back(std::move(map));
  }
  return hierarchy;
}

namespace {

void check_map(const Eigen::MatrixXd& input, const PoolingMap& map, bool fine_side) {
  const std::int64_t expected = fine_side ? map.n_fine : map.n_coarse;
  require(input.rows() == expected, ErrorCode::dimension_mismatch,
          "matrix has " + std::to_string(input.rows()) + " rows, pooling map expects " +
              std::to_string(expected));
  require(std::ssize(map.assignment) == map.n_fine, ErrorCode::dimension_mismatch,
          "pooling map assignment size does not match n_fine");
  for (std::int64_t a : map.assignment) {
    require(a >= 0 && a < map.n_coarse, ErrorCode::dimension_mismatch,
            "pooling map assignment out of range");
  }
}

} // namespace

Eigen::MatrixXd pool_weighted(const Eigen::MatrixXd& fine, const PoolingMap& map,
                              const Eigen::VectorXd& weights) {
  check_map(fine, map, /*fine_side=*/true);
  require(weights.size() == map.n_fine, ErrorCode::dimension_mismatch,
          "weight vector length does not match n_fine");
  // Accumulate in extended precision: the cluster mean of identical rows must
  // reproduce them bit-exactly, which plain double sums break for odd counts.
  const std::int64_t cols = fine.cols();
  std::vector<long double> acc(static_cast<std::size_t>(map.n_coarse * cols), 0.0L);
  std::vector<long double> total(static_cast<std::size_t>(map.n_coarse), 0.0L);
  for (std::int64_t f = 0; f < map.n_fine; ++f) {
    require(weights(f) > 0.0, ErrorCode::bad_argument, "pooling weights must be positive");
    const std::int64_t c = map.assignment[f];
    const long double w = static_cast<long double>(weights(f));
    for (std::int64_t j = 0; j < cols; ++j) {
      acc[c * cols + j] += w * static_cast<long double>(fine(f, j));
    }
    total[c] += w;
  }
  Eigen::MatrixXd out(map.n_coarse, cols);
  for (std::int64_t c = 0; c < map.n_coarse; ++c) {
    require(total[c] > 0.0L, ErrorCode::dimension_mismatch,
            "coarse node " + std::to_string(c) + " has no fine nodes");
    for (std::int64_t j = 0; j < cols; ++j) {
      out(c, j) = static_cast<double>(acc[c * cols + j] / total[c]);
    }
  }
  return out;
}

Eigen::MatrixXd pool(const Eigen::MatrixXd& fine, const PoolingMap& map) {
  return pool_weighted(fine, map, Eigen::VectorXd::Ones(map.n_fine));
}

Eigen::MatrixXd unpool(const Eigen::MatrixXd& coarse, const PoolingMap& map) {
  check_map(coarse, map, /*fine_side=*/false);
  Eigen::MatrixXd out(map.n_fine, coarse.cols());
  for (std::int64_t f = 0; f < map.n_fine; ++f) {
    out.row(f) = coarse.row(map.assignment[f]);
  }
  return out;
}

Eigen::MatrixXd pool_weighted_backward(const Eigen::MatrixXd& coarse_grad,
                                       const PoolingMap& map,
                                       const Eigen::VectorXd& weights) {
  check_map(coarse_grad, map, /*fine_side=*/false);
  require(weights.size() == map.n_fine, ErrorCode::dimension_mismatch,
          "weight vector length does not match n_fine");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(map.n_coarse);
  for (std::int64_t f = 0; f < map.n_fine; ++f) {
    total(map.assignment[f]) += weights(f);
  }
  Eigen::MatrixXd out(map.n_fine, coarse_grad.cols());
  for (std::int64_t f = 0; f < map.n_fine; ++f) {
    const std::int64_t c = map.assignment[f];
    out.row(f) = (weights(f) / total(c)) * coarse_grad.row(c);
  }
  return out;
}

Eigen::MatrixXd pool_backward(const Eigen::MatrixXd& coarse_grad, const PoolingMap& map) {
  return pool_weighted_backward(coarse_grad, map, Eigen::VectorXd::Ones(map.n_fine));
}

Eigen::MatrixXd unpool_backward(const Eigen::MatrixXd& fine_grad, const PoolingMap& map) {
  check_map(fine_grad, map, /*fine_side=*/true);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(map.n_coarse, fine_grad.cols());
  for (std::int64_t f = 0; f < map.n_fine; ++f) {
    out.row(map.assignment[f]) += fine_grad.row(f);
  }
  return out;
}

namespace {

constexpr const char* kHierarchyFormat = "ctnn-hierarchy";
constexpr int kHierarchyVersion = 1;

} // namespace

void save_hierarchy(const TreeHierarchy& hierarchy,
                    const std::filesystem::path& header_path) {
  require(hierarchy.level_count() >= 1, ErrorCode::bad_argument, "empty hierarchy");
  require(std::ssize(hierarchy.maps) == hierarchy.level_count() - 1,
          ErrorCode::internal, "hierarchy map count does not match level count");
  std::filesystem::path payload_file = header_path;
  payload_file.replace_extension(".bin");

  std::vector<std::uint8_t> payload;
  nlohmann::json levels = nlohmann::json::array();
  for (const ContourTree& tree : hierarchy.trees) {
    nlohmann::json level;
    level["precision"] = tree.precision;
    level["nodes"] = tree.node_count();
    level["edges"] = tree.edge_count();
    levels.push_back(level);
    detail::append_tree_payload(tree, payload);
  }
  for (const PoolingMap& map : hierarchy.maps) {
    for (std::int64_t a : map.assignment) {
      serial::append_u32(payload, static_cast<std::uint32_t>(a));
    }
  }
  serial::write_file(payload_file, payload);

  nlohmann::json header;
  header["format"] = kHierarchyFormat;
  header["version"] = kHierarchyVersion;
  header["rows"] = hierarchy.trees.front().rows;
  header["cols"] = hierarchy.trees.front().cols;
  header["precisions"] = hierarchy.precisions;
  header["connectivity"] = static_cast<int>(hierarchy.connectivity);
  header["seed"] = hierarchy.seed;
  header["epsilon"] = hierarchy.epsilon;
  header["levels"] = levels;
  header["payload"] = payload_file.filename().string();
  serial::save_json(header_path, header);
}

TreeHierarchy load_hierarchy(const std::filesystem::path& header_path) {
  nlohmann::json header =
      serial::load_header(header_path, kHierarchyFormat, kHierarchyVersion);
  const std::string origin = header_path.string();

  TreeHierarchy hierarchy;
  const std::int64_t rows = serial::require_int(header, "rows", origin);
  const std::int64_t cols = serial::require_int(header, "cols", origin);
  require(rows >= 1 && cols >= 1, ErrorCode::malformed_header,
          origin + ": rows and cols must be positive");
  require(header.contains("precisions") && header["precisions"].is_array(),
          ErrorCode::malformed_header, origin + ": missing precisions array");
  hierarchy.precisions = header["precisions"].get<std::vector<double>>();
  hierarchy.connectivity = connectivity_from_int(
      static_cast<int>(serial::require_int(header, "connectivity", origin)));
  hierarchy.seed = static_cast<std::uint64_t>(serial::require_int(header, "seed", origin));
  hierarchy.epsilon = serial::require_double(header, "epsilon", origin);
  require(header.contains("levels") && header["levels"].is_array(),
          ErrorCode::malformed_header, origin + ": missing levels array");
  require(header["levels"].size() == hierarchy.precisions.size(),
          ErrorCode::malformed_header, origin + ": levels do not match precisions");

  const auto payload = serial::read_file(serial::payload_path(header_path, header));
  serial::Reader reader(payload, origin);
  for (const auto& level : header["levels"]) {
    const std::int64_t n_nodes = serial::require_int(level, "nodes", origin);
    const std::int64_t n_edges = serial::require_int(level, "edges", origin);
    const double precision = serial::require_double(level, "precision", origin);
    hierarchy.trees.push_back(
        detail::read_tree_payload(reader, rows, cols, precision, n_nodes, n_edges, origin));
  }
  for (std::size_t l = 0; l + 1 < hierarchy.trees.size(); ++l) {
    PoolingMap map;
    map.n_fine = hierarchy.trees[l].node_count();
    map.n_coarse = hierarchy.trees[l + 1].node_count();
    map.assignment.resize(map.n_fine);
    for (std::int64_t f = 0; f < map.n_fine; ++f) {
      const std::int64_t a = reader.read_u32();
      require(a < map.n_coarse, ErrorCode::corrupt_payload,
              origin + ": pooling assignment out of range");
      map.assignment[f] = a;
    }
    hierarchy.maps.push_back(std::move(map));
  }
  reader.expect_end();
  return hierarchy;
}

} // namespace ctnn
