#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "ctnn/raster.hpp"
#include "ctnn/topology.hpp"

namespace ctnn {

// Sparse many-to-one map from fine-tree nodes to coarse-tree nodes.
// assignment[f] is the coarse node containing fine node f.
struct PoolingMap {
  std::int64_t n_fine = 0;
  std::int64_t n_coarse = 0;
  std::vector<std::int64_t> assignment;
};

// Contour trees of one terrain at strictly increasing precisions, finest
// first, with pooling maps between consecutive levels. trees[l + 1] is a
// contraction of trees[l], so maps[l] is well-defined.
struct TreeHierarchy {
  std::vector<double> precisions;
  Connectivity connectivity = Connectivity::four;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  std::vector<ContourTree> trees;
  std::vector<PoolingMap> maps;

  std::int64_t level_count() const { return std::ssize(trees); }
};

// Build the full hierarchy from a raw elevation grid. Ties are broken with
// perturb_unique(seed, epsilon) before the sweep; epsilon <= 0 selects the
// default precisions[0] / 8. Precisions must be strictly increasing and each
// consecutive ratio must be an integer, so that every fine level maps to
// exactly one coarse level.
TreeHierarchy build_hierarchy(const ElevationGrid& grid,
                              const std::vector<double>& precisions,
                              Connectivity connectivity, std::uint64_t seed,
                              double epsilon = 0.0);

// Derived coarse level of a fine level under an integer precision ratio,
// rounding half away from zero.
std::int64_t coarsen_level(std::int64_t fine_level, std::int64_t ratio);

// Validates the ratio r_coarse / r_fine is an integer >= 2 and returns it.
std::int64_t precision_ratio(double fine, double coarse);

// Cluster mean of fine-node rows: out(c) = mean over {f : assignment[f] = c}.
Eigen::MatrixXd pool(const Eigen::MatrixXd& fine, const PoolingMap& map);

// Weighted cluster mean with per-fine-node weights (e.g. pixel counts).
Eigen::MatrixXd pool_weighted(const Eigen::MatrixXd& fine, const PoolingMap& map,
                              const Eigen::VectorXd& weights);

// Broadcast coarse-node rows back to fine nodes: out(f) = coarse(assignment[f]).
Eigen::MatrixXd unpool(const Eigen::MatrixXd& coarse, const PoolingMap& map);

// Backward companions: pool_backward scatters coarse gradients as means,
// unpool_backward sums fine gradients per cluster.
Eigen::MatrixXd pool_backward(const Eigen::MatrixXd& coarse_grad, const PoolingMap& map);
Eigen::MatrixXd pool_weighted_backward(const Eigen::MatrixXd& coarse_grad,
                                       const PoolingMap& map,
                                       const Eigen::VectorXd& weights);
Eigen::MatrixXd unpool_backward(const Eigen::MatrixXd& fine_grad, const PoolingMap& map);

void save_hierarchy(const TreeHierarchy& hierarchy,
                    const std::filesystem::path& header_path);
TreeHierarchy load_hierarchy(const std::filesystem::path& header_path);

} // namespace ctnn
