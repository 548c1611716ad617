#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ctnn/raster.hpp"
#include "ctnn/serial.hpp"

namespace ctnn {

// Sweep tree over pixels. In a join tree parent[p] is the next pixel toward
// lower elevation; in a split tree it points toward higher elevation. Roots
// and masked pixels carry -1.
struct MergeTree {
  enum class Kind { join, split };
  Kind kind = Kind::join;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::int64_t> parent;
};

struct ContourTreeNode {
  std::int64_t id = 0;
  std::int64_t level = 0;               // quantized level shared by all members
  double elevation = 0.0;               // mean elevation of member pixels
  std::vector<std::int64_t> members;    // pixel ids, ascending
};

// Contour tree over a raster. Edges are stored downhill: edge (u, v) means
// node u sits at a higher elevation than node v. The augmented tree produced
// by merge_trees has one node per valid pixel and precision 0; collapsed
// trees carry the quantization precision their levels refer to.
struct ContourTree {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  double precision = 0.0;
  std::vector<ContourTreeNode> nodes;
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  std::vector<std::int64_t> pixel_to_node;

  std::int64_t node_count() const { return std::ssize(nodes); }
  std::int64_t edge_count() const { return std::ssize(edges); }
};

// Sweep construction. Elevations must be pairwise distinct across valid
// pixels (use perturb_unique first); ties raise duplicate_values.
MergeTree build_join_tree(const ElevationGrid& grid, Connectivity connectivity);
MergeTree build_split_tree(const ElevationGrid& grid, Connectivity connectivity);

// Combine join and split sweeps into the augmented contour tree (one node
// per valid pixel) by peeling leaves that are regular in the opposite tree.
ContourTree merge_trees(const ElevationGrid& grid, const MergeTree& join,
                        const MergeTree& split);

// Contract tree edges whose endpoints share a quantized level, producing one
// node per flat zone. Nodes whose members disagree on the target level make
// the collapse ill-defined and raise inconsistent_input.
ContourTree collapse_contours(const ContourTree& tree, const QuantizedGrid& quantized);

// Shared contraction core: contract edges whose endpoints share
// node_levels[*]; new node ids are assigned by ascending smallest member
// pixel. If assignment_out is non-null it receives old node -> new node.
ContourTree contract_tree(const ContourTree& tree,
                          const std::vector<std::int64_t>& node_levels,
                          double new_precision,
                          std::vector<std::int64_t>* assignment_out);

// Full pipeline for one precision: join + split + merge + collapse.
ContourTree build_contour_tree(const ElevationGrid& grid, const QuantizedGrid& quantized,
                               Connectivity connectivity);

struct Adjacency {
  Eigen::SparseMatrix<double> directed;   // W(u, v) = 1 for downhill edge u -> v
  Eigen::SparseMatrix<double> symmetric;  // W + W^T
};

Adjacency node_adjacency(const ContourTree& tree);

// Mean of member-pixel feature vectors per node; rows follow node ids.
Eigen::MatrixXd aggregate_features(const ContourTree& tree, const FeatureRaster& features);

struct NodeLabels {
  Eigen::VectorXi labels;        // majority class per node, ties to smaller id
  Eigen::VectorXd pixel_counts;  // member count per node
};

NodeLabels aggregate_labels(const ContourTree& tree, const LabelRaster& labels);

// Broadcast per-node classes back to pixels; masked pixels get class 0.
LabelRaster project_to_pixels(const ContourTree& tree, const Eigen::VectorXi& node_classes,
                              int num_classes);

void save_tree(const ContourTree& tree, const std::filesystem::path& header_path);
ContourTree load_tree(const std::filesystem::path& header_path);

// Graphviz rendering with level annotations, for inspection.
std::string tree_to_dot(const ContourTree& tree);

namespace detail {

// Payload-level encoding shared by the tree and hierarchy containers.
void append_tree_payload(const ContourTree& tree, std::vector<std::uint8_t>& payload);
ContourTree read_tree_payload(serial::Reader& reader, std::int64_t rows, std::int64_t cols,
                              double precision, std::int64_t n_nodes, std::int64_t n_edges,
                              const std::string& origin);

} // namespace detail

} // namespace ctnn
