#include "ctnn/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "ctnn/errors.hpp"
#include "ctnn/serial.hpp"

namespace ctnn {

namespace {

class DisjointSets {
public:
  explicit DisjointSets(std::int64_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::int64_t{0});
    rank_.assign(n, 0);
  }

  std::int64_t find(std::int64_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::int64_t a, std::int64_t b) {
    a = find(a);
    b = find(b);
    if (a == b) {
      return;
    }
    if (rank_[a] < rank_[b]) {
      std::swap(a, b);
    }
    parent_[b] = a;
    if (rank_[a] == rank_[b]) {
      ++rank_[a];
    }
  }

private:
  std::vector<std::int64_t> parent_;
  std::vector<std::int8_t> rank_;
};

std::vector<std::int64_t> sweep_order(const ElevationGrid& grid, bool descending) {
  std::vector<std::int64_t> order;
  order.reserve(grid.size());
  for (std::int64_t p = 0; p < grid.size(); ++p) {
    if (grid.valid(p)) {
      order.push_back(p);
    }
  }
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return descending ? grid.at(a) > grid.at(b) : grid.at(a) < grid.at(b);
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    require(grid.at(order[i]) != grid.at(order[i - 1]), ErrorCode::duplicate_values,
            "pixels " + std::to_string(order[i - 1]) + " and " + std::to_string(order[i]) +
                " share elevation " + std::to_string(grid.at(order[i])) +
                "; perturb the grid first");
  }
  return order;
}

MergeTree build_sweep_tree(const ElevationGrid& grid, Connectivity connectivity,
                           bool join) {
  MergeTree tree;
  tree.kind = join ? MergeTree::Kind::join : MergeTree::Kind::split;
  tree.rows = grid.rows();
  tree.cols = grid.cols();
  tree.parent.assign(grid.size(), -1);

  const auto order = sweep_order(grid, /*descending=*/join);
  DisjointSets sets(grid.size());
  // front[root] is the most recently swept pixel of that set, i.e. the pixel
  // new arrivals attach to.
  std::vector<std::int64_t> front(grid.size(), -1);
  std::vector<std::uint8_t> seen(grid.size(), 0);

  for (std::int64_t p : order) {
    seen[p] = 1;
    front[sets.find(p)] = p;
    const std::int64_t r = p / grid.cols();
    const std::int64_t c = p % grid.cols();
    for_each_neighbor(grid.rows(), grid.cols(), r, c, connectivity, [&](std::int64_t q) {
      if (!grid.valid(q) || !seen[q]) {
        return;
      }
      const std::int64_t rq = sets.find(q);
      if (rq == sets.find(p)) {
        return;
      }
      tree.parent[front[rq]] = p;
      sets.unite(rq, p);
      front[sets.find(p)] = p;
    });
  }
  return tree;
}

void validate_sweep_tree(const ElevationGrid& grid, const MergeTree& tree,
                         MergeTree::Kind kind, const char* name) {
  require(tree.kind == kind, ErrorCode::inconsistent_input,
          std::string(name) + " tree has the wrong kind");
  require(tree.rows == grid.rows() && tree.cols == grid.cols(),
          ErrorCode::inconsistent_input,
          std::string(name) + " tree shape does not match the grid");
  require(std::ssize(tree.parent) == grid.size(), ErrorCode::inconsistent_input,
          std::string(name) + " tree parent array size does not match the grid");
  const bool downhill = kind == MergeTree::Kind::join;
  for (std::int64_t p = 0; p < grid.size(); ++p) {
    const std::int64_t q = tree.parent[p];
    if (!grid.valid(p)) {
      require(q == -1, ErrorCode::inconsistent_input,
              std::string(name) + " tree links a masked pixel");
      continue;
    }
    if (q == -1) {
      continue;
    }
    require(q >= 0 && q < grid.size() && grid.valid(q), ErrorCode::inconsistent_input,
            std::string(name) + " tree parent out of range");
    const bool ordered = downhill ? grid.at(q) < grid.at(p) : grid.at(q) > grid.at(p);
    require(ordered, ErrorCode::inconsistent_input,
            std::string(name) + " tree parent violates sweep order at pixel " +
                std::to_string(p));
  }
}

} // namespace

MergeTree build_join_tree(const ElevationGrid& grid, Connectivity connectivity) {
  return build_sweep_tree(grid, connectivity, /*join=*/true);
}

MergeTree build_split_tree(const ElevationGrid& grid, Connectivity connectivity) {
  return build_sweep_tree(grid, connectivity, /*join=*/false);
}

ContourTree merge_trees(const ElevationGrid& grid, const MergeTree& join,
                        const MergeTree& split) {
  validate_sweep_tree(grid, join, MergeTree::Kind::join, "join");
  validate_sweep_tree(grid, split, MergeTree::Kind::split, "split");

  const std::int64_t n_pixels = grid.size();
  std::vector<std::int64_t> jpar = join.parent;
  std::vector<std::int64_t> spar = split.parent;
  std::vector<std::int64_t> jt_up(n_pixels, 0);
  std::vector<std::int64_t> st_down(n_pixels, 0);
  std::vector<std::uint8_t> alive(n_pixels, 0);
  std::int64_t remaining = 0;
  for (std::int64_t p = 0; p < n_pixels; ++p) {
    if (!grid.valid(p)) {
      continue;
    }
    alive[p] = 1;
    ++remaining;
    if (jpar[p] >= 0) {
      ++jt_up[jpar[p]];
    }
    if (spar[p] >= 0) {
      ++st_down[spar[p]];
    }
  }

  // First live strict ancestor in a parent array, skipping peeled pixels.
  // Dead chains are compressed so the total walk stays near-linear.
  auto resolve = [&](std::vector<std::int64_t>& par, std::int64_t x) {
    std::int64_t p = par[x];
    if (p < 0 || alive[p]) {
      return p;
    }
    std::vector<std::int64_t> chain;
    while (p >= 0 && !alive[p]) {
      chain.push_back(p);
      p = par[p];
    }
    for (std::int64_t d : chain) {
      par[d] = p;
    }
    par[x] = p;
    return p;
  };

  auto upper_leaf = [&](std::int64_t x) { return jt_up[x] == 0 && st_down[x] <= 1; };
  auto lower_leaf = [&](std::int64_t x) { return st_down[x] == 0 && jt_up[x] <= 1; };

  // Pixel graphs admit sweep structures with two monotone paths sharing both
  // endpoints; peeling breaks such a loop arbitrarily, so the order becomes
  // observable. Always taking the smallest candidate pixel keeps the output
  // canonical. Stale candidates are re-checked on removal and dropped; a
  // pixel re-enters whenever one of its degree counts changes.
  std::set<std::int64_t> candidates;
  auto maybe_push = [&](std::int64_t x) {
    if (x >= 0 && alive[x] && (upper_leaf(x) || lower_leaf(x))) {
      candidates.insert(x);
    }
  };
  for (std::int64_t p = 0; p < n_pixels; ++p) {
    if (alive[p]) {
      maybe_push(p);
    }
  }

  std::vector<std::pair<std::int64_t, std::int64_t>> pixel_edges;
  pixel_edges.reserve(remaining > 0 ? remaining - 1 : 0);
  std::int64_t components = 0;

  while (!candidates.empty()) {
    const std::int64_t x = *candidates.begin();
    candidates.erase(candidates.begin());
    if (!alive[x]) {
      continue;
    }
    const std::int64_t jp = resolve(jpar, x);
    const std::int64_t sp = resolve(spar, x);
    if (jp < 0 && sp < 0) {
      // Last pixel of its component.
      alive[x] = 0;
      --remaining;
      ++components;
      continue;
    }
    if (upper_leaf(x) && jp >= 0) {
      pixel_edges.emplace_back(x, jp);
      alive[x] = 0;
      --remaining;
      --jt_up[jp];
      maybe_push(jp);
      if (st_down[x] == 0 && sp >= 0) {
        --st_down[sp];
        maybe_push(sp);
      }
    } else if (lower_leaf(x) && sp >= 0) {
      pixel_edges.emplace_back(sp, x);
      alive[x] = 0;
      --remaining;
      --st_down[sp];
      maybe_push(sp);
      if (jt_up[x] == 0 && jp >= 0) {
        --jt_up[jp];
        maybe_push(jp);
      }
    }
  }
  require(remaining == 0, ErrorCode::internal, "merge left unpeeled pixels");

  ContourTree tree;
  tree.rows = grid.rows();
  tree.cols = grid.cols();
  tree.precision = 0.0;
  tree.pixel_to_node.assign(n_pixels, -1);
  for (std::int64_t p = 0; p < n_pixels; ++p) {
    if (!grid.valid(p)) {
      continue;
    }
    const std::int64_t id = tree.node_count();
    tree.pixel_to_node[p] = id;
    tree.nodes.push_back({id, 0, grid.at(p), {p}});
  }
  require(std::ssize(pixel_edges) == tree.node_count() - components, ErrorCode::internal,
          "merge produced a wrong edge count");

  tree.edges.reserve(pixel_edges.size());
  for (const auto& [hi, lo] : pixel_edges) {
    tree.edges.emplace_back(tree.pixel_to_node[hi], tree.pixel_to_node[lo]);
  }
  std::sort(tree.edges.begin(), tree.edges.end());
  return tree;
}

ContourTree contract_tree(const ContourTree& tree,
                          const std::vector<std::int64_t>& node_levels,
                          double new_precision,
                          std::vector<std::int64_t>* assignment_out) {
  const std::int64_t n = tree.node_count();
  require(std::ssize(node_levels) == n, ErrorCode::internal,
          "node level array does not match node count");

  DisjointSets sets(n);
  for (const auto& [u, v] : tree.edges) {
    if (node_levels[u] == node_levels[v]) {
      sets.unite(u, v);
    }
  }

  // New ids follow the smallest member pixel of each cluster, so the result
  // does not depend on edge traversal order.
  std::vector<std::int64_t> min_pixel(n, std::numeric_limits<std::int64_t>::max());
  for (std::int64_t i = 0; i < n; ++i) {
    require(!tree.nodes[i].members.empty(), ErrorCode::internal, "node without members");
    const std::int64_t r = sets.find(i);
    min_pixel[r] = std::min(min_pixel[r], tree.nodes[i].members.front());
  }
  std::vector<std::int64_t> roots;
  for (std::int64_t i = 0; i < n; ++i) {
    if (sets.find(i) == i) {
      roots.push_back(i);
    }
  }
  std::sort(roots.begin(), roots.end(), [&](std::int64_t a, std::int64_t b) {
    return min_pixel[a] < min_pixel[b];
  });
  std::vector<std::int64_t> new_id(n, -1);
  for (std::size_t i = 0; i < roots.size(); ++i) {
    new_id[roots[i]] = static_cast<std::int64_t>(i);
  }
  std::vector<std::int64_t> assign(n);
  for (std::int64_t i = 0; i < n; ++i) {
    assign[i] = new_id[sets.find(i)];
  }

  ContourTree out;
  out.rows = tree.rows;
  out.cols = tree.cols;
  out.precision = new_precision;
  out.nodes.resize(roots.size());
  std::vector<double> weighted_elevation(roots.size(), 0.0);
  std::vector<std::int64_t> pixel_count(roots.size(), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t a = assign[i];
    ContourTreeNode& node = out.nodes[a];
    node.id = a;
    node.level = node_levels[i];
    node.members.insert(node.members.end(), tree.nodes[i].members.begin(),
                        tree.nodes[i].members.end());
    const auto count = std::ssize(tree.nodes[i].members);
    weighted_elevation[a] += tree.nodes[i].elevation * static_cast<double>(count);
    pixel_count[a] += count;
  }
  for (std::size_t a = 0; a < out.nodes.size(); ++a) {
    std::sort(out.nodes[a].members.begin(), out.nodes[a].members.end());
    out.nodes[a].elevation = weighted_elevation[a] / static_cast<double>(pixel_count[a]);
  }

  for (const auto& [u, v] : tree.edges) {
    if (node_levels[u] == node_levels[v]) {
      continue;
    }
    require(node_levels[u] > node_levels[v], ErrorCode::internal,
            "downhill edge orientation disagrees with node levels");
    out.edges.emplace_back(assign[u], assign[v]);
  }
  std::sort(out.edges.begin(), out.edges.end());

  out.pixel_to_node.assign(tree.pixel_to_node.size(), -1);
  for (std::size_t p = 0; p < tree.pixel_to_node.size(); ++p) {
    if (tree.pixel_to_node[p] >= 0) {
      out.pixel_to_node[p] = assign[tree.pixel_to_node[p]];
    }
  }
  if (assignment_out != nullptr) {
    *assignment_out = std::move(assign);
  }
  return out;
}

ContourTree collapse_contours(const ContourTree& tree, const QuantizedGrid& quantized) {
  require(tree.rows == quantized.rows() && tree.cols == quantized.cols(),
          ErrorCode::inconsistent_input,
          "quantized grid shape does not match the tree");
  std::vector<std::int64_t> node_levels(tree.node_count(), 0);
  for (std::int64_t i = 0; i < tree.node_count(); ++i) {
    const auto& members = tree.nodes[i].members;
    require(!members.empty(), ErrorCode::internal, "node without members");
    const std::int64_t level = quantized.level(members.front());
    for (std::int64_t m : members) {
      require(quantized.valid(m), ErrorCode::inconsistent_input,
              "tree references a masked pixel");
      require(quantized.level(m) == level, ErrorCode::inconsistent_input,
              "node " + std::to_string(i) + " spans multiple levels at precision " +
                  std::to_string(quantized.precision()) +
                  "; collapse at this precision is ill-defined");
    }
    node_levels[i] = level;
  }
  return contract_tree(tree, node_levels, quantized.precision(), nullptr);
}

ContourTree build_contour_tree(const ElevationGrid& grid, const QuantizedGrid& quantized,
                               Connectivity connectivity) {
  const MergeTree join = build_join_tree(grid, connectivity);
  const MergeTree split = build_split_tree(grid, connectivity);
  const ContourTree augmented = merge_trees(grid, join, split);
  return collapse_contours(augmented, quantized);
}

Adjacency node_adjacency(const ContourTree& tree) {
  const std::int64_t n = tree.node_count();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(tree.edges.size());
  for (const auto& [u, v] : tree.edges) {
    triplets.emplace_back(static_cast<int>(u), static_cast<int>(v), 1.0);
  }
  Adjacency adjacency;
  adjacency.directed.resize(n, n);
  adjacency.directed.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SparseMatrix<double> transposed = adjacency.directed.transpose();
  adjacency.symmetric = adjacency.directed + transposed;
  adjacency.symmetric.makeCompressed();
  adjacency.directed.makeCompressed();
  return adjacency;
}

Eigen::MatrixXd aggregate_features(const ContourTree& tree, const FeatureRaster& features) {
  require(tree.rows == features.rows() && tree.cols == features.cols(),
          ErrorCode::inconsistent_input,
          "feature raster shape does not match the tree");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(tree.node_count(), features.bands());
  for (const auto& node : tree.nodes) {
    for (std::int64_t m : node.members) {
      for (std::int64_t b = 0; b < features.bands(); ++b) {
        out(node.id, b) += features.at(m, b);
      }
    }
    out.row(node.id) /= static_cast<double>(node.members.size());
  }
  return out;
}

NodeLabels aggregate_labels(const ContourTree& tree, const LabelRaster& labels) {
  require(tree.rows == labels.rows() && tree.cols == labels.cols(),
          ErrorCode::inconsistent_input,
          "label raster shape does not match the tree");
  NodeLabels out;
  out.labels.resize(tree.node_count());
  out.pixel_counts.resize(tree.node_count());
  std::vector<std::int64_t> histogram(labels.num_classes(), 0);
  for (const auto& node : tree.nodes) {
    std::fill(histogram.begin(), histogram.end(), 0);
    for (std::int64_t m : node.members) {
      ++histogram[labels.at(m)];
    }
    int best = 0;
    for (int c = 1; c < labels.num_classes(); ++c) {
      if (histogram[c] > histogram[best]) {
        best = c;
      }
    }
    out.labels(node.id) = best;
    out.pixel_counts(node.id) = static_cast<double>(node.members.size());
  }
  return out;
}

LabelRaster project_to_pixels(const ContourTree& tree, const Eigen::VectorXi& node_classes,
                              int num_classes) {
  require(node_classes.size() == tree.node_count(), ErrorCode::dimension_mismatch,
          "class vector length does not match node count");
  require(num_classes >= 2 && num_classes <= 256, ErrorCode::bad_argument,
          "num_classes must be in [2, 256]");
  for (std::int64_t i = 0; i < node_classes.size(); ++i) {
    require(node_classes(i) >= 0 && node_classes(i) < num_classes, ErrorCode::class_range,
            "node class " + std::to_string(node_classes(i)) + " outside [0, " +
                std::to_string(num_classes) + ")");
  }
  std::vector<std::uint8_t> classes(tree.pixel_to_node.size(), 0);
  for (std::size_t p = 0; p < tree.pixel_to_node.size(); ++p) {
    if (tree.pixel_to_node[p] >= 0) {
      classes[p] = static_cast<std::uint8_t>(node_classes(tree.pixel_to_node[p]));
    }
  }
  return LabelRaster(tree.rows, tree.cols, num_classes, std::move(classes));
}

namespace {

constexpr const char* kTreeFormat = "ctnn-tree";
constexpr int kTreeVersion = 1;
constexpr std::uint32_t kMaxU32 = std::numeric_limits<std::uint32_t>::max();

} // namespace

namespace detail {

void append_tree_payload(const ContourTree& tree, std::vector<std::uint8_t>& payload) {
  require(tree.rows * tree.cols <= kMaxU32, ErrorCode::bad_argument,
          "raster too large for the tree container");
  for (const auto& node : tree.nodes) {
    serial::append_u64(payload, static_cast<std::uint64_t>(node.level));
    serial::append_f64(payload, node.elevation);
    serial::append_u32(payload, static_cast<std::uint32_t>(node.members.size()));
    for (std::int64_t m : node.members) {
      serial::append_u32(payload, static_cast<std::uint32_t>(m));
    }
  }
  for (const auto& [u, v] : tree.edges) {
    serial::append_u32(payload, static_cast<std::uint32_t>(u));
    serial::append_u32(payload, static_cast<std::uint32_t>(v));
  }
}

ContourTree read_tree_payload(serial::Reader& reader, std::int64_t rows, std::int64_t cols,
                              double precision, std::int64_t n_nodes, std::int64_t n_edges,
                              const std::string& origin) {
  require(n_nodes >= 0 && n_edges >= 0, ErrorCode::malformed_header,
          origin + ": negative node or edge count");
  ContourTree tree;
  tree.rows = rows;
  tree.cols = cols;
  tree.precision = precision;
  const std::int64_t n_pixels = rows * cols;
  tree.pixel_to_node.assign(n_pixels, -1);
  tree.nodes.resize(n_nodes);
  for (std::int64_t i = 0; i < n_nodes; ++i) {
    ContourTreeNode& node = tree.nodes[i];
    node.id = i;
    node.level = static_cast<std::int64_t>(reader.read_u64());
    node.elevation = reader.read_f64();
    require(std::isfinite(node.elevation), ErrorCode::corrupt_payload,
            origin + ": non-finite node elevation");
    const std::uint32_t count = reader.read_u32();
    require(count >= 1, ErrorCode::corrupt_payload, origin + ": node without members");
    node.members.resize(count);
    for (std::uint32_t k = 0; k < count; ++k) {
      const std::int64_t pixel = reader.read_u32();
      require(pixel < n_pixels, ErrorCode::corrupt_payload,
              origin + ": member pixel out of range");
      require(k == 0 || pixel > node.members[k - 1], ErrorCode::corrupt_payload,
              origin + ": node members not strictly ascending");
      require(tree.pixel_to_node[pixel] == -1, ErrorCode::corrupt_payload,
              origin + ": pixel assigned to two nodes");
      tree.pixel_to_node[pixel] = i;
      node.members[k] = pixel;
    }
  }
  tree.edges.resize(n_edges);
  for (std::int64_t e = 0; e < n_edges; ++e) {
    const std::int64_t u = reader.read_u32();
    const std::int64_t v = reader.read_u32();
    require(u < n_nodes && v < n_nodes, ErrorCode::corrupt_payload,
            origin + ": edge endpoint out of range");
    tree.edges[e] = {u, v};
  }
  return tree;
}

} // namespace detail

void save_tree(const ContourTree& tree, const std::filesystem::path& header_path) {
  std::filesystem::path payload_file = header_path;
  payload_file.replace_extension(".bin");

  std::vector<std::uint8_t> payload;
  detail::append_tree_payload(tree, payload);
  serial::write_file(payload_file, payload);

  nlohmann::json header;
  header["format"] = kTreeFormat;
  header["version"] = kTreeVersion;
  header["rows"] = tree.rows;
  header["cols"] = tree.cols;
  header["precision"] = tree.precision;
  header["nodes"] = tree.node_count();
  header["edges"] = tree.edge_count();
  header["payload"] = payload_file.filename().string();
  serial::save_json(header_path, header);
}

ContourTree load_tree(const std::filesystem::path& header_path) {
  nlohmann::json header = serial::load_header(header_path, kTreeFormat, kTreeVersion);
  const std::string origin = header_path.string();

  const std::int64_t rows = serial::require_int(header, "rows", origin);
  const std::int64_t cols = serial::require_int(header, "cols", origin);
  require(rows >= 1 && cols >= 1, ErrorCode::malformed_header,
          origin + ": rows and cols must be positive");
  const double precision = serial::require_double(header, "precision", origin);
  require(precision >= 0.0, ErrorCode::malformed_header,
          origin + ": precision must be non-negative");
  const std::int64_t n_nodes = serial::require_int(header, "nodes", origin);
  const std::int64_t n_edges = serial::require_int(header, "edges", origin);

  const auto payload = serial::read_file(serial::payload_path(header_path, header));
  serial::Reader reader(payload, origin);
  ContourTree tree =
      detail::read_tree_payload(reader, rows, cols, precision, n_nodes, n_edges, origin);
  reader.expect_end();
  return tree;
}

std::string tree_to_dot(const ContourTree& tree) {
  std::ostringstream out;
  out << "digraph contour_tree {\n";
  for (const auto& node : tree.nodes) {
    out << "  n" << node.id << " [label=\"" << node.id << " L" << node.level << " px"
        << node.members.size() << "\"];\n";
  }
  for (const auto& [u, v] : tree.edges) {
    out << "  n" << u << " -> n" << v << ";\n";
  }
  out << "}\n";
  return out.str();
}

} // namespace ctnn
