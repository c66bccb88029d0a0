#pragma once

#include "stf/ops.hpp"
#include "stf/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace stf {

/// Undirected sensor graph with binary adjacency: an edge (i,j) means
/// A[i][j] = A[j][i] = 1, the diagonal is zero. Immutable once built.
struct SensorGraph {
  std::int64_t node_count = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;  // canonical i < j, sorted
  std::vector<std::vector<std::int64_t>> neighbors;

  static SensorGraph from_edges(std::int64_t node_count,
                                std::vector<std::pair<std::int64_t, std::int64_t>> raw_edges);

  /// Number of ones in the adjacency matrix (each edge counts twice).
  std::int64_t nnz() const { return 2 * static_cast<std::int64_t>(edges.size()); }
  bool has_edge(std::int64_t a, std::int64_t b) const;

  Tensor adjacency() const;       // dense N x N, 0/1 entries
  SparseBinary to_sparse() const;
};

/// Parses a text edge list: one "src,dst" pair per line, 0-based indices,
/// '#' starts a comment. Self loops are dropped, duplicates collapse.
SensorGraph load_sensor_graph(const std::string& path, std::int64_t node_count);

SensorGraph make_path_graph(std::int64_t n);
SensorGraph make_grid_graph(std::int64_t rows, std::int64_t cols);
SensorGraph make_random_graph(std::int64_t n, double edge_probability, std::uint64_t seed);

/// Adjacency over the cross-time graph on node_count * steps rows. Row index
/// is time-major: row = t * node_count + n.
struct CrossTimeAdjacency {
  std::int64_t node_count = 0;
  std::int64_t steps = 1;
  std::int64_t span = 1;
  SparseBinary matrix;

  std::int64_t rows() const { return node_count * steps; }
  Tensor dense() const;
};

/// Hierarchical cross-time adjacency: per-time road edges on the diagonal
/// blocks and identity blocks linking the same node across times within
/// `span` steps. Multi-hop structure is reached by repeated propagation, not
/// stored. With steps = 1 this is exactly the sensor adjacency.
CrossTimeAdjacency build_rct_adjacency(const SensorGraph& g, std::int64_t steps,
                                       std::int64_t span = 1);

/// Flat variant that pre-computes 2-hop connectivity instead: diagonal blocks
/// binarize(A + A^2), cross-time blocks within `span` binarize(I + A).
CrossTimeAdjacency build_sim_adjacency(const SensorGraph& g, std::int64_t steps,
                                       std::int64_t span = 1);

/// (i,j) = 1 iff j is reachable from i along at most k edges (BFS).
Tensor k_hop_reachability(const SparseBinary& m, std::int64_t k);
Tensor k_hop_reachability(const SensorGraph& g, std::int64_t k);
Tensor k_hop_reachability(const CrossTimeAdjacency& m, std::int64_t k);

}  // namespace stf
