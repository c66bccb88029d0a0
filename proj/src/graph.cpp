#include "stf/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace stf {

SensorGraph SensorGraph::from_edges(
    std::int64_t node_count, std::vector<std::pair<std::int64_t, std::int64_t>> raw_edges) {
  SensorGraph g;
  g.node_count = node_count;
  std::set<std::pair<std::int64_t, std::int64_t>> canonical;
  for (auto [a, b] : raw_edges) {
    if (a < 0 || a >= node_count || b < 0 || b >= node_count) {
      throw std::invalid_argument("sensor graph: node index out of range [0," +
                                  std::to_string(node_count) + "): (" + std::to_string(a) +
                                  "," + std::to_string(b) + ")");
    }
    if (a == b) continue;  // self loops dropped
    canonical.insert({std::min(a, b), std::max(a, b)});
  }
  g.edges.assign(canonical.begin(), canonical.end());
  g.neighbors.assign(static_cast<std::size_t>(node_count), {});
  for (auto [a, b] : g.edges) {
    g.neighbors[static_cast<std::size_t>(a)].push_back(b);
    g.neighbors[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& list : g.neighbors) std::sort(list.begin(), list.end());
  return g;
}

bool SensorGraph::has_edge(std::int64_t a, std::int64_t b) const {
  if (a == b) return false;
  auto key = std::make_pair(std::min(a, b), std::max(a, b));
  return std::binary_search(edges.begin(), edges.end(), key);
}

Tensor SensorGraph::adjacency() const {
  std::vector<double> a(static_cast<std::size_t>(node_count * node_count), 0.0);
  for (auto [i, j] : edges) {
    a[static_cast<std::size_t>(i * node_count + j)] = 1.0;
    a[static_cast<std::size_t>(j * node_count + i)] = 1.0;
  }
  return Tensor::from_data({node_count, node_count}, std::move(a));
}

SparseBinary SensorGraph::to_sparse() const {
  SparseBinary s;
  s.rows = s.cols = node_count;
  s.entries.reserve(static_cast<std::size_t>(nnz()));
  for (auto [i, j] : edges) {
    s.entries.push_back({i, j});
    s.entries.push_back({j, i});
  }
  std::sort(s.entries.begin(), s.entries.end());
  return s;
}

SensorGraph load_sensor_graph(const std::string& path, std::int64_t node_count) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("sensor graph: cannot open " + path);
  std::vector<std::pair<std::int64_t, std::int64_t>> raw;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::int64_t a = 0, b = 0;
    char comma = 0;
    if (!(row >> a >> comma >> b) || comma != ',') {
      throw std::runtime_error("sensor graph: cannot parse line " + std::to_string(line_no) +
                               " of " + path + ": '" + line + "'");
    }
    if (a < 0 || a >= node_count || b < 0 || b >= node_count) {
      throw std::runtime_error("sensor graph: node index out of range on line " +
                               std::to_string(line_no) + " of " + path + ": '" + line + "'");
    }
    raw.push_back({a, b});
  }
  return SensorGraph::from_edges(node_count, std::move(raw));
}

SensorGraph make_path_graph(std::int64_t n) {
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  for (std::int64_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  return SensorGraph::from_edges(n, std::move(edges));
}

SensorGraph make_grid_graph(std::int64_t rows, std::int64_t cols) {
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      const std::int64_t id = r * cols + c;
      if (c + 1 < cols) edges.push_back({id, id + 1});
      if (r + 1 < rows) edges.push_back({id, id + cols});
    }
  }
  return SensorGraph::from_edges(rows * cols, std::move(edges));
}

SensorGraph make_random_graph(std::int64_t n, double edge_probability, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      if (coin(rng) < edge_probability) edges.push_back({i, j});
    }
  }
  return SensorGraph::from_edges(n, std::move(edges));
}

Tensor CrossTimeAdjacency::dense() const {
  const auto r = rows();
  std::vector<double> m(static_cast<std::size_t>(r * r), 0.0);
  for (auto [i, j] : matrix.entries) m[static_cast<std::size_t>(i * r + j)] = 1.0;
  return Tensor::from_data({r, r}, std::move(m));
}

CrossTimeAdjacency build_rct_adjacency(const SensorGraph& g, std::int64_t steps,
                                       std::int64_t span) {
  if (steps < 1) throw std::invalid_argument("cross-time adjacency: steps must be >= 1");
  if (span < 0) throw std::invalid_argument("cross-time adjacency: span must be >= 0");
  CrossTimeAdjacency ct;
  ct.node_count = g.node_count;
  ct.steps = steps;
  ct.span = span;
  ct.matrix.rows = ct.matrix.cols = g.node_count * steps;
  const auto n = g.node_count;
  for (std::int64_t t = 0; t < steps; ++t) {
    for (auto [i, j] : g.edges) {
      ct.matrix.entries.push_back({t * n + i, t * n + j});
      ct.matrix.entries.push_back({t * n + j, t * n + i});
    }
    for (std::int64_t d = 1; d <= span && t + d < steps; ++d) {
      for (std::int64_t v = 0; v < n; ++v) {
        ct.matrix.entries.push_back({t * n + v, (t + d) * n + v});
        ct.matrix.entries.push_back({(t + d) * n + v, t * n + v});
      }
    }
  }
  std::sort(ct.matrix.entries.begin(), ct.matrix.entries.end());
  return ct;
}

CrossTimeAdjacency build_sim_adjacency(const SensorGraph& g, std::int64_t steps,
                                       std::int64_t span) {
  if (steps < 1) throw std::invalid_argument("cross-time adjacency: steps must be >= 1");
  if (span < 0) throw std::invalid_argument("cross-time adjacency: span must be >= 0");
  const auto n = g.node_count;
  // binarize(A + A^2): road edges plus 2-hop neighbours plus the self loops
  // A^2 puts on every non-isolated node
  std::set<std::pair<std::int64_t, std::int64_t>> two_hop;
  for (std::int64_t v = 0; v < n; ++v) {
    for (std::int64_t u : g.neighbors[static_cast<std::size_t>(v)]) {
      two_hop.insert({v, u});
      for (std::int64_t w : g.neighbors[static_cast<std::size_t>(u)]) {
        two_hop.insert({v, w});
      }
    }
  }
  CrossTimeAdjacency ct;
  ct.node_count = n;
  ct.steps = steps;
  ct.span = span;
  ct.matrix.rows = ct.matrix.cols = n * steps;
  for (std::int64_t t = 0; t < steps; ++t) {
    for (auto [i, j] : two_hop) {
      ct.matrix.entries.push_back({t * n + i, t * n + j});
    }
    for (std::int64_t d = 1; d <= span && t + d < steps; ++d) {
      // binarize(I + A) in both directions
      for (std::int64_t v = 0; v < n; ++v) {
        ct.matrix.entries.push_back({t * n + v, (t + d) * n + v});
        ct.matrix.entries.push_back({(t + d) * n + v, t * n + v});
      }
      for (auto [i, j] : g.edges) {
        ct.matrix.entries.push_back({t * n + i, (t + d) * n + j});
        ct.matrix.entries.push_back({t * n + j, (t + d) * n + i});
        ct.matrix.entries.push_back({(t + d) * n + i, t * n + j});
        ct.matrix.entries.push_back({(t + d) * n + j, t * n + i});
      }
    }
  }
  std::sort(ct.matrix.entries.begin(), ct.matrix.entries.end());
  return ct;
}

Tensor k_hop_reachability(const SparseBinary& m, std::int64_t k) {
  if (k < 0) throw std::invalid_argument("k_hop_reachability: k must be >= 0");
  const auto r = m.rows;
  std::vector<std::vector<std::int64_t>> adj(static_cast<std::size_t>(r));
  for (auto [i, j] : m.entries) adj[static_cast<std::size_t>(i)].push_back(j);
  std::vector<double> out(static_cast<std::size_t>(r * r), 0.0);
  std::vector<std::int64_t> depth(static_cast<std::size_t>(r));
  for (std::int64_t src = 0; src < r; ++src) {
    std::fill(depth.begin(), depth.end(), -1);
    std::deque<std::int64_t> queue{src};
    depth[static_cast<std::size_t>(src)] = 0;
    out[static_cast<std::size_t>(src * r + src)] = 1.0;
    while (!queue.empty()) {
      const auto v = queue.front();
      queue.pop_front();
      if (depth[static_cast<std::size_t>(v)] == k) continue;
      for (std::int64_t u : adj[static_cast<std::size_t>(v)]) {
        if (depth[static_cast<std::size_t>(u)] < 0) {
          depth[static_cast<std::size_t>(u)] = depth[static_cast<std::size_t>(v)] + 1;
          out[static_cast<std::size_t>(src * r + u)] = 1.0;
          queue.push_back(u);
        }
      }
    }
  }
  return Tensor::from_data({r, r}, std::move(out));
}

Tensor k_hop_reachability(const SensorGraph& g, std::int64_t k) {
  return k_hop_reachability(g.to_sparse(), k);
}

Tensor k_hop_reachability(const CrossTimeAdjacency& m, std::int64_t k) {
  return k_hop_reachability(m.matrix, k);
}

}  // namespace stf
