#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stf {

struct BenchRow {
  std::string kernel;  // dense | global | subtree_rct | subtree_sim
  std::int64_t nodes = 0;
  double median_ms = 0.0;
  int repetitions = 0;
};

/// Median wall time of one forward call per attention kernel on a random
/// graph of average degree ~4, at each node count. One warm-up call precedes
/// the timed repetitions.
std::vector<BenchRow> benchmark_attention(const std::vector<std::int64_t>& node_counts,
                                          std::int64_t window_steps, std::int64_t width,
                                          int repetitions, std::uint64_t seed);

std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace stf
