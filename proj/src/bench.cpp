#include "stf/bench.hpp"

#include "stf/attention.hpp"
#include "stf/graph.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>
#include <sstream>

namespace stf {

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> data(static_cast<std::size_t>(numel_of(shape)));
  for (double& v : data) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(data));
}

double median_ms(const std::function<void()>& work, int repetitions) {
  work();  // warm-up
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) {
    const auto begin = std::chrono::steady_clock::now();
    work();
    const auto end = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(end - begin).count());
  }
  std::sort(times.begin(), times.end());
  const auto mid = times.size() / 2;
  if (times.size() % 2 == 1) return times[mid];
  return 0.5 * (times[mid - 1] + times[mid]);
}

}  // namespace

std::vector<BenchRow> benchmark_attention(const std::vector<std::int64_t>& node_counts,
                                          std::int64_t window_steps, std::int64_t width,
                                          int repetitions, std::uint64_t seed) {
  if (repetitions < 5) repetitions = 5;
  std::vector<BenchRow> rows;
  for (std::int64_t n : node_counts) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(n));
    // average degree ~4, like a road network
    const double p = std::min(1.0, 4.0 / static_cast<double>(n - 1));
    SensorGraph graph = make_random_graph(n, p, rng());
    CrossTimeAdjacency rct = build_rct_adjacency(graph, window_steps, 1);
    CrossTimeAdjacency sim = build_sim_adjacency(graph, window_steps, 1);

    Tensor q_slices = random_tensor({window_steps, n, width}, rng);
    Tensor k_slices = random_tensor({window_steps, n, width}, rng);
    Tensor v_slices = random_tensor({window_steps, n, width}, rng);
    Tensor full_mask = Tensor::ones({n, n});
    Tensor q_rows = random_tensor({rct.rows(), width}, rng);
    Tensor k_rows = random_tensor({rct.rows(), width}, rng);
    Tensor v_rows = random_tensor({rct.rows(), width}, rng);
    SubtreeWeights weights = SubtreeWeights::init(2);

    rows.push_back({"dense", n,
                    median_ms([&] { (void)dense_masked_attention(q_slices, k_slices, v_slices,
                                                                 full_mask); },
                              repetitions),
                    repetitions});
    rows.push_back({"global", n,
                    median_ms([&] { (void)global_attention(q_slices, k_slices, v_slices); },
                              repetitions),
                    repetitions});
    rows.push_back({"subtree_rct", n,
                    median_ms([&] { (void)subtree_local_attention(q_rows, k_rows, v_rows, rct,
                                                                  weights); },
                              repetitions),
                    repetitions});
    rows.push_back({"subtree_sim", n,
                    median_ms([&] { (void)subtree_local_attention(q_rows, k_rows, v_rows, sim,
                                                                  weights); },
                              repetitions),
                    repetitions});
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out.precision(6);
  out << "kernel,nodes,median_ms,repetitions\n";
  for (const BenchRow& r : rows) {
    out << r.kernel << ',' << r.nodes << ',' << std::fixed << r.median_ms << ',' << r.repetitions
        << '\n';
  }
  return out.str();
}

}  // namespace stf
