#pragma once

#include "stf/attention.hpp"
#include "stf/graph.hpp"
#include "stf/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace stf {

/// How a layer arranges its spatial and temporal attention: one after the
/// other, or side by side with a fusion step.
enum class LayerStructure { sequential, parallel };
/// Fusion for the parallel structure.
enum class FusionKind { add, concat, gate };

LayerStructure structure_from_string(const std::string& tag);
FusionKind fusion_from_string(const std::string& tag);
std::string to_string(LayerStructure s);
std::string to_string(FusionKind f);

struct ModelConfig {
  std::int64_t hidden = 16;    // D
  std::int64_t layers = 2;     // L
  int levels = 2;              // sub-tree hops
  LayerStructure structure = LayerStructure::sequential;
  FusionKind fusion = FusionKind::add;
  std::int64_t input_steps = 12;   // T
  std::int64_t output_steps = 12;  // T', equal to T (per-step output head)
  std::int64_t channels = 1;       // C
  std::int64_t nodes = 0;          // N, taken from the dataset
  std::int64_t span = 1;           // cross-time edge span
  bool causal_temporal = true;

  void validate() const;
};

struct LinearLayer {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)

  static LinearLayer init(std::int64_t in, std::int64_t out, std::mt19937_64& rng);
  Tensor apply(const Tensor& x) const;
};

/// Per-observation softmax gate splitting a window into intrinsic and
/// environment signals.
struct DisentangleGate {
  LinearLayer map;  // channels -> 2 logits
};

struct Disentangled {
  Tensor intrinsic;       // mu_i * x
  Tensor environment;     // x - intrinsic, so the two halves sum back exactly
  Tensor mu_intrinsic;    // (B,T,N)
  Tensor mu_environment;  // 1 - mu_intrinsic
};

Disentangled disentangle(const Tensor& x, const DisentangleGate& gate);

/// One encoder block: cross-time spatial attention (global + sub-tree local)
/// and temporal attention, with a residual connection around the block.
struct STLayer {
  ProjectionHead spatial;
  SubtreeWeights subtree;
  ProjectionHead temporal;
  LinearLayer fuse_map;  // parallel/concat only: 2D -> D
  LinearLayer gate_map;  // parallel/gate only: 2D -> D
};

Tensor stlayer_forward(const STLayer& layer, const Tensor& h, const ModelConfig& config,
                       const CrossTimeAdjacency& cross_time);

/// Encoder stack, decoder, and pooled readout of one branch. The two branches
/// of the model are structurally identical with disjoint parameters.
/// The decoder is one linear layer over each node's flattened (T, D) block,
/// so any output step can draw on any input step directly.
struct Branch {
  LinearLayer lift;  // C -> D
  std::vector<STLayer> layers;
  LinearLayer decoder;   // T*D -> T*D, applied per node
  Tensor readout_time;   // (T, 1): linear aggregation over the time axis
  Tensor readout_bias;   // (D)
};

struct BranchOutputs {
  Tensor representation;  // (B,T,N,D)
  Tensor pooled;          // (B,D): time-linear readout then node mean pool
};

BranchOutputs branch_forward(const Branch& branch, const Tensor& x,
                             const ModelConfig& config, const CrossTimeAdjacency& cross_time);

/// Z' = Concat(Z_i + W Psi, Z_e): the prototype of each sample's pattern is
/// added to the intrinsic half; the environment half passes through.
/// `membership` must be a (B, P) one-hot matrix.
Tensor fuse_prototypes(const Tensor& z_intrinsic, const Tensor& z_environment,
                       const Tensor& prototypes, const Tensor& membership);

struct DualModel {
  ModelConfig config;
  DisentangleGate gate;
  Branch intrinsic;
  Branch environment;
  Tensor prototypes;       // (17, T, N, D)
  LinearLayer output_head;  // 2D -> C, applied per step
  CrossTimeAdjacency cross_time;

  static DualModel init(const ModelConfig& config, const SensorGraph& graph,
                        std::uint64_t seed);

  /// Every learnable tensor in a stable order; handles alias the model, so
  /// optimizer updates through them take effect.
  std::vector<std::pair<std::string, Tensor>> parameters();
};

struct ForwardOutputs {
  Tensor prediction;      // (B,T',N,C)
  Tensor x_intrinsic;     // (B,T,N,C): mu_i * x
  Tensor x_environment;   // (B,T,N,C): x - x_intrinsic
  Tensor z_intrinsic;     // (B,T,N,D)
  Tensor z_environment;   // (B,T,N,D)
  Tensor g_intrinsic;     // (B,D)
  Tensor g_environment;   // (B,D)
  Tensor mu_intrinsic;    // (B,T,N)
  Tensor mu_environment;  // (B,T,N)
  Tensor membership;      // (B,17)
};

ForwardOutputs forward(const DualModel& model, const Tensor& x,
                       const std::vector<int>& pattern_ids);

/// Checkpoint: a text manifest of parameter names and shapes followed by a
/// binary payload of 64-bit values in manifest order, one file.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params);
void load_checkpoint(const std::string& path,
                     std::vector<std::pair<std::string, Tensor>>& params);

}  // namespace stf
