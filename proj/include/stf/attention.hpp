#pragma once

#include "stf/graph.hpp"
#include "stf/ops.hpp"
#include "stf/tensor.hpp"

#include <random>
#include <vector>

namespace stf {

/// Guard added to attention denominators: ReLU feature maps can zero out an
/// entire key set, which would otherwise leave 0/0.
inline constexpr double kAttentionDenEps = 1e-8;

/// Three learnable bias-free projections onto query/key/value space.
/// Weights start uniform in [-1/sqrt(in_width), 1/sqrt(in_width)].
struct ProjectionHead {
  Tensor query_w, key_w, value_w;  // each (in_width, width)

  static ProjectionHead init(std::int64_t in_width, std::int64_t width,
                             std::mt19937_64& rng);

  Tensor query(const Tensor& x) const { return ops::linear(x, query_w); }
  Tensor key(const Tensor& x) const { return ops::linear(x, key_w); }
  Tensor value(const Tensor& x) const { return ops::linear(x, value_w); }
};

/// Learnable per-hop contributions for sub-tree attention plus the fusion
/// weight of the global path. Level weights start at 1/(levels+1), the global
/// weight at 1, so the fused output begins at the scale of the values.
struct SubtreeWeights {
  std::vector<Tensor> level;  // w_0 .. w_K, scalars
  Tensor global;              // w_glo

  static SubtreeWeights init(int levels);
  int levels() const { return static_cast<int>(level.size()) - 1; }
};

/// Feature-mapped attention with a binary mask:
///   h_n = phi(Q_n) S_n / (phi(Q_n) s_n + eps),
///   S_n = sum_m M[n,m] phi(K_m)^T V_m,   s_n = sum_m M[n,m] phi(K_m)^T,
/// with phi = ReLU. Q, K, V are (..., R, d); the mask is (R, R) and shared
/// across leading axes. An all-ones mask switches to shared summations that
/// are computed once per slice (O(R d^2) instead of O(nnz d^2)).
Tensor linear_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const SparseBinary& mask);

/// Literal per-(n,m) double-loop evaluation of the same quantity, used as the
/// reference implementation in tests. Accepts (R, d) operands and a dense
/// (R, R) mask; entries may be arbitrary nonnegative weights. Not recorded on
/// the tape.
Tensor naive_linear_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& mask);

/// linear_attention with an implicit all-ones mask over each slice of R rows.
Tensor global_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Rooted sub-tree attention over the cross-time graph. Level 0 passes the
/// values through; level k >= 1 propagates the key/value summaries k times
/// along the adjacency (P^k = M P^{k-1}) before normalizing, so level k sees
/// exactly the k-hop frontier of the tree rooted at each row. Returns
/// sum_k w_k H^k. Q, K, V are (..., R, d) with R = nodes * steps, time-major.
Tensor subtree_local_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const CrossTimeAdjacency& adj, const SubtreeWeights& w);

/// H = H_loc + w_glo * H_glo.
Tensor fuse_local_global(const Tensor& h_loc, const Tensor& h_glo, const Tensor& w_glo);

/// How dense_masked_attention applies its mask. `additive` replaces masked
/// scores with a large negative constant before the softmax (so masked
/// positions get exactly zero weight); `product` multiplies the scores by the
/// mask entries, which keeps weight e^0 on masked pairs and exists for A/B
/// comparison only.
enum class MaskMode { additive, product };

/// Quadratic-time baseline: softmax(Q K^T / sqrt(d), masked) V.
/// Q, K, V are (..., R, d); the mask is a dense (R, R) 0/1 tensor. Rows whose
/// mask is entirely zero are rejected.
Tensor dense_masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& mask, MaskMode mode = MaskMode::additive);

/// Dense attention along the time axis of (..., T, d) sequences. With
/// `causal`, position t attends to positions <= t only.
Tensor temporal_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal);

}  // namespace stf
