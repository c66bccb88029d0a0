#pragma once

#include "stf/tensor.hpp"

#include <cstdint>
#include <vector>

namespace stf {

/// Divergences are clamped below at this value before the reciprocal, so the
/// filter and environment losses stay in (0, 1e6].
inline constexpr double kKlFloor = 1e-6;

/// Guard on prototype separation: colliding prototypes would otherwise divide
/// by zero in the ratio.
inline constexpr double kSeparationEps = 1e-8;

struct LossWeights {
  double alpha = 0.0;  // filter loss
  double beta = 0.0;   // environment loss
  double gamma = 0.0;  // DBI loss
  int p_norm = 2;      // prediction loss norm, 1 or 2
};

/// Scalar snapshot of one forward pass for logging.
struct LossBreakdown {
  double pred = 0.0;
  double filter = 0.0;
  double environment = 0.0;
  double dbi = 0.0;
  double total = 0.0;
};

/// Reciprocal KL divergence between the pooled branch representations,
/// pushing the branches toward distinct signals. Inputs are raw (B, D)
/// readouts; rows are mapped to distributions by a feature-axis softmax.
Tensor filter_loss(const Tensor& g_intrinsic, const Tensor& g_environment);

/// How the environment loss pairs batch rows. The cyclic shift by one is a
/// deterministic derangement; the seeded random mode draws a uniform cyclic
/// permutation (Sattolo), which also has no fixed point.
enum class EnvPermutation { cyclic, random };

/// Reciprocal KL divergence between the environment readout and a permuted
/// copy of itself, pushing different samples toward different environment
/// contexts. A batch of one has no valid pair and scores 0.
Tensor environment_loss(const Tensor& g_environment,
                        EnvPermutation mode = EnvPermutation::cyclic,
                        std::uint64_t seed = 0);

/// The Davies-Bouldin style pieces over the patterns present in a batch:
/// compactness S_p of each pattern's samples around its prototype, prototype
/// separations P_pq, ratios R_pq = (S_p + S_q) / (P_pq + eps), and quality
/// D_p = max_q R_pq. Vectors are aligned with `present`; diagonal ratio and
/// separation entries are undefined tensors.
struct DbiComponents {
  std::vector<int> present;
  std::vector<Tensor> compactness;
  std::vector<std::vector<Tensor>> separation;
  std::vector<std::vector<Tensor>> ratio;
  std::vector<Tensor> quality;
};

/// z shape (B, ...), prototypes shape (P, ...) with matching tails; ids[j]
/// assigns sample j to a pattern. Patterns absent from the batch do not
/// participate.
DbiComponents dbi_components(const Tensor& z, const Tensor& prototypes,
                             const std::vector<int>& ids);

/// Mean quality over the patterns present in the batch; 0 when fewer than two
/// patterns are present.
Tensor dbi_loss(const Tensor& z, const Tensor& prototypes, const std::vector<int>& ids);

/// Mean squared (p_norm = 2) or mean absolute (p_norm = 1) error over all
/// entries.
Tensor prediction_loss(const Tensor& prediction, const Tensor& target, int p_norm = 2);

/// The weighted objective and its pieces, all on the same tape.
struct TotalLoss {
  Tensor total;
  Tensor pred;
  Tensor filter;
  Tensor environment;
  Tensor dbi;

  LossBreakdown values(const LossWeights& w) const;
};

TotalLoss total_loss(const Tensor& pred, const Tensor& filter, const Tensor& environment,
                     const Tensor& dbi, const LossWeights& weights);

}  // namespace stf
