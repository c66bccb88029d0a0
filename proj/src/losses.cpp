#include "stf/losses.hpp"

#include "stf/ops.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace stf {

namespace {

using ops::add;
using ops::add_scalar;
using ops::broadcast;
using ops::clamp_min;
using ops::concat;
using ops::div;
using ops::gather_rows;
using ops::kl_divergence;
using ops::l2_norm;
using ops::mean;
using ops::mul;
using ops::mul_scalar;
using ops::reshape;
using ops::slice;
using ops::softmax;
using ops::sub;

Tensor reciprocal_of_clamped(const Tensor& divergence) {
  return div(Tensor::scalar(1.0), clamp_min(divergence, kKlFloor));
}

Tensor as_row_vector(const Tensor& scalar) { return reshape(scalar, {1}); }

}  // namespace

Tensor filter_loss(const Tensor& g_intrinsic, const Tensor& g_environment) {
  if (g_intrinsic.shape() != g_environment.shape() || g_intrinsic.rank() != 2) {
    throw std::invalid_argument("filter_loss: expected matching (B,D) inputs, got " +
                                to_string(g_intrinsic.shape()) + " and " +
                                to_string(g_environment.shape()));
  }
  Tensor divergence =
      kl_divergence(softmax(g_intrinsic, -1), softmax(g_environment, -1));
  return reciprocal_of_clamped(divergence);
}

Tensor environment_loss(const Tensor& g_environment, EnvPermutation mode,
                        std::uint64_t seed) {
  if (g_environment.rank() != 2) {
    throw std::invalid_argument("environment_loss: expected (B,D), got " +
                                to_string(g_environment.shape()));
  }
  const auto b = g_environment.dim(0);
  if (b < 2) return Tensor::scalar(0.0);  // no valid pair
  std::vector<std::int64_t> perm(static_cast<std::size_t>(b));
  if (mode == EnvPermutation::cyclic) {
    for (std::int64_t i = 0; i < b; ++i) perm[static_cast<std::size_t>(i)] = (i + 1) % b;
  } else {
    // Sattolo's algorithm: a uniform random cyclic permutation, never a fixed point
    std::mt19937_64 rng(seed);
    std::vector<std::int64_t> cycle(static_cast<std::size_t>(b));
    for (std::int64_t i = 0; i < b; ++i) cycle[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = b - 1; i > 0; --i) {
      std::uniform_int_distribution<std::int64_t> pick(0, i - 1);
      std::swap(cycle[static_cast<std::size_t>(i)], cycle[static_cast<std::size_t>(pick(rng))]);
    }
    perm = cycle;
  }
  Tensor dist = softmax(g_environment, -1);
  Tensor divergence = kl_divergence(gather_rows(dist, perm), dist);
  return reciprocal_of_clamped(divergence);
}

DbiComponents dbi_components(const Tensor& z, const Tensor& prototypes,
                             const std::vector<int>& ids) {
  if (z.rank() < 1 || prototypes.rank() < 1 || z.numel() / z.dim(0) != prototypes.numel() / prototypes.dim(0)) {
    throw std::invalid_argument("dbi: sample width " + to_string(z.shape()) +
                                " does not match prototype width " +
                                to_string(prototypes.shape()));
  }
  if (static_cast<std::int64_t>(ids.size()) != z.dim(0)) {
    throw std::invalid_argument("dbi: " + std::to_string(ids.size()) + " ids for " +
                                std::to_string(z.dim(0)) + " samples");
  }
  const auto width = z.numel() / z.dim(0);
  Tensor samples = reshape(z, {z.dim(0), width});
  Tensor banks = reshape(prototypes, {prototypes.dim(0), width});

  DbiComponents out;
  for (int id : ids) {
    if (id < 0 || id >= prototypes.dim(0)) {
      throw std::invalid_argument("dbi: pattern id " + std::to_string(id) + " out of range");
    }
    if (std::find(out.present.begin(), out.present.end(), id) == out.present.end()) {
      out.present.push_back(id);
    }
  }
  std::sort(out.present.begin(), out.present.end());
  const std::size_t count = out.present.size();

  for (std::size_t a = 0; a < count; ++a) {
    const int p = out.present[a];
    std::vector<std::int64_t> members;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (ids[j] == p) members.push_back(static_cast<std::int64_t>(j));
    }
    Tensor own = gather_rows(samples, members);
    Tensor proto = slice(banks, 0, p, 1);
    Tensor offsets = sub(broadcast(proto, own.shape()), own);
    out.compactness.push_back(mean(l2_norm(offsets, 1), 0));
  }

  out.separation.assign(count, std::vector<Tensor>(count));
  out.ratio.assign(count, std::vector<Tensor>(count));
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t b = 0; b < count; ++b) {
      if (a == b) continue;
      Tensor gap = l2_norm(sub(slice(banks, 0, out.present[a], 1),
                               slice(banks, 0, out.present[b], 1)),
                           0);
      out.separation[a][b] = gap;
      out.ratio[a][b] =
          div(add(out.compactness[a], out.compactness[b]), add_scalar(gap, kSeparationEps));
    }
  }

  for (std::size_t a = 0; a < count; ++a) {
    std::vector<Tensor> rivals;
    for (std::size_t b = 0; b < count; ++b) {
      if (a != b) rivals.push_back(as_row_vector(out.ratio[a][b]));
    }
    if (rivals.empty()) {
      out.quality.push_back(Tensor::scalar(0.0));
    } else {
      out.quality.push_back(ops::max(concat(rivals, 0), 0));
    }
  }
  return out;
}

Tensor dbi_loss(const Tensor& z, const Tensor& prototypes, const std::vector<int>& ids) {
  DbiComponents parts = dbi_components(z, prototypes, ids);
  if (parts.present.size() < 2) return Tensor::scalar(0.0);
  std::vector<Tensor> rows;
  rows.reserve(parts.quality.size());
  for (const Tensor& q : parts.quality) rows.push_back(as_row_vector(q));
  return mean(concat(rows, 0), 0);
}

Tensor prediction_loss(const Tensor& prediction, const Tensor& target, int p_norm) {
  if (prediction.shape() != target.shape()) {
    throw std::invalid_argument("prediction_loss: shape mismatch " +
                                to_string(prediction.shape()) + " vs " +
                                to_string(target.shape()));
  }
  Tensor residual = sub(prediction, target);
  if (p_norm == 2) return ops::mean_all(mul(residual, residual));
  if (p_norm == 1) return ops::mean_all(ops::abs(residual));
  throw std::invalid_argument("prediction_loss: p_norm must be 1 or 2, got " +
                              std::to_string(p_norm));
}

LossBreakdown TotalLoss::values(const LossWeights& w) const {
  LossBreakdown b;
  b.pred = pred.item();
  b.filter = filter.item();
  b.environment = environment.item();
  b.dbi = dbi.item();
  b.total = b.pred + w.alpha * b.filter + w.beta * b.environment + w.gamma * b.dbi;
  return b;
}

TotalLoss total_loss(const Tensor& pred, const Tensor& filter, const Tensor& environment,
                     const Tensor& dbi, const LossWeights& weights) {
  if (weights.alpha < 0.0 || weights.beta < 0.0 || weights.gamma < 0.0) {
    throw std::invalid_argument("total_loss: negative loss weight");
  }
  TotalLoss out;
  out.pred = pred;
  out.filter = filter;
  out.environment = environment;
  out.dbi = dbi;
  out.total = add(add(pred, mul_scalar(filter, weights.alpha)),
                  add(mul_scalar(environment, weights.beta), mul_scalar(dbi, weights.gamma)));
  return out;
}

}  // namespace stf
