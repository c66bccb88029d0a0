#include "stf/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stf {

namespace {

using ops::add;
using ops::add_scalar;
using ops::bmm;
using ops::broadcast;
using ops::div;
using ops::mul;
using ops::mul_scalar;
using ops::relu;
using ops::reshape;
using ops::spmm;

Shape lead_of(const Tensor& t) { return Shape(t.shape().begin(), t.shape().end() - 2); }

Shape with_tail(Shape lead, std::initializer_list<std::int64_t> tail) {
  lead.insert(lead.end(), tail);
  return lead;
}

void check_qkv(const char* op, const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() < 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw std::invalid_argument(std::string(op) + ": Q/K/V shapes must match, got " +
                                to_string(q.shape()) + ", " + to_string(k.shape()) + ", " +
                                to_string(v.shape()));
  }
}

/// phi(Q_n) S_n / (phi(Q_n) s_n + eps) for row summaries S (..., R, d*d) and
/// s (..., R, d).
Tensor summary_quotient(const Tensor& phi_q, const Tensor& summaries,
                        const Tensor& normalizers) {
  const Shape lead = lead_of(phi_q);
  const auto r = phi_q.dim(-2), d = phi_q.dim(-1);
  Tensor q_rows = reshape(phi_q, with_tail(lead, {r, 1, d}));
  Tensor num = reshape(bmm(q_rows, reshape(summaries, with_tail(lead, {r, d, d}))),
                       with_tail(lead, {r, d}));
  Tensor den = reshape(bmm(q_rows, reshape(normalizers, with_tail(lead, {r, d, 1}))),
                       with_tail(lead, {r, 1}));
  return div(num, broadcast(add_scalar(den, kAttentionDenEps), num.shape()));
}

/// Per-row key/value outer products phi(K_m)^T V_m flattened to (..., R, d*d).
Tensor row_summaries(const Tensor& phi_k, const Tensor& v) {
  const Shape lead = lead_of(phi_k);
  const auto r = phi_k.dim(-2), d = phi_k.dim(-1);
  Tensor outer = bmm(reshape(phi_k, with_tail(lead, {r, d, 1})),
                     reshape(v, with_tail(lead, {r, 1, d})));
  return reshape(outer, with_tail(lead, {r, d * d}));
}

}  // namespace

ProjectionHead ProjectionHead::init(std::int64_t in_width, std::int64_t width,
                                    std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_width));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto draw = [&] {
    std::vector<double> w(static_cast<std::size_t>(in_width * width));
    for (double& x : w) x = dist(rng);
    return Tensor::from_data({in_width, width}, std::move(w), true);
  };
  return ProjectionHead{draw(), draw(), draw()};
}

SubtreeWeights SubtreeWeights::init(int levels) {
  if (levels < 0) throw std::invalid_argument("subtree weights: levels must be >= 0");
  SubtreeWeights w;
  const double start = 1.0 / static_cast<double>(levels + 1);
  for (int k = 0; k <= levels; ++k) w.level.push_back(Tensor::scalar(start, true));
  w.global = Tensor::scalar(1.0, true);
  return w;
}

Tensor linear_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const SparseBinary& mask) {
  check_qkv("linear_attention", q, k, v);
  const auto r = q.dim(-2);
  if (mask.rows != r || mask.cols != r) {
    throw std::invalid_argument("linear_attention: mask (" + std::to_string(mask.rows) + "," +
                                std::to_string(mask.cols) + ") does not cover " +
                                std::to_string(r) + " rows");
  }
  if (mask.is_all_ones()) return global_attention(q, k, v);
  Tensor phi_q = relu(q), phi_k = relu(k);
  Tensor summaries = spmm(mask, row_summaries(phi_k, v));
  Tensor normalizers = spmm(mask, phi_k);
  return summary_quotient(phi_q, summaries, normalizers);
}

Tensor naive_linear_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& mask) {
  check_qkv("naive_linear_attention", q, k, v);
  if (q.rank() != 2) {
    throw std::invalid_argument("naive_linear_attention: expects (R,d) operands, got " +
                                to_string(q.shape()));
  }
  const auto r = q.dim(0), d = q.dim(1);
  if (mask.rank() != 2 || mask.dim(0) != r || mask.dim(1) != r) {
    throw std::invalid_argument("naive_linear_attention: mask " + to_string(mask.shape()) +
                                " does not cover " + std::to_string(r) + " rows");
  }
  auto phi = [](double x) { return x > 0.0 ? x : 0.0; };
  std::vector<double> out(static_cast<std::size_t>(r * d), 0.0);
  std::vector<double> s_num(static_cast<std::size_t>(d * d));
  std::vector<double> s_den(static_cast<std::size_t>(d));
  for (std::int64_t n = 0; n < r; ++n) {
    std::fill(s_num.begin(), s_num.end(), 0.0);
    std::fill(s_den.begin(), s_den.end(), 0.0);
    for (std::int64_t m = 0; m < r; ++m) {
      const double w = mask.at(n * r + m);
      if (w == 0.0) continue;
      for (std::int64_t i = 0; i < d; ++i) {
        const double ki = phi(k.at(m * d + i));
        s_den[static_cast<std::size_t>(i)] += w * ki;
        for (std::int64_t j = 0; j < d; ++j) {
          s_num[static_cast<std::size_t>(i * d + j)] += w * ki * v.at(m * d + j);
        }
      }
    }
    double den = kAttentionDenEps;
    for (std::int64_t i = 0; i < d; ++i) den += phi(q.at(n * d + i)) * s_den[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < d; ++j) {
      double num = 0.0;
      for (std::int64_t i = 0; i < d; ++i) {
        num += phi(q.at(n * d + i)) * s_num[static_cast<std::size_t>(i * d + j)];
      }
      out[static_cast<std::size_t>(n * d + j)] = num / den;
    }
  }
  return Tensor::from_data({r, d}, std::move(out));
}

Tensor global_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_qkv("global_attention", q, k, v);
  const Shape lead = lead_of(q);
  const auto r = q.dim(-2), d = q.dim(-1);
  Tensor phi_q = relu(q), phi_k = relu(k);
  // shared summations, computed once per slice
  Tensor shared_kv = bmm(ops::transpose(phi_k), v);                     // (..., d, d)
  Tensor shared_k = reshape(ops::sum(phi_k, -2), with_tail(lead, {d, 1}));
  Tensor num = bmm(phi_q, shared_kv);                                   // (..., R, d)
  Tensor den = bmm(phi_q, shared_k);                                    // (..., R, 1)
  (void)r;
  return div(num, broadcast(add_scalar(den, kAttentionDenEps), num.shape()));
}

Tensor subtree_local_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const CrossTimeAdjacency& adj, const SubtreeWeights& w) {
  check_qkv("subtree_local_attention", q, k, v);
  if (q.dim(-2) != adj.rows()) {
    throw std::invalid_argument("subtree_local_attention: " + std::to_string(adj.rows()) +
                                " adjacency rows vs operands " + to_string(q.shape()));
  }
  Tensor phi_q = relu(q), phi_k = relu(k);
  // level 0 is the values themselves
  Tensor h = mul(broadcast(w.level[0], v.shape()), v);
  Tensor summaries = row_summaries(phi_k, v);
  Tensor normalizers = phi_k;
  for (int hop = 1; hop <= w.levels(); ++hop) {
    summaries = spmm(adj.matrix, summaries);
    normalizers = spmm(adj.matrix, normalizers);
    Tensor level = summary_quotient(phi_q, summaries, normalizers);
    h = add(h, mul(broadcast(w.level[static_cast<std::size_t>(hop)], level.shape()), level));
  }
  return h;
}

Tensor fuse_local_global(const Tensor& h_loc, const Tensor& h_glo, const Tensor& w_glo) {
  if (h_loc.shape() != h_glo.shape()) {
    throw std::invalid_argument("fuse_local_global: shape mismatch " + to_string(h_loc.shape()) +
                                " vs " + to_string(h_glo.shape()));
  }
  return add(h_loc, mul(broadcast(w_glo, h_glo.shape()), h_glo));
}

Tensor dense_masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              const Tensor& mask, MaskMode mode) {
  check_qkv("dense_masked_attention", q, k, v);
  const auto r = q.dim(-2), d = q.dim(-1);
  if (mask.rank() != 2 || mask.dim(0) != r || mask.dim(1) != r) {
    throw std::invalid_argument("dense_masked_attention: mask " + to_string(mask.shape()) +
                                " does not cover " + std::to_string(r) + " rows");
  }
  Tensor scores = mul_scalar(bmm(q, ops::transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  if (mode == MaskMode::additive) {
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(r * r));
    for (std::int64_t n = 0; n < r; ++n) {
      bool any = false;
      for (std::int64_t m = 0; m < r; ++m) {
        const bool on = mask.at(n * r + m) != 0.0;
        keep[static_cast<std::size_t>(n * r + m)] = on;
        any = any || on;
      }
      if (!any) {
        throw std::invalid_argument("dense_masked_attention: row " + std::to_string(n) +
                                    " is fully masked");
      }
    }
    // -1e30 underflows to exactly zero weight after the softmax
    scores = ops::masked_fill(scores, keep, {r, r}, -1e30);
  } else {
    scores = mul(scores, broadcast(mask, scores.shape()));
  }
  Tensor attn = ops::softmax(scores, -1);
  return bmm(attn, v);
}

Tensor temporal_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) {
  check_qkv("temporal_attention", q, k, v);
  const auto t = q.dim(-2);
  if (t < 1) throw std::invalid_argument("temporal_attention: empty time axis");
  std::vector<double> mask(static_cast<std::size_t>(t * t), 1.0);
  if (causal) {
    for (std::int64_t a = 0; a < t; ++a) {
      for (std::int64_t b = a + 1; b < t; ++b) mask[static_cast<std::size_t>(a * t + b)] = 0.0;
    }
  }
  return dense_masked_attention(q, k, v, Tensor::from_data({t, t}, std::move(mask)),
                                MaskMode::additive);
}

}  // namespace stf
