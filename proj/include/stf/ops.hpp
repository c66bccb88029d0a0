#pragma once

#include "stf/tensor.hpp"

#include <cstdint>
#include <vector>

namespace stf {

/// Binary sparse matrix in coordinate form, used as a constant (non-learnable)
/// operand of ops::spmm. Entries are (row, col) pairs with implicit value 1.
struct SparseBinary {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> entries;

  std::int64_t nnz() const { return static_cast<std::int64_t>(entries.size()); }
  bool is_all_ones() const { return nnz() == rows * cols; }
};

namespace ops {

// ---- elementwise, same shape ----------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// ---- elementwise, scalar constant ------------------------------------------
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

// ---- elementwise, unary -----------------------------------------------------
Tensor relu(const Tensor& x);     // subgradient 0 at x == 0
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);      // callers floor probabilities via clamp_min
Tensor sqrt(const Tensor& x);     // subgradient 0 at x == 0
Tensor abs(const Tensor& x);      // subgradient 0 at x == 0
Tensor sigmoid(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);  // pass-through grad at x >= floor

// ---- linear algebra ---------------------------------------------------------
/// (m,k) x (k,n) -> (m,n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Contracts the last axis: (..., k) x (k, n) -> (..., n).
Tensor linear(const Tensor& x, const Tensor& w);
/// Batched matmul over equal leading dims: (..., m, k) x (..., k, n) -> (..., m, n).
Tensor bmm(const Tensor& a, const Tensor& b);
/// Sparse-dense product over the second-to-last axis:
/// out[..., i, :] = sum over (i, j) in m of x[..., j, :].
Tensor spmm(const SparseBinary& m, const Tensor& x);

// ---- shape ------------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor transpose(const Tensor& x);  // swaps the last two axes
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Expands to `shape`: size-1 axes repeat, and leading axes may be prepended.
Tensor broadcast(const Tensor& x, const Shape& shape);
/// out[i, ...] = x[indices[i], ...]; adjoint scatter-adds into the gathered rows.
Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& indices);

// ---- reductions -------------------------------------------------------------
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);
Tensor sum_all(const Tensor& x);   // -> scalar
Tensor mean_all(const Tensor& x);  // -> scalar
/// Max over one axis; ties route the gradient to the lowest index.
Tensor max(const Tensor& x, int axis, bool keepdim = false);
/// L2 norm over the trailing axes, keeping the first `lead_axes` axes:
/// (d0,..,dk-1, rest...) -> (d0,..,dk-1). lead_axes = 0 gives a scalar.
Tensor l2_norm(const Tensor& x, int lead_axes);

// ---- softmax & masking ------------------------------------------------------
/// Numerically stable softmax along `axis`; rows are strictly positive and
/// sum to 1 within 1e-12.
Tensor softmax(const Tensor& x, int axis);
/// out = mask ? x : value. The mask shape must match the trailing axes of x;
/// leading axes replicate it. Gradient is zero at filled positions.
Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& mask,
                   const Shape& mask_shape, double value);

// ---- divergences ------------------------------------------------------------
/// Rowwise KL(p || q) = sum p * log(p/q) over the last axis, averaged over all
/// leading axes. Rows must sum to 1 within 1e-8 and be nonnegative; entries
/// are floored at kProbFloor inside the logs.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

inline constexpr double kProbFloor = 1e-12;

}  // namespace ops
}  // namespace stf
