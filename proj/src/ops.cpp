#include "stf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

namespace stf::ops {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

[[noreturn]] void fail(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

int norm_axis(const char* op, int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    fail(op, "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return axis;
}

std::vector<std::int64_t> strides_of(const Shape& shape) {
  std::vector<std::int64_t> strides(shape.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    strides[static_cast<std::size_t>(i)] = acc;
    acc *= shape[static_cast<std::size_t>(i)];
  }
  return strides;
}

// Splits a shape into (outer, n, inner) around one axis, so that lanes along
// the axis live at flat offsets o*n*inner + a*inner + i.
struct AxisSplit {
  std::int64_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.n = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) {
    s.inner *= shape[i];
  }
  return s;
}

Shape drop_axis(const Shape& shape, int axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[static_cast<std::size_t>(axis)] = 1;
  } else {
    out.erase(out.begin() + axis);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  return make_op_result(a.shape(), a.values() + b.values(), "add", {a, b},
                        [a, b](detail::Node& n) {
                          a.node()->accumulate(*n.grad);
                          b.node()->accumulate(*n.grad);
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  return make_op_result(a.shape(), a.values() - b.values(), "sub", {a, b},
                        [a, b](detail::Node& n) {
                          a.node()->accumulate(*n.grad);
                          b.node()->accumulate(-*n.grad);
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  return make_op_result(a.shape(), a.values() * b.values(), "mul", {a, b},
                        [a, b](detail::Node& n) {
                          a.node()->accumulate(*n.grad * b.values());
                          b.node()->accumulate(*n.grad * a.values());
                        });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  return make_op_result(a.shape(), a.values() / b.values(), "div", {a, b},
                        [a, b](detail::Node& n) {
                          a.node()->accumulate(*n.grad / b.values());
                          b.node()->accumulate(-*n.grad * a.values() / b.values().square());
                        });
}

Tensor add_scalar(const Tensor& a, double c) {
  return make_op_result(a.shape(), a.values() + c, "add_scalar", {a},
                        [a](detail::Node& n) { a.node()->accumulate(*n.grad); });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return make_op_result(a.shape(), a.values() * c, "mul_scalar", {a},
                        [a, c](detail::Node& n) { a.node()->accumulate(*n.grad * c); });
}

Tensor relu(const Tensor& x) {
  return make_op_result(x.shape(), x.values().max(0.0), "relu", {x},
                        [x](detail::Node& n) {
                          x.node()->accumulate(*n.grad * (x.values() > 0.0).cast<double>());
                        });
}

Tensor exp(const Tensor& x) {
  return make_op_result(x.shape(), x.values().exp(), "exp", {x},
                        [x](detail::Node& n) {
                          x.node()->accumulate(*n.grad * x.values().exp());
                        });
}

Tensor log(const Tensor& x) {
  return make_op_result(x.shape(), x.values().log(), "log", {x},
                        [x](detail::Node& n) {
                          x.node()->accumulate(*n.grad / x.values());
                        });
}

Tensor sqrt(const Tensor& x) {
  return make_op_result(x.shape(), x.values().sqrt(), "sqrt", {x},
                        [x](detail::Node& n) {
                          Eigen::ArrayXd root = x.values().sqrt();
                          Eigen::ArrayXd g =
                              (root > 0.0).select(*n.grad * 0.5 / root, Eigen::ArrayXd::Zero(root.size()));
                          x.node()->accumulate(g);
                        });
}

Tensor abs(const Tensor& x) {
  return make_op_result(x.shape(), x.values().abs(), "abs", {x},
                        [x](detail::Node& n) {
                          x.node()->accumulate(*n.grad * x.values().sign());
                        });
}

Tensor sigmoid(const Tensor& x) {
  Eigen::ArrayXd y = 0.5 * (0.5 * x.values()).tanh() + 0.5;
  return make_op_result(x.shape(), std::move(y), "sigmoid", {x},
                        [x](detail::Node& n) {
                          Eigen::ArrayXd y = 0.5 * (0.5 * x.values()).tanh() + 0.5;
                          x.node()->accumulate(*n.grad * y * (1.0 - y));
                        });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return make_op_result(x.shape(), x.values().max(floor), "clamp_min", {x},
                        [x, floor](detail::Node& n) {
                          x.node()->accumulate(*n.grad * (x.values() >= floor).cast<double>());
                        });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail("matmul", "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Eigen::ArrayXd out(m * n);
  MapM(out.data(), m, n).noalias() =
      CMapM(a.values().data(), m, k) * CMapM(b.values().data(), k, n);
  return make_op_result({m, n}, std::move(out), "matmul", {a, b},
                        [a, b, m, k, n](detail::Node& node) {
                          CMapM g(node.grad->data(), m, n);
                          if (a.requires_grad()) {
                            Eigen::ArrayXd ga(m * k);
                            MapM(ga.data(), m, k).noalias() =
                                g * CMapM(b.values().data(), k, n).transpose();
                            a.node()->accumulate(ga);
                          }
                          if (b.requires_grad()) {
                            Eigen::ArrayXd gb(k * n);
                            MapM(gb.data(), k, n).noalias() =
                                CMapM(a.values().data(), m, k).transpose() * g;
                            b.node()->accumulate(gb);
                          }
                        });
}

Tensor linear(const Tensor& x, const Tensor& w) {
  if (x.rank() < 1 || w.rank() != 2 || x.dim(-1) != w.dim(0)) {
    fail("linear", "shape mismatch " + to_string(x.shape()) + " vs " + to_string(w.shape()));
  }
  const auto k = w.dim(0), n = w.dim(1);
  const auto rows = x.numel() / k;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  out_shape.push_back(n);
  Eigen::ArrayXd out(rows * n);
  MapM(out.data(), rows, n).noalias() =
      CMapM(x.values().data(), rows, k) * CMapM(w.values().data(), k, n);
  return make_op_result(std::move(out_shape), std::move(out), "linear", {x, w},
                        [x, w, rows, k, n](detail::Node& node) {
                          CMapM g(node.grad->data(), rows, n);
                          if (x.requires_grad()) {
                            Eigen::ArrayXd gx(rows * k);
                            MapM(gx.data(), rows, k).noalias() =
                                g * CMapM(w.values().data(), k, n).transpose();
                            x.node()->accumulate(gx);
                          }
                          if (w.requires_grad()) {
                            Eigen::ArrayXd gw(k * n);
                            MapM(gw.data(), k, n).noalias() =
                                CMapM(x.values().data(), rows, k).transpose() * g;
                            w.node()->accumulate(gw);
                          }
                        });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != a.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()) ||
      a.dim(-1) != b.dim(-2)) {
    fail("bmm", "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  const auto batches = a.numel() / (m * k);
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Eigen::ArrayXd out(batches * m * n);
  for (std::int64_t i = 0; i < batches; ++i) {
    MapM(out.data() + i * m * n, m, n).noalias() =
        CMapM(a.values().data() + i * m * k, m, k) *
        CMapM(b.values().data() + i * k * n, k, n);
  }
  return make_op_result(std::move(out_shape), std::move(out), "bmm", {a, b},
                        [a, b, batches, m, k, n](detail::Node& node) {
                          if (a.requires_grad()) {
                            Eigen::ArrayXd ga(batches * m * k);
                            for (std::int64_t i = 0; i < batches; ++i) {
                              MapM(ga.data() + i * m * k, m, k).noalias() =
                                  CMapM(node.grad->data() + i * m * n, m, n) *
                                  CMapM(b.values().data() + i * k * n, k, n).transpose();
                            }
                            a.node()->accumulate(ga);
                          }
                          if (b.requires_grad()) {
                            Eigen::ArrayXd gb(batches * k * n);
                            for (std::int64_t i = 0; i < batches; ++i) {
                              MapM(gb.data() + i * k * n, k, n).noalias() =
                                  CMapM(a.values().data() + i * m * k, m, k).transpose() *
                                  CMapM(node.grad->data() + i * m * n, m, n);
                            }
                            b.node()->accumulate(gb);
                          }
                        });
}

Tensor spmm(const SparseBinary& m, const Tensor& x) {
  if (x.rank() < 2 || x.dim(-2) != m.cols) {
    fail("spmm", "operand " + to_string(x.shape()) + " does not match sparse (" +
                     std::to_string(m.rows) + "," + std::to_string(m.cols) + ")");
  }
  const auto f = x.dim(-1);
  const auto batches = x.numel() / (m.cols * f);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = m.rows;
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(batches * m.rows * f);
  for (std::int64_t b = 0; b < batches; ++b) {
    const double* src = x.values().data() + b * m.cols * f;
    double* dst = out.data() + b * m.rows * f;
    for (const auto& [i, j] : m.entries) {
      Eigen::Map<Eigen::ArrayXd>(dst + i * f, f) +=
          Eigen::Map<const Eigen::ArrayXd>(src + j * f, f);
    }
  }
  auto entries = std::make_shared<std::vector<std::pair<std::int64_t, std::int64_t>>>(m.entries);
  const auto rows = m.rows, cols = m.cols;
  return make_op_result(std::move(out_shape), std::move(out), "spmm", {x},
                        [x, entries, rows, cols, f, batches](detail::Node& node) {
                          Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(batches * cols * f);
                          for (std::int64_t b = 0; b < batches; ++b) {
                            const double* g = node.grad->data() + b * rows * f;
                            double* dst = gx.data() + b * cols * f;
                            for (const auto& [i, j] : *entries) {
                              Eigen::Map<Eigen::ArrayXd>(dst + j * f, f) +=
                                  Eigen::Map<const Eigen::ArrayXd>(g + i * f, f);
                            }
                          }
                          x.node()->accumulate(gx);
                        });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    fail("reshape", "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  return make_op_result(std::move(shape), x.values(), "reshape", {x},
                        [x](detail::Node& n) { x.node()->accumulate(*n.grad); });
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
  const int r = x.rank();
  if (static_cast<int>(axes.size()) != r) {
    fail("permute", "axes list has " + std::to_string(axes.size()) + " entries for rank " +
                        std::to_string(r));
  }
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  for (int a : axes) {
    if (a < 0 || a >= r || used[static_cast<std::size_t>(a)]) fail("permute", "invalid axes");
    used[static_cast<std::size_t>(a)] = true;
  }
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    out_shape[static_cast<std::size_t>(i)] = x.dim(axes[static_cast<std::size_t>(i)]);
  }
  const auto in_strides = strides_of(x.shape());
  const auto out_strides = strides_of(out_shape);
  // stride of out axis i in the input buffer
  std::vector<std::int64_t> gather(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    gather[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
  }
  const auto n = x.numel();
  auto map_index = [r, out_strides, gather](std::int64_t flat) {
    std::int64_t src = 0;
    for (int i = 0; i < r; ++i) {
      const std::int64_t c = flat / out_strides[static_cast<std::size_t>(i)];
      flat -= c * out_strides[static_cast<std::size_t>(i)];
      src += c * gather[static_cast<std::size_t>(i)];
    }
    return src;
  };
  Eigen::ArrayXd out(n);
  for (std::int64_t f = 0; f < n; ++f) out[f] = x.values()[map_index(f)];
  return make_op_result(std::move(out_shape), std::move(out), "permute", {x},
                        [x, map_index, n](detail::Node& node) {
                          Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(n);
                          for (std::int64_t f = 0; f < n; ++f) {
                            gx[map_index(f)] += (*node.grad)[f];
                          }
                          x.node()->accumulate(gx);
                        });
}

Tensor transpose(const Tensor& x) {
  const int r = x.rank();
  if (r < 2) fail("transpose", "needs rank >= 2, got " + to_string(x.shape()));
  std::vector<int> axes(static_cast<std::size_t>(r));
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[static_cast<std::size_t>(r - 2)], axes[static_cast<std::size_t>(r - 1)]);
  return permute(x, axes);
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  const int ax = norm_axis("slice", axis, x.rank());
  const auto d = x.dim(ax);
  if (start < 0 || length < 1 || start + length > d) {
    fail("slice", "range [" + std::to_string(start) + "," + std::to_string(start + length) +
                      ") out of bounds for axis size " + std::to_string(d));
  }
  const auto s = split_axis(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(ax)] = length;
  Eigen::ArrayXd out(s.outer * length * s.inner);
  for (std::int64_t o = 0; o < s.outer; ++o) {
    out.segment(o * length * s.inner, length * s.inner) =
        x.values().segment((o * s.n + start) * s.inner, length * s.inner);
  }
  return make_op_result(std::move(out_shape), std::move(out), "slice", {x},
                        [x, s, start, length](detail::Node& node) {
                          Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(x.numel());
                          for (std::int64_t o = 0; o < s.outer; ++o) {
                            gx.segment((o * s.n + start) * s.inner, length * s.inner) =
                                node.grad->segment(o * length * s.inner, length * s.inner);
                          }
                          x.node()->accumulate(gx);
                        });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) fail("concat", "no operands");
  const int ax = norm_axis("concat", axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  std::int64_t total = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) fail("concat", "rank mismatch");
    s[static_cast<std::size_t>(ax)] = out_shape[static_cast<std::size_t>(ax)];
    if (s != out_shape) {
      fail("concat", "shape mismatch " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
    }
    total += p.dim(ax);
  }
  out_shape[static_cast<std::size_t>(ax)] = total;
  const auto s0 = split_axis(parts[0].shape(), ax);
  Eigen::ArrayXd out(s0.outer * total * s0.inner);
  std::int64_t offset = 0;
  for (const Tensor& p : parts) {
    const auto len = p.dim(ax);
    for (std::int64_t o = 0; o < s0.outer; ++o) {
      out.segment((o * total + offset) * s0.inner, len * s0.inner) =
          p.values().segment(o * len * s0.inner, len * s0.inner);
    }
    offset += len;
  }
  return make_op_result(std::move(out_shape), std::move(out), "concat",
                        parts, [parts, s0, total, ax](detail::Node& node) {
                          std::int64_t offset = 0;
                          for (const Tensor& p : parts) {
                            const auto len = p.dim(ax);
                            if (p.requires_grad()) {
                              Eigen::ArrayXd gp(p.numel());
                              for (std::int64_t o = 0; o < s0.outer; ++o) {
                                gp.segment(o * len * s0.inner, len * s0.inner) =
                                    node.grad->segment((o * total + offset) * s0.inner,
                                                       len * s0.inner);
                              }
                              p.node()->accumulate(gp);
                            }
                            offset += len;
                          }
                        });
}

Tensor broadcast(const Tensor& x, const Shape& shape) {
  const int in_rank = x.rank();
  const int out_rank = static_cast<int>(shape.size());
  const int pad = out_rank - in_rank;
  if (pad < 0) fail("broadcast", "cannot shrink " + to_string(x.shape()) + " to " + to_string(shape));
  const auto in_strides = strides_of(x.shape());
  std::vector<std::int64_t> eff(static_cast<std::size_t>(out_rank), 0);
  for (int i = 0; i < in_rank; ++i) {
    const auto in_d = x.dim(i);
    const auto out_d = shape[static_cast<std::size_t>(i + pad)];
    if (in_d == out_d) {
      eff[static_cast<std::size_t>(i + pad)] = in_strides[static_cast<std::size_t>(i)];
    } else if (in_d != 1) {
      fail("broadcast", "cannot expand " + to_string(x.shape()) + " to " + to_string(shape));
    }
  }
  const auto out_strides = strides_of(shape);
  const auto n = numel_of(shape);
  auto map_index = [out_rank, out_strides, eff](std::int64_t flat) {
    std::int64_t src = 0;
    for (int i = 0; i < out_rank; ++i) {
      const std::int64_t c = flat / out_strides[static_cast<std::size_t>(i)];
      flat -= c * out_strides[static_cast<std::size_t>(i)];
      src += c * eff[static_cast<std::size_t>(i)];
    }
    return src;
  };
  Eigen::ArrayXd out(n);
  for (std::int64_t f = 0; f < n; ++f) out[f] = x.values()[map_index(f)];
  return make_op_result(Shape(shape), std::move(out), "broadcast", {x},
                        [x, map_index, n](detail::Node& node) {
                          Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(x.numel());
                          for (std::int64_t f = 0; f < n; ++f) {
                            gx[map_index(f)] += (*node.grad)[f];
                          }
                          x.node()->accumulate(gx);
                        });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& indices) {
  if (x.rank() < 1) fail("gather_rows", "needs rank >= 1");
  const auto rows = x.dim(0);
  const auto width = x.numel() / rows;
  for (std::int64_t idx : indices) {
    if (idx < 0 || idx >= rows) {
      fail("gather_rows", "index " + std::to_string(idx) + " out of range [0," +
                              std::to_string(rows) + ")");
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<std::int64_t>(indices.size());
  Eigen::ArrayXd out(static_cast<std::int64_t>(indices.size()) * width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.segment(static_cast<std::int64_t>(i) * width, width) =
        x.values().segment(indices[i] * width, width);
  }
  return make_op_result(std::move(out_shape), std::move(out), "gather_rows", {x},
                        [x, indices, width](detail::Node& node) {
                          Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(x.numel());
                          for (std::size_t i = 0; i < indices.size(); ++i) {
                            gx.segment(indices[i] * width, width) +=
                                node.grad->segment(static_cast<std::int64_t>(i) * width, width);
                          }
                          x.node()->accumulate(gx);
                        });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  const int ax = norm_axis("sum", axis, x.rank());
  const auto s = split_axis(x.shape(), ax);
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(s.outer * s.inner);
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t a = 0; a < s.n; ++a) {
      out.segment(o * s.inner, s.inner) +=
          x.values().segment((o * s.n + a) * s.inner, s.inner);
    }
  }
  return make_op_result(drop_axis(x.shape(), ax, keepdim), std::move(out), "sum", {x},
                        [x, s](detail::Node& node) {
                          Eigen::ArrayXd gx(x.numel());
                          for (std::int64_t o = 0; o < s.outer; ++o) {
                            for (std::int64_t a = 0; a < s.n; ++a) {
                              gx.segment((o * s.n + a) * s.inner, s.inner) =
                                  node.grad->segment(o * s.inner, s.inner);
                            }
                          }
                          x.node()->accumulate(gx);
                        });
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  const int ax = norm_axis("mean", axis, x.rank());
  const double scale = 1.0 / static_cast<double>(x.dim(ax));
  return mul_scalar(sum(x, ax, keepdim), scale);
}

Tensor sum_all(const Tensor& x) {
  Eigen::ArrayXd out(1);
  out[0] = x.values().sum();
  return make_op_result(Shape{}, std::move(out), "sum_all", {x},
                        [x](detail::Node& node) {
                          x.node()->accumulate(
                              Eigen::ArrayXd::Constant(x.numel(), (*node.grad)[0]));
                        });
}

Tensor mean_all(const Tensor& x) {
  return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor max(const Tensor& x, int axis, bool keepdim) {
  const int ax = norm_axis("max", axis, x.rank());
  const auto s = split_axis(x.shape(), ax);
  Eigen::ArrayXd out(s.outer * s.inner);
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(s.outer * s.inner));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      double best = x.values()[(o * s.n) * s.inner + i];
      std::int64_t best_a = 0;
      for (std::int64_t a = 1; a < s.n; ++a) {
        const double v = x.values()[(o * s.n + a) * s.inner + i];
        if (v > best) {  // strict: ties keep the lowest index
          best = v;
          best_a = a;
        }
      }
      out[o * s.inner + i] = best;
      (*argmax)[static_cast<std::size_t>(o * s.inner + i)] = best_a;
    }
  }
  return make_op_result(drop_axis(x.shape(), ax, keepdim), std::move(out), "max", {x},
                        [x, s, argmax](detail::Node& node) {
                          Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(x.numel());
                          for (std::int64_t o = 0; o < s.outer; ++o) {
                            for (std::int64_t i = 0; i < s.inner; ++i) {
                              const auto a = (*argmax)[static_cast<std::size_t>(o * s.inner + i)];
                              gx[(o * s.n + a) * s.inner + i] = (*node.grad)[o * s.inner + i];
                            }
                          }
                          x.node()->accumulate(gx);
                        });
}

Tensor l2_norm(const Tensor& x, int lead_axes) {
  if (lead_axes < 0 || lead_axes > x.rank()) {
    fail("l2_norm", "lead_axes " + std::to_string(lead_axes) + " out of range for rank " +
                        std::to_string(x.rank()));
  }
  std::int64_t groups = 1;
  for (int i = 0; i < lead_axes; ++i) groups *= x.dim(i);
  const auto width = x.numel() / groups;
  Eigen::ArrayXd out(groups);
  for (std::int64_t g = 0; g < groups; ++g) {
    out[g] = std::sqrt(x.values().segment(g * width, width).square().sum());
  }
  Shape out_shape(x.shape().begin(), x.shape().begin() + lead_axes);
  return make_op_result(std::move(out_shape), std::move(out), "l2_norm", {x},
                        [x, groups, width](detail::Node& node) {
                          Eigen::ArrayXd gx = Eigen::ArrayXd::Zero(x.numel());
                          for (std::int64_t g = 0; g < groups; ++g) {
                            const double norm =
                                std::sqrt(x.values().segment(g * width, width).square().sum());
                            if (norm > 0.0) {
                              gx.segment(g * width, width) =
                                  x.values().segment(g * width, width) *
                                  ((*node.grad)[g] / norm);
                            }
                          }
                          x.node()->accumulate(gx);
                        });
}

// ---------------------------------------------------------------------------
// softmax & masking
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  const int ax = norm_axis("softmax", axis, x.rank());
  const auto s = split_axis(x.shape(), ax);
  Eigen::ArrayXd out(x.numel());
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::int64_t a = 0; a < s.n; ++a) {
        peak = std::max(peak, x.values()[(o * s.n + a) * s.inner + i]);
      }
      double total = 0.0;
      for (std::int64_t a = 0; a < s.n; ++a) {
        const double e = std::exp(x.values()[(o * s.n + a) * s.inner + i] - peak);
        out[(o * s.n + a) * s.inner + i] = e;
        total += e;
      }
      for (std::int64_t a = 0; a < s.n; ++a) {
        out[(o * s.n + a) * s.inner + i] /= total;
      }
    }
  }
  auto y = std::make_shared<Eigen::ArrayXd>(out);
  return make_op_result(x.shape(), std::move(out), "softmax", {x},
                        [x, y, s](detail::Node& node) {
                          // gx = y * (g - sum(g * y)) per lane
                          Eigen::ArrayXd gx(x.numel());
                          for (std::int64_t o = 0; o < s.outer; ++o) {
                            for (std::int64_t i = 0; i < s.inner; ++i) {
                              double dot = 0.0;
                              for (std::int64_t a = 0; a < s.n; ++a) {
                                const auto f = (o * s.n + a) * s.inner + i;
                                dot += (*node.grad)[f] * (*y)[f];
                              }
                              for (std::int64_t a = 0; a < s.n; ++a) {
                                const auto f = (o * s.n + a) * s.inner + i;
                                gx[f] = (*y)[f] * ((*node.grad)[f] - dot);
                              }
                            }
                          }
                          x.node()->accumulate(gx);
                        });
}

Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& mask,
                   const Shape& mask_shape, double value) {
  const auto mn = numel_of(mask_shape);
  if (static_cast<std::int64_t>(mask.size()) != mn) {
    fail("masked_fill", "mask data does not match its shape " + to_string(mask_shape));
  }
  const int pad = x.rank() - static_cast<int>(mask_shape.size());
  if (pad < 0 ||
      !std::equal(mask_shape.begin(), mask_shape.end(), x.shape().begin() + pad)) {
    fail("masked_fill", "mask " + to_string(mask_shape) + " does not match trailing axes of " +
                            to_string(x.shape()));
  }
  Eigen::ArrayXd out(x.numel());
  for (std::int64_t f = 0; f < x.numel(); ++f) {
    out[f] = mask[static_cast<std::size_t>(f % mn)] ? x.values()[f] : value;
  }
  auto kept = std::make_shared<std::vector<std::uint8_t>>(mask);
  return make_op_result(x.shape(), std::move(out), "masked_fill", {x},
                        [x, kept, mn](detail::Node& node) {
                          Eigen::ArrayXd gx(x.numel());
                          for (std::int64_t f = 0; f < x.numel(); ++f) {
                            gx[f] = (*kept)[static_cast<std::size_t>(f % mn)]
                                        ? (*node.grad)[f]
                                        : 0.0;
                          }
                          x.node()->accumulate(gx);
                        });
}

// ---------------------------------------------------------------------------
// divergences
// ---------------------------------------------------------------------------

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  check_same_shape("kl_divergence", p, q);
  if (p.rank() < 1) fail("kl_divergence", "needs rank >= 1");
  if ((p.values() < 0.0).any() || (q.values() < 0.0).any()) {
    fail("kl_divergence", "negative entry in a distribution");
  }
  const auto width = p.dim(-1);
  const auto rows = p.numel() / width;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double sp = p.values().segment(r * width, width).sum();
    const double sq = q.values().segment(r * width, width).sum();
    if (std::abs(sp - 1.0) > 1e-8 || std::abs(sq - 1.0) > 1e-8) {
      fail("kl_divergence", "row " + std::to_string(r) + " does not sum to 1 (got " +
                                std::to_string(sp) + " and " + std::to_string(sq) + ")");
    }
  }
  Tensor log_ratio = sub(log(clamp_min(p, kProbFloor)), log(clamp_min(q, kProbFloor)));
  Tensor per_row = sum(mul(p, log_ratio), -1);
  return per_row.rank() == 0 ? per_row : mean_all(per_row);
}

}  // namespace stf::ops
