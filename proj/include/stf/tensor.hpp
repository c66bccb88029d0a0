#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace stf {

/// Dimension sizes of a dense tensor, outermost axis first. Data is laid out
/// row-major: the last axis is contiguous.
using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

/// One recorded value in the computation graph. Holds the forward values and,
/// when gradients are being tracked, the parent tensors plus a closure that
/// pushes this node's adjoint into the parents.
struct Node {
  Shape shape;
  Eigen::ArrayXd values;
  std::unique_ptr<Eigen::ArrayXd> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::uint64_t seq = 0;  // creation order; parents always have smaller seq
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads *grad, accumulates into parents

  void accumulate(const Eigen::ArrayXd& g);
};

}  // namespace detail

/// Dense 64-bit floating point tensor with optional reverse-mode gradient
/// tracking. Copying a Tensor copies the handle, not the buffer; the kernels
/// in ops.hpp treat tensors as immutable values, so sharing is safe.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor from_array(Shape shape, Eigen::ArrayXd data,
                           bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;
  bool requires_grad() const;
  void set_requires_grad(bool value);

  const Eigen::ArrayXd& values() const;
  Eigen::ArrayXd& values();  // in-place edits are for leaves only
  double item() const;       // numel() must be 1
  double at(std::int64_t flat_index) const;

  /// Gradient buffer, or nullptr when none has been accumulated.
  const Eigen::ArrayXd* grad() const;
  void zero_grad();

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(Shape shape, Eigen::ArrayXd values,
                               const char* op, std::vector<Tensor> parents,
                               std::function<void(detail::Node&)> backward);
};

/// Builds the tensor an op returns: runs the finite-value check, and records
/// parents plus the adjoint closure when gradient tracking is active.
Tensor make_op_result(Shape shape, Eigen::ArrayXd values, const char* op,
                      std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backward);

/// True while gradients are recorded (default). See NoGradGuard.
bool grad_enabled();

/// Scoped switch that disables graph recording, for evaluation passes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace stf
