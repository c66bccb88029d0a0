#pragma once

#include "stf/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace stf {

/// Linearized record of the kernels reachable from one scalar output, in
/// execution order. A kernel's inputs always precede it (creation order is a
/// topological order), and one backward pass visits each record exactly once.
class Tape {
 public:
  /// Collects every gradient-tracked node reachable from `loss`.
  /// Throws if `loss` is not a scalar or nothing was recorded.
  static Tape trace(const Tensor& loss);

  /// Seeds d(loss)/d(loss) = 1 and replays the records in reverse, leaving
  /// gradients on every requires_grad leaf.
  void backward();

  std::size_t size() const { return nodes_.size(); }

 private:
  Tape() = default;
  std::vector<std::shared_ptr<detail::Node>> nodes_;  // execution order
};

/// Runs one reverse pass from a scalar loss. Gradients accumulate, so callers
/// zero leaf gradients between steps.
void backward(const Tensor& loss);

/// Result of comparing analytic gradients against central finite differences.
struct GradCheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  std::vector<double> per_input_error;  // max relative error per input tensor
  std::string worst;                    // "input i, element j" for the max
};

/// Checks d(f)/d(inputs) against central differences with step `h`.
/// `f` must map the given tensors to a scalar through catalogue kernels and be
/// re-runnable (it is evaluated 2*numel+1 times). Failures are reported in the
/// result, never thrown.
GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    std::vector<Tensor> inputs, double h = 1e-5, double tol = 1e-4);

}  // namespace stf
