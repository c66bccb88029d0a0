#include "stf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace stf {

Tape Tape::trace(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                (loss.defined() ? to_string(loss.shape()) : "(undefined)"));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward: loss does not require grad; tape is empty");
  }
  Tape tape;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{loss.node()};
  while (!stack.empty()) {
    auto node = stack.back();
    stack.pop_back();
    if (!node->requires_grad || !seen.insert(node.get()).second) continue;
    tape.nodes_.push_back(node);
    for (const auto& parent : node->parents) stack.push_back(parent);
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return tape;
}

void Tape::backward() {
  if (nodes_.empty()) return;
  auto& loss = *nodes_.back();
  loss.accumulate(Eigen::ArrayXd::Ones(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& node = **it;
    if (node.backward && node.grad) node.backward(node);
  }
  // Intermediate buffers die with the tape; leaves keep their gradients.
  for (auto& node : nodes_) {
    if (node->backward) node->grad.reset();
  }
}

void backward(const Tensor& loss) { Tape::trace(loss).backward(); }

GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    std::vector<Tensor> inputs, double h, double tol) {
  GradCheckReport report;
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = f(inputs);
  backward(loss);

  std::vector<Eigen::ArrayXd> analytic;
  analytic.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    analytic.push_back(t.grad() ? *t.grad() : Eigen::ArrayXd::Zero(t.numel()));
  }

  report.per_input_error.assign(inputs.size(), 0.0);
  {
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Eigen::ArrayXd& buffer = inputs[i].values();
      for (Eigen::Index j = 0; j < buffer.size(); ++j) {
        const double saved = buffer[j];
        buffer[j] = saved + h;
        const double up = f(inputs).item();
        buffer[j] = saved - h;
        const double down = f(inputs).item();
        buffer[j] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[i][j];
        const double scale = std::max({1.0, std::abs(a), std::abs(numeric)});
        const double rel = std::abs(a - numeric) / scale;
        if (rel > report.per_input_error[i]) report.per_input_error[i] = rel;
        if (rel > report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst = "input " + std::to_string(i) + ", element " + std::to_string(j);
        }
      }
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace stf
