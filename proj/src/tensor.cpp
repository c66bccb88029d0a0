#include "stf/tensor.hpp"

#include <atomic>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace stf {

namespace {

std::atomic<std::uint64_t> g_seq{1};

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, Eigen::ArrayXd values,
                                        bool requires_grad) {
  const std::int64_t n = numel_of(shape);
  if (values.size() != n) {
    throw std::invalid_argument("tensor: data length " +
                                std::to_string(values.size()) +
                                " does not match shape " + to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = g_seq.fetch_add(1);
  return node;
}

}  // namespace

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

void detail::Node::accumulate(const Eigen::ArrayXd& g) {
  if (!requires_grad) return;
  if (!grad) grad = std::make_unique<Eigen::ArrayXd>(Eigen::ArrayXd::Zero(values.size()));
  *grad += g;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::int64_t n = numel_of(shape);
  return Tensor(make_leaf(std::move(shape), Eigen::ArrayXd::Zero(n), requires_grad));
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  const std::int64_t n = numel_of(shape);
  return Tensor(make_leaf(std::move(shape), Eigen::ArrayXd::Ones(n), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::int64_t n = numel_of(shape);
  return Tensor(make_leaf(std::move(shape), Eigen::ArrayXd::Constant(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  Eigen::ArrayXd values =
      Eigen::Map<const Eigen::ArrayXd>(data.data(), static_cast<Eigen::Index>(data.size()));
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from_array(Shape shape, Eigen::ArrayXd data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Eigen::ArrayXd v(1);
  v[0] = value;
  return Tensor(make_leaf(Shape{}, std::move(v), requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }

int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  return node_->shape.at(static_cast<std::size_t>(axis));
}

std::int64_t Tensor::numel() const { return node_->values.size(); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool value) { node_->requires_grad = value; }

const Eigen::ArrayXd& Tensor::values() const { return node_->values; }

Eigen::ArrayXd& Tensor::values() { return node_->values; }

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item: tensor of shape " + to_string(shape()) +
                                " is not a scalar");
  }
  return node_->values[0];
}

double Tensor::at(std::int64_t flat_index) const { return node_->values[flat_index]; }

const Eigen::ArrayXd* Tensor::grad() const { return node_->grad.get(); }

void Tensor::zero_grad() { node_->grad.reset(); }

Tensor make_op_result(Shape shape, Eigen::ArrayXd values, const char* op,
                      std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backward) {
  if (!values.allFinite()) {
    throw std::runtime_error(std::string("kernel ") + op + ": non-finite output");
  }
  auto node = make_leaf(std::move(shape), std::move(values), false);
  node->op = op;
  bool track = grad_enabled();
  if (track) {
    track = false;
    for (const Tensor& p : parents) {
      if (p.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace stf
