#include "rac/diff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace rac::diff {
namespace {

thread_local Precision g_precision = Precision::kStandard;
thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.size() > 2) throw ShapeError("tensor rank must be <= 2, got " + to_string(shape));
  if (data.size() != element_count(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     to_string(shape));
  }
  for (double& v : data) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite value in tensor data");
    v = round_to_precision(v);
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Precision precision() { return g_precision; }

PrecisionScope::PrecisionScope(Precision p) : previous_(g_precision) { g_precision = p; }
PrecisionScope::~PrecisionScope() { g_precision = previous_; }

bool grad_enabled() { return g_grad_enabled; }

NoGradScope::NoGradScope() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradScope::~NoGradScope() { g_grad_enabled = previous_; }

double round_to_precision(double v) {
  return g_precision == Precision::kStandard ? static_cast<double>(static_cast<float>(v)) : v;
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

std::size_t Node::rows() const { return shape.size() == 2 ? shape[0] : 1; }
std::size_t Node::cols() const { return shape.empty() ? 1 : shape.back(); }

std::vector<double>& Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = element_count(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), false));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  return Tensor(make_leaf(std::move(shape), std::move(data), false));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  return Tensor(make_leaf(std::move(shape), std::move(data), true));
}

const Node& Tensor::checked() const {
  if (!node_) throw GraphError("use of undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::rows() const { return checked().rows(); }
std::size_t Tensor::cols() const { return checked().cols(); }
std::size_t Tensor::numel() const { return element_count(shape()); }

std::span<const double> Tensor::data() const { return checked().value; }

std::span<double> Tensor::mutable_data() {
  checked();
  if (!node_->leaf) throw GraphError("only leaf tensors may be modified in place");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single element, shape " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (row >= rows() || col >= cols()) throw ShapeError("index out of range");
  return node_->value[row * cols() + col];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }
bool Tensor::is_leaf() const { return checked().leaf; }

std::span<const double> Tensor::grad() const { return checked().grad; }

std::span<double> Tensor::mutable_grad() {
  checked();
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  checked();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = shape();
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  Tensor copy = detach();
  copy.node_->requires_grad = node_->requires_grad;
  return copy;
}

void backward(const Tensor& loss, bool retain_graph) {
  if (loss.numel() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  const auto& root = loss.node();
  if (root->consumed) throw GraphError("backward through a graph that was already consumed");
  if (!root->requires_grad) return;

  // Iterative post-order DFS over interior nodes; leaves are endpoints.
  std::vector<Node*> order;
  std::vector<Node*> leaves;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->consumed) throw GraphError("backward through a graph that was already consumed");
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        if (child->leaf) {
          leaves.push_back(child);
        } else {
          stack.emplace_back(child, 0);
        }
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  if (root->leaf) {
    root->grad_buffer()[0] += 1.0;
    return;
  }

  for (Node* node : order) node->grad.assign(node->value.size(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    (*it)->backward(**it);
  }
  for (Node* node : order) {
    node->grad.clear();
    node->grad.shrink_to_fit();
    if (!retain_graph) {
      node->backward = nullptr;
      node->inputs.clear();
      node->consumed = true;
    }
  }
  for (Node* leaf : leaves) {
    for (double g : leaf->grad) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient reached a parameter");
    }
  }
}

}  // namespace rac::diff
