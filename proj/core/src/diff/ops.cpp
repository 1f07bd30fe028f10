#include "rac/diff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace rac::diff {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using NodePtr = std::shared_ptr<Node>;

Tensor finish(const char* op, Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
              std::function<void(Node&)> backward_fn) {
  const bool standard = precision() == Precision::kStandard;
  for (double& v : value) {
    if (standard) v = static_cast<float>(v);
    if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite result in ") + op);
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled()) {
    const bool tracked =
        std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
    if (tracked) {
      node->requires_grad = true;
      node->leaf = false;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

Shape matrix_shape(std::size_t rows, std::size_t cols, std::size_t max_rank) {
  if (rows == 1 && max_rank <= 1) {
    if (max_rank == 0 && cols == 1) return {};
    return {cols};
  }
  return {rows, cols};
}

struct Broadcast {
  std::size_t rows, cols;
  std::size_t a_rows, a_cols, b_rows, b_cols;
  Shape shape;

  std::size_t a_index(std::size_t r, std::size_t c) const {
    return (a_rows == 1 ? 0 : r) * a_cols + (a_cols == 1 ? 0 : c);
  }
  std::size_t b_index(std::size_t r, std::size_t c) const {
    return (b_rows == 1 ? 0 : r) * b_cols + (b_cols == 1 ? 0 : c);
  }
};

Broadcast broadcast(const Node& a, const Node& b, const char* op) {
  Broadcast bc{0, 0, a.rows(), a.cols(), b.rows(), b.cols(), {}};
  auto join = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a.shape) + " with " +
                     to_string(b.shape));
  };
  bc.rows = join(bc.a_rows, bc.b_rows);
  bc.cols = join(bc.a_cols, bc.b_cols);
  bc.shape = matrix_shape(bc.rows, bc.cols, std::max(a.shape.size(), b.shape.size()));
  return bc;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& ta, const Tensor& tb, BinaryKind kind, const char* op) {
  const Node& a = *ta.node();
  const Node& b = *tb.node();
  const Broadcast bc = broadcast(a, b, op);
  std::vector<double> out(bc.rows * bc.cols);
  for (std::size_t r = 0; r < bc.rows; ++r) {
    for (std::size_t c = 0; c < bc.cols; ++c) {
      const double x = a.value[bc.a_index(r, c)];
      const double y = b.value[bc.b_index(r, c)];
      double v = 0.0;
      switch (kind) {
        case BinaryKind::kAdd: v = x + y; break;
        case BinaryKind::kSub: v = x - y; break;
        case BinaryKind::kMul: v = x * y; break;
        case BinaryKind::kDiv: v = x / y; break;
      }
      out[r * bc.cols + c] = v;
    }
  }
  return finish(op, bc.shape, std::move(out), {ta.node(), tb.node()}, [bc, kind](Node& self) {
    Node& a = *self.inputs[0];
    Node& b = *self.inputs[1];
    std::vector<double>* ga = a.requires_grad ? &a.grad_buffer() : nullptr;
    std::vector<double>* gb = b.requires_grad ? &b.grad_buffer() : nullptr;
    for (std::size_t r = 0; r < bc.rows; ++r) {
      for (std::size_t c = 0; c < bc.cols; ++c) {
        const double g = self.grad[r * bc.cols + c];
        const std::size_t ia = bc.a_index(r, c);
        const std::size_t ib = bc.b_index(r, c);
        switch (kind) {
          case BinaryKind::kAdd:
            if (ga) (*ga)[ia] += g;
            if (gb) (*gb)[ib] += g;
            break;
          case BinaryKind::kSub:
            if (ga) (*ga)[ia] += g;
            if (gb) (*gb)[ib] -= g;
            break;
          case BinaryKind::kMul:
            if (ga) (*ga)[ia] += g * b.value[ib];
            if (gb) (*gb)[ib] += g * a.value[ia];
            break;
          case BinaryKind::kDiv: {
            const double y = b.value[ib];
            if (ga) (*ga)[ia] += g / y;
            if (gb) (*gb)[ib] -= g * a.value[ia] / (y * y);
            break;
          }
        }
      }
    }
  });
}

// Element-wise unary op; derivative receives (input, output).
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& tx, const char* op, Forward f, Derivative df) {
  const Node& x = *tx.node();
  std::vector<double> out(x.value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x.value[i]);
  return finish(op, x.shape, std::move(out), {tx.node()}, [df](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(in.value[i], self.value[i]);
  });
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  const Node& a = *ta.node();
  const Node& b = *tb.node();
  if (b.shape.size() != 2) throw ShapeError("matmul: right operand must be rank 2, got " + to_string(b.shape));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (k != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ: " + to_string(a.shape) + " x " + to_string(b.shape));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.value.data(), m, k) * ConstMap(b.value.data(), k, n);
  Shape shape = a.shape.size() == 2 ? Shape{m, n} : Shape{n};
  return finish("matmul", std::move(shape), std::move(out), {ta.node(), tb.node()}, [m, k, n](Node& self) {
    Node& a = *self.inputs[0];
    Node& b = *self.inputs[1];
    ConstMap g(self.grad.data(), m, n);
    if (a.requires_grad) {
      MutMap(a.grad_buffer().data(), m, k).noalias() += g * ConstMap(b.value.data(), k, n).transpose();
    }
    if (b.requires_grad) {
      MutMap(b.grad_buffer().data(), k, n).noalias() += ConstMap(a.value.data(), m, k).transpose() * g;
    }
  });
}

Tensor linear(const Tensor& tx, const Tensor& tw, const Tensor& tb) {
  const Node& x = *tx.node();
  const Node& w = *tw.node();
  if (w.shape.size() != 2) throw ShapeError("linear: weight must be rank 2, got " + to_string(w.shape));
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  if (k != w.rows()) throw ShapeError("linear: " + to_string(x.shape) + " x " + to_string(w.shape));
  std::vector<NodePtr> inputs{tx.node(), tw.node()};
  std::vector<double> out(m * n);
  MutMap y(out.data(), m, n);
  y.noalias() = ConstMap(x.value.data(), m, k) * ConstMap(w.value.data(), k, n);
  if (tb.defined()) {
    const Node& b = *tb.node();
    if (b.value.size() != n) throw ShapeError("linear: bias " + to_string(b.shape) + " for width " + std::to_string(n));
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value.data(), n);
    inputs.push_back(tb.node());
  }
  Shape shape = x.shape.size() == 2 ? Shape{m, n} : Shape{n};
  return finish("linear", std::move(shape), std::move(out), std::move(inputs), [m, k, n](Node& self) {
    Node& x = *self.inputs[0];
    Node& w = *self.inputs[1];
    ConstMap g(self.grad.data(), m, n);
    if (x.requires_grad) MutMap(x.grad_buffer().data(), m, k).noalias() += g * ConstMap(w.value.data(), k, n).transpose();
    if (w.requires_grad) MutMap(w.grad_buffer().data(), k, n).noalias() += ConstMap(x.value.data(), m, k).transpose() * g;
    if (self.inputs.size() == 3 && self.inputs[2]->requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(self.inputs[2]->grad_buffer().data(), n) += g.colwise().sum();
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kDiv, "div"); }

Tensor neg(const Tensor& x) {
  return unary(x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary(x, "mul_scalar", [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor concat(std::span<const Tensor> parts) {
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> widths;
  std::size_t rows = 0, cols = 0, max_rank = 0;
  for (const Tensor& t : parts) {
    const Node& p = *t.node();
    if (p.value.empty()) continue;
    if (inputs.empty()) {
      rows = p.rows();
    } else if (p.rows() != rows) {
      throw ShapeError("concat: row counts differ (" + std::to_string(rows) + " vs " +
                       std::to_string(p.rows()) + ")");
    }
    max_rank = std::max(max_rank, p.shape.size());
    widths.push_back(p.cols());
    cols += p.cols();
    inputs.push_back(t.node());
  }
  if (inputs.empty()) throw ShapeError("concat: no non-empty parts");
  if (inputs.size() == 1) return Tensor(inputs.front());
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(inputs[p]->value.begin() + r * widths[p], widths[p], out.begin() + r * cols + offset);
    }
    offset += widths[p];
  }
  return finish("concat", matrix_shape(rows, cols, std::max<std::size_t>(max_rank, 1)), std::move(out),
                std::move(inputs), [rows, cols, widths](Node& self) {
                  std::size_t offset = 0;
                  for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                    Node& in = *self.inputs[p];
                    if (in.requires_grad) {
                      auto& g = in.grad_buffer();
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < widths[p]; ++c) {
                          g[r * widths[p] + c] += self.grad[r * cols + offset + c];
                        }
                      }
                    }
                    offset += widths[p];
                  }
                });
}

Tensor concat(std::initializer_list<Tensor> parts) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice(const Tensor& tx, std::size_t begin, std::size_t end) {
  const Node& x = *tx.node();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin >= end || end > cols) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for width " + std::to_string(cols));
  }
  const std::size_t width = end - begin;
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.value.begin() + r * cols + begin, width, out.begin() + r * width);
  }
  Shape shape = x.shape.size() == 2 ? Shape{rows, width} : Shape{width};
  return finish("slice", std::move(shape), std::move(out), {tx.node()}, [rows, cols, begin, width](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) g[r * cols + begin + c] += self.grad[r * width + c];
    }
  });
}

Tensor relu(const Tensor& x) {
  return unary(x, "relu", [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(x, "softplus", stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Tensor exp(const Tensor& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor softmax(const Tensor& tx) {
  const Node& x = *tx.node();
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.value.data() + r * cols;
    double* y = out.data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (y[c] = std::exp(in[c] - m));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return finish("softmax", x.shape, std::move(out), {tx.node()}, [rows, cols](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* gy = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (gy[c] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& tx) {
  const Node& x = *tx.node();
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.value.data() + r * cols;
    const double m = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - m);
    const double lse = m + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
  }
  return finish("log_softmax", x.shape, std::move(out), {tx.node()}, [rows, cols](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* gy = self.grad.data() + r * cols;
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += gy[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += gy[c] - std::exp(y[c]) * total;
    }
  });
}

Tensor sum(const Tensor& tx) {
  const Node& x = *tx.node();
  double total = 0.0;
  for (double v : x.value) total += v;
  return finish("sum", {}, {total}, {tx.node()}, [](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (double& g : in.grad_buffer()) g += self.grad[0];
  });
}

Tensor mean(const Tensor& tx) {
  const Node& x = *tx.node();
  if (x.value.empty()) throw ShapeError("mean of an empty tensor");
  double total = 0.0;
  for (double v : x.value) total += v;
  const double n = static_cast<double>(x.value.size());
  return finish("mean", {}, {total / n}, {tx.node()}, [n](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (double& g : in.grad_buffer()) g += self.grad[0] / n;
  });
}

Tensor sum_rows(const Tensor& tx) {
  const Node& x = *tx.node();
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += x.value[r * cols + c];
  }
  return finish("sum_rows", {rows, 1}, std::move(out), {tx.node()}, [rows, cols](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r];
    }
  });
}

Tensor gather(const Tensor& tx, std::span<const int> index) {
  const Node& x = *tx.node();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (index.size() != rows) {
    throw ShapeError("gather: " + std::to_string(index.size()) + " indices for " + std::to_string(rows) + " rows");
  }
  std::vector<std::size_t> flat(rows);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= cols) {
      throw ShapeError("gather: index " + std::to_string(index[r]) + " out of range for width " +
                       std::to_string(cols));
    }
    flat[r] = r * cols + static_cast<std::size_t>(index[r]);
    out[r] = x.value[flat[r]];
  }
  return finish("gather", {rows, 1}, std::move(out), {tx.node()}, [flat](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t r = 0; r < flat.size(); ++r) g[flat[r]] += self.grad[r];
  });
}

Tensor one_hot(std::span<const int> index, std::size_t n) {
  std::vector<double> out(index.size() * n, 0.0);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= 0) {
      if (static_cast<std::size_t>(index[r]) >= n) throw ShapeError("one_hot: index out of range");
      out[r * n + static_cast<std::size_t>(index[r])] = 1.0;
    }
  }
  return Tensor::from_data({index.size(), n}, std::move(out));
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih,
                const Tensor& b_hh) {
  const std::size_t hidden = h.cols();
  if (w_ih.cols() != 3 * hidden || w_hh.cols() != 3 * hidden || w_hh.rows() != hidden) {
    throw ShapeError("gru_cell: weight shapes do not match hidden size " + std::to_string(hidden));
  }
  const Tensor gi = linear(x, w_ih, b_ih);
  const Tensor gh = linear(h, w_hh, b_hh);
  const Tensor reset = sigmoid(add(slice(gi, 0, hidden), slice(gh, 0, hidden)));
  const Tensor update = sigmoid(add(slice(gi, hidden, 2 * hidden), slice(gh, hidden, 2 * hidden)));
  const Tensor candidate =
      tanh(add(slice(gi, 2 * hidden, 3 * hidden), mul(reset, slice(gh, 2 * hidden, 3 * hidden))));
  return add(candidate, mul(update, sub(h, candidate)));
}

}  // namespace rac::diff
