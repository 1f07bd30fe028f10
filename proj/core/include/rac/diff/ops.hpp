#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rac/diff/tensor.hpp"

namespace rac::diff {

// Differentiable primitives. Every primitive checks its output for NaN/Inf and
// throws NonFiniteError naming the primitive; shape violations throw ShapeError.
//
// Binary element-wise ops broadcast in two dimensions: after viewing both
// operands as matrices, each dimension must match or be 1.

Tensor matmul(const Tensor& a, const Tensor& b);
// x w + b in one node; b is [out] and may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);

// Joins along the last axis. Zero-width parts are skipped.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
// Columns [begin, end) of the last axis.
Tensor slice(const Tensor& x, std::size_t begin, std::size_t end);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

// Row-wise over the last axis.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

// Sum / mean of every element, returned as a scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Sum over the last axis, one column per row: [r, c] -> [r, 1].
Tensor sum_rows(const Tensor& x);

// Picks x[r, index[r]] for each row: [r, c] -> [r, 1].
Tensor gather(const Tensor& x, std::span<const int> index);

// Constant [rows, n] one-hot matrix; negative indices yield an all-zero row.
Tensor one_hot(std::span<const int> index, std::size_t n);

// Gated recurrent unit with gate order (reset, update, candidate):
//   r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
//   z  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
//   n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
//   h' = (1 - z) * n + z * h
// w_ih is [in, 3H], w_hh is [H, 3H], biases are [3H].
Tensor gru_cell(const Tensor& x, const Tensor& h, const Tensor& w_ih, const Tensor& w_hh,
                const Tensor& b_ih, const Tensor& b_hh);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator+(const Tensor& x, double s) { return add_scalar(x, s); }
inline Tensor operator+(double s, const Tensor& x) { return add_scalar(x, s); }
inline Tensor operator-(const Tensor& x, double s) { return add_scalar(x, -s); }
inline Tensor operator*(const Tensor& x, double s) { return mul_scalar(x, s); }
inline Tensor operator*(double s, const Tensor& x) { return mul_scalar(x, s); }

}  // namespace rac::diff
