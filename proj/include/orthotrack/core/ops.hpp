#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "orthotrack/core/tensor.hpp"

namespace orthotrack {

// Matrix operations work on rank-2 tensors unless noted.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// x[n×m] + row[1×m] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& row);
/// Row i multiplied by the constant weights[i].
Tensor scale_rows(const Tensor& x, std::span<const double> weights);

/// Row-wise softmax stabilized by row-max subtraction. NaN input throws NumericError.
Tensor softmax_rows(const Tensor& x);
/// Row-wise normalization with affine gamma/beta of shape [1×m].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Rows [begin,end) × cols [col_begin,col_end).
Tensor block(const Tensor& x, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
             std::size_t col_end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor index_cols(const Tensor& x, std::span<const std::size_t> cols);
/// Places row i of x at output row rows[i] of a zero [total×m] matrix.
Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t total);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, Shape shape);

} // namespace orthotrack
