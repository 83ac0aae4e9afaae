#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bimind/numerics/autodiff.hpp"

namespace bimind::num {

/// Boolean mask over the last axis. Either one entry per column (shared by
/// every row) or one entry per element. Nonzero means "keep".
using Mask = std::vector<std::uint8_t>;

// Binary elementwise ops. `b` may broadcast against `a` as a 1 x n row, an
// m x 1 column, or a 1 x 1 scalar; `add` and `mul` also accept the broadcast
// operand on the left.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var abs(Var a);
/// max(a, floor); gradient is zero where the floor is active.
Var clamp_min(Var a, double floor);

/// Row-wise softmax with max subtraction. Masked entries are exactly 0.
/// Throws DegenerateInputError for a row with no unmasked entry.
Var softmax_rows(Var x, const Mask* mask = nullptr);
Var log_softmax_rows(Var x);

/// Concatenation along the last axis; every input must have the same rows.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, std::size_t start, std::size_t count);

/// Column-wise max over the unmasked rows (mask has one entry per row),
/// returning 1 x n. Ties go to the lowest row index, and so does the gradient.
Var masked_max_rows(Var x, const Mask& row_mask);

/// axis 0 reduces rows (-> 1 x n); axis 1 reduces columns (-> m x 1).
Var mean(Var x, int axis);
Var sum_all(Var x);
Var mean_all(Var x);

/// Rows of `table` selected by `ids` (-> ids.size() x cols).
Var gather_rows(Var table, std::span<const std::size_t> ids);
/// Entry `indices[r]` of each row r (-> m x 1).
Var pick(Var x, std::span<const std::size_t> indices);

/// Normalizes each row to zero mean and unit variance, then applies the
/// 1 x n scale `gamma` and shift `beta`.
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

/// Inverted dropout: kept entries are scaled by 1/(1-p). Identity when
/// `training` is false or p == 0.
Var dropout(Var x, double p, std::mt19937_64& rng, bool training);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

// Plain matrix kernels shared with the model code that needs them without a tape.
// c (m x n) += a (m x k) * b (k x n), with optional transposition of a or b.
void gemm_accumulate(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b, Tensor& c);
Tensor matmul_values(const Tensor& a, const Tensor& b);

} // namespace bimind::num
