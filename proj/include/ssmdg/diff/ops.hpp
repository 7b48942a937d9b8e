#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ssmdg/diff/tensor.hpp"

namespace ssmdg::diff {

// Kernel set. Shapes are row-major; "rows" means the leading axis of a
// rank-2 tensor. Every kernel records a graph node when an operand
// requires grad and grad mode is enabled.

/// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
/// Same-shape sum, or [n,m] + [m] row-bias sum.
Tensor add(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
/// Rank-2 inputs with equal row counts -> [n, sum of cols].
Tensor concat_last_axis(std::span<const Tensor> parts);
/// Max-shifted softmax over the last axis of a rank-1 or rank-2 tensor.
Tensor softmax_last_axis(const Tensor& x);
/// Natural log; throws DomainError for non-positive entries.
Tensor log(const Tensor& x);
/// x^exponent for x > 0.
Tensor pow_scalar(const Tensor& x, Real exponent);
/// Mean of all entries -> [1].
Tensor mean_all(const Tensor& x);
/// Sum of all entries -> [1].
Tensor sum_all(const Tensor& x);
/// Row-wise squared Euclidean distance: [n,d],[n,d] -> [n]; [d],[d] -> [1].
Tensor sq_l2_dist(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
/// Picks x[i, index[i]] for a [n,c] tensor -> [n]. Indices carry no gradient.
Tensor gather_index(const Tensor& x, std::span<const std::size_t> index);
/// max(x, floor); gradient passes only where x > floor.
Tensor clamp_min(const Tensor& x, Real floor);
/// Rows of a rank-2 tensor (or entries of a rank-1 tensor) in `rows` order.
Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Generic dispatcher over the kernel set. `scalar_arg` feeds pow_scalar,
/// scale and clamp_min; `index_arg` feeds gather_index and select_rows.
Tensor forward_op(OpKind kind, std::span<const Tensor> operands,
                  std::optional<Real> scalar_arg = std::nullopt,
                  std::span<const std::size_t> index_arg = {});

}  // namespace ssmdg::diff
