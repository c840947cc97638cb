// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. All of them record onto the tape when
// grad mode is on and at least one input requires a gradient.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adaptqa/tensor.h"

namespace adaptqa {

class Rng;

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[m x n] + bias[n], broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& x);
double gelu_value(double x);

/// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Row-wise softmax over a [m x n] score matrix where columns with
/// `excluded[j] == true` get exactly zero weight. A row with every column
/// excluded yields all zeros.
Tensor masked_softmax_rows(const Tensor& scores, const std::vector<bool>& excluded);

/// Normalizes over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-12);

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Row lookup: result[i] = table[ids[i]]. Gradient scatters back only into
/// the referenced rows.
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean over rows of -log softmax(logits[i])[targets[i]]. When `allowed` is
/// non-empty, only columns with allowed[j] == true take part in each softmax.
Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets,
                          const std::vector<bool>& allowed = {});

/// Inverted dropout. Identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

}  // namespace adaptqa
