#pragma once

#include <cstddef>

#include "docentr/numerics/graph.hpp"

// Differentiable operations. Every op records its result on the graph together
// with the backward rule for its inputs.
//
// Broadcasting is limited to what the transformer needs: matmul broadcasts
// leading batch dimensions from size 1, and add() accepts a right operand
// whose shape equals a trailing suffix of the left operand's shape.

namespace docentr::numerics {

enum class Transpose { No, Yes };

/// Batched matrix product a[..,m,k] . b[..,k,n] (or b[..,n,k] transposed).
template <typename T>
Var matmul(Graph<T>& g, Var a, Var b, Transpose transpose_b = Transpose::No);

/// Numerically stable softmax along `axis` (max subtracted before exp).
template <typename T>
Var softmax(Graph<T>& g, Var x, std::size_t axis);

/// Row-wise layer normalization over the last dimension with the biased
/// (population) variance.
template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta, double eps);

/// Exact GELU, x * Phi(x) with Phi computed through erf.
template <typename T>
Var gelu(Graph<T>& g, Var x);

template <typename T>
Var sigmoid(Graph<T>& g, Var x);

/// x[.., in] . w[in, out] + b[out]
template <typename T>
Var linear(Graph<T>& g, Var x, Var w, Var b);

template <typename T>
Var add(Graph<T>& g, Var a, Var b);

/// Elementwise product of equally shaped operands.
template <typename T>
Var mul(Graph<T>& g, Var a, Var b);

template <typename T>
Var scale(Graph<T>& g, Var x, double factor);

/// Sum of all elements as a scalar.
template <typename T>
Var sum(Graph<T>& g, Var x);

/// mean((pred - target)^2) over every element; the target carries no gradient.
template <typename T>
Var mse(Graph<T>& g, Var pred, const BasicTensor<T>& target);

/// Slices the q (part 0), k (1) or v (2) block out of a fused projection
/// [B, N, 3D] and lays it out per head as [B*H, N, D/H].
template <typename T>
Var split_heads(Graph<T>& g, Var qkv, std::size_t part, std::size_t heads);

/// Inverse layout of split_heads for a single block: [B*H, N, d] -> [B, N, H*d].
template <typename T>
Var merge_heads(Graph<T>& g, Var x, std::size_t heads);

}  // namespace docentr::numerics
