#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "tcape/graph.hpp"
#include "tcape/rng.hpp"

// Differentiable operations over Graph nodes. All ops validate shapes and
// throw ShapeError naming the offending shapes.
namespace tcape::ops {

enum class Unary { gelu, sigmoid, exp, abs, sqrt_signed, log };
enum class Padding { same, causal, valid };

Var matmul(Var a, Var b);
/// a · bᵀ without materialising the transpose.
Var matmul_bt(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// x[m×n] + bias[n] broadcast over rows.
Var add_row(Var x, Var bias);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
/// s[1] · x.
Var scale_by(Var x, Var s);
Var unary(Var x, Unary kind);

/// x·W + b, W[in×out], b[out].
Var linear(Var x, Var weight, Var bias);

/// Row-wise softmax. If `mask` is given (row-major, same size as x), entries
/// with mask==0 are treated as −∞ and produce exactly 0.
Var softmax_rows(Var x, const std::vector<unsigned char>* mask = nullptr);
Var log_softmax_rows(Var x);

/// x[T×Cin] with kernel[K×Cin×Cout] and bias[Cout]; output T×Cout for
/// same/causal padding, (T−K+1)×Cout for valid.
Var conv1d(Var x, Var kernel, Var bias, Padding padding);

/// Inverted dropout. Identity (same node) when !training or rate == 0.
Var dropout(Var x, double rate, bool training, CounterRng& rng);

/// Rows scaled to unit L2 norm; all-zero rows stay zero.
Var l2_normalize_rows(Var x);
Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);

Var sum(Var x);
Var mean(Var x);
Var mean_rows(Var x);
/// Mean of the k largest entries of a flat score vector.
Var topk_mean(Var x, std::size_t k);
/// Picks x(r, c) for each pair into a flat vector.
Var gather(Var x, std::vector<std::pair<std::size_t, std::size_t>> at);
/// Stacks equally sized flat vectors into a matrix.
Var stack_rows(const std::vector<Var>& rows);
Var reshape(Var x, Tensor::Shape dims);
/// Column j of a matrix as a flat vector.
Var column(Var x, std::size_t j);

// Plain (non-graph) kernels reused by the ops and by inference code.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_bt(const Tensor& a, const Tensor& b);
double apply_unary(Unary kind, double v);
double unary_derivative(Unary kind, double v, double y);

}  // namespace tcape::ops
