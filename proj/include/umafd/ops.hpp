#pragma once

#include <array>
#include <span>
#include <vector>

#include "umafd/autograd.hpp"

/// Differentiable primitives. Shapes follow a leading batch axis N; feature maps
/// are (N, C, T, H, W).
namespace umafd::ops {

Var constant(Tensor t);
/// Same value, cut from the graph.
Var detach(const Var& x);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var relu(const Var& x);
// slope must be > 0 (backward reads the sign of the output)
Var leaky_relu(const Var& x, double slope);
Var sum(const Var& x);
Var mean(const Var& x);

Var conv3d(const Var& x, const Var& weight, const Var& bias, std::array<std::size_t, 3> stride);

/// (N, C, ...) -> (N, C)
Var global_avg_pool(const Var& x);
Var global_max_pool(const Var& x);

/// (N, in) x (out, in) + (out) -> (N, out)
Var linear(const Var& x, const Var& weight, const Var& bias);
Var concat_cols(const Var& a, const Var& b);
/// (n1, ...) ++ (n2, ...) -> (n1 + n2, ...)
Var concat_rows(const Var& a, const Var& b);
Var softmax_rows(const Var& x);
/// (N, K) -> (N)
Var column(const Var& x, std::size_t k);

/// Per-sample a_r * r + a_d * d with coeffs (N, 2). Evaluated as d + a_r (r - d),
/// so equal inputs pass through bit-exactly. Rows of coeffs are assumed to sum to
/// one; only a_r is read, and the derivative is that of this form.
Var convex_mix(const Var& r, const Var& d, const Var& coeffs);

/// Per-sample smoothed Euclidean norm sqrt(sum x^2 + eps): (N, ...) -> (N)
Var row_norms(const Var& x, double eps);

/// Identity on values; multiplies the incoming derivative by -lambda.
Var grl(const Var& x, double lambda);

/// k single-element vars -> (k)
Var stack_scalars(const std::vector<Var>& xs);
/// Same-size inputs -> (1)
Var dot(const Var& a, const Var& b);

}  // namespace umafd::ops
