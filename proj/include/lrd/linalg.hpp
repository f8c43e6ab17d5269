#pragma once

#include <cstddef>
#include <vector>

#include "lrd/tensor.hpp"

namespace lrd {

struct SvdResult {
    Tensor u;               // [m x k], orthonormal columns
    std::vector<double> s;  // k = min(m, n), non-increasing, >= 0
    Tensor vt;              // [k x n], orthonormal rows
};

/// Two factors whose product approximates a matrix: left [m x r], right [r x n].
struct LowRankFactors {
    Tensor left;
    Tensor right;
};

/// Mode-n matricization: rows index `mode`, columns run over the remaining
/// modes in ascending order (last mode fastest).
Tensor unfold(const Tensor& t, std::size_t mode);

/// Inverse of unfold for a tensor of the given shape.
Tensor fold(const Tensor& m, std::size_t mode, const Shape& shape);

/// Thin SVD with a deterministic sign convention: the largest-magnitude
/// entry of each column of u (first one on ties) is non-negative.
SvdResult svd(const Tensor& a);

/// Singular values only, non-increasing.
std::vector<double> singular_values(const Tensor& a);

/// Best rank-r approximation split as left = U_r diag(sqrt(s)), right = diag(sqrt(s)) V_r^T.
LowRankFactors truncated_svd(const Tensor& a, std::size_t r);

/// Leading r left singular vectors as an [m x r] matrix.
Tensor leading_left_singular_vectors(const Tensor& a, std::size_t r);

/// t x_mode m: contracts m.cols against t.shape[mode].
Tensor mode_mult(const Tensor& t, const Tensor& m, std::size_t mode);

/// Dense product a * b. Single-threaded with a fixed reduction order, so
/// repeated calls on the same inputs are bit-identical.
Tensor gemm(const Tensor& a, const Tensor& b);

/// Row-major C[m x n] = A[m x k] * B[k x n] over raw buffers. Backs gemm and the
/// convolution kernels.
void gemm_into(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);

Tensor transpose(const Tensor& a);

}  // namespace lrd
