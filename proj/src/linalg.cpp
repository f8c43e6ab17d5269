#include "lrd/linalg.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "lrd/error.hpp"

namespace lrd {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

ConstRowMap as_eigen(const Tensor& a) {
    return ConstRowMap(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                       static_cast<Eigen::Index>(a.cols()));
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    RowMap(t.data().data(), m.rows(), m.cols()) = m;
    return t;
}

// [pre, n, post] view of a tensor around `mode`.
struct ModeSplit {
    std::size_t pre = 1, n = 1, post = 1;
};

ModeSplit split_at(const Shape& shape, std::size_t mode) {
    ModeSplit s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i < mode) s.pre *= shape[i];
        else if (i == mode) s.n = shape[i];
        else s.post *= shape[i];
    }
    return s;
}

void require_matrix(const Tensor& a, const char* who) {
    if (a.ndim() != 2)
        throw ArgumentError(std::string(who) + ": expected a 2-D tensor, got " +
                            shape_to_string(a.shape()));
}

}  // namespace

Tensor unfold(const Tensor& t, std::size_t mode) {
    if (mode >= t.ndim())
        throw ArgumentError("unfold: mode " + std::to_string(mode) + " out of range for " +
                            shape_to_string(t.shape()));
    auto [pre, n, post] = split_at(t.shape(), mode);
    Tensor m({n, pre * post});
    auto src = t.data();
    auto dst = m.data();
    for (std::size_t a = 0; a < pre; ++a)
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(src.begin() + (a * n + i) * post, post,
                        dst.begin() + i * pre * post + a * post);
    return m;
}

Tensor fold(const Tensor& m, std::size_t mode, const Shape& shape) {
    if (mode >= shape.size())
        throw ArgumentError("fold: mode " + std::to_string(mode) + " out of range for " +
                            shape_to_string(shape));
    auto [pre, n, post] = split_at(shape, mode);
    if (m.ndim() != 2 || m.rows() != n || m.cols() != pre * post)
        throw ArgumentError("fold: matrix " + shape_to_string(m.shape()) +
                            " incompatible with shape " + shape_to_string(shape));
    Tensor t(shape);
    auto src = m.data();
    auto dst = t.data();
    for (std::size_t a = 0; a < pre; ++a)
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(src.begin() + i * pre * post + a * post, post,
                        dst.begin() + (a * n + i) * post);
    return t;
}

SvdResult svd(const Tensor& a) {
    require_matrix(a, "svd");
    if (!a.all_finite()) throw ArgumentError("svd: input has non-finite entries");
    const std::size_t m = a.rows(), n = a.cols(), k = std::min(m, n);

    Eigen::BDCSVD<Eigen::MatrixXd> dec(Eigen::MatrixXd(as_eigen(a)),
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success) throw NumericError("svd: did not converge");

    Eigen::MatrixXd u = dec.matrixU();
    Eigen::MatrixXd v = dec.matrixV();
    for (std::size_t j = 0; j < k; ++j) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
            double mag = std::abs(u(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (u(arg, j) < 0.0) {
            u.col(j) *= -1.0;
            v.col(j) *= -1.0;
        }
    }

    SvdResult out;
    out.u = from_eigen(u);
    out.vt = from_eigen(v.transpose());
    out.s.resize(k);
    for (std::size_t i = 0; i < k; ++i) out.s[i] = std::max(0.0, dec.singularValues()(i));
    return out;
}

std::vector<double> singular_values(const Tensor& a) {
    require_matrix(a, "singular_values");
    if (!a.all_finite()) throw ArgumentError("singular_values: input has non-finite entries");
    Eigen::BDCSVD<Eigen::MatrixXd> dec(Eigen::MatrixXd(as_eigen(a)));
    if (dec.info() != Eigen::Success) throw NumericError("singular_values: did not converge");
    const auto& s = dec.singularValues();
    return {s.data(), s.data() + s.size()};
}

LowRankFactors truncated_svd(const Tensor& a, std::size_t r) {
    require_matrix(a, "truncated_svd");
    const std::size_t m = a.rows(), n = a.cols();
    if (r < 1 || r > std::min(m, n))
        throw ArgumentError("truncated_svd: rank " + std::to_string(r) + " outside [1, " +
                            std::to_string(std::min(m, n)) + "]");
    SvdResult full = svd(a);
    LowRankFactors f{Tensor({m, r}), Tensor({r, n})};
    for (std::size_t j = 0; j < r; ++j) {
        const double root = std::sqrt(full.s[j]);
        for (std::size_t i = 0; i < m; ++i) f.left(i, j) = full.u(i, j) * root;
        for (std::size_t c = 0; c < n; ++c) f.right(j, c) = full.vt(j, c) * root;
    }
    return f;
}

Tensor leading_left_singular_vectors(const Tensor& a, std::size_t r) {
    require_matrix(a, "leading_left_singular_vectors");
    const std::size_t m = a.rows();
    if (r < 1 || r > m)
        throw ArgumentError("leading_left_singular_vectors: rank " + std::to_string(r) +
                            " outside [1, " + std::to_string(m) + "]");
    if (!a.all_finite()) throw ArgumentError("leading_left_singular_vectors: non-finite input");

    // Wide unfoldings are common here (C x C*k*k); the m x m Gram matrix keeps
    // the eigensolve small. Eigenvectors are orthonormal even for repeated or
    // zero eigenvalues, so full-rank projections stay exact.
    auto A = as_eigen(a);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(A.rows(), A.rows());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(A);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success)
        throw NumericError("leading_left_singular_vectors: eigensolver did not converge");
    // Ascending eigenvalues: take the trailing r columns, largest first.
    Tensor u({m, r});
    for (std::size_t j = 0; j < r; ++j) {
        const Eigen::Index col = static_cast<Eigen::Index>(m - 1 - j);
        for (std::size_t i = 0; i < m; ++i)
            u(i, j) = eig.eigenvectors()(static_cast<Eigen::Index>(i), col);
    }
    return u;
}

Tensor mode_mult(const Tensor& t, const Tensor& m, std::size_t mode) {
    require_matrix(m, "mode_mult");
    if (mode >= t.ndim())
        throw ArgumentError("mode_mult: mode " + std::to_string(mode) + " out of range for " +
                            shape_to_string(t.shape()));
    if (m.cols() != t.dim(mode))
        throw ArgumentError("mode_mult: matrix " + shape_to_string(m.shape()) +
                            " cannot contract mode " + std::to_string(mode) + " of " +
                            shape_to_string(t.shape()));
    auto [pre, n, post] = split_at(t.shape(), mode);
    Shape out_shape = t.shape();
    out_shape[mode] = m.rows();
    Tensor out(out_shape);
    const std::size_t rows = m.rows();
    for (std::size_t a = 0; a < pre; ++a)
        gemm_into(m.data().data(), t.data().data() + a * n * post,
                  out.data().data() + a * rows * post, rows, n, post);
    return out;
}

void gemm_into(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
    const auto M = static_cast<Eigen::Index>(m);
    const auto K = static_cast<Eigen::Index>(k);
    const auto N = static_cast<Eigen::Index>(n);
    RowMap(c, M, N).noalias() = ConstRowMap(a, M, K) * ConstRowMap(b, K, N);
}

Tensor gemm(const Tensor& a, const Tensor& b) {
    require_matrix(a, "gemm");
    require_matrix(b, "gemm");
    if (a.cols() != b.rows())
        throw ArgumentError("gemm: shape mismatch " + shape_to_string(a.shape()) + " * " +
                            shape_to_string(b.shape()));
    Tensor c({a.rows(), b.cols()});
    gemm_into(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
    return c;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    Tensor t({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

}  // namespace lrd
