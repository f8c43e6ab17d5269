#include "lrd/decompose.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "lrd/error.hpp"
#include "lrd/linalg.hpp"

namespace lrd {

namespace {

void require_rank(std::size_t r, std::size_t hi, const char* what) {
    if (r < 1 || r > hi)
        throw ArgumentError(std::string(what) + " " + std::to_string(r) + " outside [1, " +
                            std::to_string(hi) + "]");
}

double sq_norm(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data()) acc += v * v;
    return acc;
}

struct TuckerState {
    Tensor u;  // [C_out x r_out]
    Tensor v;  // [C_in x r_in]
    Tensor core;
};

// Error of the orthogonal projection W ~ core x0 U x1 V, via ||W||^2 - ||core||^2.
double projection_error(double w_sq, const Tensor& core) {
    if (w_sq == 0.0) return 0.0;
    return std::sqrt(std::max(0.0, w_sq - sq_norm(core)) / w_sq);
}

}  // namespace

std::size_t dense_pair_params(std::size_t out, std::size_t in, std::size_t r, bool has_bias) {
    return r * (out + in) + (has_bias ? out : 0);
}

std::size_t pointwise_pair_params(std::size_t c_out, std::size_t c_in, std::size_t r) {
    return r * (c_out + c_in);
}

std::size_t tucker2_params(std::size_t c_out, std::size_t c_in, std::size_t kernel_area,
                           std::size_t r_in, std::size_t r_out) {
    return c_in * r_in + r_in * r_out * kernel_area + r_out * c_out;
}

DecomposedLayer keep_unchanged(Tensor w, std::optional<Tensor> bias) {
    DecomposedLayer d;
    d.factors = Unchanged{std::move(w), std::move(bias)};
    return d;
}

DecomposedLayer decompose_dense(const Tensor& w, std::optional<Tensor> bias, std::size_t r) {
    if (w.ndim() != 2) throw ArgumentError("decompose_dense: weight must be 2-D");
    require_rank(r, std::min(w.rows(), w.cols()), "decompose_dense: rank");
    if (bias && bias->size() != w.rows())
        throw ArgumentError("decompose_dense: bias length does not match output dim");
    auto f = truncated_svd(w, r);
    DecomposedLayer d;
    d.factors = DensePair{std::move(f.left), std::move(f.right), std::move(bias)};
    d.ranks = {r};
    d.recon_rel_error = reconstruction_error(d, w);
    return d;
}

DecomposedLayer decompose_pointwise(const Tensor& w, std::size_t r) {
    if (w.ndim() != 4 || w.dim(2) != 1 || w.dim(3) != 1)
        throw ArgumentError("decompose_pointwise: expected a 1x1 conv weight, got " +
                            shape_to_string(w.shape()));
    const std::size_t c_out = w.dim(0), c_in = w.dim(1);
    require_rank(r, std::min(c_out, c_in), "decompose_pointwise: rank");
    auto f = truncated_svd(w.reshaped({c_out, c_in}), r);
    DecomposedLayer d;
    d.factors = PointwisePair{f.right.reshaped({r, c_in, 1, 1}), f.left.reshaped({c_out, r, 1, 1})};
    d.ranks = {r};
    d.recon_rel_error = reconstruction_error(d, w);
    return d;
}

DecomposedLayer decompose_spatial_tucker2(const Tensor& w, std::size_t r_in, std::size_t r_out,
                                          HooiOptions opts) {
    if (w.ndim() != 4)
        throw ArgumentError("decompose_spatial_tucker2: expected a 4-D conv weight, got " +
                            shape_to_string(w.shape()));
    if (w.dim(2) < 2 || w.dim(3) < 2)
        throw ArgumentError("decompose_spatial_tucker2: kernel must be at least 2x2");
    if (!w.all_finite()) throw DataError("decompose_spatial_tucker2: non-finite weights");
    const std::size_t c_out = w.dim(0), c_in = w.dim(1);
    require_rank(r_in, c_in, "decompose_spatial_tucker2: r_in");
    require_rank(r_out, c_out, "decompose_spatial_tucker2: r_out");

    const double w_sq = sq_norm(w);
    TuckerState st;
    st.u = leading_left_singular_vectors(unfold(w, 0), r_out);
    st.v = leading_left_singular_vectors(unfold(w, 1), r_in);
    st.core = mode_mult(mode_mult(w, transpose(st.u), 0), transpose(st.v), 1);

    DecomposedLayer d;
    double err = projection_error(w_sq, st.core);
    d.hooi_errors.push_back(err);

    // Full ranks make the HOSVD exact; nothing to refine.
    const bool full = r_in == c_in && r_out == c_out;
    for (int it = 0; !full && it < opts.max_iters; ++it) {
        Tensor y = mode_mult(w, transpose(st.v), 1);
        st.u = leading_left_singular_vectors(unfold(y, 0), r_out);
        Tensor z = mode_mult(w, transpose(st.u), 0);
        st.v = leading_left_singular_vectors(unfold(z, 1), r_in);
        st.core = mode_mult(z, transpose(st.v), 1);
        const double next = projection_error(w_sq, st.core);
        d.hooi_errors.push_back(next);
        const double improvement = err - next;
        err = next;
        if (improvement < opts.tol) break;
    }

    d.factors = Tucker2{transpose(st.v).reshaped({r_in, c_in, 1, 1}), std::move(st.core),
                        st.u.reshaped({c_out, r_out, 1, 1})};
    d.ranks = {r_in, r_out};
    d.recon_rel_error = reconstruction_error(d, w);
    return d;
}

Tensor reconstruct(const DecomposedLayer& d) {
    struct Visitor {
        Tensor operator()(const Unchanged& u) const { return u.weight; }
        Tensor operator()(const DensePair& p) const { return gemm(p.a, p.b); }
        Tensor operator()(const PointwisePair& p) const {
            const std::size_t r = p.first.dim(0), c_in = p.first.dim(1), c_out = p.second.dim(0);
            Tensor m = gemm(p.second.reshaped({c_out, r}), p.first.reshaped({r, c_in}));
            return m.reshaped({c_out, c_in, 1, 1});
        }
        Tensor operator()(const Tucker2& t) const {
            const std::size_t r_in = t.first.dim(0), c_in = t.first.dim(1);
            const std::size_t c_out = t.last.dim(0), r_out = t.last.dim(1);
            Tensor u = t.last.reshaped({c_out, r_out});
            Tensor v = transpose(t.first.reshaped({r_in, c_in}));
            return mode_mult(mode_mult(t.core, u, 0), v, 1);
        }
    };
    return std::visit(Visitor{}, d.factors);
}

double reconstruction_error(const DecomposedLayer& d, const Tensor& original) {
    return relative_error(reconstruct(d), original);
}

std::size_t param_count(const DecomposedLayer& d) {
    struct Visitor {
        std::size_t operator()(const Unchanged& u) const {
            return u.weight.size() + (u.bias ? u.bias->size() : 0);
        }
        std::size_t operator()(const DensePair& p) const {
            return p.a.size() + p.b.size() + (p.bias ? p.bias->size() : 0);
        }
        std::size_t operator()(const PointwisePair& p) const {
            return p.first.size() + p.second.size();
        }
        std::size_t operator()(const Tucker2& t) const {
            return t.first.size() + t.core.size() + t.last.size();
        }
    };
    return std::visit(Visitor{}, d.factors);
}

std::vector<DecomposedLayer> run_decompositions(
    const std::vector<std::function<DecomposedLayer()>>& jobs, unsigned workers) {
    std::vector<DecomposedLayer> results(jobs.size());
    if (jobs.empty()) return results;
    workers = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(jobs.size()));

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                results[i] = jobs[i]();
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(jobs.size());
                return;
            }
        }
    };

    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

}  // namespace lrd
