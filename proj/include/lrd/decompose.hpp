#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lrd/tensor.hpp"

namespace lrd {

/// Layer kept as-is.
struct Unchanged {
    Tensor weight;
    std::optional<Tensor> bias;
};

/// Dense [out x in] split into b: [r x in] (applied first) and a: [out x r].
/// The bias rides on the output-side layer.
struct DensePair {
    Tensor a;
    Tensor b;
    std::optional<Tensor> bias;
};

/// 1x1 conv split into two 1x1 convs: first [r x C_in x 1 x 1], second [C_out x r x 1 x 1].
/// The original stride belongs to the second conv.
struct PointwisePair {
    Tensor first;
    Tensor second;
};

/// k x k conv split into 1x1 (C_in -> R_in), k x k core (R_in -> R_out, original
/// stride and padding), 1x1 (R_out -> C_out).
struct Tucker2 {
    Tensor first;  // [R_in x C_in x 1 x 1]
    Tensor core;   // [R_out x R_in x kH x kW]
    Tensor last;   // [C_out x R_out x 1 x 1]
};

using LayerFactors = std::variant<Unchanged, DensePair, PointwisePair, Tucker2>;

struct DecomposedLayer {
    LayerFactors factors;
    double recon_rel_error = 0.0;
    /// {r} for pairs, {R_in, R_out} for Tucker-2, empty when unchanged.
    std::vector<std::size_t> ranks;
    /// Relative error after HOSVD init (index 0) and after each HOOI sweep.
    std::vector<double> hooi_errors;
};

struct HooiOptions {
    int max_iters = 50;
    double tol = 1e-6;
};

DecomposedLayer decompose_dense(const Tensor& w, std::optional<Tensor> bias, std::size_t r);
DecomposedLayer decompose_pointwise(const Tensor& w, std::size_t r);
DecomposedLayer decompose_spatial_tucker2(const Tensor& w, std::size_t r_in, std::size_t r_out,
                                          HooiOptions opts = {});
DecomposedLayer keep_unchanged(Tensor w, std::optional<Tensor> bias = std::nullopt);

/// Rebuild the approximated weight in the original layer shape.
Tensor reconstruct(const DecomposedLayer& d);

/// Recompute ||W - reconstruct(d)||_F / ||W||_F.
double reconstruction_error(const DecomposedLayer& d, const Tensor& original);

/// Weight (and bias) element count of all factors.
std::size_t param_count(const DecomposedLayer& d);

/// Closed-form parameter counts of each template.
std::size_t dense_pair_params(std::size_t out, std::size_t in, std::size_t r, bool has_bias);
std::size_t pointwise_pair_params(std::size_t c_out, std::size_t c_in, std::size_t r);
std::size_t tucker2_params(std::size_t c_out, std::size_t c_in, std::size_t kernel_area,
                           std::size_t r_in, std::size_t r_out);

/// Runs `jobs` on a pool of `workers` threads pulling from a shared index.
/// Results land at their job index, so output order is independent of the
/// worker count. The first exception thrown by any job is rethrown.
std::vector<DecomposedLayer> run_decompositions(
    const std::vector<std::function<DecomposedLayer()>>& jobs, unsigned workers);

}  // namespace lrd
