#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lrd/arch.hpp"
#include "lrd/tensor.hpp"

namespace lrd {

class Checkpoint;

enum class RankMethod { pr, vbmf };

const char* method_name(RankMethod m);
RankMethod parse_method(const std::string& s);

/// Rank-selection and layer-selection settings. The epoch and learning-rate
/// fields are carried along as metadata only.
struct CompressionConfig {
    RankMethod method = RankMethod::pr;
    double weakening = 0.0;  // VBMF only, in [0, 1]
    double target_ratio = 3.0;
    double final_dense_ratio = 1.3;
    std::size_t rank_quantum = 32;
    CompressionMode mode{ModeKind::mode3, {}, {}};
    int n1_epochs = 45;
    int n2_epochs = 45;
    double lr_max = 0.02;

    /// Throws ConfigError when a field is out of range.
    void validate() const;

    /// PR, Mode3, 3x on convs, 1.3x on the final dense layer, ranks in multiples of 32.
    static CompressionConfig resnet50_preset() { return {}; }

    friend bool operator==(const CompressionConfig&, const CompressionConfig&) = default;
};

enum class Decomposition { unchanged, dense_pair, pointwise_pair, tucker2 };

const char* decomposition_name(Decomposition d);
Decomposition parse_decomposition(const std::string& s);

struct PlanEntry {
    std::string layer;
    Decomposition decomposition = Decomposition::unchanged;
    /// {r} for pairs, {R_in, R_out} for Tucker-2; empty when unchanged.
    std::vector<std::size_t> raw_ranks;
    std::vector<std::size_t> ranks;
    std::int64_t params_before = 0, params_after = 0;
    std::int64_t macs_before = 0, macs_after = 0;

    friend bool operator==(const PlanEntry&, const PlanEntry&) = default;
};

struct PlanTotals {
    std::int64_t params_before = 0, params_after = 0;
    std::int64_t macs_before = 0, macs_after = 0;
    friend bool operator==(const PlanTotals&, const PlanTotals&) = default;
};

struct RankPlan {
    std::string arch_name;
    CompressionConfig config;
    std::vector<PlanEntry> entries;  // every conv/dense layer, arch order
    PlanTotals totals;
    double achieved_ratio = 1.0;
    std::vector<std::string> warnings;

    const PlanEntry* find(const std::string& layer) const;
    std::size_t decomposed_count() const;
    /// Recomputes totals and achieved_ratio from the entries.
    void recompute_totals();

    friend bool operator==(const RankPlan& a, const RankPlan& b) {
        return a.arch_name == b.arch_name && a.config == b.config && a.entries == b.entries &&
               a.totals == b.totals && a.achieved_ratio == b.achieved_ratio;
    }
};

/// Integer rounding used by all rank rules: halves go up.
std::int64_t round_half_up(double x);

/// r = clamp(round(m n / (c (m + n))), 1, min(m, n)).
std::size_t pr_rank_dense(std::size_t m, std::size_t n, double c);

/// Tucker-2 ranks with r_out / r_in = c_out / c_in meeting the target ratio.
/// Returns {r_in, r_out}.
std::pair<std::size_t, std::size_t> pr_ranks_tucker2(std::size_t c_out, std::size_t c_in,
                                                     std::size_t k, double c);
/// Same, for an arbitrary kernel area kH*kW.
std::pair<std::size_t, std::size_t> pr_ranks_tucker2_area(std::size_t c_out, std::size_t c_in,
                                                          std::size_t kernel_area, double c);

// EVBMF ------------------------------------------------------------------------

struct VbmfEstimate {
    std::size_t rank = 0;
    double sigma2 = 0.0;       // estimated noise variance
    double lower_bound = 0.0;  // search interval for sigma2
    double upper_bound = 0.0;
    double threshold = 0.0;    // singular values above this are kept
};

/// Empirical VB free energy (up to an additive constant) of the noise variance,
/// for singular values `s` of an L x M matrix (L <= M).
double evb_free_energy(double sigma2, std::span<const double> s, std::size_t L, std::size_t M,
                       double residual = 0.0);

/// Full EVBMF estimate. The matrix is transposed internally when rows > cols.
VbmfEstimate evbmf(const Tensor& matrix);
VbmfEstimate evbmf_from_singular_values(std::span<const double> s, std::size_t L, std::size_t M);
std::size_t vbmf_rank(const Tensor& matrix);

/// Moves the VBMF rank toward full rank: round(r + w (r_max - r)).
std::size_t apply_weakening(std::size_t r_vbmf, std::size_t r_max, double w);

/// Nearest multiple of q (ties up), clamped to [min(q, r_max), r_max].
std::size_t quantize_rank(std::size_t r, std::size_t q, std::size_t r_max);

/// Chooses ranks for every layer the mode selects. VBMF needs `weights`.
RankPlan plan_ranks(const ArchDescriptor& arch, const CompressionConfig& cfg,
                    const Checkpoint* weights = nullptr);

/// Predicted params/MACs of a decomposition of `layer` at `ranks`.
std::int64_t predicted_params(const LayerSpec& layer, Decomposition d,
                              std::span<const std::size_t> ranks);
std::int64_t predicted_macs(const LayerSpec& layer, Decomposition d,
                            std::span<const std::size_t> ranks);

/// Template used for a layer: Tucker-2 for k x k convs, pairs otherwise.
Decomposition decomposition_for(const LayerSpec& layer);

}  // namespace lrd
