#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lrd/arch.hpp"
#include "lrd/decompose.hpp"
#include "lrd/rank_select.hpp"
#include "lrd/tensor.hpp"

namespace lrd {

/// x: [N x C_in x H x W], w: [C_out x C_in x kH x kW] -> [N x C_out x H' x W'].
/// im2col followed by one GEMM per image; no bias.
Tensor conv_forward(const ConvSpec& conv, const Tensor& w, const Tensor& x);

/// x: [N x in], w: [out x in] -> [N x out].
Tensor dense_forward(const Tensor& w, const std::optional<Tensor>& bias, const Tensor& x);

/// Runs `d` as the layer chain replacing `layer` (or the layer itself when unchanged).
Tensor chain_forward(const LayerSpec& layer, const DecomposedLayer& d, const Tensor& x);

/// Conv specs of each stage of a decomposed conv, in execution order.
std::vector<ConvSpec> chain_conv_specs(const ConvSpec& original, const DecomposedLayer& d);

/// True when every rank equals the full dimension it truncates.
bool is_full_rank(const LayerSpec& layer, const DecomposedLayer& d);

/// Median wall time in ns of `reps` calls after `warmup` untimed calls.
std::int64_t median_time_ns(const std::function<void()>& fn, int reps, int warmup);

struct BenchResult {
    std::string layer_name;
    std::int64_t original_time_ns = 0;
    std::int64_t decomposed_time_ns = 0;
    double speedup = 0.0;
    int reps = 0;
    Shape input_shape;
    double checksum = 0.0;             // sum of original outputs
    double decomposed_checksum = 0.0;  // sum of chain outputs
    /// |checksum - decomposed_checksum| / sum |y|; recorded for lossy chains.
    double checksum_rel_diff = 0.0;
    bool full_rank = false;
};

struct BenchOptions {
    int reps = 20;
    int warmup = 3;
    std::size_t batch = 1;
    std::uint64_t seed = 0;
};

/// Times the original layer against its decomposed chain on one random input.
/// Full-rank chains must reproduce the output checksum within 1e-3 relative.
BenchResult bench_layer(const LayerSpec& layer, const Tensor& w, const std::optional<Tensor>& bias,
                        const DecomposedLayer& chain, const Shape& input_shape, int reps,
                        int warmup, std::uint64_t seed = 0);

/// Layer input shape at the given batch size, from the layer's reference dims.
Shape layer_input_shape(const LayerSpec& layer, std::size_t batch);

struct MachineInfo {
    unsigned hardware_threads = 0;
    std::string compiler;
    std::string timer;
    friend bool operator==(const MachineInfo&, const MachineInfo&) = default;
};

MachineInfo current_machine();

struct ModeRow {
    std::string mode;
    std::int64_t params_after = 0;
    std::int64_t macs_after = 0;
    std::int64_t total_time_ns = 0;
    double speedup_vs_original = 1.0;
    friend bool operator==(const ModeRow&, const ModeRow&) = default;
};

struct ModeReport {
    MachineInfo machine_info;
    Shape input_shape;
    std::vector<ModeRow> rows;  // ascending total time, ties by mode name
    friend bool operator==(const ModeReport&, const ModeReport&) = default;
};

/// Times every parametric layer of `arch` once, then each plan's decomposed
/// chains; unselected layers reuse the original timings. An "original" row is
/// always included.
ModeReport compare_modes(const ArchDescriptor& arch, const std::vector<RankPlan>& plans,
                         const BenchOptions& opts);
/// Convenience overload for PR configs (no weights needed).
ModeReport compare_modes(const ArchDescriptor& arch, const std::vector<CompressionConfig>& configs,
                         const BenchOptions& opts);

/// Aligned plain-text table of the report rows.
std::string format_mode_table(const ModeReport& report);

}  // namespace lrd
