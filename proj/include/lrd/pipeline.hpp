#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrd/arch.hpp"
#include "lrd/checkpoint.hpp"
#include "lrd/decompose.hpp"
#include "lrd/rank_select.hpp"

namespace lrd {

// Tensor naming inside checkpoints:
//   <layer>.weight, <layer>.bias (dense only), <layer>.bn.weight / <layer>.bn.bias
//   decomposed chains: <layer>.0.weight, <layer>.1.weight[, <layer>.2.weight], dense bias on the last stage.
std::string weight_key(const std::string& layer);
std::string bias_key(const std::string& layer);
std::string chain_layer_name(const std::string& layer, std::size_t stage);

/// He-normal weights, zero biases, unit BatchNorm scale.
Checkpoint random_checkpoint(const ArchDescriptor& arch, std::uint64_t seed);

struct LayerCompression {
    std::string layer;
    Decomposition decomposition = Decomposition::unchanged;
    std::vector<std::size_t> ranks;
    double recon_rel_error = 0.0;
    std::int64_t params_before = 0;
    std::int64_t params_after = 0;
};

struct CompressResult {
    ArchDescriptor arch;
    Checkpoint checkpoint;
    std::vector<LayerCompression> layers;  // decomposed layers only
};

/// Worker count from LRD_WORKERS, else the machine's parallelism.
unsigned default_workers();

/// Decomposes every planned layer and splices the resulting chains into a new
/// architecture and checkpoint. Throws ConfigError when the plan, arch and
/// checkpoint disagree.
CompressResult compress_model(const ArchDescriptor& arch, const Checkpoint& ckpt, const RankPlan& plan,
                              unsigned workers, HooiOptions hooi = {});

/// Rebuilds the factor set of `layer` from a compressed arch/checkpoint pair.
/// Returns Unchanged when the layer was not decomposed.
DecomposedLayer load_decomposed(const LayerSpec& original, const ArchDescriptor& compressed_arch,
                                const Checkpoint& compressed_ckpt);

struct LayerVerification {
    std::string layer;
    bool decomposed = false;
    double recon_rel_error = 0.0;
    double forward_rel_error = 0.0;
};

struct VerifyReport {
    std::vector<LayerVerification> layers;
    double worst_recon = 0.0;
    double worst_forward = 0.0;
    std::string worst_layer;
};

struct VerifyOptions {
    std::size_t input_hw = 16;  // spatial size of the random probe input, capped per layer
    std::size_t batch = 1;
    std::uint64_t seed = 0;
};

VerifyReport verify_model(const ArchDescriptor& original_arch, const Checkpoint& original_ckpt,
                          const ArchDescriptor& compressed_arch, const Checkpoint& compressed_ckpt,
                          const VerifyOptions& opts = {});

}  // namespace lrd
