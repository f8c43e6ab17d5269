#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace lrd {

struct RankPlan;

struct ConvSpec {
    std::size_t c_in = 0, c_out = 0;
    std::size_t kh = 1, kw = 1;
    std::size_t stride = 1, padding = 0;
    std::size_t in_h = 0, in_w = 0;  // input spatial dims at reference resolution

    bool pointwise() const { return kh == 1 && kw == 1; }
    std::size_t kernel_area() const { return kh * kw; }
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct DenseSpec {
    std::size_t in = 0, out = 0;
    bool has_bias = true;
    friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};

enum class MarkerKind { pool, batch_norm, act };

/// Non-parametric layer kept for topology (BatchNorm affine params are reported
/// separately and never compressed).
struct MarkerSpec {
    MarkerKind marker = MarkerKind::pool;
    std::size_t channels = 0;
    friend bool operator==(const MarkerSpec&, const MarkerSpec&) = default;
};

using LayerKind = std::variant<ConvSpec, DenseSpec, MarkerSpec>;

enum class Role { stem, pointwise, spatial, downsample, final_dense, marker };

struct LayerSpec {
    std::string name;
    LayerKind kind;
    int block = 0;  // 0 stem, 1..4 conv2_x..conv5_x, 5 head
    Role role = Role::marker;
    std::size_t out_h = 1, out_w = 1;
    /// Name of the layer this one was decomposed from; empty for original layers.
    std::string origin;

    const ConvSpec* conv() const { return std::get_if<ConvSpec>(&kind); }
    const DenseSpec* dense() const { return std::get_if<DenseSpec>(&kind); }
    const MarkerSpec* marker() const { return std::get_if<MarkerSpec>(&kind); }
    bool parametric() const { return conv() || dense(); }
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ArchDescriptor {
    std::string name;
    std::size_t input_hw = 224;
    std::vector<LayerSpec> layers;

    const LayerSpec* find(const std::string& layer) const;
    friend bool operator==(const ArchDescriptor&, const ArchDescriptor&) = default;
};

const char* role_name(Role r);
Role parse_role(const std::string& s);
const char* marker_name(MarkerKind k);
MarkerKind parse_marker(const std::string& s);

/// Checks role/kernel consistency and unique names; throws DataError.
void validate_arch(const ArchDescriptor& arch);

/// Output size of a conv/pool window along one axis.
std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

/// ResNet-18/34 (basic blocks) and 50/101/152 (bottlenecks, stride on the 3x3).
ArchDescriptor build_resnet(int depth, std::size_t input_hw = 224);

// Compression modes -----------------------------------------------------------

enum class ModeKind { vanilla, mode1, mode2, mode3, mode4, mode5, custom };

struct CompressionMode {
    ModeKind kind = ModeKind::vanilla;
    std::vector<std::string> include;  // custom only, '*' and '?' globs
    std::vector<std::string> exclude;

    std::string name() const;
    static CompressionMode parse(const std::string& s);
    static CompressionMode custom(std::vector<std::string> include,
                                  std::vector<std::string> exclude = {});
    friend bool operator==(const CompressionMode&, const CompressionMode&) = default;
};

bool glob_match(std::string_view pattern, std::string_view text);

struct LayerSelection {
    std::vector<std::string> layers;  // arch order
    std::vector<std::string> warnings;

    bool contains(const std::string& layer) const;
};

LayerSelection select_layers(const ArchDescriptor& arch, const CompressionMode& mode);

// Accounting ------------------------------------------------------------------

std::int64_t layer_params(const LayerSpec& layer);
std::int64_t layer_macs(const LayerSpec& layer);

struct Counts {
    std::int64_t total = 0;
    /// BatchNorm affine parameters (2 per channel); not part of `total`.
    std::int64_t batch_norm = 0;
    std::vector<std::pair<std::string, std::int64_t>> per_layer;
};

/// Conv/dense weight params. With a plan, decomposed layers use the plan's
/// predicted counts.
Counts count_params(const ArchDescriptor& arch, const RankPlan* plan = nullptr);
Counts count_macs(const ArchDescriptor& arch, const RankPlan* plan = nullptr);

}  // namespace lrd
