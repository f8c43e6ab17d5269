#include "lrd/arch.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <unordered_set>

#include "lrd/error.hpp"
#include "lrd/rank_select.hpp"

namespace lrd {

const LayerSpec* ArchDescriptor::find(const std::string& layer) const {
    for (const auto& l : layers)
        if (l.name == layer) return &l;
    return nullptr;
}

const char* role_name(Role r) {
    switch (r) {
        case Role::stem: return "stem";
        case Role::pointwise: return "pointwise";
        case Role::spatial: return "spatial";
        case Role::downsample: return "downsample";
        case Role::final_dense: return "final_dense";
        case Role::marker: return "marker";
    }
    return "marker";
}

Role parse_role(const std::string& s) {
    for (Role r : {Role::stem, Role::pointwise, Role::spatial, Role::downsample, Role::final_dense,
                   Role::marker})
        if (s == role_name(r)) return r;
    throw DataError("unknown layer role '" + s + "'");
}

const char* marker_name(MarkerKind k) {
    switch (k) {
        case MarkerKind::pool: return "pool";
        case MarkerKind::batch_norm: return "batch_norm";
        case MarkerKind::act: return "act";
    }
    return "pool";
}

MarkerKind parse_marker(const std::string& s) {
    for (MarkerKind k : {MarkerKind::pool, MarkerKind::batch_norm, MarkerKind::act})
        if (s == marker_name(k)) return k;
    throw DataError("unknown marker kind '" + s + "'");
}

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (stride == 0) throw ArgumentError("stride must be >= 1");
    if (in + 2 * pad < k)
        throw ArgumentError("window " + std::to_string(k) + " larger than padded input " +
                            std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
}

void validate_arch(const ArchDescriptor& arch) {
    std::unordered_set<std::string> seen;
    for (const auto& l : arch.layers) {
        if (l.name.empty()) throw DataError("layer with empty name");
        if (!seen.insert(l.name).second) throw DataError("duplicate layer name '" + l.name + "'");
        if (const auto* c = l.conv()) {
            if (!c->c_in || !c->c_out || !c->kh || !c->kw || !c->stride)
                throw DataError("layer '" + l.name + "': conv dims must be >= 1");
            if ((l.role == Role::pointwise || l.role == Role::downsample) && !c->pointwise())
                throw DataError("layer '" + l.name + "': role " + role_name(l.role) +
                                " requires a 1x1 kernel");
            if (l.role == Role::spatial && (c->kh < 2 || c->kw < 2))
                throw DataError("layer '" + l.name + "': spatial role requires kernel >= 2x2");
            if (l.role == Role::final_dense || l.role == Role::marker)
                throw DataError("layer '" + l.name + "': conv cannot have role " +
                                role_name(l.role));
            if (c->in_h && c->in_w &&
                (conv_out_dim(c->in_h, c->kh, c->stride, c->padding) != l.out_h ||
                 conv_out_dim(c->in_w, c->kw, c->stride, c->padding) != l.out_w))
                throw DataError("layer '" + l.name + "': output dims inconsistent with stride");
        } else if (const auto* d = l.dense()) {
            if (!d->in || !d->out) throw DataError("layer '" + l.name + "': dense dims must be >= 1");
            if (l.role != Role::final_dense)
                throw DataError("layer '" + l.name + "': dense layers must have role final_dense");
        } else if (l.role != Role::marker) {
            throw DataError("layer '" + l.name + "': marker layers must have role marker");
        }
    }
}

namespace {

struct Builder {
    ArchDescriptor arch;
    std::size_t hw = 0;

    void conv(const std::string& name, int block, Role role, std::size_t c_in, std::size_t c_out,
              std::size_t k, std::size_t stride, std::size_t pad, std::size_t in_hw) {
        ConvSpec c{c_in, c_out, k, k, stride, pad, in_hw, in_hw};
        const std::size_t out = conv_out_dim(in_hw, k, stride, pad);
        arch.layers.push_back({name, c, block, role, out, out, {}});
        arch.layers.push_back(
            {name + ".bn", MarkerSpec{MarkerKind::batch_norm, c_out}, block, Role::marker, out, out, {}});
    }

    void pool(const std::string& name, int block, std::size_t channels, std::size_t out) {
        arch.layers.push_back(
            {name, MarkerSpec{MarkerKind::pool, channels}, block, Role::marker, out, out, {}});
    }
};

}  // namespace

ArchDescriptor build_resnet(int depth, std::size_t input_hw) {
    std::array<int, 4> units{};
    bool bottleneck = true;
    switch (depth) {
        case 18: units = {2, 2, 2, 2}; bottleneck = false; break;
        case 34: units = {3, 4, 6, 3}; bottleneck = false; break;
        case 50: units = {3, 4, 6, 3}; break;
        case 101: units = {3, 4, 23, 3}; break;
        case 152: units = {3, 8, 36, 3}; break;
        default:
            throw ConfigError("unsupported ResNet depth " + std::to_string(depth) +
                              " (expected 18, 34, 50, 101 or 152)");
    }
    if (input_hw < 32) throw ConfigError("input resolution must be at least 32");

    Builder b;
    b.arch.name = "resnet" + std::to_string(depth);
    b.arch.input_hw = input_hw;

    b.conv("stem", 0, Role::stem, 3, 64, 7, 2, 3, input_hw);
    std::size_t hw = conv_out_dim(input_hw, 7, 2, 3);
    hw = conv_out_dim(hw, 3, 2, 1);
    b.pool("maxpool", 0, 64, hw);

    const std::size_t expansion = bottleneck ? 4 : 1;
    std::size_t c_in = 64;
    for (int blk = 1; blk <= 4; ++blk) {
        const std::size_t width = std::size_t{64} << (blk - 1);
        const std::size_t c_out = width * expansion;
        for (int u = 1; u <= units[blk - 1]; ++u) {
            const std::string prefix = "block" + std::to_string(blk) + ".unit" + std::to_string(u) + ".";
            const std::size_t stride = (u == 1 && blk > 1) ? 2 : 1;
            const std::size_t in_hw = hw;
            const std::size_t out_hw = conv_out_dim(in_hw, 3, stride, 1);
            if (bottleneck) {
                b.conv(prefix + "conv1", blk, Role::pointwise, c_in, width, 1, 1, 0, in_hw);
                b.conv(prefix + "conv2", blk, Role::spatial, width, width, 3, stride, 1, in_hw);
                b.conv(prefix + "conv3", blk, Role::pointwise, width, c_out, 1, 1, 0, out_hw);
            } else {
                b.conv(prefix + "conv1", blk, Role::spatial, c_in, width, 3, stride, 1, in_hw);
                b.conv(prefix + "conv2", blk, Role::spatial, width, width, 3, 1, 1, out_hw);
            }
            if (u == 1 && (stride != 1 || c_in != c_out))
                b.conv(prefix + "downsample", blk, Role::downsample, c_in, c_out, 1, stride, 0, in_hw);
            c_in = c_out;
            hw = out_hw;
        }
    }

    b.pool("avgpool", 5, c_in, 1);
    b.arch.layers.push_back({"fc", DenseSpec{c_in, 1000, true}, 5, Role::final_dense, 1, 1, {}});
    return b.arch;
}

// Compression modes -------------------------------------------------------------

namespace {
constexpr std::array<std::pair<ModeKind, const char*>, 7> kModeNames{{
    {ModeKind::vanilla, "vanilla"},
    {ModeKind::mode1, "mode1"},
    {ModeKind::mode2, "mode2"},
    {ModeKind::mode3, "mode3"},
    {ModeKind::mode4, "mode4"},
    {ModeKind::mode5, "mode5"},
    {ModeKind::custom, "custom"},
}};

bool in_blocks(const LayerSpec& l) { return l.block >= 1 && l.block <= 4; }

// Table of which original layers each built-in mode decomposes.
bool builtin_selects(ModeKind kind, const LayerSpec& l) {
    if (!l.origin.empty() || !l.parametric()) return false;
    if (l.role == Role::final_dense) return true;  // every built-in mode keeps fc in
    if (!in_blocks(l)) return false;
    const bool spatial = l.role == Role::spatial;
    const bool pointwise = l.role == Role::pointwise;
    const bool downsample = l.role == Role::downsample;
    switch (kind) {
        case ModeKind::vanilla: return true;
        case ModeKind::mode1: return spatial;
        case ModeKind::mode2: return spatial || pointwise || (downsample && l.block <= 2);
        case ModeKind::mode3:
            return spatial || (pointwise && l.block != 4) || (downsample && l.block <= 2);
        case ModeKind::mode4: return !downsample;
        case ModeKind::mode5: return pointwise || downsample;
        case ModeKind::custom: return false;
    }
    return false;
}
}  // namespace

std::string CompressionMode::name() const {
    for (auto [k, n] : kModeNames)
        if (k == kind) return n;
    return "custom";
}

CompressionMode CompressionMode::parse(const std::string& s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    for (auto [k, n] : kModeNames)
        if (lower == n) return CompressionMode{k, {}, {}};
    throw ConfigError("unknown compression mode '" + s +
                      "' (expected vanilla, mode1..mode5 or custom)");
}

CompressionMode CompressionMode::custom(std::vector<std::string> include,
                                        std::vector<std::string> exclude) {
    return CompressionMode{ModeKind::custom, std::move(include), std::move(exclude)};
}

bool glob_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

bool LayerSelection::contains(const std::string& layer) const {
    return std::find(layers.begin(), layers.end(), layer) != layers.end();
}

LayerSelection select_layers(const ArchDescriptor& arch, const CompressionMode& mode) {
    LayerSelection sel;
    if (mode.kind != ModeKind::custom) {
        for (const auto& l : arch.layers)
            if (builtin_selects(mode.kind, l)) sel.layers.push_back(l.name);
        return sel;
    }

    auto matches_any = [](const std::vector<std::string>& globs, const std::string& name) {
        return std::any_of(globs.begin(), globs.end(),
                           [&](const std::string& g) { return glob_match(g, name); });
    };
    for (const auto* globs : {&mode.include, &mode.exclude}) {
        for (const auto& g : *globs) {
            bool hit = std::any_of(arch.layers.begin(), arch.layers.end(), [&](const LayerSpec& l) {
                return l.parametric() && glob_match(g, l.name);
            });
            if (!hit) sel.warnings.push_back("pattern '" + g + "' matches no layer");
        }
    }
    for (const auto& l : arch.layers) {
        if (!l.parametric() || !l.origin.empty()) continue;
        if (matches_any(mode.include, l.name) && !matches_any(mode.exclude, l.name))
            sel.layers.push_back(l.name);
    }
    return sel;
}

// Accounting --------------------------------------------------------------------

std::int64_t layer_params(const LayerSpec& layer) {
    if (const auto* c = layer.conv())
        return static_cast<std::int64_t>(c->c_out * c->c_in * c->kh * c->kw);
    if (const auto* d = layer.dense())
        return static_cast<std::int64_t>(d->in * d->out + (d->has_bias ? d->out : 0));
    return 0;
}

std::int64_t layer_macs(const LayerSpec& layer) {
    if (const auto* c = layer.conv())
        return static_cast<std::int64_t>(c->c_out * c->c_in * c->kh * c->kw * layer.out_h *
                                         layer.out_w);
    if (const auto* d = layer.dense()) return static_cast<std::int64_t>(d->in * d->out);
    return 0;
}

namespace {

Counts accumulate(const ArchDescriptor& arch, const RankPlan* plan, bool macs) {
    if (plan) {
        for (const auto& e : plan->entries) {
            const auto* l = arch.find(e.layer);
            if (!l || !l->parametric())
                throw ConfigError("plan references layer '" + e.layer + "' absent from " +
                                  arch.name);
        }
    }
    Counts out;
    for (const auto& l : arch.layers) {
        if (const auto* m = l.marker()) {
            if (m->marker == MarkerKind::batch_norm && !macs)
                out.batch_norm += 2 * static_cast<std::int64_t>(m->channels);
            continue;
        }
        std::int64_t v = macs ? layer_macs(l) : layer_params(l);
        if (plan) {
            if (const auto* e = plan->find(l.name); e && e->decomposition != Decomposition::unchanged)
                v = macs ? e->macs_after : e->params_after;
        }
        out.total += v;
        out.per_layer.emplace_back(l.name, v);
    }
    return out;
}

}  // namespace

Counts count_params(const ArchDescriptor& arch, const RankPlan* plan) {
    return accumulate(arch, plan, false);
}

Counts count_macs(const ArchDescriptor& arch, const RankPlan* plan) {
    return accumulate(arch, plan, true);
}

}  // namespace lrd
