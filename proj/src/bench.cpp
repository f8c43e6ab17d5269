#include "lrd/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "lrd/error.hpp"
#include "lrd/linalg.hpp"

namespace lrd {

namespace {

void im2col(const double* img, std::size_t c_in, std::size_t h, std::size_t w, const ConvSpec& cv,
            std::size_t out_h, std::size_t out_w, double* col) {
    const auto pad = static_cast<std::ptrdiff_t>(cv.padding);
    const std::size_t out_px = out_h * out_w;
    for (std::size_t c = 0; c < c_in; ++c) {
        const double* plane = img + c * h * w;
        for (std::size_t ky = 0; ky < cv.kh; ++ky) {
            for (std::size_t kx = 0; kx < cv.kw; ++kx) {
                double* row = col + ((c * cv.kh + ky) * cv.kw + kx) * out_px;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * cv.stride + ky) - pad;
                    double* dst = row + oy * out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill_n(dst, out_w, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(iy) * w;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * cv.stride + kx) - pad;
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                                      ? 0.0
                                      : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv_forward(const ConvSpec& cv, const Tensor& w, const Tensor& x) {
    if (x.ndim() != 4) throw ArgumentError("conv_forward: input must be N x C x H x W");
    if (w.ndim() != 4 || w.dim(0) != cv.c_out || w.dim(1) != cv.c_in || w.dim(2) != cv.kh ||
        w.dim(3) != cv.kw)
        throw ArgumentError("conv_forward: weight " + shape_to_string(w.shape()) +
                            " does not match conv spec");
    if (x.dim(1) != cv.c_in)
        throw ArgumentError("conv_forward: input has " + std::to_string(x.dim(1)) +
                            " channels, conv expects " + std::to_string(cv.c_in));
    const std::size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    const std::size_t out_h = conv_out_dim(h, cv.kh, cv.stride, cv.padding);
    const std::size_t out_w = conv_out_dim(wd, cv.kw, cv.stride, cv.padding);
    const std::size_t out_px = out_h * out_w;
    const std::size_t patch = cv.c_in * cv.kh * cv.kw;

    Tensor y({n, cv.c_out, out_h, out_w});
    const bool direct = cv.pointwise() && cv.stride == 1 && cv.padding == 0;
    std::vector<double> col(direct ? 0 : patch * out_px);
    for (std::size_t b = 0; b < n; ++b) {
        const double* img = x.data().data() + b * cv.c_in * h * wd;
        const double* rhs = img;
        if (!direct) {
            im2col(img, cv.c_in, h, wd, cv, out_h, out_w, col.data());
            rhs = col.data();
        }
        gemm_into(w.data().data(), rhs, y.data().data() + b * cv.c_out * out_px, cv.c_out, patch,
                  out_px);
    }
    return y;
}

Tensor dense_forward(const Tensor& w, const std::optional<Tensor>& bias, const Tensor& x) {
    if (w.ndim() != 2 || x.ndim() != 2 || x.cols() != w.cols())
        throw ArgumentError("dense_forward: input " + shape_to_string(x.shape()) +
                            " incompatible with weight " + shape_to_string(w.shape()));
    const std::size_t n = x.rows(), out = w.rows();
    // y^T = W x^T keeps the weight in its stored layout.
    Tensor yt({out, n});
    gemm_into(w.data().data(), transpose(x).data().data(), yt.data().data(), out, w.cols(), n);
    Tensor y = transpose(yt);
    if (bias) {
        if (bias->size() != out) throw ArgumentError("dense_forward: bias length mismatch");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < out; ++j) y(i, j) += (*bias)[j];
    }
    return y;
}

std::vector<ConvSpec> chain_conv_specs(const ConvSpec& o, const DecomposedLayer& d) {
    if (const auto* p = std::get_if<PointwisePair>(&d.factors)) {
        const std::size_t r = p->first.dim(0);
        return {ConvSpec{o.c_in, r, 1, 1, 1, 0, o.in_h, o.in_w},
                ConvSpec{r, o.c_out, 1, 1, o.stride, o.padding, o.in_h, o.in_w}};
    }
    if (const auto* t = std::get_if<Tucker2>(&d.factors)) {
        const std::size_t r_in = t->first.dim(0), r_out = t->last.dim(1);
        const std::size_t out_h = o.in_h ? conv_out_dim(o.in_h, o.kh, o.stride, o.padding) : 0;
        const std::size_t out_w = o.in_w ? conv_out_dim(o.in_w, o.kw, o.stride, o.padding) : 0;
        return {ConvSpec{o.c_in, r_in, 1, 1, 1, 0, o.in_h, o.in_w},
                ConvSpec{r_in, r_out, o.kh, o.kw, o.stride, o.padding, o.in_h, o.in_w},
                ConvSpec{r_out, o.c_out, 1, 1, 1, 0, out_h, out_w}};
    }
    if (std::holds_alternative<Unchanged>(d.factors)) return {o};
    throw ArgumentError("chain_conv_specs: dense factors on a conv layer");
}

Tensor chain_forward(const LayerSpec& layer, const DecomposedLayer& d, const Tensor& x) {
    if (const auto* cv = layer.conv()) {
        const auto specs = chain_conv_specs(*cv, d);
        if (const auto* u = std::get_if<Unchanged>(&d.factors)) return conv_forward(*cv, u->weight, x);
        if (const auto* p = std::get_if<PointwisePair>(&d.factors))
            return conv_forward(specs[1], p->second, conv_forward(specs[0], p->first, x));
        const auto& t = std::get<Tucker2>(d.factors);
        return conv_forward(specs[2], t.last,
                            conv_forward(specs[1], t.core, conv_forward(specs[0], t.first, x)));
    }
    if (layer.dense()) {
        if (const auto* u = std::get_if<Unchanged>(&d.factors))
            return dense_forward(u->weight, u->bias, x);
        if (const auto* p = std::get_if<DensePair>(&d.factors))
            return dense_forward(p->a, p->bias, dense_forward(p->b, std::nullopt, x));
        throw ArgumentError("chain_forward: conv factors on dense layer '" + layer.name + "'");
    }
    throw ArgumentError("chain_forward: layer '" + layer.name + "' has no weights");
}

bool is_full_rank(const LayerSpec& layer, const DecomposedLayer& d) {
    if (std::holds_alternative<Unchanged>(d.factors)) return true;
    if (const auto* c = layer.conv()) {
        if (std::holds_alternative<Tucker2>(d.factors))
            return d.ranks.size() == 2 && d.ranks[0] == c->c_in && d.ranks[1] == c->c_out;
        return d.ranks.size() == 1 && d.ranks[0] == std::min(c->c_in, c->c_out);
    }
    if (const auto* s = layer.dense()) return d.ranks.size() == 1 && d.ranks[0] == std::min(s->in, s->out);
    return false;
}

std::int64_t median_time_ns(const std::function<void()>& fn, int reps, int warmup) {
    using clock = std::chrono::steady_clock;
    for (int i = 0; i < warmup; ++i) fn();
    std::vector<std::int64_t> samples;
    samples.reserve(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const auto t0 = clock::now();
        fn();
        const auto t1 = clock::now();
        samples.push_back(std::max<std::int64_t>(
            1, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t mid = samples.size() / 2;
    return samples.size() % 2 ? samples[mid] : (samples[mid - 1] + samples[mid]) / 2;
}

Shape layer_input_shape(const LayerSpec& layer, std::size_t batch) {
    if (const auto* c = layer.conv()) return {batch, c->c_in, c->in_h, c->in_w};
    if (const auto* d = layer.dense()) return {batch, d->in};
    throw ArgumentError("layer '" + layer.name + "' has no input shape");
}

BenchResult bench_layer(const LayerSpec& layer, const Tensor& w, const std::optional<Tensor>& bias,
                        const DecomposedLayer& chain, const Shape& input_shape, int reps,
                        int warmup, std::uint64_t seed) {
    if (reps < 3) throw ArgumentError("bench_layer: reps must be >= 3");
    if (warmup < 1) throw ArgumentError("bench_layer: warmup must be >= 1");
    std::mt19937_64 rng(seed);
    const Tensor x = Tensor::randn(input_shape, rng);
    const DecomposedLayer original = keep_unchanged(w, bias);

    BenchResult r;
    r.layer_name = layer.name;
    r.reps = reps;
    r.input_shape = input_shape;
    r.full_rank = is_full_rank(layer, chain);

    Tensor y_orig, y_chain;
    r.original_time_ns = median_time_ns([&] { y_orig = chain_forward(layer, original, x); }, reps, warmup);
    r.decomposed_time_ns = median_time_ns([&] { y_chain = chain_forward(layer, chain, x); }, reps, warmup);
    r.speedup = static_cast<double>(r.original_time_ns) / static_cast<double>(r.decomposed_time_ns);

    r.checksum = y_orig.sum();
    r.decomposed_checksum = y_chain.sum();
    double scale = 0.0;
    for (double v : y_orig.data()) scale += std::abs(v);
    r.checksum_rel_diff = scale > 0.0 ? std::abs(r.checksum - r.decomposed_checksum) / scale : 0.0;
    if (!std::isfinite(r.checksum) || !std::isfinite(r.decomposed_checksum))
        throw NumericError("bench_layer: non-finite output for '" + layer.name + "'");
    if (r.full_rank && r.checksum_rel_diff > 1e-3)
        throw InternalError("bench_layer: full-rank chain for '" + layer.name +
                            "' diverges from the original layer");
    return r;
}

MachineInfo current_machine() {
    MachineInfo m;
    m.hardware_threads = std::thread::hardware_concurrency();
#if defined(__clang__)
    m.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
    m.compiler = "gcc " __VERSION__;
#else
    m.compiler = "unknown";
#endif
    m.timer = "steady_clock";
    return m;
}

namespace {

// Random factors with the planned shapes; timing depends only on shapes.
DecomposedLayer random_chain(const LayerSpec& l, const PlanEntry& e, std::mt19937_64& rng) {
    DecomposedLayer d;
    d.ranks = e.ranks;
    switch (e.decomposition) {
        case Decomposition::dense_pair: {
            const auto& s = *l.dense();
            std::optional<Tensor> bias;
            if (s.has_bias) bias = Tensor::randn({s.out}, rng);
            d.factors = DensePair{Tensor::randn({s.out, e.ranks[0]}, rng),
                                  Tensor::randn({e.ranks[0], s.in}, rng), std::move(bias)};
            break;
        }
        case Decomposition::pointwise_pair: {
            const auto& c = *l.conv();
            d.factors = PointwisePair{Tensor::randn({e.ranks[0], c.c_in, 1, 1}, rng),
                                      Tensor::randn({c.c_out, e.ranks[0], 1, 1}, rng)};
            break;
        }
        case Decomposition::tucker2: {
            const auto& c = *l.conv();
            d.factors = Tucker2{Tensor::randn({e.ranks[0], c.c_in, 1, 1}, rng),
                                Tensor::randn({e.ranks[1], e.ranks[0], c.kh, c.kw}, rng),
                                Tensor::randn({c.c_out, e.ranks[1], 1, 1}, rng)};
            break;
        }
        case Decomposition::unchanged: throw InternalError("random_chain: unchanged entry");
    }
    return d;
}

DecomposedLayer random_original(const LayerSpec& l, std::mt19937_64& rng) {
    if (const auto* c = l.conv()) return keep_unchanged(Tensor::randn({c->c_out, c->c_in, c->kh, c->kw}, rng));
    const auto& s = *l.dense();
    std::optional<Tensor> bias;
    if (s.has_bias) bias = Tensor::randn({s.out}, rng);
    return keep_unchanged(Tensor::randn({s.out, s.in}, rng), std::move(bias));
}

}  // namespace

ModeReport compare_modes(const ArchDescriptor& arch, const std::vector<RankPlan>& plans,
                         const BenchOptions& opts) {
    if (opts.reps < 1 || opts.warmup < 0 || opts.batch < 1)
        throw ArgumentError("compare_modes: need reps >= 1, warmup >= 0, batch >= 1");
    for (const auto& p : plans)
        for (const auto& e : p.entries)
            if (!arch.find(e.layer))
                throw ConfigError("plan references layer '" + e.layer + "' absent from " + arch.name);

    std::mt19937_64 rng(opts.seed);
    auto time_layer = [&](const LayerSpec& l, const DecomposedLayer& d) {
        const Tensor x = Tensor::randn(layer_input_shape(l, opts.batch), rng);
        Tensor y;
        return median_time_ns([&] { y = chain_forward(l, d, x); }, opts.reps, opts.warmup);
    };

    std::vector<std::pair<std::string, std::int64_t>> original_times;
    std::int64_t original_total = 0;
    for (const auto& l : arch.layers) {
        if (!l.parametric()) continue;
        const auto t = time_layer(l, random_original(l, rng));
        original_times.emplace_back(l.name, t);
        original_total += t;
    }

    ModeReport report;
    report.machine_info = current_machine();
    report.input_shape = {opts.batch, 3, arch.input_hw, arch.input_hw};
    report.rows.push_back({"original", count_params(arch).total, count_macs(arch).total,
                           original_total, 1.0});

    for (const auto& plan : plans) {
        std::int64_t total = 0;
        for (const auto& [name, t] : original_times) {
            const auto* e = plan.find(name);
            if (!e || e->decomposition == Decomposition::unchanged) {
                total += t;
                continue;
            }
            const auto& l = *arch.find(name);
            total += time_layer(l, random_chain(l, *e, rng));
        }
        std::string label = plan.config.mode.name();
        const auto same = std::count_if(report.rows.begin(), report.rows.end(), [&](const ModeRow& r) {
            return r.mode == label || r.mode.rfind(label + "#", 0) == 0;
        });
        if (same) label += "#" + std::to_string(same + 1);
        report.rows.push_back({label, count_params(arch, &plan).total, count_macs(arch, &plan).total,
                               total,
                               static_cast<double>(original_total) / static_cast<double>(std::max<std::int64_t>(1, total))});
    }

    std::sort(report.rows.begin(), report.rows.end(), [](const ModeRow& a, const ModeRow& b) {
        if (a.total_time_ns != b.total_time_ns) return a.total_time_ns < b.total_time_ns;
        return a.mode < b.mode;
    });
    return report;
}

ModeReport compare_modes(const ArchDescriptor& arch, const std::vector<CompressionConfig>& configs,
                         const BenchOptions& opts) {
    std::vector<RankPlan> plans;
    plans.reserve(configs.size());
    for (const auto& c : configs) plans.push_back(plan_ranks(arch, c));
    return compare_modes(arch, plans, opts);
}

std::string format_mode_table(const ModeReport& report) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "mode" << std::right << std::setw(14) << "params"
       << std::setw(16) << "MACs" << std::setw(14) << "time_ms" << std::setw(10) << "speedup"
       << "\n";
    for (const auto& r : report.rows) {
        os << std::left << std::setw(12) << r.mode << std::right << std::setw(14) << r.params_after
           << std::setw(16) << r.macs_after << std::setw(14) << std::fixed << std::setprecision(3)
           << static_cast<double>(r.total_time_ns) / 1e6 << std::setw(10) << std::setprecision(3)
           << r.speedup_vs_original << "\n";
    }
    return os.str();
}

}  // namespace lrd
