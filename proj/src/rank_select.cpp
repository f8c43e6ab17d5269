#include "lrd/rank_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lrd/checkpoint.hpp"
#include "lrd/decompose.hpp"
#include "lrd/error.hpp"
#include "lrd/linalg.hpp"

namespace lrd {

const char* method_name(RankMethod m) { return m == RankMethod::pr ? "pr" : "vbmf"; }

RankMethod parse_method(const std::string& s) {
    if (s == "pr" || s == "PR") return RankMethod::pr;
    if (s == "vbmf" || s == "VBMF") return RankMethod::vbmf;
    throw ConfigError("unknown rank method '" + s + "' (expected pr or vbmf)");
}

void CompressionConfig::validate() const {
    if (!(target_ratio > 1.0) || !std::isfinite(target_ratio))
        throw ConfigError("target ratio must be > 1, got " + std::to_string(target_ratio));
    if (!(final_dense_ratio >= 1.0) || !std::isfinite(final_dense_ratio))
        throw ConfigError("final dense ratio must be >= 1, got " +
                          std::to_string(final_dense_ratio));
    if (rank_quantum < 1) throw ConfigError("rank quantum must be >= 1");
    if (!(weakening >= 0.0 && weakening <= 1.0))
        throw ConfigError("weakening factor must lie in [0, 1], got " + std::to_string(weakening));
    if (n1_epochs < 0 || n2_epochs < 0) throw ConfigError("epoch counts must be non-negative");
}

const char* decomposition_name(Decomposition d) {
    switch (d) {
        case Decomposition::unchanged: return "unchanged";
        case Decomposition::dense_pair: return "dense_pair";
        case Decomposition::pointwise_pair: return "pointwise_pair";
        case Decomposition::tucker2: return "tucker2";
    }
    return "unchanged";
}

Decomposition parse_decomposition(const std::string& s) {
    for (auto d : {Decomposition::unchanged, Decomposition::dense_pair,
                   Decomposition::pointwise_pair, Decomposition::tucker2})
        if (s == decomposition_name(d)) return d;
    throw DataError("unknown decomposition '" + s + "'");
}

const PlanEntry* RankPlan::find(const std::string& layer) const {
    for (const auto& e : entries)
        if (e.layer == layer) return &e;
    return nullptr;
}

std::size_t RankPlan::decomposed_count() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) {
        return e.decomposition != Decomposition::unchanged;
    }));
}

void RankPlan::recompute_totals() {
    totals = {};
    for (const auto& e : entries) {
        totals.params_before += e.params_before;
        totals.params_after += e.params_after;
        totals.macs_before += e.macs_before;
        totals.macs_after += e.macs_after;
    }
    achieved_ratio = totals.params_after > 0
                         ? static_cast<double>(totals.params_before) /
                               static_cast<double>(totals.params_after)
                         : 1.0;
}

std::int64_t round_half_up(double x) { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

namespace {
std::size_t clamp_rank(std::int64_t r, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp<std::int64_t>(r, 1, static_cast<std::int64_t>(hi)));
}

void require_ratio(double c) {
    if (!(c > 0.0) || !std::isfinite(c))
        throw ArgumentError("compression ratio must be positive, got " + std::to_string(c));
}
}  // namespace

std::size_t pr_rank_dense(std::size_t m, std::size_t n, double c) {
    if (m == 0 || n == 0) throw ArgumentError("pr_rank_dense: dims must be >= 1");
    require_ratio(c);
    const double md = static_cast<double>(m), nd = static_cast<double>(n);
    return clamp_rank(round_half_up(md * nd / (c * (md + nd))), std::min(m, n));
}

std::pair<std::size_t, std::size_t> pr_ranks_tucker2_area(std::size_t c_out, std::size_t c_in,
                                                          std::size_t kernel_area, double c) {
    if (!c_out || !c_in || !kernel_area) throw ArgumentError("pr_ranks_tucker2: dims must be >= 1");
    require_ratio(c);
    // params(r_in) = C_in r_in + A rho r_in^2 + rho r_in C_out, with r_out = rho r_in.
    const double rho = static_cast<double>(c_out) / static_cast<double>(c_in);
    const double a = static_cast<double>(kernel_area) * rho;
    const double b = static_cast<double>(c_in) + rho * static_cast<double>(c_out);
    const double target =
        static_cast<double>(c_out) * static_cast<double>(c_in) * static_cast<double>(kernel_area) / c;
    const double root = (-b + std::sqrt(b * b + 4.0 * a * target)) / (2.0 * a);
    return {clamp_rank(round_half_up(root), c_in), clamp_rank(round_half_up(rho * root), c_out)};
}

std::pair<std::size_t, std::size_t> pr_ranks_tucker2(std::size_t c_out, std::size_t c_in,
                                                     std::size_t k, double c) {
    return pr_ranks_tucker2_area(c_out, c_in, k * k, c);
}

// EVBMF ------------------------------------------------------------------------

namespace {
constexpr double kTauBarCoeff = 2.5129;

double evb_tau(double x, double alpha) {
    const double d = x - (1.0 + alpha);
    return 0.5 * (d + std::sqrt(std::max(0.0, d * d - 4.0 * alpha)));
}
}  // namespace

double evb_free_energy(double sigma2, std::span<const double> s, std::size_t L, std::size_t M,
                       double residual) {
    const double Ld = static_cast<double>(L), Md = static_cast<double>(M);
    const double alpha = Ld / Md;
    const double tau_bar = kTauBarCoeff * std::sqrt(alpha);
    const double x_bar = (1.0 + tau_bar) * (1.0 + alpha / tau_bar);
    const double log_m_sigma2 = std::log(Md * sigma2);

    double f = 0.0;
    for (double si : s) {
        const double s2 = si * si;
        const double x = s2 / (Md * sigma2);
        if (x > x_bar) {
            const double tau = evb_tau(x, alpha);
            f += x - tau;
            f += std::log((tau + 1.0) / x);
            f += alpha * std::log(tau / alpha + 1.0);
        } else {
            // x - log x, with the sigma-independent -log(s^2) dropped for exact zeros.
            f += x + log_m_sigma2 - (s2 > 0.0 ? std::log(s2) : 0.0);
        }
    }
    const double H = static_cast<double>(s.size());
    f += residual / (Md * sigma2) + (Ld - H) * std::log(sigma2);
    return f;
}

VbmfEstimate evbmf_from_singular_values(std::span<const double> s_in, std::size_t L,
                                        std::size_t M) {
    if (L == 0 || M == 0 || L > M) throw ArgumentError("evbmf: expected 1 <= L <= M");
    std::vector<double> s(s_in.begin(), s_in.end());
    std::sort(s.begin(), s.end(), std::greater<>());
    s.resize(std::min(s.size(), L), 0.0);

    VbmfEstimate est;
    const double total_sq = std::inner_product(s.begin(), s.end(), s.begin(), 0.0);
    if (s.empty() || total_sq == 0.0) return est;

    const double Ld = static_cast<double>(L), Md = static_cast<double>(M);
    const double alpha = Ld / Md;
    const double tau_bar = kTauBarCoeff * std::sqrt(alpha);
    const double x_bar = (1.0 + tau_bar) * (1.0 + alpha / tau_bar);

    const auto h = std::min<std::size_t>(
        s.size() - 1, static_cast<std::size_t>(std::ceil(Ld / (1.0 + alpha))) - 1);
    double tail = 0.0;
    for (std::size_t i = h; i < s.size(); ++i) tail += s[i] * s[i];
    tail /= static_cast<double>(s.size() - h);

    est.upper_bound = total_sq / (Ld * Md);
    est.lower_bound = std::max(s[h] * s[h] / (Md * x_bar), tail / Md);
    if (!(est.lower_bound > 0.0)) est.lower_bound = est.upper_bound * 1e-12;

    if (est.lower_bound >= est.upper_bound) {
        est.sigma2 = est.upper_bound;
    } else {
        // Golden-section search over log(sigma2).
        auto f = [&](double t) { return evb_free_energy(std::exp(t), s, L, M); };
        const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
        double a = std::log(est.lower_bound), b = std::log(est.upper_bound);
        double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
        double fc = f(c), fd = f(d);
        for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
            if (fc <= fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = f(d);
            }
        }
        est.sigma2 = std::exp(0.5 * (a + b));
    }

    est.threshold = std::sqrt(Md * est.sigma2 * x_bar);
    est.rank = static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [&](double v) { return v > est.threshold; }));
    return est;
}

VbmfEstimate evbmf(const Tensor& matrix) {
    if (matrix.ndim() != 2) throw ArgumentError("evbmf: expected a matrix");
    if (!matrix.all_finite()) throw ArgumentError("evbmf: non-finite entries");
    std::size_t L = matrix.rows(), M = matrix.cols();
    if (L > M) std::swap(L, M);
    const auto s = singular_values(matrix);
    return evbmf_from_singular_values(s, L, M);
}

std::size_t vbmf_rank(const Tensor& matrix) { return evbmf(matrix).rank; }

std::size_t apply_weakening(std::size_t r_vbmf, std::size_t r_max, double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw ArgumentError("weakening factor must lie in [0, 1]");
    if (r_max < 1 || r_vbmf > r_max) throw ArgumentError("apply_weakening: need r_vbmf <= r_max");
    const double moved = static_cast<double>(r_vbmf) +
                         w * static_cast<double>(r_max - r_vbmf);
    const auto lo = static_cast<std::int64_t>(std::max<std::size_t>(1, r_vbmf));
    return static_cast<std::size_t>(
        std::clamp<std::int64_t>(round_half_up(moved), lo, static_cast<std::int64_t>(r_max)));
}

std::size_t quantize_rank(std::size_t r, std::size_t q, std::size_t r_max) {
    if (q < 1 || r_max < 1) throw ArgumentError("quantize_rank: quantum and r_max must be >= 1");
    const std::size_t nearest = (2 * r + q) / (2 * q) * q;
    return std::clamp(nearest, std::min(q, r_max), r_max);
}

// Planning ---------------------------------------------------------------------

Decomposition decomposition_for(const LayerSpec& layer) {
    if (layer.dense()) return Decomposition::dense_pair;
    if (const auto* c = layer.conv())
        return c->pointwise() ? Decomposition::pointwise_pair : Decomposition::tucker2;
    return Decomposition::unchanged;
}

std::int64_t predicted_params(const LayerSpec& layer, Decomposition d,
                              std::span<const std::size_t> ranks) {
    switch (d) {
        case Decomposition::unchanged: return layer_params(layer);
        case Decomposition::dense_pair: {
            const auto& s = *layer.dense();
            return static_cast<std::int64_t>(dense_pair_params(s.out, s.in, ranks[0], s.has_bias));
        }
        case Decomposition::pointwise_pair: {
            const auto& c = *layer.conv();
            return static_cast<std::int64_t>(pointwise_pair_params(c.c_out, c.c_in, ranks[0]));
        }
        case Decomposition::tucker2: {
            const auto& c = *layer.conv();
            return static_cast<std::int64_t>(
                tucker2_params(c.c_out, c.c_in, c.kernel_area(), ranks[0], ranks[1]));
        }
    }
    return 0;
}

std::int64_t predicted_macs(const LayerSpec& layer, Decomposition d,
                            std::span<const std::size_t> ranks) {
    if (d == Decomposition::unchanged) return layer_macs(layer);
    if (d == Decomposition::dense_pair) {
        const auto& s = *layer.dense();
        return static_cast<std::int64_t>(ranks[0] * (s.in + s.out));
    }
    const auto& c = *layer.conv();
    const std::size_t in_px = c.in_h * c.in_w, out_px = layer.out_h * layer.out_w;
    if (d == Decomposition::pointwise_pair)  // first conv at input resolution, second strided
        return static_cast<std::int64_t>(ranks[0] * c.c_in * in_px + c.c_out * ranks[0] * out_px);
    const std::size_t r_in = ranks[0], r_out = ranks[1];
    return static_cast<std::int64_t>(c.c_in * r_in * in_px +
                                     r_in * r_out * c.kernel_area() * out_px +
                                     r_out * c.c_out * out_px);
}

namespace {

const Tensor& weight_for(const Checkpoint& ckpt, const LayerSpec& l) {
    const Tensor* w = ckpt.find(l.name + ".weight");
    if (!w) throw ConfigError("checkpoint has no tensor '" + l.name + ".weight'");
    return *w;
}

std::size_t vbmf_weakened(const Tensor& m, std::size_t r_max, double w) {
    return apply_weakening(std::min(vbmf_rank(m), r_max), r_max, w);
}

}  // namespace

RankPlan plan_ranks(const ArchDescriptor& arch, const CompressionConfig& cfg,
                    const Checkpoint* weights) {
    cfg.validate();
    if (cfg.method == RankMethod::vbmf && !weights)
        throw ConfigError("VBMF rank selection needs a checkpoint with trained weights");

    const LayerSelection sel = select_layers(arch, cfg.mode);
    for (const auto& name : sel.layers)
        if (!arch.find(name))
            throw InternalError("mode selected layer '" + name + "' absent from " + arch.name);

    RankPlan plan;
    plan.arch_name = arch.name;
    plan.config = cfg;
    plan.warnings = sel.warnings;

    for (const auto& l : arch.layers) {
        if (!l.parametric()) continue;
        PlanEntry e;
        e.layer = l.name;
        e.params_before = layer_params(l);
        e.macs_before = layer_macs(l);

        if (sel.contains(l.name)) {
            e.decomposition = decomposition_for(l);
            if (e.decomposition == Decomposition::tucker2) {
                const auto& c = *l.conv();
                std::size_t r_in = 0, r_out = 0;
                if (cfg.method == RankMethod::pr) {
                    std::tie(r_in, r_out) =
                        pr_ranks_tucker2_area(c.c_out, c.c_in, c.kernel_area(), cfg.target_ratio);
                } else {
                    const Tensor& w = weight_for(*weights, l);
                    r_out = vbmf_weakened(unfold(w, 0), c.c_out, cfg.weakening);
                    r_in = vbmf_weakened(unfold(w, 1), c.c_in, cfg.weakening);
                }
                e.raw_ranks = {r_in, r_out};
                e.ranks = {quantize_rank(r_in, cfg.rank_quantum, c.c_in),
                           quantize_rank(r_out, cfg.rank_quantum, c.c_out)};
            } else {
                std::size_t m = 0, n = 0;
                double ratio = cfg.target_ratio;
                if (const auto* d = l.dense()) {
                    m = d->out;
                    n = d->in;
                    ratio = cfg.final_dense_ratio;
                } else {
                    m = l.conv()->c_out;
                    n = l.conv()->c_in;
                }
                std::size_t r = 0;
                if (cfg.method == RankMethod::pr) {
                    r = pr_rank_dense(m, n, ratio);
                } else {
                    const Tensor& w = weight_for(*weights, l);
                    r = vbmf_weakened(w.reshaped({m, n}), std::min(m, n), cfg.weakening);
                }
                e.raw_ranks = {r};
                e.ranks = {quantize_rank(r, cfg.rank_quantum, std::min(m, n))};
            }
            e.params_after = predicted_params(l, e.decomposition, e.ranks);
            e.macs_after = predicted_macs(l, e.decomposition, e.ranks);
        } else {
            e.params_after = e.params_before;
            e.macs_after = e.macs_before;
        }
        plan.entries.push_back(std::move(e));
    }
    plan.recompute_totals();
    return plan;
}

}  // namespace lrd
