#include "lrd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>
#include <unordered_map>

#include "lrd/bench.hpp"
#include "lrd/error.hpp"

namespace lrd {

std::string weight_key(const std::string& layer) { return layer + ".weight"; }
std::string bias_key(const std::string& layer) { return layer + ".bias"; }
std::string chain_layer_name(const std::string& layer, std::size_t stage) {
    return layer + "." + std::to_string(stage);
}

namespace {

Shape weight_shape(const LayerSpec& l) {
    if (const auto* c = l.conv()) return {c->c_out, c->c_in, c->kh, c->kw};
    const auto& d = *l.dense();
    return {d.out, d.in};
}

}  // namespace

Checkpoint random_checkpoint(const ArchDescriptor& arch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Checkpoint ckpt;
    for (const auto& l : arch.layers) {
        if (const auto* c = l.conv()) {
            const double fan_in = static_cast<double>(c->c_in * c->kh * c->kw);
            ckpt.add(weight_key(l.name), Tensor::randn(weight_shape(l), rng, std::sqrt(2.0 / fan_in)));
        } else if (const auto* d = l.dense()) {
            ckpt.add(weight_key(l.name),
                     Tensor::randn(weight_shape(l), rng, 1.0 / std::sqrt(static_cast<double>(d->in))));
            if (d->has_bias) ckpt.add(bias_key(l.name), Tensor::zeros({d->out}));
        } else if (const auto* m = l.marker(); m->marker == MarkerKind::batch_norm) {
            Tensor gamma({m->channels});
            std::fill(gamma.data().begin(), gamma.data().end(), 1.0);
            ckpt.add(weight_key(l.name), std::move(gamma));
            ckpt.add(bias_key(l.name), Tensor::zeros({m->channels}));
        }
    }
    return ckpt;
}

unsigned default_workers() {
    if (const char* env = std::getenv("LRD_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

void validate_inputs(const ArchDescriptor& arch, const Checkpoint& ckpt, const RankPlan& plan) {
    if (plan.arch_name != arch.name)
        throw ConfigError("plan was made for '" + plan.arch_name + "', not '" + arch.name + "'");
    for (const auto& e : plan.entries) {
        const auto* l = arch.find(e.layer);
        if (!l || !l->parametric())
            throw ConfigError("plan references unknown layer '" + e.layer + "'");
        if (e.decomposition == Decomposition::unchanged) continue;
        if (e.decomposition != decomposition_for(*l))
            throw ConfigError("plan decomposition '" + std::string(decomposition_name(e.decomposition)) +
                              "' does not fit layer '" + e.layer + "'");
        std::vector<std::size_t> limits;
        if (const auto* c = l->conv()) {
            if (e.decomposition == Decomposition::tucker2) limits = {c->c_in, c->c_out};
            else limits = {std::min(c->c_in, c->c_out)};
        } else {
            limits = {std::min(l->dense()->in, l->dense()->out)};
        }
        if (e.ranks.size() != limits.size())
            throw ConfigError("plan entry '" + e.layer + "' has the wrong number of ranks");
        for (std::size_t i = 0; i < limits.size(); ++i)
            if (e.ranks[i] < 1 || e.ranks[i] > limits[i])
                throw ConfigError("plan entry '" + e.layer + "' rank " + std::to_string(e.ranks[i]) +
                                  " outside [1, " + std::to_string(limits[i]) + "]");
    }
    for (const auto& l : arch.layers) {
        if (!l.parametric()) continue;
        const auto* w = ckpt.find(weight_key(l.name));
        if (!w) throw ConfigError("checkpoint has no tensor '" + weight_key(l.name) + "'");
        if (w->shape() != weight_shape(l))
            throw ConfigError("checkpoint tensor '" + weight_key(l.name) + "' has shape " +
                              shape_to_string(w->shape()) + ", layer expects " +
                              shape_to_string(weight_shape(l)));
        if (!w->all_finite()) throw DataError("tensor '" + weight_key(l.name) + "' is not finite");
    }
}

// Chain layers replacing `l` in the new architecture.
std::vector<LayerSpec> chain_layers(const LayerSpec& l, const PlanEntry& e) {
    std::vector<LayerSpec> out;
    auto make = [&](std::size_t stage, LayerKind kind, Role role, std::size_t oh, std::size_t ow) {
        out.push_back({chain_layer_name(l.name, stage), std::move(kind), l.block, role, oh, ow, l.name});
    };
    if (const auto* d = l.dense()) {
        make(0, DenseSpec{d->in, e.ranks[0], false}, Role::final_dense, 1, 1);
        make(1, DenseSpec{e.ranks[0], d->out, d->has_bias}, Role::final_dense, 1, 1);
        return out;
    }
    const auto& c = *l.conv();
    if (e.decomposition == Decomposition::pointwise_pair) {
        make(0, ConvSpec{c.c_in, e.ranks[0], 1, 1, 1, 0, c.in_h, c.in_w}, l.role, c.in_h, c.in_w);
        make(1, ConvSpec{e.ranks[0], c.c_out, 1, 1, c.stride, c.padding, c.in_h, c.in_w}, l.role,
             l.out_h, l.out_w);
        return out;
    }
    const std::size_t r_in = e.ranks[0], r_out = e.ranks[1];
    make(0, ConvSpec{c.c_in, r_in, 1, 1, 1, 0, c.in_h, c.in_w}, Role::pointwise, c.in_h, c.in_w);
    make(1, ConvSpec{r_in, r_out, c.kh, c.kw, c.stride, c.padding, c.in_h, c.in_w}, Role::spatial,
         l.out_h, l.out_w);
    make(2, ConvSpec{r_out, c.c_out, 1, 1, 1, 0, l.out_h, l.out_w}, Role::pointwise, l.out_h, l.out_w);
    return out;
}

// (name, tensor) pairs for a decomposed layer, in chain order.
std::vector<std::pair<std::string, Tensor>> chain_tensors(const std::string& layer,
                                                          const DecomposedLayer& d) {
    std::vector<std::pair<std::string, Tensor>> out;
    auto w = [&](std::size_t stage) { return weight_key(chain_layer_name(layer, stage)); };
    if (const auto* p = std::get_if<DensePair>(&d.factors)) {
        out.emplace_back(w(0), p->b);
        out.emplace_back(w(1), p->a);
        if (p->bias) out.emplace_back(bias_key(chain_layer_name(layer, 1)), *p->bias);
    } else if (const auto* p = std::get_if<PointwisePair>(&d.factors)) {
        out.emplace_back(w(0), p->first);
        out.emplace_back(w(1), p->second);
    } else if (const auto* t = std::get_if<Tucker2>(&d.factors)) {
        out.emplace_back(w(0), t->first);
        out.emplace_back(w(1), t->core);
        out.emplace_back(w(2), t->last);
    }
    return out;
}

}  // namespace

CompressResult compress_model(const ArchDescriptor& arch, const Checkpoint& ckpt, const RankPlan& plan,
                              unsigned workers, HooiOptions hooi) {
    validate_inputs(arch, ckpt, plan);

    std::vector<const PlanEntry*> todo;
    for (const auto& e : plan.entries)
        if (e.decomposition != Decomposition::unchanged) todo.push_back(&e);

    std::vector<std::function<DecomposedLayer()>> jobs;
    jobs.reserve(todo.size());
    for (const auto* e : todo) {
        const Tensor& w = ckpt.at(weight_key(e->layer));
        const Tensor* bias = ckpt.find(bias_key(e->layer));
        jobs.emplace_back([e, &w, bias, hooi]() -> DecomposedLayer {
            switch (e->decomposition) {
                case Decomposition::dense_pair:
                    return decompose_dense(w, bias ? std::optional<Tensor>(*bias) : std::nullopt, e->ranks[0]);
                case Decomposition::pointwise_pair: return decompose_pointwise(w, e->ranks[0]);
                case Decomposition::tucker2:
                    return decompose_spatial_tucker2(w, e->ranks[0], e->ranks[1], hooi);
                case Decomposition::unchanged: break;
            }
            throw InternalError("unchanged layer scheduled for decomposition");
        });
    }
    auto decomposed = run_decompositions(jobs, workers);

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < todo.size(); ++i) index.emplace(todo[i]->layer, i);

    CompressResult result;
    result.arch.name = arch.name + "-lrd";
    result.arch.input_hw = arch.input_hw;
    for (const auto& l : arch.layers) {
        auto it = index.find(l.name);
        if (it == index.end()) {
            result.arch.layers.push_back(l);
            continue;
        }
        for (auto& c : chain_layers(l, *todo[it->second])) result.arch.layers.push_back(std::move(c));
        const auto& d = decomposed[it->second];
        result.layers.push_back({l.name, todo[it->second]->decomposition, d.ranks, d.recon_rel_error,
                                 todo[it->second]->params_before,
                                 static_cast<std::int64_t>(param_count(d))});
    }
    validate_arch(result.arch);

    // <layer>.weight of a decomposed layer expands into its chain in place; its
    // bias travels with the chain.
    std::unordered_map<std::string, std::size_t> by_weight;
    std::unordered_map<std::string, std::size_t> by_bias;
    for (const auto& [layer, i] : index) {
        by_weight.emplace(weight_key(layer), i);
        by_bias.emplace(bias_key(layer), i);
    }
    for (const auto& [name, t] : ckpt.entries()) {
        if (auto it = by_weight.find(name); it != by_weight.end()) {
            for (auto& [n, tensor] : chain_tensors(todo[it->second]->layer, decomposed[it->second]))
                result.checkpoint.add(std::move(n), std::move(tensor));
        } else if (!by_bias.count(name)) {
            result.checkpoint.add(name, t);
        }
    }
    return result;
}

DecomposedLayer load_decomposed(const LayerSpec& original, const ArchDescriptor& compressed_arch,
                                const Checkpoint& compressed_ckpt) {
    auto tensor = [&](const std::string& key) -> const Tensor& {
        const auto* t = compressed_ckpt.find(key);
        if (!t) throw ConfigError("compressed checkpoint has no tensor '" + key + "'");
        return *t;
    };
    const Shape expected = weight_shape(original);

    if (const auto* same = compressed_arch.find(original.name)) {
        if (same->kind != original.kind)
            throw ConfigError("layer '" + original.name + "' changed shape between the two models");
        std::optional<Tensor> bias;
        if (const auto* b = compressed_ckpt.find(bias_key(original.name))) bias = *b;
        const Tensor& w = tensor(weight_key(original.name));
        if (w.shape() != expected)
            throw ConfigError("tensor '" + weight_key(original.name) + "' has an unexpected shape");
        return keep_unchanged(w, std::move(bias));
    }

    std::vector<const LayerSpec*> chain;
    for (const auto& l : compressed_arch.layers)
        if (l.origin == original.name) chain.push_back(&l);
    if (chain.empty())
        throw ConfigError("layer '" + original.name + "' is missing from the compressed model");

    DecomposedLayer d;
    auto w = [&](std::size_t i) -> const Tensor& { return tensor(weight_key(chain[i]->name)); };
    auto mismatch = [&] {
        return ConfigError("decomposed chain of '" + original.name + "' does not fit its original shape " +
                           shape_to_string(expected));
    };
    if (original.dense()) {
        if (chain.size() != 2) throw mismatch();
        std::optional<Tensor> bias;
        if (const auto* b = compressed_ckpt.find(bias_key(chain[1]->name))) bias = *b;
        const Tensor &first = w(0), &second = w(1);
        if (first.ndim() != 2 || second.ndim() != 2 || second.dim(1) != first.dim(0) ||
            second.dim(0) != expected[0] || first.dim(1) != expected[1])
            throw mismatch();
        d.ranks = {first.dim(0)};
        d.factors = DensePair{second, first, std::move(bias)};
        return d;
    }
    if (chain.size() == 2) {
        const Tensor &first = w(0), &second = w(1);
        if (first.ndim() != 4 || second.ndim() != 4 || second.dim(1) != first.dim(0) ||
            second.dim(0) != expected[0] || first.dim(1) != expected[1] || expected[2] != 1 ||
            expected[3] != 1)
            throw mismatch();
        d.ranks = {first.dim(0)};
        d.factors = PointwisePair{first, second};
        return d;
    }
    if (chain.size() == 3) {
        const Tensor &first = w(0), &core = w(1), &last = w(2);
        if (first.ndim() != 4 || core.ndim() != 4 || last.ndim() != 4 || core.dim(1) != first.dim(0) ||
            last.dim(1) != core.dim(0) || last.dim(0) != expected[0] || first.dim(1) != expected[1] ||
            core.dim(2) != expected[2] || core.dim(3) != expected[3])
            throw mismatch();
        d.ranks = {first.dim(0), core.dim(0)};
        d.factors = Tucker2{first, core, last};
        return d;
    }
    throw mismatch();
}

VerifyReport verify_model(const ArchDescriptor& original_arch, const Checkpoint& original_ckpt,
                          const ArchDescriptor& compressed_arch, const Checkpoint& compressed_ckpt,
                          const VerifyOptions& opts) {
    if (opts.input_hw < 1 || opts.batch < 1) throw ArgumentError("verify: input size and batch must be >= 1");
    std::mt19937_64 rng(opts.seed);
    VerifyReport report;
    for (const auto& l : original_arch.layers) {
        if (!l.parametric()) continue;
        const auto* w = original_ckpt.find(weight_key(l.name));
        if (!w || w->shape() != weight_shape(l))
            throw ConfigError("original checkpoint lacks a matching '" + weight_key(l.name) + "'");
        std::optional<Tensor> bias;
        if (const auto* b = original_ckpt.find(bias_key(l.name))) bias = *b;

        const DecomposedLayer d = load_decomposed(l, compressed_arch, compressed_ckpt);
        LayerVerification v;
        v.layer = l.name;
        v.decomposed = !std::holds_alternative<Unchanged>(d.factors);
        v.recon_rel_error = reconstruction_error(d, *w);

        if (v.decomposed) {
            Shape in = layer_input_shape(l, opts.batch);
            if (const auto* c = l.conv()) {
                const std::size_t floor_hw = std::max(c->kh, c->kw);
                in[2] = std::max(floor_hw, std::min(c->in_h, opts.input_hw));
                in[3] = std::max(floor_hw, std::min(c->in_w, opts.input_hw));
            }
            const Tensor x = Tensor::randn(in, rng);
            const Tensor ref = chain_forward(l, keep_unchanged(*w, bias), x);
            v.forward_rel_error = relative_error(chain_forward(l, d, x), ref);
        }
        if (v.recon_rel_error > report.worst_recon || v.forward_rel_error > report.worst_forward)
            report.worst_layer = l.name;
        report.worst_recon = std::max(report.worst_recon, v.recon_rel_error);
        report.worst_forward = std::max(report.worst_forward, v.forward_rel_error);
        report.layers.push_back(std::move(v));
    }
    return report;
}

}  // namespace lrd
