#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lrd/arch.hpp"
#include "lrd/bench.hpp"
#include "lrd/checkpoint.hpp"
#include "lrd/decompose.hpp"
#include "lrd/error.hpp"
#include "lrd/linalg.hpp"
#include "lrd/pipeline.hpp"
#include "lrd/rank_select.hpp"
#include "lrd/serialize.hpp"

namespace py = pybind11;
using namespace lrd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    if (shape.empty()) shape = {1};
    const double* p = a.data();
    return Tensor(std::move(shape), std::vector<double>(p, p + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::dict factors_dict(const DecomposedLayer& d) {
    py::dict out;
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, Unchanged>) {
                out["kind"] = "unchanged";
                out["weight"] = to_array(f.weight);
            } else if constexpr (std::is_same_v<T, DensePair>) {
                out["kind"] = "dense_pair";
                out["a"] = to_array(f.a);
                out["b"] = to_array(f.b);
                out["bias"] = f.bias ? py::object(to_array(*f.bias)) : py::none();
            } else if constexpr (std::is_same_v<T, PointwisePair>) {
                out["kind"] = "pointwise_pair";
                out["first"] = to_array(f.first);
                out["second"] = to_array(f.second);
            } else {
                out["kind"] = "tucker2";
                out["first"] = to_array(f.first);
                out["core"] = to_array(f.core);
                out["last"] = to_array(f.last);
            }
        },
        d.factors);
    out["ranks"] = d.ranks;
    out["recon_rel_error"] = d.recon_rel_error;
    out["hooi_errors"] = d.hooi_errors;
    return out;
}

Checkpoint to_checkpoint(const py::dict& tensors) {
    Checkpoint c;
    for (const auto& [k, v] : tensors) c.add(py::cast<std::string>(k), to_tensor(py::cast<Array>(v)));
    return c;
}

py::dict from_checkpoint(const Checkpoint& c) {
    py::dict out;
    for (const auto& [name, t] : c.entries()) out[py::str(name)] = to_array(t);
    return out;
}

ArchDescriptor arch_of(const std::string& text) { return arch_from_json(parse_json(text)); }

CompressionConfig make_config(const std::string& method, const std::string& mode, double ratio,
                              double dense_ratio, std::size_t quantum, double weakening,
                              const std::vector<std::string>& include,
                              const std::vector<std::string>& exclude) {
    CompressionConfig cfg;
    cfg.method = parse_method(method);
    cfg.mode = CompressionMode::parse(mode);
    if (cfg.mode.kind == ModeKind::custom) {
        cfg.mode.include = include;
        cfg.mode.exclude = exclude;
    }
    cfg.target_ratio = ratio;
    cfg.final_dense_ratio = dense_ratio;
    cfg.rank_quantum = quantum;
    cfg.weakening = weakening;
    cfg.validate();
    return cfg;
}

py::dict counts_dict(const Counts& c) {
    py::dict per_layer;
    for (const auto& [name, v] : c.per_layer) per_layer[py::str(name)] = v;
    py::dict out;
    out["total"] = c.total;
    out["batch_norm"] = c.batch_norm;
    out["per_layer"] = per_layer;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Low-rank decomposition of CNN weight checkpoints";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            switch (e.category()) {
                case ErrorCategory::argument:
                case ErrorCategory::config:
                case ErrorCategory::data: PyErr_SetString(PyExc_ValueError, e.what()); return;
                case ErrorCategory::io: PyErr_SetString(PyExc_OSError, e.what()); return;
                case ErrorCategory::numeric: PyErr_SetString(PyExc_ArithmeticError, e.what()); return;
                case ErrorCategory::internal: PyErr_SetString(PyExc_RuntimeError, e.what()); return;
            }
        }
    });

    // linear algebra
    m.def("svd", [](const Array& a) {
        auto r = svd(to_tensor(a));
        return py::make_tuple(to_array(r.u), r.s, to_array(r.vt));
    }, py::arg("a"), "Thin SVD (u, s, vt) with a deterministic sign convention.");
    m.def("truncated_svd", [](const Array& a, std::size_t r) {
        auto f = truncated_svd(to_tensor(a), r);
        return py::make_tuple(to_array(f.left), to_array(f.right));
    }, py::arg("a"), py::arg("rank"));
    m.def("unfold", [](const Array& t, std::size_t mode) { return to_array(unfold(to_tensor(t), mode)); },
          py::arg("t"), py::arg("mode"));
    m.def("fold", [](const Array& mat, std::size_t mode, const Shape& shape) {
        return to_array(fold(to_tensor(mat), mode, shape));
    }, py::arg("matrix"), py::arg("mode"), py::arg("shape"));
    m.def("mode_mult", [](const Array& t, const Array& mat, std::size_t mode) {
        return to_array(mode_mult(to_tensor(t), to_tensor(mat), mode));
    }, py::arg("t"), py::arg("matrix"), py::arg("mode"));

    // decomposition
    m.def("decompose_dense", [](const Array& w, std::size_t r, std::optional<Array> bias) {
        std::optional<Tensor> b;
        if (bias) b = to_tensor(*bias);
        return factors_dict(decompose_dense(to_tensor(w), std::move(b), r));
    }, py::arg("w"), py::arg("rank"), py::arg("bias") = py::none());
    m.def("decompose_pointwise", [](const Array& w, std::size_t r) {
        return factors_dict(decompose_pointwise(to_tensor(w), r));
    }, py::arg("w"), py::arg("rank"));
    m.def("decompose_tucker2", [](const Array& w, std::size_t r_in, std::size_t r_out, int max_iters, double tol) {
        auto t = to_tensor(w);
        DecomposedLayer d;
        {
            py::gil_scoped_release release;
            d = decompose_spatial_tucker2(t, r_in, r_out, {max_iters, tol});
        }
        return factors_dict(d);
    }, py::arg("w"), py::arg("r_in"), py::arg("r_out"), py::arg("max_iters") = 50, py::arg("tol") = 1e-6);
    m.def("conv_forward", [](const Array& w, const Array& x, std::size_t stride, std::size_t padding) {
        auto wt = to_tensor(w);
        if (wt.ndim() != 4) throw ArgumentError("conv_forward: weight must be 4-D");
        ConvSpec c;
        c.c_out = wt.dim(0), c.c_in = wt.dim(1), c.kh = wt.dim(2), c.kw = wt.dim(3);
        c.stride = stride, c.padding = padding;
        return to_array(conv_forward(c, wt, to_tensor(x)));
    }, py::arg("w"), py::arg("x"), py::arg("stride") = 1, py::arg("padding") = 0);

    // rank selection
    m.def("pr_rank_dense", &pr_rank_dense, py::arg("m"), py::arg("n"), py::arg("ratio"));
    m.def("pr_ranks_tucker2", &pr_ranks_tucker2, py::arg("c_out"), py::arg("c_in"), py::arg("k"),
          py::arg("ratio"), "Returns (r_in, r_out).");
    m.def("quantize_rank", &quantize_rank, py::arg("rank"), py::arg("quantum"), py::arg("r_max"));
    m.def("apply_weakening", &apply_weakening, py::arg("r_vbmf"), py::arg("r_max"), py::arg("w"));
    m.def("vbmf_rank", [](const Array& a) { return vbmf_rank(to_tensor(a)); }, py::arg("matrix"));
    m.def("evbmf", [](const Array& a) {
        auto e = evbmf(to_tensor(a));
        py::dict out;
        out["rank"] = e.rank;
        out["sigma2"] = e.sigma2;
        out["lower_bound"] = e.lower_bound;
        out["upper_bound"] = e.upper_bound;
        out["threshold"] = e.threshold;
        return out;
    }, py::arg("matrix"));

    // architectures and plans (JSON text in and out)
    m.def("build_resnet", [](int depth, std::size_t input_hw) {
        return dump_json(arch_to_json(build_resnet(depth, input_hw)));
    }, py::arg("depth"), py::arg("input_hw") = 224);
    m.def("select_layers", [](const std::string& arch, const std::string& mode,
                              const std::vector<std::string>& include, const std::vector<std::string>& exclude) {
        auto md = CompressionMode::parse(mode);
        if (md.kind == ModeKind::custom) md.include = include, md.exclude = exclude;
        auto sel = select_layers(arch_of(arch), md);
        return py::make_tuple(sel.layers, sel.warnings);
    }, py::arg("arch"), py::arg("mode"), py::arg("include") = std::vector<std::string>{},
       py::arg("exclude") = std::vector<std::string>{});
    m.def("plan_ranks", [](const std::string& arch, const std::string& method, const std::string& mode,
                           double ratio, double dense_ratio, std::size_t quantum, double weakening,
                           const std::vector<std::string>& include, const std::vector<std::string>& exclude,
                           std::optional<py::dict> weights) {
        auto cfg = make_config(method, mode, ratio, dense_ratio, quantum, weakening, include, exclude);
        std::optional<Checkpoint> ckpt;
        if (weights) ckpt = to_checkpoint(*weights);
        const auto a = arch_of(arch);
        py::gil_scoped_release release;
        return dump_json(plan_to_json(plan_ranks(a, cfg, ckpt ? &*ckpt : nullptr)));
    }, py::arg("arch"), py::arg("method") = "pr", py::arg("mode") = "mode3", py::arg("ratio") = 3.0,
       py::arg("dense_ratio") = 1.3, py::arg("quantum") = 32, py::arg("weakening") = 0.0,
       py::arg("include") = std::vector<std::string>{}, py::arg("exclude") = std::vector<std::string>{},
       py::arg("weights") = py::none());
    m.def("count_params", [](const std::string& arch, std::optional<std::string> plan) {
        std::optional<RankPlan> p;
        if (plan) p = plan_from_json(parse_json(*plan));
        return counts_dict(count_params(arch_of(arch), p ? &*p : nullptr));
    }, py::arg("arch"), py::arg("plan") = py::none());
    m.def("count_macs", [](const std::string& arch, std::optional<std::string> plan) {
        std::optional<RankPlan> p;
        if (plan) p = plan_from_json(parse_json(*plan));
        return counts_dict(count_macs(arch_of(arch), p ? &*p : nullptr));
    }, py::arg("arch"), py::arg("plan") = py::none());

    // checkpoints and the compression pipeline
    m.def("random_checkpoint", [](const std::string& arch, std::uint64_t seed) {
        return from_checkpoint(random_checkpoint(arch_of(arch), seed));
    }, py::arg("arch"), py::arg("seed") = 0);
    m.def("read_checkpoint", [](const std::string& path) { return from_checkpoint(read_checkpoint(path)); },
          py::arg("path"));
    m.def("write_checkpoint", [](const std::string& path, const py::dict& tensors) {
        write_checkpoint(path, to_checkpoint(tensors));
    }, py::arg("path"), py::arg("tensors"));
    m.def("compress", [](const std::string& arch, const py::dict& weights, const std::string& plan,
                         unsigned workers, int hooi_iters, double hooi_tol) {
        const auto a = arch_of(arch);
        const auto ckpt = to_checkpoint(weights);
        const auto p = plan_from_json(parse_json(plan));
        CompressResult res;
        {
            py::gil_scoped_release release;
            res = compress_model(a, ckpt, p, workers ? workers : default_workers(), {hooi_iters, hooi_tol});
        }
        return py::make_tuple(dump_json(arch_to_json(res.arch)), from_checkpoint(res.checkpoint));
    }, py::arg("arch"), py::arg("weights"), py::arg("plan"), py::arg("workers") = 0,
       py::arg("hooi_iters") = 50, py::arg("hooi_tol") = 1e-6,
       "Returns (compressed_arch_json, compressed_tensors).");
    m.def("verify", [](const std::string& arch, const py::dict& weights, const std::string& comp_arch,
                       const py::dict& comp_weights, std::size_t input_hw, std::uint64_t seed) {
        auto r = verify_model(arch_of(arch), to_checkpoint(weights), arch_of(comp_arch),
                              to_checkpoint(comp_weights), {input_hw, 1, seed});
        py::dict out;
        out["worst_recon"] = r.worst_recon;
        out["worst_forward"] = r.worst_forward;
        out["worst_layer"] = r.worst_layer;
        return out;
    }, py::arg("arch"), py::arg("weights"), py::arg("compressed_arch"), py::arg("compressed_weights"),
       py::arg("input_hw") = 16, py::arg("seed") = 0);
}
