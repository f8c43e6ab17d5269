#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>

#include "lrd/arch.hpp"
#include "lrd/bench.hpp"
#include "lrd/checkpoint.hpp"
#include "lrd/error.hpp"
#include "lrd/pipeline.hpp"
#include "lrd/rank_select.hpp"
#include "lrd/serialize.hpp"

namespace lrd::cli {

namespace {

namespace fs = std::filesystem;

struct Context {
    std::ostream& out;
    std::ostream& err;
};

void print_warnings(Context& ctx, const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) ctx.err << "warning: " << w << "\n";
}

ArchDescriptor load_arch(Context& ctx, const std::string& path, bool strict) {
    std::vector<std::string> warnings;
    auto arch = arch_from_json(read_json_file(path), {strict, &warnings});
    print_warnings(ctx, warnings);
    return arch;
}

RankPlan load_plan(Context& ctx, const std::string& path, bool strict) {
    std::vector<std::string> warnings;
    auto plan = plan_from_json(read_json_file(path), {strict, &warnings});
    print_warnings(ctx, warnings);
    return plan;
}

void emit(Context& ctx, const std::string& text, const std::string& path) {
    if (path.empty()) ctx.out << text;
    else write_text_file(path, text);
}

std::string millions(std::int64_t v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << static_cast<double>(v) / 1e6 << "M";
    return os.str();
}

// Subcommands --------------------------------------------------------------------

struct ArchArgs {
    int depth = 50;
    std::size_t input_hw = 224;
    std::string out;
};

int cmd_arch(Context& ctx, const ArchArgs& a) {
    const auto arch = build_resnet(a.depth, a.input_hw);
    emit(ctx, dump_json(arch_to_json(arch)), a.out);
    if (!a.out.empty()) {
        std::size_t convs = 0, dense = 0;
        for (const auto& l : arch.layers) {
            convs += l.conv() != nullptr;
            dense += l.dense() != nullptr;
        }
        ctx.out << arch.name << ": " << convs << " conv layers, " << dense << " dense -> " << a.out << "\n";
    }
    return kOk;
}

struct PlanArgs {
    std::string arch;
    std::string mode = "mode3";
    std::vector<std::string> include, exclude;
    std::string method = "pr";
    double ratio = 3.0;
    double dense_ratio = 1.3;
    std::size_t quantum = 32;
    double weakening = 0.0;
    std::string ckpt;
    bool random_init = false;
    std::uint64_t seed = 0;
    std::string out;
    bool strict = false;
};

void print_plan_summary(Context& ctx, const RankPlan& plan) {
    ctx.out << std::left << std::setw(28) << "layer" << std::setw(16) << "decomposition" << std::setw(14)
            << "raw ranks" << std::setw(14) << "ranks" << std::right << std::setw(12) << "params"
            << std::setw(12) << "after" << "\n";
    auto ranks = [](const std::vector<std::size_t>& r) {
        std::string s;
        for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + std::to_string(r[i]);
        return s.empty() ? std::string("-") : s;
    };
    for (const auto& e : plan.entries) {
        if (e.decomposition == Decomposition::unchanged) continue;
        ctx.out << std::left << std::setw(28) << e.layer << std::setw(16) << decomposition_name(e.decomposition)
                << std::setw(14) << ranks(e.raw_ranks) << std::setw(14) << ranks(e.ranks) << std::right
                << std::setw(12) << e.params_before << std::setw(12) << e.params_after << "\n";
    }
    ctx.out << "mode " << plan.config.mode.name() << ", method " << method_name(plan.config.method)
            << ": " << plan.decomposed_count() << " layers selected\n"
            << "params " << millions(plan.totals.params_before) << " -> " << millions(plan.totals.params_after)
            << " (achieved ratio " << std::fixed << std::setprecision(3) << plan.achieved_ratio << "x)\n"
            << "MACs   " << millions(plan.totals.macs_before) << " -> " << millions(plan.totals.macs_after)
            << " (ratio " << static_cast<double>(plan.totals.macs_after) / static_cast<double>(plan.totals.macs_before)
            << ")\n";
    ctx.out.unsetf(std::ios::fixed);
}

int cmd_plan(Context& ctx, const PlanArgs& a) {
    const auto arch = load_arch(ctx, a.arch, a.strict);
    CompressionConfig cfg;
    cfg.method = parse_method(a.method);
    cfg.target_ratio = a.ratio;
    cfg.final_dense_ratio = a.dense_ratio;
    cfg.rank_quantum = a.quantum;
    cfg.weakening = a.weakening;
    cfg.mode = CompressionMode::parse(a.mode);
    if (cfg.mode.kind == ModeKind::custom) {
        if (a.include.empty()) throw ConfigError("custom mode needs at least one --include pattern");
        cfg.mode.include = a.include;
        cfg.mode.exclude = a.exclude;
    } else if (!a.include.empty() || !a.exclude.empty()) {
        throw ConfigError("--include/--exclude only apply to --mode custom");
    }
    cfg.validate();

    std::optional<Checkpoint> weights;
    if (!a.ckpt.empty()) weights = read_checkpoint(a.ckpt);
    else if (a.random_init) weights = random_checkpoint(arch, a.seed);
    if (cfg.method == RankMethod::vbmf && !weights)
        throw ConfigError("--method vbmf needs --ckpt (or --random-init)");

    const auto plan = plan_ranks(arch, cfg, weights ? &*weights : nullptr);
    print_warnings(ctx, plan.warnings);
    print_plan_summary(ctx, plan);
    if (!a.out.empty()) write_text_file(a.out, dump_json(plan_to_json(plan)));
    return kOk;
}

struct InitArgs {
    std::string arch;
    std::uint64_t seed = 0;
    std::string out;
    bool strict = false;
};

int cmd_init(Context& ctx, const InitArgs& a) {
    const auto arch = load_arch(ctx, a.arch, a.strict);
    const auto ckpt = random_checkpoint(arch, a.seed);
    write_checkpoint(a.out, ckpt);
    ctx.out << "wrote " << ckpt.size() << " tensors to " << a.out << "\n";
    return kOk;
}

struct CompressArgs {
    std::vector<std::string> inputs;  // arch [ckpt] plan
    bool random_init = false;
    std::uint64_t seed = 0;
    std::string out;
    std::string arch_out;
    unsigned workers = 0;
    int hooi_iters = 50;
    double hooi_tol = 1e-6;
    bool strict = false;
};

int cmd_compress(Context& ctx, const CompressArgs& a) {
    const std::size_t want = a.random_init ? 2 : 3;
    if (a.inputs.size() != want)
        throw ConfigError(a.random_init ? "usage: compress ARCH PLAN --random-init --out FILE"
                                        : "usage: compress ARCH CKPT PLAN --out FILE");
    const auto arch = load_arch(ctx, a.inputs[0], a.strict);
    const auto ckpt = a.random_init ? random_checkpoint(arch, a.seed) : read_checkpoint(a.inputs[1]);
    const auto plan = load_plan(ctx, a.inputs.back(), a.strict);

    const unsigned workers = a.workers ? a.workers : default_workers();
    const auto result = compress_model(arch, ckpt, plan, workers, {a.hooi_iters, a.hooi_tol});

    const std::string arch_out =
        a.arch_out.empty() ? fs::path(a.out).replace_extension(".json").string() : a.arch_out;
    write_checkpoint(a.out, result.checkpoint);
    write_text_file(arch_out, dump_json(arch_to_json(result.arch)));

    ctx.out << std::left << std::setw(28) << "layer" << std::setw(16) << "decomposition" << std::right
            << std::setw(12) << "params" << std::setw(12) << "after" << std::setw(14) << "recon_err" << "\n";
    double worst = 0.0;
    for (const auto& l : result.layers) {
        worst = std::max(worst, l.recon_rel_error);
        ctx.out << std::left << std::setw(28) << l.layer << std::setw(16) << decomposition_name(l.decomposition)
                << std::right << std::setw(12) << l.params_before << std::setw(12) << l.params_after
                << std::setw(14) << std::scientific << std::setprecision(3) << l.recon_rel_error << "\n";
        ctx.out.unsetf(std::ios::scientific);
    }
    const auto before = count_params(arch).total, after = count_params(result.arch).total;
    std::size_t layers_before = 0, layers_after = 0;
    for (const auto& l : arch.layers) layers_before += l.parametric();
    for (const auto& l : result.arch.layers) layers_after += l.parametric();
    ctx.out << result.layers.size() << " layers decomposed; weight layers " << layers_before << " -> "
            << layers_after << "; params " << millions(before) << " -> " << millions(after)
            << "; worst recon error " << std::scientific << std::setprecision(3) << worst << "\n"
            << "wrote " << a.out << " and " << arch_out << "\n";
    ctx.out.unsetf(std::ios::scientific);
    return kOk;
}

struct VerifyArgs {
    std::vector<std::string> inputs;  // orig_arch orig_ckpt comp_arch comp_ckpt
    std::size_t input_hw = 16;
    std::size_t batch = 1;
    std::optional<double> rel_tol;
    std::uint64_t seed = 0;
    bool strict = false;
};

int cmd_verify(Context& ctx, const VerifyArgs& a) {
    const auto orig_arch = load_arch(ctx, a.inputs[0], a.strict);
    const auto orig_ckpt = read_checkpoint(a.inputs[1]);
    const auto comp_arch = load_arch(ctx, a.inputs[2], a.strict);
    const auto comp_ckpt = read_checkpoint(a.inputs[3]);
    const auto report = verify_model(orig_arch, orig_ckpt, comp_arch, comp_ckpt, {a.input_hw, a.batch, a.seed});

    ctx.out << std::left << std::setw(28) << "layer" << std::right << std::setw(14) << "recon_err"
            << std::setw(14) << "forward_err" << "\n"
            << std::scientific << std::setprecision(3);
    for (const auto& l : report.layers) {
        if (!l.decomposed) continue;
        ctx.out << std::left << std::setw(28) << l.layer << std::right << std::setw(14) << l.recon_rel_error
                << std::setw(14) << l.forward_rel_error << "\n";
    }
    ctx.out << "worst recon " << report.worst_recon << ", worst forward " << report.worst_forward
            << " (" << (report.worst_layer.empty() ? "-" : report.worst_layer) << ")\n";
    ctx.out.unsetf(std::ios::scientific);

    if (!a.rel_tol) return kOk;
    const double worst = std::max(report.worst_recon, report.worst_forward);
    if (worst > *a.rel_tol) {
        ctx.err << "error[tolerance]: worst deviation " << worst << " at '" << report.worst_layer
                << "' exceeds --rel-tol " << *a.rel_tol << "\n";
        return kValidation;
    }
    return kOk;
}

struct CountArgs {
    std::string arch;
    std::string plan;
    bool json = false;
    bool per_layer = false;
    bool strict = false;
};

int cmd_count(Context& ctx, const CountArgs& a) {
    const auto arch = load_arch(ctx, a.arch, a.strict);
    std::optional<RankPlan> plan;
    if (!a.plan.empty()) plan = load_plan(ctx, a.plan, a.strict);
    const RankPlan* p = plan ? &*plan : nullptr;
    const auto params = count_params(arch, p);
    const auto macs = count_macs(arch, p);

    if (a.json) {
        Json j;
        j["arch"] = arch.name;
        j["params"] = params.total;
        j["batch_norm_params"] = params.batch_norm;
        j["macs"] = macs.total;
        j["flops"] = 2 * macs.total;
        Json layers = Json::object();
        for (std::size_t i = 0; i < params.per_layer.size(); ++i)
            layers[params.per_layer[i].first] = {{"params", params.per_layer[i].second},
                                                 {"macs", macs.per_layer[i].second}};
        j["per_layer"] = std::move(layers);
        ctx.out << dump_json(j);
        return kOk;
    }
    if (a.per_layer) {
        ctx.out << std::left << std::setw(28) << "layer" << std::right << std::setw(14) << "params"
                << std::setw(16) << "MACs" << "\n";
        for (std::size_t i = 0; i < params.per_layer.size(); ++i)
            ctx.out << std::left << std::setw(28) << params.per_layer[i].first << std::right << std::setw(14)
                    << params.per_layer[i].second << std::setw(16) << macs.per_layer[i].second << "\n";
    }
    ctx.out << arch.name << (plan ? " + plan (" + plan->config.mode.name() + ")" : std::string()) << "\n"
            << "params      " << params.total << " (" << millions(params.total) << ")\n"
            << "batch norm  " << params.batch_norm << " (reported separately)\n"
            << "MACs        " << macs.total << " (" << millions(macs.total) << ")\n"
            << "FLOPs       " << 2 * macs.total << "\n";
    return kOk;
}

struct BenchArgs {
    std::string arch;
    std::vector<std::string> plans;
    int reps = 20;
    int warmup = 3;
    std::size_t batch = 1;
    std::uint64_t seed = 0;
    std::string out;
    bool strict = false;
};

int cmd_bench(Context& ctx, const BenchArgs& a) {
    const auto arch = load_arch(ctx, a.arch, a.strict);
    std::vector<RankPlan> plans;
    for (const auto& p : a.plans) plans.push_back(load_plan(ctx, p, a.strict));
    const auto report = compare_modes(arch, plans, {a.reps, a.warmup, a.batch, a.seed});
    ctx.out << format_mode_table(report);
    if (!a.out.empty()) write_text_file(a.out, dump_json(report_to_json(report)));
    return kOk;
}

int exit_code_for(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::argument:
        case ErrorCategory::config: return kValidation;
        case ErrorCategory::data:
        case ErrorCategory::io: return kData;
        case ErrorCategory::numeric:
        case ErrorCategory::internal: return kNumeric;
    }
    return kNumeric;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Context ctx{out, err};
    CLI::App app{"Low-rank compression of CNN checkpoints with layer-targeted decomposition", "lrd"};
    app.require_subcommand(1);

    std::function<int()> action;

    ArchArgs arch_args;
    auto* arch = app.add_subcommand("arch", "Emit a ResNet architecture descriptor as JSON");
    arch->add_option("depth", arch_args.depth, "ResNet depth: 18, 34, 50, 101 or 152")->required();
    arch->add_option("--input-hw", arch_args.input_hw, "Reference input resolution")->capture_default_str();
    arch->add_option("--out", arch_args.out, "Output path (stdout when omitted)");
    arch->callback([&] { action = [&] { return cmd_arch(ctx, arch_args); }; });

    PlanArgs plan_args;
    auto* plan = app.add_subcommand("plan", "Choose per-layer ranks and write a rank plan");
    plan->add_option("arch", plan_args.arch, "Architecture JSON")->required();
    plan->add_option("--mode", plan_args.mode, "vanilla, mode1..mode5 or custom")->capture_default_str();
    plan->add_option("--include", plan_args.include, "Custom mode: layer-name globs to compress");
    plan->add_option("--exclude", plan_args.exclude, "Custom mode: layer-name globs to keep");
    plan->add_option("--method", plan_args.method, "pr or vbmf")->capture_default_str();
    plan->add_option("--ratio", plan_args.ratio, "Target compression ratio for convs")->capture_default_str();
    plan->add_option("--dense-ratio", plan_args.dense_ratio, "Compression ratio for the final dense layer")
        ->capture_default_str();
    plan->add_option("--quantum", plan_args.quantum, "Ranks are rounded to multiples of this")
        ->capture_default_str();
    plan->add_option("--weakening", plan_args.weakening, "VBMF weakening factor in [0, 1]")
        ->capture_default_str();
    plan->add_option("--ckpt", plan_args.ckpt, "Checkpoint with trained weights (VBMF)");
    plan->add_flag("--random-init", plan_args.random_init, "Use random weights instead of --ckpt");
    plan->add_option("--seed", plan_args.seed, "Seed for --random-init")->capture_default_str();
    plan->add_option("--out", plan_args.out, "Plan JSON output path");
    plan->add_flag("--strict", plan_args.strict, "Reject unknown JSON fields");
    plan->callback([&] { action = [&] { return cmd_plan(ctx, plan_args); }; });

    InitArgs init_args;
    auto* init = app.add_subcommand("init", "Write a randomly initialized checkpoint for an architecture");
    init->add_option("arch", init_args.arch, "Architecture JSON")->required();
    init->add_option("--seed", init_args.seed, "Random seed")->capture_default_str();
    init->add_option("--out", init_args.out, "Checkpoint output path")->required();
    init->add_flag("--strict", init_args.strict, "Reject unknown JSON fields");
    init->callback([&] { action = [&] { return cmd_init(ctx, init_args); }; });

    CompressArgs compress_args;
    auto* compress = app.add_subcommand("compress", "Decompose planned layers of a checkpoint");
    compress->add_option("inputs", compress_args.inputs, "ARCH CKPT PLAN (or ARCH PLAN with --random-init)")
        ->required()
        ->expected(2, 3);
    compress->add_flag("--random-init", compress_args.random_init, "Decompose random weights");
    compress->add_option("--seed", compress_args.seed, "Seed for --random-init")->capture_default_str();
    compress->add_option("--out", compress_args.out, "Compressed checkpoint path")->required();
    compress->add_option("--arch-out", compress_args.arch_out,
                         "Compressed architecture JSON (default: --out with .json extension)");
    compress->add_option("--workers", compress_args.workers,
                         "Decomposition threads (default: LRD_WORKERS or all cores)");
    compress->add_option("--hooi-iters", compress_args.hooi_iters, "HOOI iteration cap")->capture_default_str();
    compress->add_option("--hooi-tol", compress_args.hooi_tol, "HOOI relative-error improvement tolerance")
        ->capture_default_str();
    compress->add_flag("--strict", compress_args.strict, "Reject unknown JSON fields");
    compress->callback([&] { action = [&] { return cmd_compress(ctx, compress_args); }; });

    VerifyArgs verify_args;
    auto* verify = app.add_subcommand("verify", "Check a compressed model against its original");
    verify->add_option("inputs", verify_args.inputs, "ORIG_ARCH ORIG_CKPT COMP_ARCH COMP_CKPT")
        ->required()
        ->expected(4);
    verify->add_option("--input-hw", verify_args.input_hw, "Spatial size of random probe inputs")
        ->capture_default_str();
    verify->add_option("--batch", verify_args.batch, "Probe batch size")->capture_default_str();
    verify->add_option("--rel-tol", verify_args.rel_tol, "Fail when any relative deviation exceeds this");
    verify->add_option("--seed", verify_args.seed, "Seed for probe inputs")->capture_default_str();
    verify->add_flag("--strict", verify_args.strict, "Reject unknown JSON fields");
    verify->callback([&] { action = [&] { return cmd_verify(ctx, verify_args); }; });

    CountArgs count_args;
    auto* count = app.add_subcommand("count", "Count parameters and MACs, optionally under a plan");
    count->add_option("arch", count_args.arch, "Architecture JSON")->required();
    count->add_option("plan", count_args.plan, "Rank plan JSON");
    count->add_flag("--json", count_args.json, "Machine-readable output");
    count->add_flag("--per-layer", count_args.per_layer, "Print a per-layer table");
    count->add_flag("--strict", count_args.strict, "Reject unknown JSON fields");
    count->callback([&] { action = [&] { return cmd_count(ctx, count_args); }; });

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "Time original vs decomposed layers for each plan");
    bench->add_option("arch", bench_args.arch, "Architecture JSON")->required();
    bench->add_option("plans", bench_args.plans, "Rank plan JSON files");
    bench->add_option("--reps", bench_args.reps, "Timed repetitions per layer")->capture_default_str();
    bench->add_option("--warmup", bench_args.warmup, "Untimed warmup runs per layer")->capture_default_str();
    bench->add_option("--batch", bench_args.batch, "Batch size")->capture_default_str();
    bench->add_option("--seed", bench_args.seed, "Seed for random weights and inputs")->capture_default_str();
    bench->add_option("--out", bench_args.out, "Mode report JSON path");
    bench->add_flag("--strict", bench_args.strict, "Reject unknown JSON fields");
    bench->callback([&] { action = [&] { return cmd_bench(ctx, bench_args); }; });

    std::vector<const char*> argv{"lrd"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << e.what() << "\n";
        return kValidation;
    }

    try {
        return action ? action() : kValidation;
    } catch (const Error& e) {
        err << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
        return exit_code_for(e.category());
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << "\n";
        return kNumeric;
    }
}

}  // namespace lrd::cli
