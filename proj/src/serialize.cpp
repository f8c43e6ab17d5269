#include "lrd/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "lrd/error.hpp"

namespace lrd {

namespace {

void check_fields(const Json& j, std::initializer_list<const char*> allowed, const std::string& where,
                  const ParseOptions& opts) {
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* a) { return key == a; });
        if (known) continue;
        if (opts.strict) throw ConfigError(where + ": unknown field '" + key + "'");
        if (opts.warnings) opts.warnings->push_back(where + ": ignoring unknown field '" + key + "'");
    }
}

const Json& field(const Json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw DataError(where + ": missing field '" + key + "'");
    return *it;
}

std::int64_t get_int(const Json& j, const char* key, const std::string& where) {
    const Json& v = field(j, key, where);
    if (!v.is_number_integer()) throw DataError(where + ": field '" + key + "' must be an integer");
    return v.get<std::int64_t>();
}

std::size_t get_size(const Json& j, const char* key, const std::string& where) {
    const auto v = get_int(j, key, where);
    if (v < 0) throw DataError(where + ": field '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
}

double get_double(const Json& j, const char* key, const std::string& where) {
    const Json& v = field(j, key, where);
    if (!v.is_number()) throw DataError(where + ": field '" + key + "' must be a number");
    return v.get<double>();
}

std::string get_string(const Json& j, const char* key, const std::string& where) {
    const Json& v = field(j, key, where);
    if (!v.is_string()) throw DataError(where + ": field '" + key + "' must be a string");
    return v.get<std::string>();
}

bool get_bool(const Json& j, const char* key, const std::string& where) {
    const Json& v = field(j, key, where);
    if (!v.is_boolean()) throw DataError(where + ": field '" + key + "' must be a boolean");
    return v.get<bool>();
}

template <typename T>
std::vector<T> get_array(const Json& j, const char* key, const std::string& where) {
    const Json& v = field(j, key, where);
    if (!v.is_array()) throw DataError(where + ": field '" + key + "' must be an array");
    std::vector<T> out;
    for (const auto& e : v) {
        if constexpr (std::is_same_v<T, std::string>) {
            if (!e.is_string()) throw DataError(where + ": '" + key + "' must hold strings");
        } else {
            if (!e.is_number_integer() || e.get<std::int64_t>() < 0)
                throw DataError(where + ": '" + key + "' must hold non-negative integers");
        }
        out.push_back(e.get<T>());
    }
    return out;
}

std::vector<std::string> optional_strings(const Json& j, const char* key, const std::string& where) {
    return j.contains(key) ? get_array<std::string>(j, key, where) : std::vector<std::string>{};
}

}  // namespace

// Architecture -----------------------------------------------------------------

Json arch_to_json(const ArchDescriptor& arch) {
    Json layers = Json::array();
    for (const auto& l : arch.layers) {
        Json o;
        o["name"] = l.name;
        if (const auto* c = l.conv()) {
            o["kind"] = "conv";
            o["c_in"] = c->c_in;
            o["c_out"] = c->c_out;
            o["kh"] = c->kh;
            o["kw"] = c->kw;
            o["stride"] = c->stride;
            o["padding"] = c->padding;
            o["in_h"] = c->in_h;
            o["in_w"] = c->in_w;
        } else if (const auto* d = l.dense()) {
            o["kind"] = "dense";
            o["in"] = d->in;
            o["out"] = d->out;
            o["has_bias"] = d->has_bias;
        } else {
            const auto& m = *l.marker();
            o["kind"] = marker_name(m.marker);
            o["channels"] = m.channels;
        }
        o["block"] = l.block;
        o["role"] = role_name(l.role);
        o["out_h"] = l.out_h;
        o["out_w"] = l.out_w;
        if (!l.origin.empty()) o["origin"] = l.origin;
        layers.push_back(std::move(o));
    }
    Json j;
    j["name"] = arch.name;
    j["input_hw"] = arch.input_hw;
    j["layers"] = std::move(layers);
    return j;
}

ArchDescriptor arch_from_json(const Json& j, ParseOptions opts) {
    check_fields(j, {"name", "input_hw", "layers"}, "arch", opts);
    ArchDescriptor arch;
    arch.name = get_string(j, "name", "arch");
    arch.input_hw = get_size(j, "input_hw", "arch");
    const Json& layers = field(j, "layers", "arch");
    if (!layers.is_array()) throw DataError("arch: 'layers' must be an array");
    for (const auto& o : layers) {
        if (!o.is_object()) throw DataError("arch: layer entries must be objects");
        const std::string where =
            "arch layer '" + (o.contains("name") && o["name"].is_string() ? o["name"].get<std::string>() : "?") + "'";
        const std::string kind = get_string(o, "kind", where);
        LayerSpec l;
        l.name = get_string(o, "name", where);
        if (kind == "conv") {
            check_fields(o, {"name", "kind", "c_in", "c_out", "kh", "kw", "stride", "padding", "in_h",
                             "in_w", "block", "role", "out_h", "out_w", "origin"},
                         where, opts);
            l.kind = ConvSpec{get_size(o, "c_in", where),    get_size(o, "c_out", where),
                              get_size(o, "kh", where),      get_size(o, "kw", where),
                              get_size(o, "stride", where),  get_size(o, "padding", where),
                              get_size(o, "in_h", where),    get_size(o, "in_w", where)};
        } else if (kind == "dense") {
            check_fields(o, {"name", "kind", "in", "out", "has_bias", "block", "role", "out_h", "out_w",
                             "origin"},
                         where, opts);
            l.kind = DenseSpec{get_size(o, "in", where), get_size(o, "out", where),
                               get_bool(o, "has_bias", where)};
        } else {
            check_fields(o, {"name", "kind", "channels", "block", "role", "out_h", "out_w", "origin"},
                         where, opts);
            l.kind = MarkerSpec{parse_marker(kind), get_size(o, "channels", where)};
        }
        l.block = static_cast<int>(get_int(o, "block", where));
        l.role = parse_role(get_string(o, "role", where));
        l.out_h = get_size(o, "out_h", where);
        l.out_w = get_size(o, "out_w", where);
        if (o.contains("origin")) l.origin = get_string(o, "origin", where);
        arch.layers.push_back(std::move(l));
    }
    validate_arch(arch);
    return arch;
}

// Config and plan --------------------------------------------------------------

Json config_to_json(const CompressionConfig& cfg) {
    Json j;
    j["method"] = method_name(cfg.method);
    j["weakening"] = cfg.weakening;
    j["target_ratio"] = cfg.target_ratio;
    j["final_dense_ratio"] = cfg.final_dense_ratio;
    j["rank_quantum"] = cfg.rank_quantum;
    j["mode"] = cfg.mode.name();
    if (cfg.mode.kind == ModeKind::custom) {
        j["include"] = cfg.mode.include;
        j["exclude"] = cfg.mode.exclude;
    }
    j["n1_epochs"] = cfg.n1_epochs;
    j["n2_epochs"] = cfg.n2_epochs;
    j["lr_max"] = cfg.lr_max;
    return j;
}

CompressionConfig config_from_json(const Json& j, ParseOptions opts) {
    const std::string w = "config";
    check_fields(j, {"method", "weakening", "target_ratio", "final_dense_ratio", "rank_quantum", "mode",
                     "include", "exclude", "n1_epochs", "n2_epochs", "lr_max"},
                 w, opts);
    CompressionConfig cfg;
    cfg.method = parse_method(get_string(j, "method", w));
    cfg.weakening = get_double(j, "weakening", w);
    cfg.target_ratio = get_double(j, "target_ratio", w);
    cfg.final_dense_ratio = get_double(j, "final_dense_ratio", w);
    cfg.rank_quantum = get_size(j, "rank_quantum", w);
    cfg.mode = CompressionMode::parse(get_string(j, "mode", w));
    if (cfg.mode.kind == ModeKind::custom) {
        cfg.mode.include = optional_strings(j, "include", w);
        cfg.mode.exclude = optional_strings(j, "exclude", w);
    }
    cfg.n1_epochs = static_cast<int>(get_int(j, "n1_epochs", w));
    cfg.n2_epochs = static_cast<int>(get_int(j, "n2_epochs", w));
    cfg.lr_max = get_double(j, "lr_max", w);
    cfg.validate();
    return cfg;
}

Json plan_to_json(const RankPlan& plan) {
    Json entries = Json::object();
    for (const auto& e : plan.entries) {
        Json o;
        o["decomposition"] = decomposition_name(e.decomposition);
        o["raw_ranks"] = e.raw_ranks;
        o["ranks"] = e.ranks;
        o["method"] = e.decomposition == Decomposition::unchanged ? "none" : method_name(plan.config.method);
        o["params_before"] = e.params_before;
        o["params_after"] = e.params_after;
        o["macs_before"] = e.macs_before;
        o["macs_after"] = e.macs_after;
        entries[e.layer] = std::move(o);
    }
    Json totals;
    totals["params_before"] = plan.totals.params_before;
    totals["params_after"] = plan.totals.params_after;
    totals["macs_before"] = plan.totals.macs_before;
    totals["macs_after"] = plan.totals.macs_after;

    Json j;
    j["arch"] = plan.arch_name;
    j["config"] = config_to_json(plan.config);
    j["entries"] = std::move(entries);
    j["totals"] = std::move(totals);
    j["achieved_ratio"] = plan.achieved_ratio;
    if (!plan.warnings.empty()) j["warnings"] = plan.warnings;
    return j;
}

RankPlan plan_from_json(const Json& j, ParseOptions opts) {
    check_fields(j, {"arch", "config", "entries", "totals", "achieved_ratio", "warnings"}, "plan", opts);
    RankPlan plan;
    plan.arch_name = get_string(j, "arch", "plan");
    plan.config = config_from_json(field(j, "config", "plan"), opts);
    const Json& entries = field(j, "entries", "plan");
    if (!entries.is_object()) throw DataError("plan: 'entries' must be an object keyed by layer");
    for (const auto& [name, o] : entries.items()) {
        const std::string where = "plan entry '" + name + "'";
        check_fields(o, {"decomposition", "raw_ranks", "ranks", "method", "params_before", "params_after",
                         "macs_before", "macs_after"},
                     where, opts);
        PlanEntry e;
        e.layer = name;
        e.decomposition = parse_decomposition(get_string(o, "decomposition", where));
        e.raw_ranks = get_array<std::size_t>(o, "raw_ranks", where);
        e.ranks = get_array<std::size_t>(o, "ranks", where);
        const std::size_t want = e.decomposition == Decomposition::unchanged ? 0
                                 : e.decomposition == Decomposition::tucker2  ? 2
                                                                              : 1;
        if (e.ranks.size() != want || e.raw_ranks.size() != want)
            throw DataError(where + ": expected " + std::to_string(want) + " ranks");
        if (std::any_of(e.ranks.begin(), e.ranks.end(), [](std::size_t r) { return r == 0; }))
            throw DataError(where + ": ranks must be >= 1");
        e.params_before = get_int(o, "params_before", where);
        e.params_after = get_int(o, "params_after", where);
        e.macs_before = get_int(o, "macs_before", where);
        e.macs_after = get_int(o, "macs_after", where);
        plan.entries.push_back(std::move(e));
    }
    plan.warnings = optional_strings(j, "warnings", "plan");

    const Json& totals = field(j, "totals", "plan");
    check_fields(totals, {"params_before", "params_after", "macs_before", "macs_after"}, "plan totals", opts);
    PlanTotals stated{get_int(totals, "params_before", "plan totals"),
                      get_int(totals, "params_after", "plan totals"),
                      get_int(totals, "macs_before", "plan totals"),
                      get_int(totals, "macs_after", "plan totals")};
    const double stated_ratio = get_double(j, "achieved_ratio", "plan");
    plan.recompute_totals();
    if (!(stated == plan.totals))
        throw DataError("plan: totals do not equal the sum of the entries");
    if (std::abs(stated_ratio - plan.achieved_ratio) > 1e-9 * std::max(1.0, plan.achieved_ratio))
        throw DataError("plan: achieved_ratio inconsistent with totals");
    plan.achieved_ratio = stated_ratio;
    return plan;
}

// Mode report ------------------------------------------------------------------

Json report_to_json(const ModeReport& report) {
    Json machine;
    machine["hardware_threads"] = report.machine_info.hardware_threads;
    machine["compiler"] = report.machine_info.compiler;
    machine["timer"] = report.machine_info.timer;
    Json rows = Json::array();
    for (const auto& r : report.rows) {
        Json o;
        o["mode"] = r.mode;
        o["params_after"] = r.params_after;
        o["macs_after"] = r.macs_after;
        o["total_time_ns"] = r.total_time_ns;
        o["speedup_vs_original"] = r.speedup_vs_original;
        rows.push_back(std::move(o));
    }
    Json j;
    j["machine_info"] = std::move(machine);
    j["input_shape"] = report.input_shape;
    j["rows"] = std::move(rows);
    return j;
}

ModeReport report_from_json(const Json& j, ParseOptions opts) {
    check_fields(j, {"machine_info", "input_shape", "rows"}, "report", opts);
    ModeReport r;
    const Json& m = field(j, "machine_info", "report");
    check_fields(m, {"hardware_threads", "compiler", "timer"}, "report machine_info", opts);
    r.machine_info.hardware_threads =
        static_cast<unsigned>(get_size(m, "hardware_threads", "report machine_info"));
    r.machine_info.compiler = get_string(m, "compiler", "report machine_info");
    r.machine_info.timer = get_string(m, "timer", "report machine_info");
    r.input_shape = get_array<std::size_t>(j, "input_shape", "report");
    const Json& rows = field(j, "rows", "report");
    if (!rows.is_array()) throw DataError("report: 'rows' must be an array");
    for (const auto& o : rows) {
        check_fields(o, {"mode", "params_after", "macs_after", "total_time_ns", "speedup_vs_original"},
                     "report row", opts);
        r.rows.push_back({get_string(o, "mode", "report row"), get_int(o, "params_after", "report row"),
                          get_int(o, "macs_after", "report row"), get_int(o, "total_time_ns", "report row"),
                          get_double(o, "speedup_vs_original", "report row")});
    }
    return r;
}

// Files ------------------------------------------------------------------------

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json parse_json(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw DataError(std::string("malformed JSON: ") + e.what());
    }
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_json(ss.str());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace lrd
