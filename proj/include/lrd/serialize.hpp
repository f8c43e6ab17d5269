#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrd/arch.hpp"
#include "lrd/bench.hpp"
#include "lrd/rank_select.hpp"

namespace lrd {

using Json = nlohmann::ordered_json;

/// Strict parsing rejects unknown fields (ConfigError); lenient parsing records
/// a warning per unknown field instead.
struct ParseOptions {
    bool strict = false;
    std::vector<std::string>* warnings = nullptr;
};

Json arch_to_json(const ArchDescriptor& arch);
ArchDescriptor arch_from_json(const Json& j, ParseOptions opts = {});

Json config_to_json(const CompressionConfig& cfg);
CompressionConfig config_from_json(const Json& j, ParseOptions opts = {});

Json plan_to_json(const RankPlan& plan);
RankPlan plan_from_json(const Json& j, ParseOptions opts = {});

Json report_to_json(const ModeReport& report);
ModeReport report_from_json(const Json& j, ParseOptions opts = {});

/// Two-space indented, newline-terminated UTF-8.
std::string dump_json(const Json& j);
Json parse_json(const std::string& text);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lrd
