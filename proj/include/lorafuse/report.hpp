#pragma once

#include <string>

#include <json.hpp>

#include "lorafuse/conflict.hpp"
#include "lorafuse/sim.hpp"

namespace lorafuse {

/// JSON text with insertion-ordered keys, 2-space indentation and floating
/// point numbers printed as decimals with 12 significant digits.
std::string dump_json(const nlohmann::ordered_json& doc);

/// Atomic write (temp file + rename) of a JSON document.
void write_json_file(const std::string& path, const nlohmann::ordered_json& doc);

nlohmann::ordered_json config_to_json(const Config& cfg);
nlohmann::ordered_json report_to_json(const RunReport& report);

/// Full per-direction conflict document (scores, gates, energies,
/// consistencies, consensus rows) for one layer.
nlohmann::ordered_json conflict_to_json(const ConflictReport& report,
                                        const std::string& layer_name);

/// Serializes the run report; the "timings" block is always the last key so
/// byte-level comparisons can strip it.
void write_report(const std::string& path, const RunReport& report);

}  // namespace lorafuse
