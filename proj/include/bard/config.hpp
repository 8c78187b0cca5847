#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "bard/design.hpp"
#include "bard/scenario.hpp"
#include "bard/sim.hpp"

namespace bard {

using Json = nlohmann::json;

struct RunConfig {
    int reps = 1000;
    std::optional<std::uint64_t> seed;
    int parallelism = 1;
    ComparatorMode comparator = ComparatorMode::Bard;
};

/// Everything a simulation run needs, as read from a config file.
struct SimulationConfig {
    DesignConfig design = DesignConfig::bard_boin();
    ScenarioTruth scenario;
    TimingModel timing;
    RunConfig run;
};

/*
 * JSON encodings. Dose levels are one-based on the wire. Every field is
 * optional on input; missing fields keep the preset's value, and a design
 * block may name a preset ("bard-boin", "bard-blrm") to start from. Unknown
 * keys are rejected so that typos do not silently fall back to defaults.
 */
DesignConfig design_from_json(const Json& j);
Json design_to_json(const DesignConfig& d);

ScenarioTruth scenario_from_json(const Json& j);
Json scenario_to_json(const ScenarioTruth& t);

TimingModel timing_from_json(const Json& j);
Json timing_to_json(const TimingModel& t);

RunConfig run_from_json(const Json& j);

SimulationConfig simulation_from_json(const Json& j);

/// Parses a config file. Syntax errors report line and column; semantic
/// errors name the offending field. Both surface as ConfigError.
SimulationConfig load_simulation_config(const std::string& path);

/// Parses JSON text, turning syntax errors into ConfigError with a line number.
Json parse_json_text(const std::string& text, const std::string& origin);

std::optional<DesignConfig> design_preset(const std::string& name);
std::optional<ComparatorMode> comparator_from_string(const std::string& s);
std::string to_string(ComparatorMode m);

/// Column header and row for the operating-characteristics CSV.
std::string oc_csv_header(int covariates = 3);
std::string oc_csv_row(const OcReport& r);

/// Table-4-style text block for terminals.
std::string oc_summary(const OcReport& r);

Json trial_summary_to_json(const TrialSummary& s, int replication);
Json oc_report_to_json(const OcReport& r);

}  // namespace bard
