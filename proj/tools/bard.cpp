// bard: simulation, boundary tables and trial conduct from the command line.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "bard/conduct.hpp"
#include "bard/config.hpp"
#include "bard/error.hpp"
#include "bard/service.hpp"

namespace fs = std::filesystem;
using namespace bard;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// A preset name, or a path to a JSON file.
Json preset_or_file(const std::string& arg) {
    if (fs::exists(arg)) {
        try {
            return parse_json_text(read_file(arg), arg);
        } catch (const ConfigError&) {
            throw;
        }
    }
    return Json(arg);
}

std::vector<int> int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw DataError("'" + s + "' is not a comma-separated integer list");
        out.push_back(v);
    }
    return out;
}

std::optional<bool> flag01(const std::string& s, const char* name) {
    if (s.empty()) return std::nullopt;
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw DataError(std::string(name) + " must be 0/1");
}

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config, design, scenario, out, trace, comparator;
    std::optional<int> reps, parallelism;
    std::optional<std::uint64_t> seed;
    bool json = false;
};

int run_simulate(const SimulateArgs& a) {
    SimulationConfig cfg;
    if (!a.config.empty()) cfg = load_simulation_config(a.config);
    else cfg.scenario = *scenario_preset("s1");
    if (!a.design.empty()) cfg.design = design_from_json(preset_or_file(a.design));
    if (!a.scenario.empty()) cfg.scenario = scenario_from_json(preset_or_file(a.scenario));
    if (a.reps) cfg.run.reps = *a.reps;
    if (a.parallelism) cfg.run.parallelism = *a.parallelism;
    if (a.seed) cfg.run.seed = a.seed;
    if (!a.comparator.empty()) {
        auto m = comparator_from_string(a.comparator);
        if (!m) throw ConfigError("--comparator: expected bard, sr or ps");
        cfg.run.comparator = *m;
    }
    if (cfg.run.reps < 1) throw ConfigError("reps must be positive");
    if (cfg.run.parallelism < 1) throw ConfigError("parallelism must be positive");
    if (cfg.scenario.dose_count() != cfg.design.dose_count)
        throw ConfigError("scenario has " + std::to_string(cfg.scenario.dose_count()) +
                          " doses but the design has " + std::to_string(cfg.design.dose_count));
    if (!cfg.run.seed) {
        std::random_device rd;
        cfg.run.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        std::cerr << "seed: " << *cfg.run.seed << "\n";
    }

    const DesignConfig design = comparator_design(cfg.design, cfg.run.comparator);
    auto ctx = std::make_shared<const DesignContext>(design);
    const auto runs = simulate(ctx, cfg.scenario, cfg.timing, cfg.run.reps, *cfg.run.seed,
                               cfg.run.parallelism);
    const OcReport report = aggregate(runs, design, cfg.scenario, *cfg.run.seed);

    if (!a.trace.empty()) {
        std::ofstream t(a.trace);
        if (!t) throw ConfigError(a.trace + ": cannot write");
        for (std::size_t i = 0; i < runs.size(); ++i)
            t << trial_summary_to_json(runs[i], static_cast<int>(i)).dump() << "\n";
    }
    if (!a.out.empty()) {
        const bool fresh = !fs::exists(a.out) || fs::file_size(a.out) == 0;
        std::ofstream o(a.out, std::ios::app);
        if (!o) throw ConfigError(a.out + ": cannot write");
        if (fresh) o << oc_csv_header(cfg.scenario.covariate_count()) << "\n";
        o << oc_csv_row(report) << "\n";
    }
    if (a.json) print(oc_report_to_json(report));
    else std::cout << oc_summary(report);
    return 0;
}

int run_boundaries(double phi, int ncap, bool json) {
    if (ncap < 1 || ncap > 1000) throw ParameterError("--ncap must lie in 1..1000");
    const Json t = boundary_table(BoinParams::for_target(phi), ncap);
    if (json) {
        print(t);
        return 0;
    }
    std::cout << std::fixed << std::setprecision(4) << "phi = " << phi
              << "  lambda_e = " << t["lambda_e"].get<double>()
              << "  lambda_d = " << t["lambda_d"].get<double>() << "\n";
    auto cell = [](const Json& v) { return v.is_null() ? std::string("-") : std::to_string(v.get<int>()); };
    std::cout << std::left << std::setw(24) << "patients treated";
    for (const auto& r : t["rows"]) std::cout << std::right << std::setw(4) << r["n"].get<int>();
    std::cout << "\n" << std::left << std::setw(24) << "escalate if y <=";
    for (const auto& r : t["rows"]) std::cout << std::right << std::setw(4) << cell(r["escalate_if_y_at_most"]);
    std::cout << "\n" << std::left << std::setw(24) << "de-escalate if y >=";
    for (const auto& r : t["rows"]) std::cout << std::right << std::setw(4) << cell(r["deescalate_if_y_at_least"]);
    std::cout << "\n" << std::left << std::setw(24) << "eliminate if y >=";
    for (const auto& r : t["rows"]) std::cout << std::right << std::setw(4) << cell(r["eliminate_if_y_at_least"]);
    std::cout << "\n";
    return 0;
}

int run_scenarios(bool json) {
    Json all = Json::array();
    for (const auto& name : scenario_names()) {
        Json s = scenario_to_json(*scenario_preset(name));
        s["name"] = name;
        all.push_back(s);
    }
    if (json) {
        print(all);
        return 0;
    }
    std::cout << std::fixed << std::setprecision(3);
    for (const auto& name : scenario_names()) {
        const auto t = *scenario_preset(name);
        std::cout << name << "\n  DLT      ";
        for (double p : t.dlt_rates) std::cout << std::setw(7) << p;
        std::cout << "\n  efficacy ";
        for (int d = 0; d < t.dose_count(); ++d) std::cout << std::setw(7) << marginal_efficacy(t, d);
        std::cout << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// conduct: one trial per directory, holding events.jsonl

struct ConductArgs {
    std::string dir, design = "bard-boin", id, covariates, dlt, response, override_doses;
    std::optional<std::uint64_t> seed;
    int patient = 0;
    bool ineligible = false, amend = false, force = false;
};

std::string log_path(const std::string& dir) { return (fs::path(dir) / "events.jsonl").string(); }

TrialEngine load_trial(const std::string& dir) {
    return TrialEngine::replay(read_event_log(log_path(dir)));
}

Json events_json(const std::vector<TrialEvent>& events) {
    Json a = Json::array();
    for (const auto& e : events) a.push_back(e.to_json());
    return a;
}

int run_conduct(const std::string& action, const ConductArgs& a) {
    const std::string path = log_path(a.dir);
    const std::string ts = utc_timestamp();
    if (action == "create") {
        if (fs::exists(path)) throw ConflictError(path + " already exists");
        const DesignConfig design = design_from_json(preset_or_file(a.design));
        std::uint64_t seed = 0;
        if (a.seed) seed = *a.seed;
        else {
            std::random_device rd;
            seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        }
        const std::string id = a.id.empty() ? fs::absolute(a.dir).filename().string() : a.id;
        auto engine = TrialEngine::create(id, design, seed, ts);
        fs::create_directories(a.dir);
        append_event_log(path, engine.log());
        print({{"trial_id", id}, {"seed", seed}, {"summary", engine.summary()}});
        return 0;
    }

    auto engine = load_trial(a.dir);
    if (action == "enroll") {
        auto res = engine.enroll(int_list(a.covariates), !a.ineligible, ts);
        append_event_log(path, res.events);
        Json out = {{"enrolled", res.enrolled}, {"assignment", res.assignment}};
        if (res.patient_id) out["patient_id"] = *res.patient_id;
        if (!res.advisory.empty()) out["advisory"] = res.advisory;
        out["summary"] = engine.summary();
        print(out);
        return res.enrolled ? 0 : 3;
    }
    if (action == "outcome") {
        auto events = engine.record_outcome(a.patient, flag01(a.dlt, "--dlt"),
                                            flag01(a.response, "--response"), a.amend, ts);
        append_event_log(path, events);
        print({{"recorded", !events.empty()}, {"events", events_json(events)},
               {"summary", engine.summary()}});
        return 0;
    }
    if (action == "advance") {
        std::optional<std::pair<int, int>> o;
        if (!a.override_doses.empty()) {
            const auto v = int_list(a.override_doses);
            if (v.size() == 1) o = std::make_pair(v[0] - 1, v[0] - 1);
            else if (v.size() == 2) o = std::make_pair(v[0] - 1, v[1] - 1);
            else throw DataError("--override takes one or two dose levels");
        }
        auto events = engine.advance(o, a.force, ts);
        append_event_log(path, events);
        Json out = {{"events", events_json(events)}, {"summary", engine.summary()}};
        if (engine.plan()) out["warnings"] = engine.plan()->warnings;
        print(out);
        return 0;
    }
    if (action == "status") return print(engine.summary()), 0;
    if (action == "state") return print(engine.state()), 0;
    if (action == "report") return print(engine.report()), 0;
    if (action == "verify") {
        print({{"ok", true}, {"events", engine.log().size()}});
        return 0;
    }
    throw DataError("unknown conduct action '" + action + "'");
}

int exit_code(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e) ||
        dynamic_cast<const DataError*>(&e))
        return 2;
    if (dynamic_cast<const NotFoundError*>(&e)) return 4;
    if (dynamic_cast<const ConflictError*>(&e) || dynamic_cast<const StateError*>(&e) ||
        dynamic_cast<const QuotaError*>(&e))
        return 5;
    if (dynamic_cast<const ReplayError*>(&e)) return 6;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BARD seamless two-stage dose optimization: simulation and trial conduct"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Operating characteristics by simulation");
    s->add_option("--config", sim.config, "JSON config with design/scenario/timing/run blocks");
    s->add_option("--design", sim.design, "Design preset (bard-boin, bard-boin-3, bard-blrm) or JSON file");
    s->add_option("--scenario", sim.scenario, "Scenario preset (s1..s8, s3d1..s3d4) or JSON file");
    s->add_option("--reps", sim.reps, "Replications");
    s->add_option("--seed", sim.seed, "Master seed (generated and printed when absent)");
    s->add_option("--parallelism", sim.parallelism, "Worker threads; results do not depend on it");
    s->add_option("--comparator", sim.comparator, "bard, sr or ps");
    s->add_option("--out", sim.out, "Append a CSV row (header written for a new file)");
    s->add_option("--trace", sim.trace, "Per-replication JSONL trace");
    s->add_flag("--json", sim.json, "Print the report as JSON");

    double phi = 0.25;
    int ncap = 15;
    bool bjson = false;
    auto* b = app.add_subcommand("boundaries", "BOIN decision and elimination table");
    b->add_option("--phi", phi, "Target DLT rate")->capture_default_str();
    b->add_option("--ncap", ncap, "Largest number of patients at a dose")->capture_default_str();
    b->add_flag("--json", bjson);

    bool sjson = false;
    auto* sc = app.add_subcommand("scenarios", "List the built-in truth scenarios");
    sc->add_flag("--json", sjson);

    ConductArgs ca;
    auto* c = app.add_subcommand("conduct", "Run a trial from a directory holding its event log");
    c->add_option("--dir", ca.dir, "Trial directory")->required();
    c->require_subcommand(1);
    auto* c_create = c->add_subcommand("create", "Start a trial");
    c_create->add_option("--design", ca.design, "Design preset or JSON file")->capture_default_str();
    c_create->add_option("--seed", ca.seed, "Randomization seed");
    c_create->add_option("--id", ca.id, "Trial id (default: directory name)");
    auto* c_enroll = c->add_subcommand("enroll", "Enroll the next patient");
    c_enroll->add_option("--covariates", ca.covariates, "Comma-separated covariate levels, e.g. 1,0,1");
    c_enroll->add_flag("--ineligible", ca.ineligible, "Patient is not eligible for stage-2 analysis");
    auto* c_outcome = c->add_subcommand("outcome", "Record a DLT and/or response outcome");
    c_outcome->add_option("--patient", ca.patient, "Patient id")->required();
    c_outcome->add_option("--dlt", ca.dlt, "1 for a DLT, 0 for none");
    c_outcome->add_option("--response", ca.response, "1 for a response, 0 for none");
    c_outcome->add_flag("--amend", ca.amend, "Correct a previously recorded outcome");
    auto* c_advance = c->add_subcommand("advance", "Move to stage 2, or close stage 2");
    c_advance->add_option("--override", ca.override_doses, "Stage-2 dose levels, e.g. 2,3");
    c_advance->add_flag("--force", ca.force, "Close stage 2 before its quota is reached");
    c->add_subcommand("status", "Decision summary");
    c->add_subcommand("state", "Full trial state");
    c->add_subcommand("report", "OBD report");
    c->add_subcommand("verify", "Replay the log and check it");

    std::string host = "127.0.0.1", data_dir;
    int port = 8080;
    auto* sv = app.add_subcommand("serve", "HTTP/JSON trial-conduct service");
    sv->add_option("--host", host)->capture_default_str();
    sv->add_option("--port", port)->capture_default_str();
    sv->add_option("--data-dir", data_dir, "Storage root (default: $BARD_DATA_DIR or ./bard-data)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*s) return run_simulate(sim);
        if (*b) return run_boundaries(phi, ncap, bjson);
        if (*sc) return run_scenarios(sjson);
        if (*c) return run_conduct(c->get_subcommands().front()->get_name(), ca);
        if (*sv) {
            TrialService::Options opts;
            if (!data_dir.empty()) opts.data_dir = data_dir;
            else if (const char* env = std::getenv("BARD_DATA_DIR")) opts.data_dir = env;
            if (const char* tok = std::getenv("BARD_API_TOKEN"); tok && *tok) opts.token = tok;
            TrialService service(opts);
            serve(service, host, port);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "bard: error: " << e.what() << "\n";
        return exit_code(e);
    }
    return 0;
}
