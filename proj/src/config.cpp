#include "bard/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bard/error.hpp"

namespace bard {

namespace {

// Reads fields of one JSON object, remembering which keys were used so the
// leftovers can be reported as unknown.
class Reader {
   public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("", "expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const Json::exception&) {
            fail(key, "has the wrong type");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    const Json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const std::string where = key.empty() ? (path_.empty() ? "config" : path_) : path(key.c_str());
        throw ConfigError(where + ": " + msg);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.contains(it.key())) fail(it.key(), "unknown field");
    }

   private:
    const Json& j_;
    std::string path_;
    std::set<std::string, std::less<>> seen_;
};

int one_based(Reader& r, const char* key, int current_zero_based) {
    int v = current_zero_based + 1;
    r.get(key, v);
    if (v < 1) r.fail(key, "dose levels are numbered from 1");
    return v - 1;
}

std::string engine_name(EngineKind e) { return e == EngineKind::Boin ? "boin" : "blrm"; }

std::string margin_name(MarginRule m) {
    return m == MarginRule::Noninferiority ? "noninferiority" : "literal";
}

std::string stage2_name(Stage2Mode m) {
    switch (m) {
        case Stage2Mode::Conditional: return "conditional";
        case Stage2Mode::SimpleRandom: return "simple";
        case Stage2Mode::FullMinimization: return "full-minimization";
    }
    return "?";
}

}  // namespace

std::optional<DesignConfig> design_preset(const std::string& name) {
    if (name == "bard-boin") return DesignConfig::bard_boin(5);
    if (name == "bard-boin-3") return DesignConfig::bard_boin(3);
    if (name == "bard-blrm") return DesignConfig::bard_blrm();
    return std::nullopt;
}

std::optional<ComparatorMode> comparator_from_string(const std::string& s) {
    if (s == "bard") return ComparatorMode::Bard;
    if (s == "sr") return ComparatorMode::SimpleRandomization;
    if (s == "ps" || s == "pocock-simon") return ComparatorMode::PocockSimonFull;
    return std::nullopt;
}

std::string to_string(ComparatorMode m) {
    switch (m) {
        case ComparatorMode::Bard: return "bard";
        case ComparatorMode::SimpleRandomization: return "sr";
        case ComparatorMode::PocockSimonFull: return "ps";
    }
    return "?";
}

DesignConfig design_from_json(const Json& j) {
    if (j.is_string()) {
        auto d = design_preset(j.get<std::string>());
        if (!d) throw ConfigError("design: unknown preset '" + j.get<std::string>() + "'");
        return *d;
    }
    Reader r(j, "design");
    std::string preset = "bard-boin";
    r.get("preset", preset);
    std::string engine;
    r.get("engine", engine);
    if (!r.has("preset") && engine == "blrm") preset = "bard-blrm";
    auto base = design_preset(preset);
    if (!base) r.fail("preset", "unknown design preset '" + preset + "'");
    DesignConfig d = *base;
    if (!engine.empty()) {
        if (engine == "boin") d.engine = EngineKind::Boin;
        else if (engine == "blrm") d.engine = EngineKind::Blrm;
        else r.fail("engine", "must be \"boin\" or \"blrm\"");
    }

    r.get("name", d.name);
    r.get("doses", d.dose_count);
    r.get("cohort_size", d.cohort_size);
    r.get("backfill", d.backfill);
    r.get("n_cap", d.n_cap);
    r.get("suspend_accrual", d.suspend_accrual);
    r.get("n2", d.n2);
    r.get("n2_single", d.n2_single);
    r.get("r", d.r);
    r.get("arm_cap_slack", d.arm_cap_slack);

    if (const Json* b = r.child("boin")) {
        Reader br(*b, "design.boin");
        double phi = d.boin.phi;
        br.get("phi", phi);
        if (phi != d.boin.phi) {
            try {
                const auto keep = d.boin;
                d.boin = BoinParams::for_target(phi);
                d.boin.elimination_cutoff = keep.elimination_cutoff;
                d.boin.elimination_min_n = keep.elimination_min_n;
                d.boin.n_stop = keep.n_stop;
                d.boin.max_n1 = keep.max_n1;
            } catch (const ParameterError& e) {
                br.fail("phi", e.what());
            }
        }
        br.get("lambda_e", d.boin.lambda_e);
        br.get("lambda_d", d.boin.lambda_d);
        br.get("elimination_cutoff", d.boin.elimination_cutoff);
        br.get("elimination_min_n", d.boin.elimination_min_n);
        br.get("n_stop", d.boin.n_stop);
        br.get("max_n1", d.boin.max_n1);
        br.finish();
    }
    if (const Json* b = r.child("blrm")) {
        Reader br(*b, "design.blrm");
        br.get("gamma1", d.blrm.gamma1);
        br.get("gamma2", d.blrm.gamma2);
        br.get("eta", d.blrm.eta);
        br.get("dosages", d.blrm.dosages);
        br.get("reference_dosage", d.blrm.ref_dosage);
        br.get("max_n1", d.blrm.max_n1);
        br.get("min_mtd_n", d.blrm.min_mtd_n);
        br.get("grid_nodes", d.blrm.grid_nodes);
        std::string scale = d.blrm.scale == DoseScale::LogDose ? "log" : "linear";
        br.get("dose_scale", scale);
        if (scale == "log") d.blrm.scale = DoseScale::LogDose;
        else if (scale == "linear") d.blrm.scale = DoseScale::Linear;
        else br.fail("dose_scale", "must be \"log\" or \"linear\"");
        if (const Json* p = br.child("prior")) {
            Reader pr(*p, "design.blrm.prior");
            pr.get("mu_log_alpha", d.blrm.prior.mu_alpha);
            pr.get("mu_log_beta", d.blrm.prior.mu_beta);
            pr.get("sd_log_alpha", d.blrm.prior.sigma_alpha);
            pr.get("sd_log_beta", d.blrm.prior.sigma_beta);
            pr.finish();
        }
        br.finish();
        if (d.engine == EngineKind::Blrm && !r.has("doses"))
            d.dose_count = static_cast<int>(d.blrm.dosages.size());
    }

    std::string stage2 = stage2_name(d.stage2);
    r.get("stage2", stage2);
    if (stage2 == "conditional") d.stage2 = Stage2Mode::Conditional;
    else if (stage2 == "simple") d.stage2 = Stage2Mode::SimpleRandom;
    else if (stage2 == "full-minimization") d.stage2 = Stage2Mode::FullMinimization;
    else r.fail("stage2", "must be conditional, simple or full-minimization");

    if (const Json* b = r.child("balance")) {
        if (!b->is_array()) r.fail("balance", "expected an array of covariate positions");
        CovariateSpec spec;
        for (const auto& e : *b) {
            CovariateSpec::Factor f;
            if (e.is_number_integer()) {
                f.source = e.get<int>() - 1;
                f.name = "X" + std::to_string(f.source + 1);
            } else {
                Reader fr(e, "design.balance[]");
                int source = 1;
                fr.get("name", f.name);
                fr.get("levels", f.levels);
                fr.get("covariate", source);
                f.source = source - 1;
                if (f.name.empty()) f.name = "X" + std::to_string(source);
                fr.finish();
            }
            spec.factors.push_back(f);
        }
        d.balance = spec;
    }

    if (const Json* g = r.child("gating")) {
        Reader gr(*g, "design.gating");
        gr.get("phi_t", d.gating.phi_t);
        gr.get("c_t", d.gating.c_t);
        gr.get("phi_e", d.gating.phi_e);
        gr.get("c_e", d.gating.c_e);
        gr.get("delta", d.gating.delta);
        gr.finish();
    }
    std::string margin = margin_name(d.margin_rule);
    r.get("margin_rule", margin);
    if (margin == "noninferiority") d.margin_rule = MarginRule::Noninferiority;
    else if (margin == "literal") d.margin_rule = MarginRule::Literal;
    else r.fail("margin_rule", "must be noninferiority or literal");
    r.get("utility", d.utility.u);
    r.get("dirichlet_prior", d.dirichlet_prior);
    r.finish();

    try {
        d.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("design: ") + e.what());
    }
    return d;
}

Json design_to_json(const DesignConfig& d) {
    Json balance = Json::array();
    for (const auto& f : d.balance.factors)
        balance.push_back({{"name", f.name}, {"levels", f.levels}, {"covariate", f.source + 1}});
    Json j = {
        {"name", d.name},
        {"engine", engine_name(d.engine)},
        {"doses", d.dose_count},
        {"cohort_size", d.cohort_size},
        {"backfill", d.backfill},
        {"n_cap", d.n_cap},
        {"suspend_accrual", d.suspend_accrual},
        {"n2", d.n2},
        {"n2_single", d.n2_single},
        {"r", d.r},
        {"arm_cap_slack", d.arm_cap_slack},
        {"stage2", stage2_name(d.stage2)},
        {"balance", balance},
        {"gating",
         {{"phi_t", d.gating.phi_t},
          {"c_t", d.gating.c_t},
          {"phi_e", d.gating.phi_e},
          {"c_e", d.gating.c_e},
          {"delta", d.gating.delta}}},
        {"margin_rule", margin_name(d.margin_rule)},
        {"utility", d.utility.u},
        {"dirichlet_prior", d.dirichlet_prior},
    };
    if (d.engine == EngineKind::Boin) {
        j["boin"] = {{"phi", d.boin.phi},
                     {"lambda_e", d.boin.lambda_e},
                     {"lambda_d", d.boin.lambda_d},
                     {"elimination_cutoff", d.boin.elimination_cutoff},
                     {"elimination_min_n", d.boin.elimination_min_n},
                     {"n_stop", d.boin.n_stop},
                     {"max_n1", d.boin.max_n1}};
    } else {
        j["blrm"] = {{"gamma1", d.blrm.gamma1},
                     {"gamma2", d.blrm.gamma2},
                     {"eta", d.blrm.eta},
                     {"dosages", d.blrm.dosages},
                     {"reference_dosage", d.blrm.ref_dosage},
                     {"max_n1", d.blrm.max_n1},
                     {"min_mtd_n", d.blrm.min_mtd_n},
                     {"grid_nodes", d.blrm.grid_nodes},
                     {"dose_scale", d.blrm.scale == DoseScale::LogDose ? "log" : "linear"},
                     {"prior",
                      {{"mu_log_alpha", d.blrm.prior.mu_alpha},
                       {"mu_log_beta", d.blrm.prior.mu_beta},
                       {"sd_log_alpha", d.blrm.prior.sigma_alpha},
                       {"sd_log_beta", d.blrm.prior.sigma_beta}}}};
    }
    return j;
}

ScenarioTruth scenario_from_json(const Json& j) {
    if (j.is_string()) {
        auto t = scenario_preset(j.get<std::string>());
        if (!t) throw ConfigError("scenario: unknown preset '" + j.get<std::string>() + "'");
        return *t;
    }
    Reader r(j, "scenario");
    ScenarioTruth t;
    std::string preset;
    r.get("preset", preset);
    if (!preset.empty()) {
        auto p = scenario_preset(preset);
        if (!p) r.fail("preset", "unknown scenario preset '" + preset + "'");
        t = *p;
    }
    r.get("name", t.name);
    r.get("dlt_rates", t.dlt_rates);
    r.get("beta0", t.beta0);
    r.get("covariate_betas", t.cov_betas);
    r.get("covariate_prevalence", t.cov_prevalence);
    t.true_obd = one_based(r, "true_obd", t.true_obd);
    t.true_mtd = one_based(r, "true_mtd", t.true_mtd);
    r.finish();
    if (t.name.empty()) t.name = "custom";
    try {
        t.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
    return t;
}

Json scenario_to_json(const ScenarioTruth& t) {
    return {{"name", t.name},
            {"dlt_rates", t.dlt_rates},
            {"beta0", t.beta0},
            {"covariate_betas", t.cov_betas},
            {"covariate_prevalence", t.cov_prevalence},
            {"true_obd", t.true_obd + 1},
            {"true_mtd", t.true_mtd + 1}};
}

TimingModel timing_from_json(const Json& j) {
    Reader r(j, "timing");
    TimingModel t;
    r.get("accrual_rate", t.accrual_rate);
    r.get("dlt_window", t.dlt_window);
    r.get("response_window", t.response_window);
    std::string arrivals = t.poisson ? "poisson" : "uniform";
    r.get("arrivals", arrivals);
    if (arrivals == "poisson") t.poisson = true;
    else if (arrivals == "uniform") t.poisson = false;
    else r.fail("arrivals", "must be poisson or uniform");
    r.finish();
    try {
        t.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("timing: ") + e.what());
    }
    return t;
}

Json timing_to_json(const TimingModel& t) {
    return {{"accrual_rate", t.accrual_rate},
            {"dlt_window", t.dlt_window},
            {"response_window", t.response_window},
            {"arrivals", t.poisson ? "poisson" : "uniform"}};
}

RunConfig run_from_json(const Json& j) {
    Reader r(j, "run");
    RunConfig c;
    r.get("reps", c.reps);
    if (const Json* s = r.child("seed")) {
        if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<long long>() >= 0))
            r.fail("seed", "must be a nonnegative integer");
        c.seed = s->get<std::uint64_t>();
    }
    r.get("parallelism", c.parallelism);
    std::string comparator = to_string(c.comparator);
    r.get("comparator", comparator);
    auto m = comparator_from_string(comparator);
    if (!m) r.fail("comparator", "must be bard, sr or ps");
    c.comparator = *m;
    r.finish();
    if (c.reps < 1) throw ConfigError("run.reps: must be at least 1");
    if (c.parallelism < 1) throw ConfigError("run.parallelism: must be at least 1");
    return c;
}

SimulationConfig simulation_from_json(const Json& j) {
    Reader r(j, "");
    SimulationConfig c;
    if (const Json* d = r.child("design")) c.design = design_from_json(*d);
    if (const Json* s = r.child("scenario")) c.scenario = scenario_from_json(*s);
    else c.scenario = *scenario_preset("s1");
    if (const Json* t = r.child("timing")) c.timing = timing_from_json(*t);
    if (const Json* x = r.child("run")) c.run = run_from_json(*x);
    r.finish();
    return c;
}

Json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": invalid JSON");
    }
}

SimulationConfig load_simulation_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    const Json j = parse_json_text(ss.str(), path);
    try {
        return simulation_from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

namespace {

std::string fmt(double v, int prec = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

}  // namespace

std::string oc_csv_header(int covariates) {
    std::string h = "Design,Scenario,Reps,Seed,N,Duration";
    for (int k = 1; k <= covariates; ++k) h += ",Imbalance X" + std::to_string(k);
    h += ",Imbalance allocation,PCS1,PCS2,N1,PCS of stage 2 doses,n1 low,n1 high,"
         "Imbalance of allocation at stage 1";
    return h;
}

std::string oc_csv_row(const OcReport& r) {
    std::string s = r.design + "," + r.scenario + "," + std::to_string(r.reps) + "," +
                    std::to_string(r.seed) + "," + fmt(r.mean_n) + "," + fmt(r.mean_duration);
    for (double v : r.imbalance) s += "," + fmt(v);
    s += "," + fmt(r.allocation_imbalance) + "," + fmt(r.pcs1) + "," + fmt(r.pcs2) + "," +
         fmt(r.mean_n1) + "," + fmt(r.pcs_stage2_doses) + "," + fmt(r.mean_n1_low) + "," +
         fmt(r.mean_n1_high) + "," + fmt(r.stage1_allocation_imbalance);
    return s;
}

std::string oc_summary(const OcReport& r) {
    std::ostringstream o;
    o << r.design << " / " << r.scenario << "  (" << r.reps << " reps, seed " << r.seed
      << ")\n";
    o << "  N " << fmt(r.mean_n) << "   duration " << fmt(r.mean_duration) << " months\n";
    o << "  imbalance";
    for (std::size_t k = 0; k < r.imbalance.size(); ++k)
        o << "  X" << k + 1 << " " << fmt(r.imbalance[k]);
    o << "  allocation " << fmt(r.allocation_imbalance) << "\n";
    o << "  PCS1 " << fmt(r.pcs1) << "   PCS2 " << fmt(r.pcs2) << "\n";
    o << "  stage 1: N1 " << fmt(r.mean_n1) << "  PCS of stage-2 doses "
      << fmt(r.pcs_stage2_doses) << "  n1,low " << fmt(r.mean_n1_low) << "  n1,high "
      << fmt(r.mean_n1_high) << "  allocation imbalance " << fmt(r.stage1_allocation_imbalance)
      << "\n";
    o << "  MTD selection %";
    for (std::size_t j = 0; j < r.mtd_selection.size(); ++j)
        o << "  d" << j + 1 << " " << fmt(r.mtd_selection[j], 1);
    o << "  none " << fmt(r.pct_no_mtd, 1) << "\n";
    return o.str();
}

Json trial_summary_to_json(const TrialSummary& s, int replication) {
    auto level = [](const std::optional<int>& v) { return v ? Json(*v + 1) : Json(nullptr); };
    Json doses = Json::array();
    for (int d : s.stage2_doses) doses.push_back(d + 1);
    return {{"replication", replication},
            {"mtd", level(s.mtd)},
            {"stop", std::string(to_string(s.stop))},
            {"stage2_doses", doses},
            {"n_total", s.n_total},
            {"n1", s.n1},
            {"n1_low", s.n1_low},
            {"n1_high", s.n1_high},
            {"n2_new", s.n2_new},
            {"stage1_end", s.stage1_end},
            {"duration", s.duration},
            {"obd_margin", level(s.obd_margin)},
            {"obd_utility", level(s.obd_utility)},
            {"arm_n", s.arm_n},
            {"imbalance", s.imbalance}};
}

Json oc_report_to_json(const OcReport& r) {
    return {{"design", r.design},
            {"scenario", r.scenario},
            {"reps", r.reps},
            {"seed", r.seed},
            {"N", r.mean_n},
            {"duration", r.mean_duration},
            {"imbalance", r.imbalance},
            {"allocation_imbalance", r.allocation_imbalance},
            {"PCS1", r.pcs1},
            {"PCS2", r.pcs2},
            {"N1", r.mean_n1},
            {"pcs_stage2_doses", r.pcs_stage2_doses},
            {"n1_low", r.mean_n1_low},
            {"n1_high", r.mean_n1_high},
            {"stage1_allocation_imbalance", r.stage1_allocation_imbalance},
            {"no_mtd", r.pct_no_mtd},
            {"single_arm", r.pct_single_arm},
            {"mtd_selection", r.mtd_selection}};
}

}  // namespace bard
