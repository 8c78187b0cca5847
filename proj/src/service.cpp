#include "bard/service.hpp"

#include <random>
#include <set>
#include <sstream>

#include "bard/error.hpp"

namespace bard {

namespace {

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::stringstream ss(path);
    std::string item;
    while (std::getline(ss, item, '/'))
        if (!item.empty()) parts.push_back(item);
    return parts;
}

bool valid_id(const std::string& id) {
    if (id.empty() || id.size() > 64) return false;
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
    return true;
}

std::string hex(std::uint64_t v, int digits) {
    static const char* d = "0123456789abcdef";
    std::string s(static_cast<std::size_t>(digits), '0');
    for (int i = digits - 1; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = d[v & 15];
    return s;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t random_u64() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

/// Rejects keys outside `allowed` so that misspelt fields fail loudly.
void expect_keys(const Json& body, std::initializer_list<const char*> allowed) {
    if (!body.is_object()) throw DataError("request body must be a JSON object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : body.items())
        if (!ok.count(k)) throw DataError(k + ": unknown field");
}

template <typename T>
T field(const Json& body, const char* key, T fallback) {
    if (!body.contains(key) || body.at(key).is_null()) return fallback;
    try {
        return body.at(key).get<T>();
    } catch (const Json::exception&) {
        throw DataError(std::string(key) + ": wrong type");
    }
}

std::optional<bool> optional_flag(const Json& body, const char* key) {
    if (!body.contains(key) || body.at(key).is_null()) return std::nullopt;
    const auto& v = body.at(key);
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) return v.get<int>() == 1;
    throw DataError(std::string(key) + ": expected true/false (or 0/1)");
}

Json events_json(const std::vector<TrialEvent>& events) {
    Json a = Json::array();
    for (const auto& e : events) a.push_back(e.to_json());
    return a;
}

}  // namespace

ServiceResponse problem(int status, const std::string& slug, const std::string& title,
                        const std::string& detail, const std::string& instance) {
    ServiceResponse r;
    r.status = status;
    r.content_type = "application/problem+json";
    r.body = {{"type", "urn:bard:problem:" + slug},
              {"title", title},
              {"status", status},
              {"detail", detail}};
    if (!instance.empty()) r.body["instance"] = instance;
    return r;
}

ServiceResponse problem_from_exception(const std::exception& e, const std::string& instance) {
    const std::string what = e.what();
    if (auto* r = dynamic_cast<const ReplayError*>(&e)) {
        auto p = problem(500, "replay-failure", "Event log could not be replayed", what, instance);
        p.body["sequence"] = r->sequence;
        return p;
    }
    if (dynamic_cast<const ConfigError*>(&e))
        return problem(400, "invalid-config", "Invalid design configuration", what, instance);
    if (dynamic_cast<const ParameterError*>(&e))
        return problem(400, "invalid-parameter", "Invalid parameter", what, instance);
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const Json::exception*>(&e))
        return problem(400, "invalid-data", "Invalid request data", what, instance);
    if (dynamic_cast<const NotFoundError*>(&e))
        return problem(404, "not-found", "Not found", what, instance);
    if (dynamic_cast<const ConflictError*>(&e))
        return problem(409, "conflict", "Conflicting outcome", what, instance);
    if (dynamic_cast<const QuotaError*>(&e))
        return problem(409, "quota-exhausted", "Enrollment quota exhausted", what, instance);
    if (dynamic_cast<const StateError*>(&e))
        return problem(409, "state-conflict", "Not allowed in the trial's current stage", what,
                       instance);
    if (dynamic_cast<const DeferredError*>(&e))
        return problem(409, "deferred", "Decision deferred", what, instance);
    return problem(500, "internal", "Internal error", what, instance);
}

TrialService::TrialService(Options opts) : opts_(std::move(opts)), store_(opts_.data_dir) {}

ServiceResponse TrialService::handle(const std::string& method, const std::string& path,
                                     const std::string& body, const std::string& authorization,
                                     const std::map<std::string, std::string>& query) {
    if (opts_.token && authorization != "Bearer " + *opts_.token) {
        auto p = problem(401, "unauthorized", "Unauthorized", "missing or invalid bearer token",
                         path);
        return p;
    }
    try {
        Json parsed = Json::object();
        if (!body.empty()) {
            try {
                parsed = Json::parse(body);
            } catch (const Json::parse_error& e) {
                return problem(400, "malformed-json", "Malformed JSON body", e.what(), path);
            }
        }
        auto r = route(method, path, parsed, query);
        return r;
    } catch (const std::exception& e) {
        return problem_from_exception(e, path);
    }
}

ServiceResponse TrialService::route(const std::string& method, const std::string& path,
                                    const Json& body,
                                    const std::map<std::string, std::string>& query) {
    const auto parts = split_path(path);
    const auto n = parts.size();
    auto not_allowed = [&] {
        return problem(405, "method-not-allowed", "Method not allowed",
                       method + " is not supported on " + path, path);
    };

    if (n == 1 && parts[0] == "health") return {200, {{"status", "ok"}}};
    if (n >= 1 && parts[0] == "designs") {
        if (n == 1) return method == "POST" ? post_design(body) : not_allowed();
        if (!valid_id(parts[1])) throw NotFoundError("design " + parts[1] + " not found");
        if (n == 2) return method == "GET" ? get_design(parts[1]) : not_allowed();
        if (n == 3 && parts[2] == "boundaries")
            return method == "GET" ? get_boundaries(parts[1], query) : not_allowed();
    }
    if (n >= 1 && parts[0] == "trials") {
        if (n == 1) {
            if (method == "POST") return post_trial(body);
            if (method == "GET") return {200, {{"trials", store_.trial_ids()}}};
            return not_allowed();
        }
        if (!valid_id(parts[1])) throw NotFoundError("trial " + parts[1] + " not found");
        if (n == 3) {
            const auto& action = parts[2];
            if (action == "patients" || action == "outcomes" || action == "advance")
                return method == "POST" ? trial_command(parts[1], action, body) : not_allowed();
            if (action == "state" || action == "report" || action == "summary" ||
                action == "events")
                return method == "GET" ? trial_view(parts[1], action) : not_allowed();
        }
        if (n == 2) return method == "GET" ? trial_view(parts[1], "state") : not_allowed();
    }
    throw NotFoundError("no route for " + method + " " + path);
}

ServiceResponse TrialService::post_design(const Json& body) {
    const DesignConfig design = design_from_json(body);
    const Json normalized = design_to_json(design);
    const std::string id = "d-" + hex(fnv1a(normalized.dump()), 16);
    const bool existed = store_.load_design(id).has_value();
    if (!existed) store_.save_design(id, normalized);
    return {existed ? 200 : 201, {{"design_id", id}, {"design", normalized}}};
}

ServiceResponse TrialService::get_design(const std::string& id) {
    auto d = store_.load_design(id);
    if (!d) throw NotFoundError("design " + id + " not found");
    return {200, {{"design_id", id}, {"design", *d}}};
}

ServiceResponse TrialService::get_boundaries(const std::string& design_id,
                                             const std::map<std::string, std::string>& query) {
    auto stored = store_.load_design(design_id);
    if (!stored) throw NotFoundError("design " + design_id + " not found");
    const DesignConfig d = design_from_json(*stored);
    if (d.engine != EngineKind::Boin)
        throw DataError("design " + design_id + " uses the BLRM engine, which has no fixed boundaries");
    int max_n = d.n_cap + d.cohort_size;  // a full cohort may land on a capped dose
    if (auto it = query.find("ncap"); it != query.end()) {
        try {
            max_n = std::stoi(it->second);
        } catch (const std::exception&) {
            throw ParameterError("ncap must be an integer");
        }
    }
    if (max_n < 1 || max_n > 1000) throw ParameterError("ncap must lie in 1..1000");
    Json t = boundary_table(d.boin, max_n);
    t["design_id"] = design_id;
    return {200, t};
}

DesignConfig TrialService::resolve_design(const Json& body, std::string& design_id) {
    const bool by_id = body.contains("design_id") && !body.at("design_id").is_null();
    const bool inline_design = body.contains("design") && !body.at("design").is_null();
    if (by_id == inline_design) throw DataError("give exactly one of design_id or design");
    if (by_id) {
        design_id = body.at("design_id").get<std::string>();
        auto stored = valid_id(design_id) ? store_.load_design(design_id) : std::nullopt;
        if (!stored) throw NotFoundError("design " + design_id + " not found");
        return design_from_json(*stored);
    }
    const Json& d = body.at("design");
    if (d.is_string()) {
        auto preset = design_preset(d.get<std::string>());
        if (!preset) throw ConfigError("unknown design preset '" + d.get<std::string>() + "'");
        return *preset;
    }
    return design_from_json(d);
}

ServiceResponse TrialService::post_trial(const Json& body) {
    expect_keys(body, {"design_id", "design", "seed", "trial_id"});
    std::string design_id;
    const DesignConfig design = resolve_design(body, design_id);
    std::string id = field<std::string>(body, "trial_id", "");
    if (id.empty()) id = "t-" + hex(random_u64(), 12);
    if (!valid_id(id)) throw DataError("trial_id may only contain letters, digits, '-' and '_'");
    const auto seed = field<std::uint64_t>(body, "seed", random_u64());

    auto s = slot(id);
    std::lock_guard lock(s->mu);
    if (s->engine || store_.trial_exists(id)) throw ConflictError("trial " + id + " already exists");
    auto engine = std::make_unique<TrialEngine>(
        TrialEngine::create(id, design, seed, utc_timestamp(), design_id));
    store_.append(id, engine->log());
    Json out = {{"trial_id", id}, {"seed", seed}, {"summary", engine->summary()},
                {"events", events_json(engine->log())}};
    s->engine = std::move(engine);
    return {201, out};
}

std::shared_ptr<TrialService::Slot> TrialService::slot(const std::string& id) {
    std::lock_guard lock(slots_mu_);
    auto& s = slots_[id];
    if (!s) s = std::make_shared<Slot>();
    return s;
}

ServiceResponse TrialService::trial_command(const std::string& id, const std::string& action,
                                            const Json& body) {
    auto s = slot(id);
    std::lock_guard lock(s->mu);
    if (!s->engine) s->engine = std::make_unique<TrialEngine>(TrialEngine::replay(store_.load(id)));
    auto& engine = *s->engine;
    const std::string ts = utc_timestamp();

    auto persist = [&](const std::vector<TrialEvent>& events) {
        try {
            store_.append(id, events);
        } catch (...) {
            s->engine.reset();  // memory is ahead of disk; rebuild from the log next time
            throw;
        }
    };

    if (action == "patients") {
        expect_keys(body, {"covariates", "eligible"});
        const auto cov = field<std::vector<int>>(body, "covariates", {});
        const bool eligible = optional_flag(body, "eligible").value_or(true);
        auto res = engine.enroll(cov, eligible, ts);
        if (!res.enrolled)
            return {200,
                    {{"enrolled", false}, {"advisory", res.advisory},
                     {"assignment", res.assignment}, {"summary", engine.summary()}}};
        persist(res.events);
        return {201,
                {{"enrolled", true}, {"patient_id", *res.patient_id},
                 {"assignment", res.assignment}, {"events", events_json(res.events)},
                 {"summary", engine.summary()}}};
    }
    if (action == "outcomes") {
        expect_keys(body, {"patient_id", "dlt", "response", "amend"});
        if (!body.contains("patient_id")) throw DataError("patient_id is required");
        const int pid = field<int>(body, "patient_id", 0);
        auto events = engine.record_outcome(pid, optional_flag(body, "dlt"),
                                            optional_flag(body, "response"),
                                            optional_flag(body, "amend").value_or(false), ts);
        persist(events);
        return {200,
                {{"recorded", !events.empty()}, {"events", events_json(events)},
                 {"summary", engine.summary()}}};
    }
    // advance
    expect_keys(body, {"override", "force"});
    std::optional<std::pair<int, int>> override_doses;
    if (body.contains("override") && !body.at("override").is_null()) {
        const auto o = field<std::vector<int>>(body, "override", {});
        if (o.size() == 1) override_doses = std::make_pair(o[0] - 1, o[0] - 1);
        else if (o.size() == 2) override_doses = std::make_pair(o[0] - 1, o[1] - 1);
        else throw DataError("override: give one or two dose levels");
    }
    auto events = engine.advance(override_doses, optional_flag(body, "force").value_or(false), ts);
    persist(events);
    Json out = {{"events", events_json(events)}, {"summary", engine.summary()}};
    if (engine.plan()) out["warnings"] = engine.plan()->warnings;
    return {200, out};
}

ServiceResponse TrialService::trial_view(const std::string& id, const std::string& view) {
    auto s = slot(id);
    std::lock_guard lock(s->mu);
    if (!s->engine) s->engine = std::make_unique<TrialEngine>(TrialEngine::replay(store_.load(id)));
    const auto& engine = *s->engine;
    if (view == "state") return {200, engine.state()};
    if (view == "summary") return {200, engine.summary()};
    if (view == "report") return {200, engine.report()};
    return {200, {{"trial_id", id}, {"events", events_json(engine.log())}}};
}

}  // namespace bard
