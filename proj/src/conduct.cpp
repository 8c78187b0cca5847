#include "bard/conduct.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bard/error.hpp"
#include "bard/obd.hpp"
#include "bard/stats.hpp"

namespace fs = std::filesystem;

namespace bard {

std::string_view to_string(TrialStage s) {
    switch (s) {
        case TrialStage::Stage1: return "stage1";
        case TrialStage::Stage2: return "stage2";
        case TrialStage::Completed: return "completed";
        case TrialStage::Terminated: return "terminated";
    }
    return "?";
}

Json TrialEvent::to_json() const {
    return {{"seq", sequence}, {"ts", timestamp}, {"kind", kind}, {"payload", payload}};
}

TrialEvent TrialEvent::from_json(const Json& j) {
    TrialEvent e;
    e.sequence = j.at("seq").get<long long>();
    e.timestamp = j.at("ts").get<std::string>();
    e.kind = j.at("kind").get<std::string>();
    e.payload = j.at("payload");
    return e;
}

std::string utc_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

using Derived = std::vector<std::pair<std::string, Json>>;

Json level(std::optional<int> dose) { return dose ? Json(*dose + 1) : Json(nullptr); }

std::string route_name(Assignment::Kind k, int stage) {
    if (stage == 2) return "randomized";
    switch (k) {
        case Assignment::Kind::EscalationCohort: return "escalation";
        case Assignment::Kind::Backfill: return "backfill";
        case Assignment::Kind::NotEnrolled: return "none";
    }
    return "?";
}

Assignment::Kind route_from(const std::string& s) {
    if (s == "escalation" || s == "randomized") return Assignment::Kind::EscalationCohort;
    if (s == "backfill") return Assignment::Kind::Backfill;
    throw DataError("unknown route '" + s + "'");
}

std::string arm_name(Arm a) { return a == Arm::Low ? "low" : "high"; }

Arm arm_from(const std::string& s) {
    if (s == "low") return Arm::Low;
    if (s == "high") return Arm::High;
    throw DataError("unknown arm '" + s + "'");
}

Json optional_bool(std::optional<bool> v) { return v ? Json(*v) : Json(nullptr); }

std::optional<bool> read_optional_bool(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<bool>();
}

Json decision_json(const CohortDecision& d) {
    return {{"decision", std::string(to_string(d.decision))},
            {"from", d.from + 1},
            {"to", d.to + 1},
            {"rate", d.rate},
            {"conflict_dose", level(d.conflict_dose)},
            {"stop", std::string(to_string(d.stop))}};
}

Json plan_json(const Stage2Plan& p) {
    Json doses = Json::array();
    for (int d : p.doses) doses.push_back(d + 1);
    return {{"mtd", level(p.mtd)},       {"doses", doses},
            {"n1_low", p.n1_low},        {"n1_high", p.n1_high},
            {"quota", p.quota},          {"overridden", p.overridden},
            {"warnings", p.warnings}};
}

}  // namespace

// ---------------------------------------------------------------------------
// construction and replay

TrialEngine TrialEngine::create(const std::string& trial_id, const DesignConfig& design,
                                std::uint64_t seed, const std::string& timestamp,
                                const std::string& design_id) {
    if (trial_id.empty()) throw DataError("trial id must not be empty");
    DesignContext probe(design);  // validates before anything is written
    TrialEngine t;
    Json payload = {{"trial_id", trial_id},
                    {"design", design_to_json(design)},
                    {"seed", seed},
                    {"design_id", design_id}};
    t.commit(event_kind::TrialCreated, std::move(payload), timestamp);
    return t;
}

TrialEngine TrialEngine::replay(const std::vector<TrialEvent>& log) {
    TrialEngine t;
    if (log.empty()) throw ReplayError(1, "event log is empty");
    for (const auto& e : log) t.apply(e, true);
    if (!t.expected_.empty())
        throw ReplayError(static_cast<long long>(t.log_.size()) + 1,
                          "log ends before derived " + t.expected_.front().first + " event");
    return t;
}

std::vector<TrialEvent> TrialEngine::commit(const std::string& kind, Json payload,
                                            const std::string& timestamp) {
    std::vector<TrialEvent> out;
    TrialEvent e{static_cast<long long>(log_.size()) + 1, timestamp, kind, std::move(payload)};
    apply(e, false);
    out.push_back(e);
    for (auto& [k, p] : expected_) {
        TrialEvent d{static_cast<long long>(log_.size()) + 1, timestamp, k, std::move(p)};
        log_.push_back(d);
        out.push_back(std::move(d));
    }
    expected_.clear();
    return out;
}

void TrialEngine::apply(const TrialEvent& e, bool replaying) {
    const auto expected_seq = static_cast<long long>(log_.size()) + 1;
    if (e.sequence != expected_seq)
        throw ReplayError(expected_seq, "sequence number " + std::to_string(e.sequence) +
                                            " out of order");
    const bool derived = e.kind == event_kind::DecisionTaken || e.kind == event_kind::DoseClosed;
    if (derived) {
        if (!replaying) throw StateError("derived events are produced by the engine");
        check_derived(e);
        log_.push_back(e);
        return;
    }
    if (!expected_.empty())
        throw ReplayError(e.sequence, "expected derived " + expected_.front().first +
                                          " event before " + e.kind);
    if (log_.empty() != (e.kind == event_kind::TrialCreated))
        throw ReplayError(e.sequence, log_.empty() ? "log must start with TrialCreated"
                                                   : "duplicate TrialCreated");
    Derived follow;
    try {
        follow = apply_input(e);
    } catch (const ReplayError&) {
        throw;
    } catch (const std::exception& ex) {
        if (!replaying) throw;
        throw ReplayError(e.sequence, ex.what());
    }
    log_.push_back(e);
    for (auto& f : follow) expected_.push_back(std::move(f));
}

void TrialEngine::check_derived(const TrialEvent& e) {
    if (expected_.empty())
        throw ReplayError(e.sequence, "unexpected " + e.kind + " event");
    const auto& [kind, payload] = expected_.front();
    if (kind != e.kind || payload != e.payload)
        throw ReplayError(e.sequence, e.kind + " does not match the recomputed " + kind +
                                          " " + payload.dump());
    expected_.pop_front();
}

ConductPatient& TrialEngine::patient(int id) {
    if (id < 1 || id > static_cast<int>(patients_.size()))
        throw NotFoundError("patient " + std::to_string(id) + " not found");
    return patients_[static_cast<std::size_t>(id - 1)];
}

Derived TrialEngine::closure_events() {
    Derived out;
    const auto& tally = stage1_->tally();
    const auto& bf = stage1_->backfill();
    for (int j = 0; j < tally.size(); ++j) {
        const auto u = static_cast<std::size_t>(j);
        if (tally[j].eliminated && !eliminated_[u]) {
            eliminated_[u] = true;
            out.emplace_back(event_kind::DoseClosed,
                             Json{{"dose", j + 1}, {"reason", "eliminated"}});
        }
        if (bf.doses[u].permanently_closed && !closed_[u]) {
            closed_[u] = true;
            out.emplace_back(event_kind::DoseClosed, Json{{"dose", j + 1}, {"reason", "cap"}});
        }
    }
    return out;
}

Derived TrialEngine::apply_input(const TrialEvent& e) {
    const Json& p = e.payload;
    Derived out;

    if (e.kind == event_kind::TrialCreated) {
        id_ = p.at("trial_id").get<std::string>();
        seed_ = p.at("seed").get<std::uint64_t>();
        design_id_ = p.value("design_id", "");
        ctx_ = std::make_shared<const DesignContext>(design_from_json(p.at("design")));
        stage1_ = std::make_unique<Stage1Controller>(ctx_);
        counts_ = ArmCounts(ctx_->design.balance);
        const auto n = static_cast<std::size_t>(ctx_->design.dose_count);
        closed_.assign(n, false);
        eliminated_.assign(n, false);
        return out;
    }

    if (e.kind == event_kind::PatientEnrolled) {
        ConductPatient pt;
        pt.id = p.at("patient_id").get<int>();
        pt.stage = p.at("stage").get<int>();
        pt.dose = p.at("dose").get<int>() - 1;
        pt.route = route_from(p.at("route").get<std::string>());
        pt.covariates = p.at("covariates").get<std::vector<int>>();
        pt.eligible = p.at("eligible").get<bool>();
        if (pt.id != static_cast<int>(patients_.size()) + 1)
            throw DataError("patient ids must be consecutive");
        if (pt.stage == 1) {
            if (stage_ != TrialStage::Stage1) throw DataError("stage-1 enrollment after stage 1");
            const Assignment a = stage1_->propose();
            if (!a.enrolled() || a.dose != pt.dose || a.kind != pt.route)
                throw DataError("recorded assignment differs from the design's rule");
            stage1_->enroll(a);
            patients_.push_back(std::move(pt));
            return closure_events();
        }
        if (stage_ != TrialStage::Stage2) throw DataError("stage-2 enrollment outside stage 2");
        if (stage2_enrolled_ >= plan_->quota) throw QuotaError("stage-2 quota exhausted");
        Arm arm = Arm::High;
        if (plan_->two_arm()) {
            const auto draw = p.at("draw").get<std::uint64_t>();
            if (draw != draws_) throw DataError("randomization draw out of order");
            arm = pick_arm(counts_, block_second_, pt.covariates, draw);
            ++draws_;
        } else {
            counts_.add(ctx_->design.balance, arm, pt.covariates);
        }
        if (arm_from(p.at("arm").get<std::string>()) != arm ||
            plan_->doses[plan_->two_arm() ? idx(arm) : 0] != pt.dose)
            throw DataError("recorded arm differs from the randomization rule");
        pt.arm = arm;
        patients_.push_back(std::move(pt));
        ++stage2_enrolled_;
        return out;
    }

    if (e.kind == event_kind::OutcomeRecorded) {
        auto& pt = patient(p.at("patient_id").get<int>());
        const auto dlt = read_optional_bool(p, "dlt");
        const auto response = read_optional_bool(p, "response");
        const bool amend = p.value("amend", false);
        const bool in_stage1 = pt.stage == 1;
        if (amend) {
            if (!pt.dlt) throw DataError("nothing to amend for patient " + std::to_string(pt.id));
            const bool new_dlt = dlt.value_or(*pt.dlt);
            const auto new_resp = response ? response : pt.response;
            const int dy = static_cast<int>(new_dlt) - static_cast<int>(*pt.dlt);
            const int dr = static_cast<int>(new_resp.value_or(false)) -
                           static_cast<int>(pt.response.value_or(false));
            if (in_stage1) stage1_->amend_outcome(pt.dose, dy, dr);
            pt.dlt = new_dlt;
            pt.response = new_resp;
        } else if (!pt.dlt) {
            if (!dlt) throw DataError("the first outcome of a patient must include dlt");
            pt.dlt = dlt;
            pt.response = response;
            if (in_stage1) {
                auto d = stage1_->record_outcome(pt.dose,
                                                 pt.route == Assignment::Kind::EscalationCohort,
                                                 *dlt, response);
                if (d) {
                    decisions_.push_back(*d);
                    out.emplace_back(event_kind::DecisionTaken, decision_json(*d));
                }
            }
        } else {
            if (dlt && *dlt != *pt.dlt) throw ConflictError("dlt already recorded differently");
            if (!response || pt.response) throw ConflictError("outcome already final");
            pt.response = response;
            if (in_stage1 && *response) stage1_->record_response(pt.dose);
        }
        if (stage_ == TrialStage::Stage1 || in_stage1) {
            auto more = closure_events();
            out.insert(out.end(), more.begin(), more.end());
        }
        return out;
    }

    if (e.kind == event_kind::StageAdvanced) {
        if (stage_ != TrialStage::Stage1) throw DataError("stage already advanced");
        std::optional<std::pair<int, int>> override_doses;
        if (p.contains("override") && !p.at("override").is_null()) {
            const auto o = p.at("override").get<std::vector<int>>();
            if (o.size() != 2) throw DataError("override must name two dose levels");
            override_doses = std::make_pair(o[0] - 1, o[1] - 1);
        }
        Stage2Plan plan = make_plan(override_doses);
        if (plan_json(plan) != p.at("plan")) throw DataError("recorded plan differs from recomputed plan");
        const auto& spec = ctx_->design.balance;
        counts_ = ArmCounts(spec);
        // Only the conditional design carries stage-1 patients into the arms.
        if (ctx_->design.stage2 == Stage2Mode::Conditional) {
            for (auto& pt : patients_) {
                if (pt.stage != 1 || !pt.eligible) continue;
                for (std::size_t a = 0; a < plan.doses.size(); ++a) {
                    if (pt.dose != plan.doses[a]) continue;
                    pt.arm = plan.two_arm() ? static_cast<Arm>(a) : Arm::High;
                    counts_.add(spec, *pt.arm, pt.covariates);
                }
            }
        }
        plan_ = std::move(plan);
        stage_ = TrialStage::Stage2;
        return out;
    }

    if (e.kind == event_kind::TrialCompleted) {
        if (stage_ == TrialStage::Completed || stage_ == TrialStage::Terminated)
            throw DataError("trial already closed");
        completion_reason_ = p.at("reason").get<std::string>();
        stage_ = p.at("stage").get<std::string>() == "terminated" ? TrialStage::Terminated
                                                                   : TrialStage::Completed;
        return out;
    }

    throw DataError("unknown event kind '" + e.kind + "'");
}

// ---------------------------------------------------------------------------
// stage 2 helpers

Arm TrialEngine::pick_arm(ArmCounts& counts, std::optional<Arm>& block,
                          const std::vector<int>& covariates, std::uint64_t draw) const {
    const auto& d = ctx_->design;
    const double u = counter_uniform(seed_, draw);
    if (d.stage2 == Stage2Mode::SimpleRandom) {
        Arm arm;
        if (block) {
            arm = *block;
            block.reset();
        } else {
            arm = u < 0.5 ? Arm::Low : Arm::High;
            block = other(arm);
        }
        counts.add(d.balance, arm, covariates);
        return arm;
    }
    const int cap = d.arm_cap_slack >= 0 ? (d.n2 + 1) / 2 + d.arm_cap_slack : -1;
    if (cap >= 0 && (counts.totals[0] >= cap || counts.totals[1] >= cap)) {
        const Arm arm = counts.totals[0] >= cap ? Arm::High : Arm::Low;
        counts.add(d.balance, arm, covariates);
        return arm;
    }
    return randomize(counts, d.balance, covariates, d.r, u);
}

Stage2Plan TrialEngine::make_plan(std::optional<std::pair<int, int>> override_doses) const {
    const auto& d = ctx_->design;
    Stage2Plan plan;
    plan.mtd = stage1_->select_mtd();
    if (override_doses) {
        auto [lo, hi] = *override_doses;
        if (lo < 0 || hi < 0 || lo >= d.dose_count || hi >= d.dose_count)
            throw DataError("override dose out of range");
        if (lo > hi) std::swap(lo, hi);
        plan.overridden = true;
        plan.doses = lo == hi ? std::vector<int>{lo} : std::vector<int>{lo, hi};
        const auto& tally = stage1_->tally();
        for (int dose : plan.doses) {
            if (tally[dose].n == 0)
                plan.warnings.push_back("dose " + std::to_string(dose + 1) +
                                        " has no completed stage-1 data");
            if (tally[dose].eliminated)
                plan.warnings.push_back("dose " + std::to_string(dose + 1) +
                                        " was eliminated for overdose");
        }
        if (hi - lo > 1) plan.warnings.push_back("override doses are not adjacent");
        if (plan.mtd && (hi > *plan.mtd || hi < *plan.mtd - 1))
            plan.warnings.push_back("override differs from the default (MTD-1, MTD) pair");
    } else {
        if (!plan.mtd) throw StateError("no MTD was identified; nothing to advance to");
        plan.doses = *plan.mtd > 0 ? std::vector<int>{*plan.mtd - 1, *plan.mtd}
                                   : std::vector<int>{*plan.mtd};
    }
    for (const auto& pt : patients_) {
        if (pt.stage != 1 || !pt.eligible) continue;
        if (plan.two_arm()) {
            if (pt.dose == plan.doses[0]) ++plan.n1_low;
            if (pt.dose == plan.doses[1]) ++plan.n1_high;
        } else if (pt.dose == plan.doses[0]) {
            ++plan.n1_high;
        }
    }
    const bool reuse = d.stage2 == Stage2Mode::Conditional;
    if (plan.two_arm())
        plan.quota = reuse ? stage2_quota(d.n2, plan.n1_low, plan.n1_high) : d.n2;
    else
        plan.quota = reuse ? stage2_quota(d.n2_single, 0, plan.n1_high) : d.n2_single;
    return plan;
}

// ---------------------------------------------------------------------------
// commands

EnrollOutcome TrialEngine::enroll(std::vector<int> covariates, bool eligible,
                                  const std::string& timestamp) {
    const auto& d = ctx_->design;
    if (stage_ == TrialStage::Completed || stage_ == TrialStage::Terminated)
        throw StateError("trial is " + std::string(to_string(stage_)));
    for (const auto& f : d.balance.factors) {
        if (f.source >= static_cast<int>(covariates.size()))
            throw DataError("covariate " + f.name + " is missing");
        const int v = covariates[static_cast<std::size_t>(f.source)];
        if (v < 0 || v >= f.levels)
            throw DataError("covariate " + f.name + " must lie in 0.." + std::to_string(f.levels - 1));
    }
    for (int v : covariates)
        if (v < 0) throw DataError("covariate levels must be nonnegative");

    EnrollOutcome res;
    const int id = static_cast<int>(patients_.size()) + 1;
    Json payload = {{"patient_id", id}, {"covariates", covariates}, {"eligible", eligible}};

    if (stage_ == TrialStage::Stage1) {
        const Assignment a = stage1_->propose();
        if (!a.enrolled()) {
            res.advisory = stage1_->finished()
                               ? "stage 1 has stopped; advance the trial to stage 2"
                               : "no escalation slot and no dose open for backfill; patient not enrolled";
            res.assignment = {{"kind", "none"}, {"dose", nullptr}};
            return res;
        }
        payload["stage"] = 1;
        payload["dose"] = a.dose + 1;
        payload["route"] = route_name(a.kind, 1);
    } else {
        if (!eligible) throw DataError("ineligible patients are not randomized");
        if (stage2_enrolled_ >= plan_->quota)
            throw QuotaError("stage-2 quota of " + std::to_string(plan_->quota) +
                             " new patients is exhausted");
        Arm arm = Arm::High;
        if (plan_->two_arm()) {
            ArmCounts scratch = counts_;
            auto block = block_second_;
            arm = pick_arm(scratch, block, covariates, draws_);
            payload["draw"] = draws_;
        } else {
            payload["draw"] = nullptr;
        }
        payload["stage"] = 2;
        payload["dose"] = plan_->doses[plan_->two_arm() ? idx(arm) : 0] + 1;
        payload["route"] = "randomized";
        payload["arm"] = arm_name(arm);
    }

    res.events = commit(event_kind::PatientEnrolled, payload, timestamp);
    res.enrolled = true;
    res.patient_id = id;
    res.assignment = {{"kind", payload["route"]}, {"dose", payload["dose"]}};
    if (payload.contains("arm")) res.assignment["arm"] = payload["arm"];
    return res;
}

std::vector<TrialEvent> TrialEngine::record_outcome(int patient_id, std::optional<bool> dlt,
                                                    std::optional<bool> response, bool amend,
                                                    const std::string& timestamp) {
    if (stage_ == TrialStage::Terminated) throw StateError("trial is terminated");
    auto& pt = patient(patient_id);
    if (!dlt && !response) throw DataError("an outcome needs dlt and/or response");
    if (amend) {
        if (!pt.dlt) throw StateError("patient " + std::to_string(patient_id) + " has no outcome to amend");
        const bool same = dlt.value_or(*pt.dlt) == *pt.dlt &&
                          (!response || response == pt.response);
        if (same) return {};
    } else if (pt.dlt) {
        const bool dlt_same = !dlt || *dlt == *pt.dlt;
        const bool resp_same = !response || response == pt.response;
        if (dlt_same && resp_same) return {};  // identical re-submission
        if (!dlt_same) throw ConflictError("patient " + std::to_string(patient_id) +
                                           " already has a different DLT outcome; send an amendment");
        if (pt.response) throw ConflictError("patient " + std::to_string(patient_id) +
                                             " already has a different response; send an amendment");
    } else if (!dlt) {
        throw DataError("the first outcome of a patient must include dlt");
    }
    if (pt.stage == 1 && !amend && !pt.dlt) {
        const auto& t = stage1_->tally()[pt.dose];
        if (t.n >= t.enrolled) throw StateError("more outcomes than patients at the dose");
    }
    Json payload = {{"patient_id", patient_id},
                    {"dlt", optional_bool(dlt)},
                    {"response", optional_bool(response)},
                    {"amend", amend}};
    return commit(event_kind::OutcomeRecorded, std::move(payload), timestamp);
}

std::vector<TrialEvent> TrialEngine::advance(std::optional<std::pair<int, int>> override_doses,
                                             bool force, const std::string& timestamp) {
    if (stage_ == TrialStage::Stage1) {
        if (!stage1_->finished() && !force)
            throw StateError("stage-1 stopping rule not met yet");
        const bool all_toxic = stage1_->stop_reason() == StopReason::AllToxic;
        if (!override_doses && (all_toxic || !stage1_->select_mtd()))
            return commit(event_kind::TrialCompleted,
                          {{"reason", "no-mtd"}, {"stage", "terminated"}}, timestamp);
        Stage2Plan plan = make_plan(override_doses);
        Json payload = {{"plan", plan_json(plan)}, {"override", nullptr}};
        if (override_doses)
            payload["override"] = {override_doses->first + 1, override_doses->second + 1};
        return commit(event_kind::StageAdvanced, std::move(payload), timestamp);
    }
    if (stage_ == TrialStage::Stage2) {
        if (override_doses) throw StateError("stage-2 doses are already fixed");
        const bool full = stage2_enrolled_ >= plan_->quota;
        if (!full && !force)
            throw StateError("stage-2 quota not reached (" + std::to_string(stage2_enrolled_) +
                             " of " + std::to_string(plan_->quota) + "); use force to close");
        return commit(event_kind::TrialCompleted,
                      {{"reason", full ? "quota" : "forced"}, {"stage", "completed"}}, timestamp);
    }
    throw StateError("trial is " + std::string(to_string(stage_)));
}

// ---------------------------------------------------------------------------
// views

Json TrialEngine::summary() const {
    const auto& tally = stage1_->tally();
    const auto& bf = stage1_->backfill();
    Json open = Json::array(), eliminated = Json::array(), closed = Json::array(),
         suspended = Json::array(), pending = Json::array();
    for (int j = 0; j < tally.size(); ++j) {
        const auto& s = bf.doses[static_cast<std::size_t>(j)];
        if (s.open) open.push_back(j + 1);
        if (tally[j].eliminated) eliminated.push_back(j + 1);
        if (s.permanently_closed) closed.push_back(j + 1);
        if (s.temporarily_closed) suspended.push_back(j + 1);
    }
    for (const auto& p : patients_)
        if (!p.dlt) pending.push_back(p.id);

    Json next;
    if (stage_ == TrialStage::Stage1) {
        const auto a = stage1_->propose();
        next = {{"kind", a.enrolled() ? route_name(a.kind, 1) : "none"},
                {"dose", a.enrolled() ? Json(a.dose + 1) : Json(nullptr)}};
    } else if (stage_ == TrialStage::Stage2) {
        next = {{"kind", stage2_enrolled_ < plan_->quota ? "randomized" : "none"},
                {"remaining", plan_->quota - stage2_enrolled_}};
    } else {
        next = {{"kind", "none"}};
    }

    const auto& d = ctx_->design;
    Json s = {{"trial_id", id_},
              {"stage", std::string(to_string(stage_))},
              {"current_dose", stage1_->current_dose() + 1},
              {"cohort",
               {{"size", d.cohort_size},
                {"enrolled", stage1_->cohort_enrolled()},
                {"completed", stage1_->cohort_completed()}}},
              {"escalation_enrolled", stage1_->escalation_enrolled()},
              {"max_n1", d.max_n1()},
              {"next_assignment", next},
              {"open_backfill", open},
              {"eliminated", eliminated},
              {"closed", closed},
              {"temporarily_closed", suspended},
              {"stop", std::string(to_string(stage1_->stop_reason()))},
              {"stop_met", stage1_->finished()},
              {"pending_assessments", pending},
              {"last_decision", decisions_.empty() ? Json(nullptr) : decision_json(decisions_.back())},
              {"sequence", log_.size()}};
    if (plan_) s["plan"] = plan_json(*plan_);
    return s;
}

Json TrialEngine::state() const {
    const auto& tally = stage1_->tally();
    const auto& bf = stage1_->backfill();
    const auto& probs = stage1_->blrm_probs();
    Json doses = Json::array();
    for (int j = 0; j < tally.size(); ++j) {
        const auto& t = tally[j];
        const auto& b = bf.doses[static_cast<std::size_t>(j)];
        Json row = {{"dose", j + 1},
                    {"dlt", t.y},
                    {"assessed", t.n},
                    {"enrolled", t.enrolled},
                    {"backfilled", t.backfilled},
                    {"responses", t.responses},
                    {"eliminated", t.eliminated},
                    {"backfill",
                     {{"open", b.open},
                      {"temporarily_closed", b.temporarily_closed},
                      {"permanently_closed", b.permanently_closed}}}};
        if (!probs.empty()) {
            const auto& pr = probs[static_cast<std::size_t>(j)];
            row["blrm"] = {{"under", pr.under}, {"target", pr.target}, {"over", pr.over}};
        }
        doses.push_back(row);
    }

    Json patients = Json::array();
    for (const auto& p : patients_) {
        Json row = {{"patient_id", p.id},
                    {"stage", p.stage},
                    {"dose", p.dose + 1},
                    {"route", route_name(p.route, p.stage)},
                    {"covariates", p.covariates},
                    {"eligible", p.eligible},
                    {"dlt", optional_bool(p.dlt)},
                    {"response", optional_bool(p.response)},
                    {"arm", p.arm ? Json(arm_name(*p.arm)) : Json(nullptr)}};
        patients.push_back(row);
    }

    Json decisions = Json::array();
    for (const auto& d : decisions_) decisions.push_back(decision_json(d));

    Json counts = nullptr;
    if (plan_) {
        counts = Json::object();
        const auto& spec = ctx_->design.balance;
        for (std::size_t a = 0; a < 2; ++a) {
            Json arm = Json::object();
            for (std::size_t f = 0; f < spec.factors.size(); ++f)
                arm[spec.factors[f].name] = counts_.counts[a][f];
            arm["total"] = counts_.totals[a];
            counts[arm_name(static_cast<Arm>(a))] = arm;
        }
    }

    return {{"trial_id", id_},
            {"design_id", design_id_},
            {"design", design_to_json(ctx_->design)},
            {"seed", seed_},
            {"stage", std::string(to_string(stage_))},
            {"completion_reason", completion_reason_},
            {"sequence", log_.size()},
            {"summary", summary()},
            {"doses", doses},
            {"patients", patients},
            {"decisions", decisions},
            {"mtd_estimate", level(stage1_->select_mtd())},
            {"plan", plan_ ? plan_json(*plan_) : Json(nullptr)},
            {"stage2_enrolled", stage2_enrolled_},
            {"randomization_draws", draws_},
            {"arm_counts", counts}};
}

Json TrialEngine::report() const {
    const bool quota_met = stage_ == TrialStage::Stage2 && stage2_enrolled_ >= plan_->quota;
    if (!plan_ || !(quota_met || stage_ == TrialStage::Completed))
        throw StateError("the OBD report needs a completed stage 2 (quota reached or trial closed)");

    const auto& d = ctx_->design;
    const auto& g = d.gating;
    const bool two = plan_->two_arm();
    Json caveats = Json::array();

    std::array<ArmOutcomes, 2> out;
    std::array<std::vector<const ConductPatient*>, 2> members;
    std::array<int, 2> pending{0, 0};
    for (const auto& p : patients_) {
        if (!p.arm) continue;
        const auto a = idx(*p.arm);
        members[a].push_back(&p);
        if (p.dlt && p.response) out[a].add(*p.dlt, *p.response);
        else ++pending[a];
    }
    for (std::size_t a = 0; a < 2; ++a)
        if (pending[a] > 0)
            caveats.push_back(std::to_string(pending[a]) + " patient(s) in the " +
                              arm_name(static_cast<Arm>(a)) +
                              " arm lack a final DLT/response outcome and are excluded");
    if (stage_ == TrialStage::Completed && completion_reason_ == "forced")
        caveats.push_back("stage 2 was closed before reaching its quota");

    std::array<Admissibility, 2> adm{};
    Json obd = {{"margin", nullptr}, {"utility", nullptr}};
    std::array<double, 2> utility{0.0, 0.0};
    if (two) {
        adm = admissible_pair(out[0], out[1], g);
        if (auto m = select_obd_margin(out[0].response_rate(), out[1].response_rate(), g.delta,
                                       adm, d.margin_rule))
            obd["margin"] = plan_->doses[idx(*m)] + 1;
        const auto u = select_obd_utility(out[0].joint, out[1].joint, d.utility,
                                          d.dirichlet_prior, adm);
        utility = u.utility;
        if (u.arm) obd["utility"] = plan_->doses[idx(*u.arm)] + 1;
    } else {
        const auto& h = out[idx(Arm::High)];
        adm[idx(Arm::High)] = admissible(h.dlt, h.n, h.responses, h.n, g);
        utility[idx(Arm::High)] =
            dirichlet_mean_utility(DirichletPosterior::update(d.dirichlet_prior, h.joint),
                                   d.utility.u);
        if (adm[idx(Arm::High)].ok()) obd["margin"] = obd["utility"] = plan_->doses[0] + 1;
    }
    if (obd["margin"].is_null() && obd["utility"].is_null()) caveats.push_back("no OBD: no arm passed the safety and efficacy gates");

    Json arms = Json::array();
    for (std::size_t a = 0; a < 2; ++a) {
        if (!two && a == idx(Arm::Low)) continue;
        const auto& o = out[a];
        const std::size_t dose_pos = two ? a : 0;
        arms.push_back({{"arm", arm_name(static_cast<Arm>(a))},
                        {"dose", plan_->doses[dose_pos] + 1},
                        {"n", o.n},
                        {"pending", pending[a]},
                        {"dlt", o.dlt},
                        {"responses", o.responses},
                        {"joint", o.joint},
                        {"dlt_rate", o.dlt_rate()},
                        {"response_rate", o.response_rate()},
                        {"posterior_mean_dlt", (o.dlt + 1.0) / (o.n + 2.0)},
                        {"posterior_mean_response", (o.responses + 1.0) / (o.n + 2.0)},
                        {"utility", utility[a]},
                        {"admissibility",
                         {{"safe", adm[a].safe},
                          {"effective", adm[a].effective},
                          {"tox_tail", adm[a].tox_tail},
                          {"eff_tail", adm[a].eff_tail}}}});
    }

    // Balance over every recorded covariate, including ones the randomization ignores.
    std::size_t K = 0;
    for (std::size_t a = 0; a < 2; ++a)
        for (const auto* p : members[a]) K = std::max(K, p->covariates.size());
    Json factors = Json::array();
    for (std::size_t k = 0; k < K; ++k) {
        std::map<int, std::array<int, 2>> levels;
        for (std::size_t a = 0; a < 2; ++a)
            for (const auto* p : members[a])
                if (k < p->covariates.size()) levels[p->covariates[k]][a] += 1;
        Json rows = Json::array();
        for (const auto& [lv, c] : levels) rows.push_back({{"level", lv}, {"low", c[0]}, {"high", c[1]}});
        Json index = nullptr;
        const auto nl = members[0].size(), nh = members[1].size();
        if (two && nl > 0 && nh > 0 && levels.contains(1)) {
            const auto& c = levels[1];
            index = 100.0 * std::abs(static_cast<double>(c[0]) / nl - static_cast<double>(c[1]) / nh);
        }
        std::string name = "X" + std::to_string(k + 1);
        bool balanced = false;
        for (const auto& f : d.balance.factors)
            if (f.source == static_cast<int>(k)) {
                name = f.name;
                balanced = true;
            }
        factors.push_back({{"factor", name}, {"balanced_by_design", balanced}, {"levels", rows},
                           {"imbalance_index", index}});
    }
    Json balance = {{"arm_totals", {{"low", members[0].size()}, {"high", members[1].size()}}},
                    {"factors", factors}};

    return {{"trial_id", id_},
            {"stage", std::string(to_string(stage_))},
            {"plan", plan_json(*plan_)},
            {"obd", obd},
            {"arms", arms},
            {"balance", balance},
            {"margin_rule", d.margin_rule == MarginRule::Noninferiority ? "noninferiority" : "literal"},
            {"caveats", caveats}};
}

// ---------------------------------------------------------------------------
// storage

std::vector<TrialEvent> read_event_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("no event log at " + path);
    std::vector<TrialEvent> out;
    std::string line;
    long long seq = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++seq;
        TrialEvent e;
        try {
            e = TrialEvent::from_json(Json::parse(line));
        } catch (const Json::exception& ex) {
            throw ReplayError(seq, std::string("malformed event line: ") + ex.what());
        }
        if (e.sequence != seq)
            throw ReplayError(seq, "found sequence number " + std::to_string(e.sequence));
        out.push_back(std::move(e));
    }
    return out;
}

void append_event_log(const std::string& path, const std::vector<TrialEvent>& events) {
    if (events.empty()) return;
    std::string buf;
    for (const auto& e : events) buf += e.to_json().dump() + "\n";
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd < 0) throw std::runtime_error("cannot open " + path + ": " + std::strerror(errno));
    std::size_t off = 0;
    while (off < buf.size()) {
        const ssize_t w = ::write(fd, buf.data() + off, buf.size() - off);
        if (w < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            throw std::runtime_error("cannot write " + path + ": " + std::strerror(err));
        }
        off += static_cast<std::size_t>(w);
    }
    ::fsync(fd);
    ::close(fd);
}

EventStore::EventStore(std::string root) : root_(std::move(root)) {
    fs::create_directories(fs::path(root_) / "trials");
    fs::create_directories(fs::path(root_) / "designs");
}

std::string EventStore::trial_dir(const std::string& id) const {
    return (fs::path(root_) / "trials" / id).string();
}

bool EventStore::trial_exists(const std::string& id) const {
    return fs::exists(fs::path(trial_dir(id)) / "events.jsonl");
}

std::vector<std::string> EventStore::trial_ids() const {
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(fs::path(root_) / "trials"))
        if (fs::exists(e.path() / "events.jsonl")) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

void EventStore::append(const std::string& id, const std::vector<TrialEvent>& events) const {
    fs::create_directories(trial_dir(id));
    append_event_log((fs::path(trial_dir(id)) / "events.jsonl").string(), events);
}

std::vector<TrialEvent> EventStore::load(const std::string& id) const {
    if (!trial_exists(id)) throw NotFoundError("trial " + id + " not found");
    return read_event_log((fs::path(trial_dir(id)) / "events.jsonl").string());
}

void EventStore::save_design(const std::string& id, const Json& design) const {
    const auto path = fs::path(root_) / "designs" / (id + ".json");
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        out << design.dump(2) << "\n";
        if (!out) throw std::runtime_error("cannot write " + tmp);
    }
    fs::rename(tmp, path);
}

std::optional<Json> EventStore::load_design(const std::string& id) const {
    const auto path = fs::path(root_) / "designs" / (id + ".json");
    std::ifstream in(path);
    if (!in) return std::nullopt;
    return Json::parse(in);
}

Json boundary_table(const BoinParams& params, int max_n) {
    params.validate();
    const auto elim = elimination_table(params, max_n);
    Json rows = Json::array();
    for (int n = 1; n <= max_n; ++n) {
        Json esc = nullptr, de = nullptr;
        for (int y = 0; y <= n; ++y) {
            const double p = static_cast<double>(y) / n;
            if (p <= params.lambda_e) esc = y;
            if (p > params.lambda_d && de.is_null()) de = y;
        }
        const int x = elim[static_cast<std::size_t>(n)];
        rows.push_back({{"n", n},
                        {"escalate_if_y_at_most", esc},
                        {"deescalate_if_y_at_least", de},
                        {"eliminate_if_y_at_least", x >= 0 ? Json(x) : Json(nullptr)}});
    }
    return {{"phi", params.phi},
            {"lambda_e", params.lambda_e},
            {"lambda_d", params.lambda_d},
            {"elimination_cutoff", params.elimination_cutoff},
            {"rows", rows}};
}

}  // namespace bard
