#include "bard/stage1.hpp"

#include "bard/error.hpp"

namespace bard {

std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::None: return "none";
        case StopReason::MaxSampleSize: return "max-sample-size";
        case StopReason::StayAtNStop: return "n-stop";
        case StopReason::AllToxic: return "all-toxic";
    }
    return "?";
}

Stage1Controller::Stage1Controller(std::shared_ptr<const DesignContext> ctx)
    : ctx_(std::move(ctx)),
      tally_(ctx_->design.dose_count),
      backfill_(ctx_->design.dose_count, ctx_->design.n_cap, ctx_->design.engine) {}

bool Stage1Controller::cohort_has_slot() const {
    return !finished() && cohort_enrolled_ < ctx_->design.cohort_size &&
           escalation_total_ < ctx_->design.max_n1();
}

const std::vector<IntervalProbs>& Stage1Controller::blrm_probs() const {
    if (ctx_->design.engine != EngineKind::Blrm) {
        probs_.clear();
        return probs_;
    }
    if (probs_dirty_) {
        const auto data = completed_counts(tally_);
        probs_ = ctx_->blrm_probs(data);
        probs_dirty_ = false;
    }
    return probs_;
}

void Stage1Controller::refresh() const {
    if (!dirty_) return;
    const auto& d = ctx_->design;
    // Reaching max_n1 escalation patients ends escalation, and backfill with it.
    if (!d.backfill || finished() || escalation_total_ >= d.max_n1()) {
        for (auto& s : backfill_.doses) s.open = false;
        // Cap closures still apply so the summary reports them.
        for (int j = 0; j < tally_.size(); ++j)
            if (tally_[j].enrolled >= d.n_cap)
                backfill_.doses[static_cast<std::size_t>(j)].permanently_closed = true;
        dirty_ = false;
        return;
    }
    BackfillRules rules;
    std::vector<double> pod;
    if (d.engine == EngineKind::Boin) {
        rules.lambda_d = d.boin.lambda_d;
    } else {
        for (const auto& p : blrm_probs()) pod.push_back(p.over);
        rules.pod = pod;
        rules.eta = d.blrm.eta;
    }
    refresh_backfill(backfill_, tally_, current_, rules);
    dirty_ = false;
}

const BackfillState& Stage1Controller::backfill() const {
    refresh();
    return backfill_;
}

Assignment Stage1Controller::propose() const {
    if (finished()) return {};
    if (cohort_has_slot()) return {Assignment::Kind::EscalationCohort, current_};
    return assign_patient(backfill(), false, current_);
}

void Stage1Controller::enroll(const Assignment& a) {
    if (finished()) throw StateError("stage 1 has ended");
    if (a.dose < 0 || a.dose >= tally_.size()) throw ParameterError("dose index out of range");
    switch (a.kind) {
        case Assignment::Kind::EscalationCohort:
            if (!cohort_has_slot() || a.dose != current_)
                throw StateError("escalation cohort is not open at this dose");
            ++cohort_enrolled_;
            ++escalation_total_;
            break;
        case Assignment::Kind::Backfill:
            ++tally_[a.dose].backfilled;
            break;
        case Assignment::Kind::NotEnrolled:
            throw StateError("cannot enroll a patient with no assignment");
    }
    ++tally_[a.dose].enrolled;
    dirty_ = true;
}

void Stage1Controller::update_eliminations(bool settled_only) {
    if (ctx_->design.engine != EngineKind::Boin) return;
    auto lowest = tally_.lowest_eliminated();
    const int limit = lowest ? *lowest : tally_.size();
    for (int j = 0; j < limit; ++j) {
        const auto& d = tally_[j];
        if (settled_only && d.n < d.enrolled) continue;
        if (ctx_->eliminates(d.y, d.n)) {
            lowest = j;
            break;
        }
    }
    if (lowest)
        for (int j = *lowest; j < tally_.size(); ++j) tally_[j].eliminated = true;
}

std::optional<CohortDecision> Stage1Controller::record_outcome(int dose,
                                                               bool escalation_member,
                                                               bool dlt,
                                                               std::optional<bool> response) {
    if (dose < 0 || dose >= tally_.size()) throw ParameterError("dose index out of range");
    auto& d = tally_[dose];
    if (d.n >= d.enrolled) throw StateError("more outcomes than enrolled patients at dose");
    ++d.n;
    d.y += dlt ? 1 : 0;
    d.responses += response.value_or(false) ? 1 : 0;
    // Doses with nobody left in the DLT window are judged right away; a dose
    // with pending patients waits for the next escalation decision.
    if (d.n == d.enrolled) update_eliminations(true);
    mark_dirty();

    if (finished() || !escalation_member) return std::nullopt;
    ++cohort_completed_;
    // A cohort truncated by max_n1 is complete once everyone in it is assessed.
    const bool full = cohort_enrolled_ >= ctx_->design.cohort_size ||
                      escalation_total_ >= ctx_->design.max_n1();
    if (cohort_completed_ < cohort_enrolled_ || !full) return std::nullopt;
    auto decision = decide();
    cohort_enrolled_ = 0;
    cohort_completed_ = 0;
    mark_dirty();
    return decision;
}

void Stage1Controller::record_response(int dose) {
    if (dose < 0 || dose >= tally_.size()) throw ParameterError("dose index out of range");
    ++tally_[dose].responses;
    dirty_ = true;
}

void Stage1Controller::amend_outcome(int dose, int dlt_delta, int response_delta) {
    if (dose < 0 || dose >= tally_.size()) throw ParameterError("dose index out of range");
    auto& d = tally_[dose];
    if (d.y + dlt_delta < 0 || d.y + dlt_delta > d.n || d.responses + response_delta < 0)
        throw StateError("amendment does not match recorded outcomes");
    d.y += dlt_delta;
    d.responses += response_delta;
    if (d.n == d.enrolled) update_eliminations(true);
    mark_dirty();
}

CohortDecision Stage1Controller::decide() {
    const auto& design = ctx_->design;
    CohortDecision out;
    out.from = current_;

    if (design.engine == EngineKind::Boin) {
        const auto& p = design.boin;
        // Elimination is judged at decision time, never on a part-assessed cohort.
        update_eliminations(false);
        if (const auto lowest = tally_.lowest_eliminated(); lowest && *lowest <= current_) {
            if (*lowest == 0) {
                out.decision = Decision::TerminateAllToxic;
                out.to = current_;
                out.stop = stop_ = StopReason::AllToxic;
                return out;
            }
            out.decision = Decision::DeEscalate;
            out.to = *lowest - 1;
            out.rate = tally_[current_].n > 0 ? tally_[current_].rate() : 0.0;
        } else {
            const auto r = reconciled_decision(tally_, current_, p);
            out.decision = r.decision;
            out.conflict_dose = r.conflict_dose;
            out.rate = r.rate;
            out.to = r.target < 0 ? 0 : r.target;
            if (out.decision == Decision::Stay && tally_[current_].n >= p.n_stop)
                out.stop = StopReason::StayAtNStop;
        }
    } else {
        const auto a = blrm_decision_from(blrm_probs(), current_, design.blrm);
        out.decision = a.decision;
        switch (a.decision) {
            case Decision::TerminateAllToxic:
                out.to = current_;
                out.stop = stop_ = StopReason::AllToxic;
                return out;
            case Decision::Escalate: out.to = current_ + 1; break;
            case Decision::DeEscalate: out.to = current_ - 1; break;
            case Decision::Stay: out.to = current_; break;
        }
    }

    current_ = out.to;
    if (out.stop == StopReason::None && escalation_total_ >= design.max_n1())
        out.stop = StopReason::MaxSampleSize;
    stop_ = out.stop;
    return out;
}

std::optional<int> Stage1Controller::select_mtd() const {
    const auto& design = ctx_->design;
    if (stop_ == StopReason::AllToxic) return std::nullopt;
    if (design.engine == EngineKind::Boin) return select_mtd_boin(tally_, design.boin);
    return select_mtd_blrm_from(tally_, blrm_probs(), design.blrm);
}

}  // namespace bard
