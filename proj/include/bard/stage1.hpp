#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "bard/backfill.hpp"
#include "bard/design.hpp"

namespace bard {

enum class StopReason { None, MaxSampleSize, StayAtNStop, AllToxic };

std::string_view to_string(StopReason r);

/// Outcome of the escalation decision taken when a cohort completes.
struct CohortDecision {
    Decision decision = Decision::Stay;
    int from = 0;
    int to = 0;
    /// Set when a backfill conflict forced the pooled-rate rule.
    std::optional<int> conflict_dose;
    /// Rate the BOIN rule compared against its boundaries.
    double rate = 0.0;
    StopReason stop = StopReason::None;
};

/*
 * Stage-1 escalation with backfill for one trial. Owns the per-dose tally,
 * the escalation cohort and the backfill open set, and takes the escalation
 * decision when the last member of the current cohort completes its DLT
 * assessment. Time is the caller's business: the simulator and the trial
 * service both drive this object with enrollments and outcomes.
 */
class Stage1Controller {
   public:
    explicit Stage1Controller(std::shared_ptr<const DesignContext> ctx);

    /// Where the next arriving patient would go.
    Assignment propose() const;
    void enroll(const Assignment& a);

    /*
     * Completed DLT assessment (and, when known, efficacy response) of a
     * patient treated at `dose`. Returns the escalation decision when this
     * completes the current cohort.
     */
    std::optional<CohortDecision> record_outcome(int dose, bool escalation_member, bool dlt,
                                                 std::optional<bool> response);
    /// A response observed after the DLT outcome was recorded.
    void record_response(int dose);
    /// Corrects an already recorded outcome. Decisions taken earlier stand.
    void amend_outcome(int dose, int dlt_delta, int response_delta);

    bool finished() const { return stop_ != StopReason::None; }
    StopReason stop_reason() const { return stop_; }
    int current_dose() const { return current_; }
    bool cohort_has_slot() const;
    int cohort_enrolled() const { return cohort_enrolled_; }
    int cohort_completed() const { return cohort_completed_; }
    int escalation_enrolled() const { return escalation_total_; }
    const DoseTally& tally() const { return tally_; }
    const BackfillState& backfill() const;
    const DesignContext& context() const { return *ctx_; }

    /// BLRM interval probabilities on the completed data (empty for BOIN).
    const std::vector<IntervalProbs>& blrm_probs() const;

    /// MTD on the data completed so far.
    std::optional<int> select_mtd() const;

   private:
    CohortDecision decide();
    void mark_dirty() { dirty_ = true; probs_dirty_ = true; }
    void refresh() const;
    void update_eliminations(bool settled_only);

    std::shared_ptr<const DesignContext> ctx_;
    DoseTally tally_;
    int current_ = 0;
    int cohort_enrolled_ = 0;
    int cohort_completed_ = 0;
    int escalation_total_ = 0;
    StopReason stop_ = StopReason::None;

    mutable BackfillState backfill_;
    mutable bool dirty_ = true;
    mutable bool probs_dirty_ = true;
    mutable std::vector<IntervalProbs> probs_;
};

}  // namespace bard
