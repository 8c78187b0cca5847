#pragma once

#include <optional>
#include <span>
#include <vector>

#include "bard/boin.hpp"

namespace bard {

enum class EngineKind { Boin, Blrm };

struct DoseBackfill {
    bool open = false;
    bool temporarily_closed = false;  ///< toxicity closure, re-openable
    bool permanently_closed = false;  ///< sample-size cap reached
};

struct BackfillState {
    std::vector<DoseBackfill> doses;
    int n_cap = 12;
    EngineKind engine = EngineKind::Boin;

    BackfillState() = default;
    BackfillState(int dose_count, int cap, EngineKind kind)
        : doses(static_cast<std::size_t>(dose_count)), n_cap(cap), engine(kind) {}

    std::vector<int> open_doses() const;
    std::optional<int> highest_open() const;
};

/// Toxicity inputs for the closing rule; which fields are read depends on
/// the engine.
struct BackfillRules {
    double lambda_d = 0.0;       ///< BOIN
    std::span<const double> pod; ///< BLRM, POD per dose
    double eta = 0.30;           ///< BLRM
};

/*
 * Recomputes the open set. Dose b is open iff b < c, a response has been
 * observed at b or below, b is not eliminated, and b is not closed. BOIN
 * closes b temporarily when p-hat_b > lambda_d and the rate pooled over
 * {b, b+1} is also > lambda_d; BLRM closes it temporarily when POD_b >= eta.
 * Either engine closes b permanently once n_cap patients have been treated
 * there (escalation and backfill together).
 */
void refresh_backfill(BackfillState& state, const DoseTally& tally, int c,
                      const BackfillRules& rules);

struct Assignment {
    enum class Kind { EscalationCohort, Backfill, NotEnrolled };
    Kind kind = Kind::NotEnrolled;
    int dose = -1;

    bool enrolled() const { return kind != Kind::NotEnrolled; }
    friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Escalation cohort first, then the highest open backfill dose.
Assignment assign_patient(const BackfillState& state, bool cohort_has_slot, int c);

}  // namespace bard
