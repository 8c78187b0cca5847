#pragma once

#include <optional>
#include <string_view>
#include <vector>

namespace bard {

// Dose indices are zero-based throughout the library; presentation layers
// (JSON, CLI, reports) use one-based dose levels.

enum class Decision { Escalate, Stay, DeEscalate, TerminateAllToxic };

std::string_view to_string(Decision d);

struct Boundaries {
    double lambda_e;
    double lambda_d;
};

/// BOIN escalation/de-escalation boundaries for target rate phi, using
/// phi1 = 0.6 phi and phi2 = 1.4 phi.
Boundaries boin_boundaries(double phi);

struct BoinParams {
    double phi = 0.25;
    double lambda_e = 0.0;
    double lambda_d = 0.0;
    double elimination_cutoff = 0.95;
    /// Elimination is only evaluated once a dose has this many assessments.
    int elimination_min_n = 3;
    int n_stop = 9;
    int max_n1 = 30;

    /// Parameters with boundaries derived from phi.
    static BoinParams for_target(double phi);
    void validate() const;
};

/// Per-dose counts. `n` and `y` count completed DLT assessments only.
struct DoseCounts {
    int y = 0;          ///< DLTs among completed assessments
    int n = 0;          ///< completed DLT assessments
    int enrolled = 0;   ///< all treated patients, pending included
    int backfilled = 0; ///< enrolled through backfill
    int responses = 0;  ///< observed efficacy responses
    bool eliminated = false;

    double rate() const { return static_cast<double>(y) / n; }
};

struct DoseTally {
    std::vector<DoseCounts> doses;

    DoseTally() = default;
    explicit DoseTally(int dose_count) : doses(static_cast<std::size_t>(dose_count)) {}

    int size() const { return static_cast<int>(doses.size()); }
    DoseCounts& operator[](int j) { return doses.at(static_cast<std::size_t>(j)); }
    const DoseCounts& operator[](int j) const { return doses.at(static_cast<std::size_t>(j)); }

    /// Lowest eliminated dose, if any.
    std::optional<int> lowest_eliminated() const;
};

/// Plain BOIN rule at the current dose, with boundary handling: escalation
/// from the top dose or into an eliminated dose, and de-escalation from the
/// lowest dose, both resolve to Stay. Throws DeferredError if n_c == 0.
Decision escalation_decision(const DoseTally& tally, int c, const BoinParams& params);

/// Whether y DLTs out of n eliminates a dose.
bool overdose_rule(int y, int n, const BoinParams& params);

/*
 * Marks every dose whose beta-binomial overdose probability exceeds the
 * cutoff as eliminated, together with all higher doses. Existing flags are
 * never cleared. Returns the lowest eliminated dose.
 */
std::optional<int> eliminate_overdoses(DoseTally& tally, const BoinParams& params);

/// Smallest y that eliminates at each n = 0..max_n (-1 when none does).
std::vector<int> elimination_table(const BoinParams& params, int max_n);

/// DLT rate pooled over doses b_star..j. Throws DeferredError on an empty pool.
double pooled_rate(const DoseTally& tally, int b_star, int j);

struct ReconciledDecision {
    Decision decision = Decision::Stay;
    /// Dose for the next cohort. -1 means every administered dose from the
    /// lowest dose upward is suspect; the caller decides how to proceed.
    int target = 0;
    /// Lowest backfilled dose in conflict with the current dose, if any.
    std::optional<int> conflict_dose;
    /// Rate the decision was based on (p-hat or pooled q-hat at c).
    double rate = 0.0;
};

/*
 * Escalation decision at c with backfill conflicts resolved. A backfilled
 * dose b < c conflicts with c when p-hat_b calls for stay while p-hat_c calls
 * for escalation, or p-hat_b calls for de-escalation whatever p-hat_c says.
 * With b* the lowest such dose the decision uses the rate pooled from b*:
 * escalate if q_c <= lambda_e; if q_c > lambda_d move to the highest j in
 * [b*, c-1] with q_j <= lambda_d, else to b* - 1; otherwise stay. Without a
 * conflict this is escalation_decision.
 */
ReconciledDecision reconciled_decision(const DoseTally& tally, int c,
                                       const BoinParams& params);

/// Isotonic MTD: PAVA over non-eliminated doses with n > 0, closest fit to
/// phi. Fits are nudged by 1e-10 per position before comparing, so exact
/// ties go to the lower dose while a pooled block below phi resolves to its
/// highest dose.
std::optional<int> select_mtd_boin(const DoseTally& tally, const BoinParams& params);

}  // namespace bard
