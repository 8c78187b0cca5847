#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bard/design.hpp"
#include "bard/scenario.hpp"
#include "bard/stage1.hpp"

namespace bard {

struct TimingModel {
    double accrual_rate = 3.0;     ///< patients per month
    double dlt_window = 1.0;       ///< months
    double response_window = 1.0;  ///< months
    /// Poisson arrivals; otherwise arrivals are evenly spaced at 1/rate.
    bool poisson = true;

    void validate() const;
};

struct PatientRecord {
    int id = 0;
    int stage = 1;
    int dose = 0;
    Assignment::Kind route = Assignment::Kind::NotEnrolled;
    double arrival = 0.0;
    double enrolled_at = 0.0;
    double assessed_at = 0.0;
    std::vector<int> covariates;
    bool dlt = false;
    bool response = false;
};

/// Per-replication metrics; everything the operating characteristics need.
struct TrialSummary {
    std::optional<int> mtd;
    StopReason stop = StopReason::None;
    /// Stage-2 doses: {low, high}, a single dose, or empty.
    std::vector<int> stage2_doses;
    int n_total = 0;
    int n1 = 0;
    int n1_low = 0;
    int n1_high = 0;
    int n2_new = 0;
    double stage1_end = 0.0;
    double duration = 0.0;
    std::optional<int> obd_margin;
    std::optional<int> obd_utility;
    /// Final arm sizes (low, high) entering OBD selection.
    std::array<int, 2> arm_n{0, 0};
    /// |share with X_k = 1 in low - share in high| * 100, per covariate.
    std::vector<double> imbalance;

    bool two_arm() const { return stage2_doses.size() == 2; }
};

struct TrialResult {
    TrialSummary summary;
    std::vector<PatientRecord> patients;
    std::vector<CohortDecision> decisions;
};

/// Simulates one trial end to end.
TrialResult run_trial(const std::shared_ptr<const DesignContext>& ctx,
                      const ScenarioTruth& truth, const TimingModel& timing, Rng& rng);

struct OcReport {
    std::string design;
    std::string scenario;
    int reps = 0;
    std::uint64_t seed = 0;

    double mean_n = 0.0;
    double mean_duration = 0.0;
    std::vector<double> imbalance;   ///< percent, per covariate
    double allocation_imbalance = 0.0;
    double pcs1 = 0.0;
    double pcs2 = 0.0;

    double mean_n1 = 0.0;
    double pcs_stage2_doses = 0.0;
    double mean_n1_low = 0.0;
    double mean_n1_high = 0.0;
    double stage1_allocation_imbalance = 0.0;

    double pct_no_mtd = 0.0;
    double pct_single_arm = 0.0;
    std::vector<double> mtd_selection;  ///< percent per dose
};

/// Runs `reps` trials; replication i draws from stream_seed(seed, i), so the
/// result does not depend on `parallelism`.
std::vector<TrialSummary> simulate(const std::shared_ptr<const DesignContext>& ctx,
                                   const ScenarioTruth& truth, const TimingModel& timing,
                                   int reps, std::uint64_t seed, int parallelism = 1);

OcReport aggregate(const std::vector<TrialSummary>& runs, const DesignConfig& design,
                   const ScenarioTruth& truth, std::uint64_t seed);

OcReport replicate(const std::shared_ptr<const DesignContext>& ctx,
                   const ScenarioTruth& truth, const TimingModel& timing, int reps,
                   std::uint64_t seed, int parallelism = 1);

}  // namespace bard
