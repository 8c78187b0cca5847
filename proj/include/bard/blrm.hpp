#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "bard/boin.hpp"
#include "bard/stats.hpp"

namespace bard {

struct BlrmParams {
    double gamma1 = 0.16;
    double gamma2 = 0.33;
    double eta = 0.30;
    std::vector<double> dosages{10, 20, 50, 100, 200};
    double ref_dosage = 50;
    BlrmPrior prior{};
    int max_n1 = 30;
    int min_mtd_n = 6;
    int grid_nodes = 201;
    DoseScale scale = DoseScale::LogDose;

    void validate() const;
    std::shared_ptr<const BlrmModel> make_model() const;
};

struct BlrmAssessment {
    std::vector<IntervalProbs> probs;  ///< per dose
    Decision decision = Decision::Stay;
    /// Dose with the highest PTT among doses with POD < eta.
    std::optional<int> best_admissible;
};

/// Completed (y, n) per dose, as fed to the posterior.
std::vector<BinomialCount> completed_counts(const DoseTally& tally);

std::vector<IntervalProbs> blrm_interval_probs(const BlrmPosteriorGrid& post,
                                               const BlrmParams& params);

/*
 * PTT/POD-driven decision at current dose c. Movement is one level at a
 * time towards the best admissible dose; TerminateAllToxic when every dose
 * has POD >= eta.
 */
BlrmAssessment blrm_decision(const DoseTally& tally, int c, const BlrmParams& params,
                             const std::shared_ptr<const BlrmModel>& model);

/// Same decision rule applied to precomputed interval probabilities.
BlrmAssessment blrm_decision_from(std::vector<IntervalProbs> probs, int c,
                                  const BlrmParams& params);

/// Highest-PTT dose among those with n_enrolled >= min_mtd_n and POD < eta.
std::optional<int> select_mtd_blrm(const DoseTally& tally, const BlrmParams& params,
                                   const std::shared_ptr<const BlrmModel>& model);

std::optional<int> select_mtd_blrm_from(const DoseTally& tally,
                                        std::span<const IntervalProbs> probs,
                                        const BlrmParams& params);

/// POD at `dose` for a fixed data set; used to demonstrate model rigidity.
double rigidity_probe(std::span<const BinomialCount> data, const BlrmParams& params,
                      int dose = 2);

}  // namespace bard
