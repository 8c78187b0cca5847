#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bard/backfill.hpp"
#include "bard/blrm.hpp"
#include "bard/boin.hpp"
#include "bard/minimization.hpp"
#include "bard/obd.hpp"

namespace bard {

/// How stage-2 patients are allocated and whether stage-1 data are reused.
enum class Stage2Mode {
    Conditional,     ///< minimization seeded with stage-1 patients (BARD)
    SimpleRandom,    ///< N2 fresh patients, 1:1 permuted blocks of two
    FullMinimization ///< N2 fresh patients, minimization from empty counts
};

struct DesignConfig {
    std::string name = "bard-boin";
    EngineKind engine = EngineKind::Boin;
    int dose_count = 5;
    int cohort_size = 3;
    bool backfill = true;
    int n_cap = 12;
    /// Queue arrivals that find no slot instead of turning them away.
    bool suspend_accrual = false;

    BoinParams boin = BoinParams::for_target(0.25);
    BlrmParams blrm{};

    Stage2Mode stage2 = Stage2Mode::Conditional;
    int n2 = 40;
    /// Target size when only one dose goes forward to stage 2.
    int n2_single = 20;
    double r = 0.95;
    /// Optional per-arm cap of ceil(N2/2) + slack; negative disables it.
    int arm_cap_slack = -1;
    CovariateSpec balance = CovariateSpec::binary(2);

    GatingParams gating{};
    MarginRule margin_rule = MarginRule::Noninferiority;
    UtilityTable utility{};
    std::array<double, 4> dirichlet_prior{1.0, 1.0, 1.0, 1.0};

    int max_n1() const { return engine == EngineKind::Boin ? boin.max_n1 : blrm.max_n1; }
    void validate() const;

    static DesignConfig bard_boin(int dose_count = 5);
    static DesignConfig bard_blrm();
};

enum class ComparatorMode { Bard, SimpleRandomization, PocockSimonFull };

/// Design variant used as a comparator: SR skips backfill and randomizes N2
/// fresh patients 1:1; PocockSimonFull randomizes N2 fresh patients by
/// unconditioned minimization.
DesignConfig comparator_design(DesignConfig design, ComparatorMode mode);

/// A design plus the read-only tables derived from it. Shared across
/// replications and trials.
struct DesignContext {
    DesignConfig design;
    std::shared_ptr<const BlrmModel> blrm_model;
    /// Smallest DLT count eliminating a dose, indexed by n (-1: none).
    std::vector<int> elimination_min_y;

    explicit DesignContext(DesignConfig cfg);
    bool eliminates(int y, int n) const;

    /// BLRM interval probabilities for completed data, memoized: trials keep
    /// revisiting the same early data states, and the posterior is a pure
    /// function of (y, n) per dose.
    std::vector<IntervalProbs> blrm_probs(std::span<const BinomialCount> data) const;

   private:
    struct ProbCache;
    std::shared_ptr<ProbCache> cache_;
};

}  // namespace bard
