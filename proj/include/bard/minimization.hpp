#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "bard/rng.hpp"

namespace bard {

enum class Arm { Low = 0, High = 1 };

constexpr Arm other(Arm a) { return a == Arm::Low ? Arm::High : Arm::Low; }
constexpr std::size_t idx(Arm a) { return static_cast<std::size_t>(a); }

/// Categorical factors balanced by minimization.
struct CovariateSpec {
    struct Factor {
        std::string name;
        int levels = 2;
        /// Position of this factor in a patient's covariate vector.
        int source = 0;
    };
    std::vector<Factor> factors;

    /// Binary factors reading covariates 0..k-1.
    static CovariateSpec binary(int k);
    void validate() const;
};

struct ArmCounts {
    /// counts[arm][factor][level]
    std::array<std::vector<std::vector<int>>, 2> counts;
    std::array<int, 2> totals{0, 0};

    ArmCounts() = default;
    explicit ArmCounts(const CovariateSpec& spec);

    int at(Arm arm, std::size_t factor, int level) const {
        return counts[idx(arm)][factor][static_cast<std::size_t>(level)];
    }
    void add(const CovariateSpec& spec, Arm arm, std::span<const int> covariates);
};

struct Stage1Patient {
    Arm arm = Arm::Low;
    std::vector<int> covariates;
    bool eligible = true;
};

/// Counts of eligible stage-1 patients already treated at the two doses.
ArmCounts seed_from_stage1(const CovariateSpec& spec,
                           std::span<const Stage1Patient> patients);

/// Sum over factors of |n_low - n_high| at the patient's levels, after
/// hypothetically adding the patient to `arm`.
int imbalance_omega(const ArmCounts& counts, const CovariateSpec& spec,
                    std::span<const int> covariates, Arm arm);

/*
 * Conditional minimization. The arm with the smaller hypothetical imbalance
 * is chosen when u < r, the other arm otherwise; exact ties go to Low when
 * u < 0.5. The chosen arm is added to `counts`. `u` must be uniform on [0,1).
 */
Arm randomize(ArmCounts& counts, const CovariateSpec& spec,
              std::span<const int> covariates, double r, double u);

Arm randomize(ArmCounts& counts, const CovariateSpec& spec,
              std::span<const int> covariates, double r, Rng& rng);

/// New patients to randomize: max(0, N2 - n1_low - n1_high).
int stage2_quota(int n2, int n1_low, int n1_high);

}  // namespace bard
