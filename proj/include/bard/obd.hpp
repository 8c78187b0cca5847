#pragma once

#include <array>
#include <optional>

#include "bard/minimization.hpp"

namespace bard {

/// Utilities of (tox, no eff), (no tox, no eff), (tox, eff), (no tox, eff).
struct UtilityTable {
    std::array<double, 4> u{0.0, 30.0, 50.0, 100.0};

    void validate() const;
};

/// Index into the four-outcome table.
constexpr std::size_t outcome_index(bool dlt, bool response) {
    return response ? (dlt ? 2 : 3) : (dlt ? 0 : 1);
}

struct GatingParams {
    double phi_t = 0.30;
    double phi_e = 0.20;
    double c_t = 0.90;
    double c_e = 0.95;
    double delta = 0.05;

    void validate() const;
};

enum class MarginRule {
    Noninferiority,  ///< low selected iff pE_low - pE_high >= -delta
    Literal,         ///< low selected iff pE_low - pE_high >= +delta
};

/// Toxicity, efficacy and joint outcome counts for one arm.
struct ArmOutcomes {
    int n = 0;
    int dlt = 0;
    int responses = 0;
    std::array<int, 4> joint{0, 0, 0, 0};

    void add(bool dlt_event, bool response);
    double response_rate() const { return n == 0 ? 0.0 : static_cast<double>(responses) / n; }
    double dlt_rate() const { return n == 0 ? 0.0 : static_cast<double>(dlt) / n; }
};

struct Admissibility {
    bool safe = false;
    bool effective = false;
    double tox_tail = 0.0;  ///< Pr(p_T > phi_T | data)
    double eff_tail = 0.0;  ///< Pr(p_E < phi_E | data)

    bool ok() const { return safe && effective; }
};

/// Safety and efficacy gates for one arm under uniform beta priors.
Admissibility admissible(int dlt, int n_tox, int responses, int n_eff,
                         const GatingParams& gating);

/*
 * Gates for both arms. When the low arm shows the higher observed DLT rate,
 * toxicity data of the two arms are pooled and both safety tails come from
 * the pooled posterior.
 */
std::array<Admissibility, 2> admissible_pair(const ArmOutcomes& low,
                                             const ArmOutcomes& high,
                                             const GatingParams& gating);

std::optional<Arm> select_obd_margin(double pe_low, double pe_high, double delta,
                                     const std::array<Admissibility, 2>& adm,
                                     MarginRule rule = MarginRule::Noninferiority);

struct UtilitySelection {
    std::optional<Arm> arm;
    std::array<double, 2> utility{0.0, 0.0};
};

UtilitySelection select_obd_utility(const std::array<int, 4>& low,
                                    const std::array<int, 4>& high,
                                    const UtilityTable& table,
                                    const std::array<double, 4>& prior,
                                    const std::array<Admissibility, 2>& adm);

/// Expected utility when toxicity and efficacy are independent.
double true_utility(double p_tox, double p_eff, const UtilityTable& table);

}  // namespace bard
