#include "bard/obd.hpp"

#include <cmath>

#include "bard/error.hpp"
#include "bard/stats.hpp"

namespace bard {

void UtilityTable::validate() const {
    for (double v : u)
        if (!std::isfinite(v)) throw ParameterError("utilities must be finite");
    if (u[0] > u[1] || u[2] > u[3])
        throw ParameterError("utility table must not penalize the absence of toxicity");
}

void GatingParams::validate() const {
    for (double v : {phi_t, phi_e, c_t, c_e, delta})
        if (!(v > 0.0 && v < 1.0)) throw ParameterError("gating parameters must lie in (0, 1)");
}

void ArmOutcomes::add(bool dlt_event, bool response) {
    ++n;
    dlt += dlt_event ? 1 : 0;
    responses += response ? 1 : 0;
    ++joint[outcome_index(dlt_event, response)];
}

Admissibility admissible(int dlt, int n_tox, int responses, int n_eff,
                         const GatingParams& gating) {
    Admissibility a;
    a.tox_tail = beta_tail(BetaPosterior::from_counts(dlt, n_tox), gating.phi_t);
    a.eff_tail = beta_cdf(BetaPosterior::from_counts(responses, n_eff), gating.phi_e);
    a.safe = a.tox_tail <= gating.c_t;
    a.effective = a.eff_tail <= gating.c_e;
    return a;
}

std::array<Admissibility, 2> admissible_pair(const ArmOutcomes& low,
                                             const ArmOutcomes& high,
                                             const GatingParams& gating) {
    const bool inverted =
        low.n > 0 && high.n > 0 && low.dlt_rate() > high.dlt_rate();
    if (!inverted)
        return {admissible(low.dlt, low.n, low.responses, low.n, gating),
                admissible(high.dlt, high.n, high.responses, high.n, gating)};
    const int dlt = low.dlt + high.dlt;
    const int n = low.n + high.n;
    return {admissible(dlt, n, low.responses, low.n, gating),
            admissible(dlt, n, high.responses, high.n, gating)};
}

std::optional<Arm> select_obd_margin(double pe_low, double pe_high, double delta,
                                     const std::array<Admissibility, 2>& adm,
                                     MarginRule rule) {
    const bool low_ok = adm[idx(Arm::Low)].ok();
    const bool high_ok = adm[idx(Arm::High)].ok();
    if (low_ok && high_ok) {
        const double margin = rule == MarginRule::Noninferiority ? -delta : delta;
        return pe_low - pe_high >= margin ? Arm::Low : Arm::High;
    }
    if (low_ok) return Arm::Low;
    if (high_ok) return Arm::High;
    return std::nullopt;
}

UtilitySelection select_obd_utility(const std::array<int, 4>& low,
                                    const std::array<int, 4>& high,
                                    const UtilityTable& table,
                                    const std::array<double, 4>& prior,
                                    const std::array<Admissibility, 2>& adm) {
    UtilitySelection out;
    out.utility[idx(Arm::Low)] =
        dirichlet_mean_utility(DirichletPosterior::update(prior, low), table.u);
    out.utility[idx(Arm::High)] =
        dirichlet_mean_utility(DirichletPosterior::update(prior, high), table.u);
    const bool low_ok = adm[idx(Arm::Low)].ok();
    const bool high_ok = adm[idx(Arm::High)].ok();
    if (low_ok && high_ok)
        out.arm = out.utility[idx(Arm::High)] > out.utility[idx(Arm::Low)] ? Arm::High
                                                                           : Arm::Low;
    else if (low_ok)
        out.arm = Arm::Low;
    else if (high_ok)
        out.arm = Arm::High;
    return out;
}

double true_utility(double p_tox, double p_eff, const UtilityTable& table) {
    const double pi[4] = {p_tox * (1 - p_eff), (1 - p_tox) * (1 - p_eff), p_tox * p_eff,
                          (1 - p_tox) * p_eff};
    double u = 0.0;
    for (std::size_t k = 0; k < 4; ++k) u += table.u[k] * pi[k];
    return u;
}

}  // namespace bard
