#include "bard/minimization.hpp"

#include <cstdlib>

#include "bard/error.hpp"

namespace bard {

CovariateSpec CovariateSpec::binary(int k) {
    CovariateSpec spec;
    for (int i = 0; i < k; ++i) spec.factors.push_back({"X" + std::to_string(i + 1), 2, i});
    return spec;
}

void CovariateSpec::validate() const {
    for (const auto& f : factors) {
        if (f.levels < 2) throw ParameterError("factor " + f.name + " needs at least 2 levels");
        if (f.source < 0) throw ParameterError("factor " + f.name + " has a negative source");
    }
}

ArmCounts::ArmCounts(const CovariateSpec& spec) {
    for (auto& arm : counts) {
        arm.resize(spec.factors.size());
        for (std::size_t k = 0; k < spec.factors.size(); ++k)
            arm[k].assign(static_cast<std::size_t>(spec.factors[k].levels), 0);
    }
}

namespace {

int level_of(const CovariateSpec& spec, std::size_t k, std::span<const int> covariates) {
    const auto& f = spec.factors[k];
    if (f.source >= static_cast<int>(covariates.size()))
        throw DataError("patient is missing covariate " + f.name);
    const int v = covariates[static_cast<std::size_t>(f.source)];
    if (v < 0 || v >= f.levels) throw DataError("covariate " + f.name + " level out of range");
    return v;
}

}  // namespace

void ArmCounts::add(const CovariateSpec& spec, Arm arm, std::span<const int> covariates) {
    for (std::size_t k = 0; k < spec.factors.size(); ++k)
        ++counts[idx(arm)][k][static_cast<std::size_t>(level_of(spec, k, covariates))];
    ++totals[idx(arm)];
}

ArmCounts seed_from_stage1(const CovariateSpec& spec,
                           std::span<const Stage1Patient> patients) {
    ArmCounts counts(spec);
    for (const auto& p : patients)
        if (p.eligible) counts.add(spec, p.arm, p.covariates);
    return counts;
}

int imbalance_omega(const ArmCounts& counts, const CovariateSpec& spec,
                    std::span<const int> covariates, Arm arm) {
    int omega = 0;
    for (std::size_t k = 0; k < spec.factors.size(); ++k) {
        const int v = level_of(spec, k, covariates);
        int low = counts.at(Arm::Low, k, v);
        int high = counts.at(Arm::High, k, v);
        (arm == Arm::Low ? low : high) += 1;
        omega += std::abs(low - high);
    }
    return omega;
}

Arm randomize(ArmCounts& counts, const CovariateSpec& spec,
              std::span<const int> covariates, double r, double u) {
    if (!(r > 0.5 && r <= 1.0)) throw ParameterError("minimization probability must lie in (0.5, 1]");
    const int w_low = imbalance_omega(counts, spec, covariates, Arm::Low);
    const int w_high = imbalance_omega(counts, spec, covariates, Arm::High);
    Arm chosen;
    if (w_low == w_high) {
        chosen = u < 0.5 ? Arm::Low : Arm::High;
    } else {
        const Arm best = w_low < w_high ? Arm::Low : Arm::High;
        chosen = u < r ? best : other(best);
    }
    counts.add(spec, chosen, covariates);
    return chosen;
}

Arm randomize(ArmCounts& counts, const CovariateSpec& spec,
              std::span<const int> covariates, double r, Rng& rng) {
    return randomize(counts, spec, covariates, r, rng.uniform());
}

int stage2_quota(int n2, int n1_low, int n1_high) {
    if (n2 < 0) throw ParameterError("N2 must be nonnegative");
    const int rest = n2 - n1_low - n1_high;
    return rest > 0 ? rest : 0;
}

}  // namespace bard
