#include "bard/scenario.hpp"

#include <cmath>

#include "bard/error.hpp"
#include "bard/stats.hpp"

namespace bard {

void ScenarioTruth::validate() const {
    if (dlt_rates.empty()) throw ConfigError("scenario " + name + " has no doses");
    if (beta0.size() != dlt_rates.size())
        throw ConfigError("scenario " + name + ": beta0 length must equal dose count");
    if (cov_prevalence.size() != cov_betas.size())
        throw ConfigError("scenario " + name + ": prevalence and betas differ in length");
    for (double p : dlt_rates)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("scenario " + name + ": DLT rate outside [0,1]");
    for (double p : cov_prevalence)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("scenario " + name + ": prevalence outside [0,1]");
    if (true_obd < 0 || true_obd >= dose_count() || true_mtd < 0 || true_mtd >= dose_count())
        throw ConfigError("scenario " + name + ": true OBD/MTD out of range");
}

double efficacy_prob(const ScenarioTruth& truth, int dose, std::span<const int> covariates) {
    if (dose < 0 || dose >= truth.dose_count()) throw ParameterError("dose index out of range");
    if (covariates.size() != truth.cov_betas.size())
        throw ParameterError("expected " + std::to_string(truth.cov_betas.size()) + " covariates");
    double eta = truth.beta0[static_cast<std::size_t>(dose)];
    for (std::size_t k = 0; k < covariates.size(); ++k)
        eta += truth.cov_betas[k] * covariates[k];
    return logistic(eta);
}

double marginal_efficacy(const ScenarioTruth& truth, int dose) {
    const std::size_t K = truth.cov_betas.size();
    std::vector<int> v(K);
    double total = 0.0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << K); ++mask) {
        double weight = 1.0;
        for (std::size_t k = 0; k < K; ++k) {
            v[k] = (mask >> k) & 1U;
            weight *= v[k] ? truth.cov_prevalence[k] : 1.0 - truth.cov_prevalence[k];
        }
        if (weight > 0.0) total += weight * efficacy_prob(truth, dose, v);
    }
    return total;
}

std::vector<int> sample_covariates(const ScenarioTruth& truth, Rng& rng) {
    std::vector<int> v(truth.cov_prevalence.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = rng.bernoulli(truth.cov_prevalence[k]);
    return v;
}

Outcome sample_outcome(const ScenarioTruth& truth, int dose,
                       std::span<const int> covariates, Rng& rng) {
    Outcome o;
    o.dlt = rng.bernoulli(truth.dlt_rates.at(static_cast<std::size_t>(dose)));
    o.response = rng.bernoulli(efficacy_prob(truth, dose, covariates));
    return o;
}

SampledPatient sample_patient(const ScenarioTruth& truth, int dose, Rng& rng) {
    SampledPatient p;
    p.covariates = sample_covariates(truth, rng);
    p.outcome = sample_outcome(truth, dose, p.covariates, rng);
    return p;
}

namespace {

ScenarioTruth make(std::string name, std::vector<double> dlt, std::vector<double> b0,
                   int obd_level, int mtd_level) {
    ScenarioTruth t;
    t.name = std::move(name);
    t.dlt_rates = std::move(dlt);
    t.beta0 = std::move(b0);
    t.true_obd = obd_level - 1;
    t.true_mtd = mtd_level - 1;
    return t;
}

std::vector<ScenarioTruth> presets() {
    const std::vector<double> d1{0.12, 0.25, 0.42, 0.49, 0.55};
    const std::vector<double> d2{0.04, 0.12, 0.25, 0.43, 0.63};
    const std::vector<double> d3{0.02, 0.06, 0.10, 0.25, 0.40};
    const std::vector<double> d4{0.02, 0.05, 0.08, 0.11, 0.25};
    return {
        make("s1", d1, {-2.197, -1.099, -0.619, -0.201, 0.201}, 2, 2),
        make("s2", d2, {-2.442, -2.197, -1.099, -0.619, -0.201}, 3, 3),
        make("s3", d3, {-2.944, -2.442, -2.197, -1.099, -0.619}, 4, 4),
        make("s4", d4, {-3.892, -2.944, -2.442, -2.197, -1.099}, 5, 5),
        make("s5", d1, {-1.099, -1.099, -1.046, -1.046, -1.046}, 1, 2),
        make("s6", d2, {-2.197, -1.099, -1.099, -1.046, -1.046}, 2, 3),
        make("s7", d3, {-2.442, -2.197, -1.099, -1.099, -1.046}, 3, 4),
        make("s8", d4, {-2.944, -2.442, -2.197, -1.099, -1.099}, 4, 5),
        make("s3d1", {0.12, 0.25, 0.40}, {-2.197, -1.099, -0.619}, 2, 2),
        make("s3d2", {0.04, 0.12, 0.25}, {-2.442, -2.197, -1.099}, 3, 3),
        make("s3d3", {0.12, 0.25, 0.42}, {-1.099, -1.099, -1.046}, 1, 2),
        make("s3d4", {0.04, 0.12, 0.25}, {-2.197, -1.099, -1.099}, 2, 3),
    };
}

}  // namespace

std::optional<ScenarioTruth> scenario_preset(const std::string& name) {
    for (auto& t : presets())
        if (t.name == name) return t;
    return std::nullopt;
}

std::vector<std::string> scenario_names() {
    std::vector<std::string> names;
    for (const auto& t : presets()) names.push_back(t.name);
    return names;
}

}  // namespace bard
