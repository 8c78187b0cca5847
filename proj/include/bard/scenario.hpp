#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bard/rng.hpp"

namespace bard {

/// Simulation ground truth: per-dose DLT rates and a covariate-logistic
/// efficacy model logit p_E = beta0_j + sum_k beta_k X_k with binary X_k.
struct ScenarioTruth {
    std::string name;
    std::vector<double> dlt_rates;
    std::vector<double> beta0;
    std::vector<double> cov_betas{1.7, -1.5, 0.4};
    std::vector<double> cov_prevalence{0.5, 0.5, 0.5};
    int true_obd = 0;  ///< zero-based
    int true_mtd = 0;  ///< zero-based

    int dose_count() const { return static_cast<int>(dlt_rates.size()); }
    int covariate_count() const { return static_cast<int>(cov_betas.size()); }
    void validate() const;
};

double efficacy_prob(const ScenarioTruth& truth, int dose, std::span<const int> covariates);

/// Efficacy rate averaged over the covariate distribution (exact enumeration).
double marginal_efficacy(const ScenarioTruth& truth, int dose);

std::vector<int> sample_covariates(const ScenarioTruth& truth, Rng& rng);

struct Outcome {
    bool dlt = false;
    bool response = false;
};

/// DLT and response drawn independently given dose and covariates.
Outcome sample_outcome(const ScenarioTruth& truth, int dose,
                       std::span<const int> covariates, Rng& rng);

struct SampledPatient {
    std::vector<int> covariates;
    Outcome outcome;
};

SampledPatient sample_patient(const ScenarioTruth& truth, int dose, Rng& rng);

/// Built-in scenarios: s1..s8 (five doses) and s3d1..s3d4 (three doses).
std::optional<ScenarioTruth> scenario_preset(const std::string& name);
std::vector<std::string> scenario_names();

}  // namespace bard
