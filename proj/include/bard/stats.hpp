#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace bard {

double logistic(double x);
double logit(double p);
double normal_cdf(double z);

/// Beta(a, b) posterior of a binomial rate.
struct BetaPosterior {
    double a = 1.0;
    double b = 1.0;

    /// Posterior under a uniform prior after y events in n trials.
    static BetaPosterior from_counts(int y, int n);
};

/// Pr(p > cutoff) for p ~ Beta(a, b).
double beta_tail(const BetaPosterior& post, double cutoff);

/// Pr(p < cutoff) for p ~ Beta(a, b).
double beta_cdf(const BetaPosterior& post, double cutoff);

/*
 * Weighted isotonic (nondecreasing) least-squares fit by pool-adjacent-
 * violators. Pooled blocks carry summed weights. Entries with zero weight
 * take the value of the nearest block before them; leading zero-weight
 * entries take the first block's value.
 */
std::vector<double> pava(std::span<const double> rates,
                         std::span<const double> weights);

/// Observed DLT count y out of n completed assessments.
struct BinomialCount {
    int y = 0;
    int n = 0;
};

/// Independent normal priors on log(alpha) and log(beta).
struct BlrmPrior {
    double mu_alpha = -1.1;
    double mu_beta = 0.0;
    double sigma_alpha = 2.0;
    double sigma_beta = 1.0;
};

enum class DoseScale {
    LogDose,  ///< logit p = log(alpha) + beta * log(d / d*)
    Linear,   ///< logit p = log(alpha) + beta * (d / d*)
};

/*
 * Tensor-product quadrature discretization of the two-parameter logistic
 * dose-toxicity model. The per-node, per-dose log-likelihood terms are
 * precomputed so a posterior update is a single pass over the grid.
 *
 * Nodes are equally spaced over mu +/- span*sigma on each axis, endpoints
 * included. Interval probabilities treat each node as a cell one grid step
 * wide in log(alpha) and count the fraction of the cell above the cutoff,
 * which keeps them smooth in the data.
 */
class BlrmModel {
   public:
    BlrmModel(BlrmPrior prior, std::vector<double> dosages, double ref_dosage,
              std::size_t nodes_per_axis = 201, double span_sd = 6.0,
              DoseScale scale = DoseScale::LogDose);

    std::size_t dose_count() const { return dosages_.size(); }
    std::size_t nodes_per_axis() const { return nodes_; }
    std::size_t node_count() const { return nodes_ * nodes_; }
    const BlrmPrior& prior() const { return prior_; }
    const std::vector<double>& dosages() const { return dosages_; }
    double ref_dosage() const { return ref_; }
    DoseScale scale() const { return scale_; }

    double log_alpha(std::size_t i) const { return la_[i]; }
    double log_beta(std::size_t k) const { return lb_[k]; }
    double alpha_step() const { return ha_; }
    /// Standardized dose covariate x_j entering the linear predictor.
    double dose_covariate(std::size_t j) const { return x_[j]; }

    /// Normalized posterior weights (row-major: alpha index outer).
    std::vector<double> posterior_weights(std::span<const BinomialCount> data) const;

   private:
    BlrmPrior prior_;
    std::vector<double> dosages_;
    double ref_;
    std::size_t nodes_;
    DoseScale scale_;
    double ha_ = 0.0;
    std::vector<double> la_, lb_, x_;
    std::vector<double> log_prior_;
    std::vector<double> log_p_, log_q_;  // [node * J + j]
};

/// Posterior over the BLRM quadrature grid.
struct BlrmPosteriorGrid {
    std::shared_ptr<const BlrmModel> model;
    std::vector<double> weights;

    std::size_t dose_count() const { return model->dose_count(); }
};

BlrmPosteriorGrid blrm_posterior(std::shared_ptr<const BlrmModel> model,
                                 std::span<const BinomialCount> data);

BlrmPosteriorGrid blrm_posterior(const BlrmPrior& prior,
                                 std::span<const BinomialCount> data,
                                 std::vector<double> dosages, double ref_dosage,
                                 std::size_t nodes_per_axis = 201,
                                 DoseScale scale = DoseScale::LogDose);

struct IntervalProbs {
    double under = 0.0;   ///< Pr(p <= gamma1)
    double target = 0.0;  ///< PTT, Pr(gamma1 < p < gamma2)
    double over = 0.0;    ///< POD, Pr(p >= gamma2)
};

IntervalProbs interval_probs(const BlrmPosteriorGrid& grid, std::size_t dose,
                             double gamma1, double gamma2);

/// Dirichlet posterior over the four toxicity x efficacy outcomes.
struct DirichletPosterior {
    std::array<double, 4> alpha{1.0, 1.0, 1.0, 1.0};

    static DirichletPosterior update(const std::array<double, 4>& prior,
                                     const std::array<int, 4>& counts);
};

/// Posterior mean utility: sum_k u_k * alpha_k / sum(alpha).
double dirichlet_mean_utility(const DirichletPosterior& post,
                              const std::array<double, 4>& utilities);

}  // namespace bard
