#include "bard/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

#include "bard/error.hpp"

namespace bard {

double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("logit requires 0 < p < 1");
    return std::log(p / (1.0 - p));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

BetaPosterior BetaPosterior::from_counts(int y, int n) {
    if (y < 0 || n < y) throw ParameterError("beta posterior requires 0 <= y <= n");
    return {y + 1.0, static_cast<double>(n - y) + 1.0};
}

namespace {

void check_beta(const BetaPosterior& post, double cutoff) {
    if (!(post.a > 0.0) || !(post.b > 0.0) || !std::isfinite(post.a) ||
        !std::isfinite(post.b))
        throw ParameterError("beta shape parameters must be positive");
    if (!(cutoff >= 0.0 && cutoff <= 1.0))
        throw ParameterError("beta cutoff must lie in [0, 1]");
}

}  // namespace

double beta_tail(const BetaPosterior& post, double cutoff) {
    check_beta(post, cutoff);
    if (cutoff <= 0.0) return 1.0;
    if (cutoff >= 1.0) return 0.0;
    return boost::math::ibetac(post.a, post.b, cutoff);
}

double beta_cdf(const BetaPosterior& post, double cutoff) {
    check_beta(post, cutoff);
    if (cutoff <= 0.0) return 0.0;
    if (cutoff >= 1.0) return 1.0;
    return boost::math::ibeta(post.a, post.b, cutoff);
}

std::vector<double> pava(std::span<const double> rates,
                         std::span<const double> weights) {
    if (rates.empty()) throw ParameterError("pava: empty input");
    if (rates.size() != weights.size())
        throw ParameterError("pava: rates and weights differ in length");
    for (double w : weights)
        if (!(w >= 0.0)) throw ParameterError("pava: negative weight");

    const std::size_t n = rates.size();
    const bool all_zero =
        std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; });

    struct Block {
        double value;
        double weight;
        std::size_t first;
        std::size_t last;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = all_zero ? 1.0 : weights[i];
        if (w == 0.0) continue;
        blocks.push_back({rates[i], w, i, i});
        while (blocks.size() > 1 &&
               blocks[blocks.size() - 2].value > blocks.back().value) {
            Block top = blocks.back();
            blocks.pop_back();
            Block& prev = blocks.back();
            const double total = prev.weight + top.weight;
            prev.value = (prev.value * prev.weight + top.value * top.weight) / total;
            prev.weight = total;
            prev.last = top.last;
        }
    }

    std::vector<double> fit(n);
    // Zero-weight entries take the value of the nearest block at or before
    // them; leading ones take the first block's value.
    std::size_t b = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (b + 1 < blocks.size() && blocks[b + 1].first <= i) ++b;
        fit[i] = blocks[b].value;
    }
    return fit;
}

BlrmModel::BlrmModel(BlrmPrior prior, std::vector<double> dosages, double ref_dosage,
                     std::size_t nodes_per_axis, double span_sd, DoseScale scale)
    : prior_(prior),
      dosages_(std::move(dosages)),
      ref_(ref_dosage),
      nodes_(nodes_per_axis),
      scale_(scale) {
    if (!(prior_.sigma_alpha > 0.0) || !(prior_.sigma_beta > 0.0))
        throw ParameterError("BLRM prior standard deviations must be positive");
    if (dosages_.empty()) throw ParameterError("BLRM needs at least one dose");
    if (!(ref_ > 0.0)) throw ParameterError("reference dosage must be positive");
    for (std::size_t j = 0; j < dosages_.size(); ++j) {
        if (!(dosages_[j] > 0.0)) throw ParameterError("dosages must be positive");
        if (j > 0 && !(dosages_[j] > dosages_[j - 1]))
            throw ParameterError("dosages must be strictly increasing");
    }
    if (nodes_ < 3) throw ParameterError("BLRM grid needs at least 3 nodes per axis");

    const std::size_t J = dosages_.size();
    auto axis = [&](double mu, double sd) {
        std::vector<double> v(nodes_);
        const double lo = mu - span_sd * sd;
        const double h = 2.0 * span_sd * sd / static_cast<double>(nodes_ - 1);
        for (std::size_t i = 0; i < nodes_; ++i) v[i] = lo + h * static_cast<double>(i);
        return v;
    };
    la_ = axis(prior_.mu_alpha, prior_.sigma_alpha);
    lb_ = axis(prior_.mu_beta, prior_.sigma_beta);
    ha_ = la_[1] - la_[0];

    x_.resize(J);
    for (std::size_t j = 0; j < J; ++j)
        x_[j] = scale_ == DoseScale::LogDose ? std::log(dosages_[j] / ref_)
                                             : dosages_[j] / ref_;

    const std::size_t N = node_count();
    log_prior_.resize(N);
    log_p_.resize(N * J);
    log_q_.resize(N * J);
    for (std::size_t i = 0; i < nodes_; ++i) {
        const double za = (la_[i] - prior_.mu_alpha) / prior_.sigma_alpha;
        for (std::size_t k = 0; k < nodes_; ++k) {
            const double zb = (lb_[k] - prior_.mu_beta) / prior_.sigma_beta;
            const std::size_t node = i * nodes_ + k;
            log_prior_[node] = -0.5 * (za * za + zb * zb);
            const double beta = std::exp(lb_[k]);
            for (std::size_t j = 0; j < J; ++j) {
                const double eta = la_[i] + beta * x_[j];
                // log p = -log(1 + e^-eta), log(1-p) = -log(1 + e^eta)
                const double lp = eta >= 0 ? -std::log1p(std::exp(-eta))
                                           : eta - std::log1p(std::exp(eta));
                log_p_[node * J + j] = lp;
                log_q_[node * J + j] = lp - eta;
            }
        }
    }
}

std::vector<double> BlrmModel::posterior_weights(
    std::span<const BinomialCount> data) const {
    const std::size_t J = dose_count();
    if (data.size() != J) throw ParameterError("BLRM data length must equal dose count");
    for (const auto& d : data)
        if (d.y < 0 || d.n < d.y) throw ParameterError("BLRM data requires n >= y >= 0");

    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < J; ++j)
        if (data[j].n > 0) active.push_back(j);

    const std::size_t N = node_count();
    std::vector<double> w(N);
    double mx = -INFINITY;
    for (std::size_t node = 0; node < N; ++node) {
        double lw = log_prior_[node];
        const double* lp = &log_p_[node * J];
        const double* lq = &log_q_[node * J];
        for (std::size_t j : active)
            lw += data[j].y * lp[j] + (data[j].n - data[j].y) * lq[j];
        w[node] = lw;
        mx = std::max(mx, lw);
    }
    double total = 0.0;
    for (double& v : w) {
        v = std::exp(v - mx);
        total += v;
    }
    for (double& v : w) v /= total;
    return w;
}

BlrmPosteriorGrid blrm_posterior(std::shared_ptr<const BlrmModel> model,
                                 std::span<const BinomialCount> data) {
    auto w = model->posterior_weights(data);
    return {std::move(model), std::move(w)};
}

BlrmPosteriorGrid blrm_posterior(const BlrmPrior& prior,
                                 std::span<const BinomialCount> data,
                                 std::vector<double> dosages, double ref_dosage,
                                 std::size_t nodes_per_axis, DoseScale scale) {
    auto model = std::make_shared<const BlrmModel>(prior, std::move(dosages), ref_dosage,
                                                   nodes_per_axis, 6.0, scale);
    return blrm_posterior(std::move(model), data);
}

IntervalProbs interval_probs(const BlrmPosteriorGrid& grid, std::size_t dose,
                             double gamma1, double gamma2) {
    const BlrmModel& m = *grid.model;
    if (dose >= m.dose_count()) throw ParameterError("dose index out of range");
    if (!(gamma1 > 0.0 && gamma1 < gamma2 && gamma2 < 1.0))
        throw ParameterError("interval cutoffs must satisfy 0 < gamma1 < gamma2 < 1");

    const double t1 = logit(gamma1);
    const double t2 = logit(gamma2);
    const double h = m.alpha_step();
    const double x = m.dose_covariate(dose);
    const std::size_t n = m.nodes_per_axis();

    // Mass of the cell around log(alpha) = a lying above threshold t.
    auto above = [h](double a, double t) {
        return std::clamp((a + 0.5 * h - t) / h, 0.0, 1.0);
    };

    std::vector<double> shift(n);
    for (std::size_t k = 0; k < n; ++k) shift[k] = std::exp(m.log_beta(k)) * x;

    double above1 = 0.0;
    double above2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = m.log_alpha(i);
        const double* w = &grid.weights[i * n];
        for (std::size_t k = 0; k < n; ++k) {
            if (w[k] == 0.0) continue;
            above1 += w[k] * above(a, t1 - shift[k]);
            above2 += w[k] * above(a, t2 - shift[k]);
        }
    }
    IntervalProbs out;
    out.over = std::clamp(above2, 0.0, 1.0);
    out.target = std::clamp(above1 - above2, 0.0, 1.0);
    out.under = std::clamp(1.0 - above1, 0.0, 1.0);
    return out;
}

DirichletPosterior DirichletPosterior::update(const std::array<double, 4>& prior,
                                              const std::array<int, 4>& counts) {
    DirichletPosterior post;
    for (std::size_t k = 0; k < 4; ++k) {
        if (!(prior[k] > 0.0)) throw ParameterError("Dirichlet prior must be positive");
        if (counts[k] < 0) throw ParameterError("outcome counts must be nonnegative");
        post.alpha[k] = prior[k] + counts[k];
    }
    return post;
}

double dirichlet_mean_utility(const DirichletPosterior& post,
                              const std::array<double, 4>& utilities) {
    double total = 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        total += post.alpha[k];
        acc += utilities[k] * post.alpha[k];
    }
    return acc / total;
}

}  // namespace bard
