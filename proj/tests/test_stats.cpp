#include <doctest.h>

#include <cmath>

#include "bard/blrm.hpp"
#include "bard/stats.hpp"
#include "properties.hpp"

using namespace bard;

namespace {

double binom_cdf(int y, int n, double p) {
    double s = 0.0;
    for (int k = 0; k <= y; ++k) {
        const double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        s += std::exp(lc + k * std::log(p) + (n - k) * std::log1p(-p));
    }
    return s;
}

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("logit and logistic are inverse") {
    for (double p : {0.01, 0.16, 0.33, 0.5, 0.9}) CHECK(logistic(logit(p)) == doctest::Approx(p));
    CHECK_THROWS(logit(0.0));
}

TEST_CASE("beta tail closed forms") {
    CHECK(beta_tail(BetaPosterior::from_counts(0, 0), 0.3) == doctest::Approx(0.7));
    // Beta(3,1): 1 - c^3
    CHECK(beta_tail(BetaPosterior::from_counts(2, 2), 0.5) == doctest::Approx(0.875));
    // Beta(1,4): (1-c)^4
    CHECK(beta_tail(BetaPosterior::from_counts(0, 3), 0.25) == doctest::Approx(0.31640625));
    // Beta(2,2): 3c^2 - 2c^3
    CHECK(beta_cdf(BetaPosterior::from_counts(1, 2), 0.3) == doctest::Approx(0.216));
    CHECK(beta_tail(BetaPosterior{2.0, 5.0}, 0.0) == doctest::Approx(1.0));
    CHECK(beta_tail(BetaPosterior{2.0, 5.0}, 1.0) == doctest::Approx(0.0));
    CHECK_THROWS(beta_tail(BetaPosterior::from_counts(4, 3), 0.3));
}

TEST_CASE("beta tail equals a binomial lower tail") {
    // Pr(Beta(y+1, n-y+1) > c) = Pr(Binomial(n+1, c) <= y)
    for (int n = 0; n <= 30; ++n)
        for (int y = 0; y <= n; ++y)
            for (double c : {0.05, 0.25, 0.3, 0.6})
                CHECK(beta_tail(BetaPosterior::from_counts(y, n), c) ==
                      doctest::Approx(binom_cdf(y, n + 1, c)).epsilon(1e-9));
}

TEST_CASE("beta tail agrees with Monte-Carlo draws") {
    const auto r = props::beta_tail_monte_carlo(40000, 11);
    INFO(r.detail);
    CHECK(r.ok);
}

TEST_CASE("pava examples") {
    const std::vector<double> w1{1, 1};
    auto f = pava(std::vector<double>{0.5, 0.2}, w1);
    CHECK(f[0] == doctest::Approx(0.35));
    CHECK(f[1] == doctest::Approx(0.35));
    f = pava(std::vector<double>{0.3, 0.0, 0.1}, std::vector<double>{1, 0, 1});
    CHECK(f[0] == doctest::Approx(0.2));
    CHECK(f[1] == doctest::Approx(0.2));
    CHECK(f[2] == doctest::Approx(0.2));
    f = pava(std::vector<double>{0.0, 0.5}, std::vector<double>{0, 1});
    CHECK(f[0] == doctest::Approx(0.5));
    // weights shift the pooled value
    f = pava(std::vector<double>{0.6, 0.0}, std::vector<double>{3, 1});
    CHECK(f[0] == doctest::Approx(0.45));
}

TEST_CASE("pava matches exhaustive isotonic search on all small instances") {
    const auto r = props::pava_equivalence(5);
    INFO(r.detail);
    CHECK(r.ok);
}

TEST_CASE("pava output is monotone and preserves the weighted mean") {
    Rng rng(5);
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 1 + rng() % 8;
        std::vector<double> r(n), w(n);
        double sw = 0, swr = 0;
        for (std::size_t i = 0; i < n; ++i) {
            r[i] = rng.uniform();
            w[i] = 1.0 + static_cast<double>(rng() % 5);
            sw += w[i];
            swr += w[i] * r[i];
        }
        const auto f = pava(r, w);
        double swf = 0;
        for (std::size_t i = 0; i < n; ++i) {
            swf += w[i] * f[i];
            if (i) CHECK(f[i] >= f[i - 1] - 1e-12);
        }
        CHECK(swf / sw == doctest::Approx(swr / sw));
    }
}

TEST_CASE("BLRM prior interval probabilities at the reference dose") {
    const BlrmParams p;
    std::vector<BinomialCount> none(5);
    const auto post = blrm_posterior(p.make_model(), none);
    // logit p = log(alpha) ~ N(-1.1, 2^2) at d = d*
    const double over = 1.0 - phi((logit(0.33) + 1.1) / 2.0);
    const double target = phi((logit(0.33) + 1.1) / 2.0) - phi((logit(0.16) + 1.1) / 2.0);
    const auto ip = interval_probs(post, 2, p.gamma1, p.gamma2);
    CHECK(over == doctest::Approx(0.4223).epsilon(1e-3));
    CHECK(target == doctest::Approx(0.1876).epsilon(1e-3));
    CHECK(ip.over == doctest::Approx(over).epsilon(0.005));
    CHECK(ip.target == doctest::Approx(target).epsilon(0.005));
    CHECK(ip.under + ip.target + ip.over == doctest::Approx(1.0));
}

TEST_CASE("BLRM posterior is stable under grid refinement") {
    BlrmParams p;
    const std::vector<BinomialCount> data{{0, 3}, {1, 6}, {2, 3}, {0, 0}, {0, 0}};
    const auto coarse = blrm_posterior(p.prior, data, p.dosages, p.ref_dosage, 201);
    const auto fine = blrm_posterior(p.prior, data, p.dosages, p.ref_dosage, 301);
    for (std::size_t j = 0; j < 5; ++j) {
        const auto a = interval_probs(coarse, j, p.gamma1, p.gamma2);
        const auto b = interval_probs(fine, j, p.gamma1, p.gamma2);
        CHECK(a.over == doctest::Approx(b.over).epsilon(0.005));
        CHECK(a.target == doctest::Approx(b.target).epsilon(0.005));
    }
}

TEST_CASE("dirichlet posterior mean utility") {
    const auto post = DirichletPosterior::update({1, 1, 1, 1}, {1, 2, 3, 4});
    CHECK(post.alpha[0] == 2.0);
    CHECK(post.alpha[3] == 5.0);
    CHECK(dirichlet_mean_utility(post, {0, 30, 50, 100}) == doctest::Approx(790.0 / 14.0));
}
