#include <doctest.h>

#include <cmath>

#include "bard/backfill.hpp"
#include "bard/blrm.hpp"
#include "bard/boin.hpp"
#include "bard/design.hpp"
#include "bard/error.hpp"
#include "bard/stage1.hpp"

using namespace bard;

namespace {

DoseTally tally_of(std::initializer_list<std::pair<int, int>> yn, int backfilled_below = 0) {
    DoseTally t(static_cast<int>(yn.size()));
    int j = 0;
    for (auto [y, n] : yn) {
        t[j].y = y;
        t[j].n = n;
        t[j].enrolled = n;
        if (j < backfilled_below) t[j].backfilled = 1;
        ++j;
    }
    return t;
}

double binom_cdf(int y, int n, double p) {
    double s = 0.0;
    for (int k = 0; k <= y; ++k)
        s += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                      k * std::log(p) + (n - k) * std::log1p(-p));
    return s;
}

}  // namespace

TEST_CASE("BOIN boundaries for phi = 0.25") {
    const auto b = boin_boundaries(0.25);
    const double p1 = 0.15, p2 = 0.35, p = 0.25;
    CHECK(b.lambda_e == doctest::Approx(std::log((1 - p1) / (1 - p)) /
                                        std::log(p * (1 - p1) / (p1 * (1 - p)))));
    CHECK(b.lambda_d == doctest::Approx(std::log((1 - p) / (1 - p2)) /
                                        std::log(p2 * (1 - p) / (p * (1 - p2)))));
    CHECK(std::round(b.lambda_e * 1000) / 1000 == doctest::Approx(0.197));
    CHECK(std::round(b.lambda_d * 1000) / 1000 == doctest::Approx(0.298));
    CHECK_THROWS_AS(boin_boundaries(0.0), ParameterError);
}

TEST_CASE("elimination table matches the binomial form of the overdose rule") {
    const auto params = BoinParams::for_target(0.25);
    const auto t = elimination_table(params, 30);
    CHECK(t[1] == -1);
    CHECK(t[2] == -1);  // below the minimum sample size
    const int expected[] = {3, 3, 3, 4, 4, 4, 5, 5};
    for (int n = 3; n <= 10; ++n) CHECK(t[static_cast<std::size_t>(n)] == expected[n - 3]);
    for (int n = 3; n <= 30; ++n) {
        // Pr(p > 0.25 | y, n) = Pr(Bin(n+1, 0.25) <= y) exceeds 0.95 first at y
        int first = -1;
        for (int k = 0; k <= n; ++k)
            if (binom_cdf(k, n + 1, 0.25) > 0.95) {
                first = k;
                break;
            }
        CHECK(t[static_cast<std::size_t>(n)] == first);
    }
}

TEST_CASE("plain BOIN decisions") {
    const auto params = BoinParams::for_target(0.25);
    CHECK(escalation_decision(tally_of({{0, 3}, {0, 0}}), 0, params) == Decision::Escalate);
    CHECK(escalation_decision(tally_of({{0, 3}, {1, 3}}), 1, params) == Decision::DeEscalate);
    CHECK(escalation_decision(tally_of({{0, 3}, {1, 6}, {0, 0}}), 1, params) == Decision::Escalate);
    CHECK(escalation_decision(tally_of({{0, 3}, {1, 4}}), 1, params) == Decision::Stay);
    // boundaries: no escalation from the top, no de-escalation below dose 1
    CHECK(escalation_decision(tally_of({{0, 3}, {0, 3}}), 1, params) == Decision::Stay);
    CHECK(escalation_decision(tally_of({{2, 3}, {0, 0}}), 0, params) == Decision::Stay);
    CHECK_THROWS_AS(escalation_decision(tally_of({{0, 0}}), 0, params), DeferredError);
}

TEST_CASE("overdose elimination marks the dose and everything above") {
    const auto params = BoinParams::for_target(0.25);
    auto t = tally_of({{0, 3}, {3, 3}, {0, 0}});
    CHECK(eliminate_overdoses(t, params) == 1);
    CHECK(!t[0].eliminated);
    CHECK(t[1].eliminated);
    CHECK(t[2].eliminated);
    auto u = tally_of({{2, 2}});
    CHECK(!eliminate_overdoses(u, params));  // 2/2 is below the minimum sample size
}

TEST_CASE("backfill conflicts use the pooled rate") {
    const auto params = BoinParams::for_target(0.25);
    SUBCASE("de-escalation signal at a backfilled dose, pooled rate low") {
        const auto d = reconciled_decision(tally_of({{1, 3}, {0, 3}, {0, 0}}, 1), 1, params);
        CHECK(d.conflict_dose == 0);
        CHECK(d.rate == doctest::Approx(1.0 / 6));
        CHECK(d.decision == Decision::Escalate);
    }
    SUBCASE("stay at the backfilled dose while the current dose says escalate") {
        const auto d = reconciled_decision(tally_of({{2, 8}, {0, 3}, {0, 0}}, 1), 1, params);
        CHECK(d.conflict_dose == 0);
        CHECK(d.rate == doctest::Approx(2.0 / 11));
        CHECK(d.decision == Decision::Escalate);
    }
    SUBCASE("pooled rate above lambda_d everywhere sends the target below b*") {
        const auto d = reconciled_decision(tally_of({{2, 6}, {1, 3}, {0, 0}}, 1), 1, params);
        CHECK(d.conflict_dose == 0);
        CHECK(d.decision == Decision::DeEscalate);
        CHECK(d.target == -1);
    }
    SUBCASE("the highest dose with acceptable pooled rate is chosen") {
        const auto d = reconciled_decision(tally_of({{2, 6}, {0, 3}, {3, 3}, {0, 0}}, 2), 2, params);
        CHECK(d.conflict_dose == 0);
        CHECK(d.decision == Decision::DeEscalate);
        CHECK(d.target == 1);  // pooled over doses 1..2: 2/9 <= lambda_d
    }
    SUBCASE("pooled rate inside the interval holds the dose") {
        const auto d = reconciled_decision(tally_of({{2, 6}, {0, 6}, {2, 3}, {0, 0}}, 2), 2, params);
        CHECK(d.rate == doctest::Approx(4.0 / 15));
        CHECK(d.decision == Decision::Stay);
        CHECK(d.target == 2);
    }
    SUBCASE("no conflict falls back to the plain rule") {
        const auto d = reconciled_decision(tally_of({{0, 3}, {0, 3}, {0, 0}}, 1), 1, params);
        CHECK(!d.conflict_dose);
        CHECK(d.decision == Decision::Escalate);
    }
    SUBCASE("doses without backfill never conflict") {
        const auto d = reconciled_decision(tally_of({{1, 3}, {0, 3}, {0, 0}}, 0), 1, params);
        CHECK(!d.conflict_dose);
    }
}

TEST_CASE("isotonic MTD selection") {
    const auto params = BoinParams::for_target(0.25);
    CHECK(select_mtd_boin(tally_of({{2, 20}, {5, 20}, {5, 20}}), params) == 1);
    // a pooled block below phi resolves to its highest member
    CHECK(select_mtd_boin(tally_of({{0, 3}, {0, 3}, {0, 3}, {2, 4}}), params) == 2);
    // an inversion is smoothed before choosing
    CHECK(select_mtd_boin(tally_of({{1, 6}, {0, 6}, {3, 6}}), params) == 1);
    CHECK(select_mtd_boin(tally_of({{0, 0}, {0, 0}}), params) == std::nullopt);
    auto t = tally_of({{3, 3}, {0, 0}});
    t[0].eliminated = t[1].eliminated = true;
    CHECK(select_mtd_boin(t, params) == std::nullopt);
}

TEST_CASE("backfill opening and closing") {
    const auto params = BoinParams::for_target(0.25);
    BackfillRules rules;
    rules.lambda_d = params.lambda_d;
    auto t = tally_of({{0, 3}, {0, 3}, {0, 0}});
    BackfillState s(3, 12, EngineKind::Boin);
    refresh_backfill(s, t, 2, rules);
    CHECK(s.open_doses().empty());  // no response yet
    t[0].responses = 1;
    refresh_backfill(s, t, 2, rules);
    CHECK(s.open_doses() == std::vector<int>{0, 1});
    CHECK(s.highest_open() == 1);
    CHECK(assign_patient(s, false, 2) == Assignment{Assignment::Kind::Backfill, 1});
    CHECK(assign_patient(s, true, 2) == Assignment{Assignment::Kind::EscalationCohort, 2});

    t[1].y = 2;  // 2/3 at dose 2; pooled with dose 3 (no data) stays above lambda_d
    t[2].y = 1;
    t[2].n = 1;
    refresh_backfill(s, t, 2, rules);
    CHECK(s.doses[1].temporarily_closed);
    t[1].enrolled = 12;
    t[1].y = 0;
    refresh_backfill(s, t, 2, rules);
    CHECK(s.doses[1].permanently_closed);
    CHECK(!s.doses[1].open);
}

TEST_CASE("stage-1 controller: escalation with backfill") {
    auto ctx = std::make_shared<const DesignContext>(DesignConfig::bard_boin());
    Stage1Controller s(ctx);
    for (int i = 0; i < 3; ++i) {
        const auto a = s.propose();
        CHECK(a == Assignment{Assignment::Kind::EscalationCohort, 0});
        s.enroll(a);
    }
    CHECK(!s.propose().enrolled());  // cohort full, nothing open for backfill
    CHECK(!s.record_outcome(0, true, false, true));
    CHECK(!s.record_outcome(0, true, false, false));
    const auto d = s.record_outcome(0, true, false, false);
    REQUIRE(d);
    CHECK(d->decision == Decision::Escalate);
    CHECK(s.current_dose() == 1);
    for (int i = 0; i < 3; ++i) s.enroll(s.propose());
    // a response at dose 1 opens it for backfill while dose 2's cohort is pending
    CHECK(s.propose() == Assignment{Assignment::Kind::Backfill, 0});
    CHECK_THROWS_AS(s.amend_outcome(7, 1, 0), ParameterError);
    CHECK_THROWS_AS(s.amend_outcome(4, 1, 0), StateError);  // nothing assessed at dose 5
}

TEST_CASE("BLRM rigidity probe") {
    BlrmParams p;
    const std::vector<BinomialCount> data{{0, 3}, {0, 6}, {2, 3}, {0, 0}, {0, 0}};
    CHECK(rigidity_probe(data, p, 2) == doctest::Approx(0.626).epsilon(0.02 / 0.626));
    DoseTally t(5);
    t[0].n = 3;
    t[1].n = 24;
    t[2].y = 2;
    t[2].n = 3;
    for (int j = 0; j < 3; ++j) t[j].enrolled = t[j].n;
    const auto a = blrm_decision(t, 1, p, p.make_model());
    CHECK(a.decision == Decision::Stay);
    CHECK(a.probs[2].over >= p.eta);
}

TEST_CASE("BLRM terminates when every dose is overdosing") {
    BlrmParams p;
    DoseTally t(5);
    t[0].y = 5;
    t[0].n = 6;
    t[0].enrolled = 6;
    const auto a = blrm_decision(t, 0, p, p.make_model());
    CHECK(a.decision == Decision::TerminateAllToxic);
}
