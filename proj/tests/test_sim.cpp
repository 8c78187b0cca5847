#include <doctest.h>

#include <algorithm>

#include "bard/design.hpp"
#include "bard/error.hpp"
#include "bard/sim.hpp"
#include "properties.hpp"

using namespace bard;

namespace {

std::shared_ptr<const DesignContext> boin_ctx(ComparatorMode m = ComparatorMode::Bard) {
    return std::make_shared<const DesignContext>(comparator_design(DesignConfig::bard_boin(), m));
}

}  // namespace

TEST_CASE("simulation is reproducible and independent of parallelism") {
    const auto r = props::parallel_determinism(400, 2024, 4);
    INFO(r.detail);
    CHECK(r.ok);
    auto ctx = boin_ctx();
    const auto truth = *scenario_preset("s1");
    const auto a = simulate(ctx, truth, TimingModel{}, 50, 1);
    const auto b = simulate(ctx, truth, TimingModel{}, 50, 2);
    int differ = 0;
    for (std::size_t i = 0; i < a.size(); ++i) differ += a[i].n_total != b[i].n_total;
    CHECK(differ > 0);
}

TEST_CASE("sample-size accounting") {
    for (auto mode : {ComparatorMode::Bard, ComparatorMode::SimpleRandomization,
                      ComparatorMode::PocockSimonFull}) {
        auto ctx = boin_ctx(mode);
        const bool reuse = mode == ComparatorMode::Bard;
        for (const char* sc : {"s1", "s2", "s4"}) {
            const auto truth = *scenario_preset(sc);
            for (const auto& s : simulate(ctx, truth, TimingModel{}, 300, 77)) {
                CAPTURE(sc);
                CHECK(s.n_total == s.n1 + s.n2_new);
                CHECK(s.duration >= s.stage1_end);
                if (!s.mtd) {
                    CHECK(s.n2_new == 0);
                    continue;
                }
                if (s.two_arm()) {
                    CHECK(s.stage2_doses[1] == *s.mtd);
                    CHECK(s.stage2_doses[0] == *s.mtd - 1);
                    const int expect = reuse ? std::max(0, 40 - s.n1_low - s.n1_high) : 40;
                    CHECK(s.n2_new == expect);
                    const int carried = reuse ? s.n1_low + s.n1_high : 0;
                    CHECK(s.arm_n[0] + s.arm_n[1] == carried + s.n2_new);
                } else {
                    CHECK(*s.mtd == 0);
                    const int expect = reuse ? std::max(0, 20 - s.n1_high) : 20;
                    CHECK(s.n2_new == expect);
                }
            }
        }
    }
}

TEST_CASE("simple randomization keeps arms within one patient") {
    auto ctx = boin_ctx(ComparatorMode::SimpleRandomization);
    for (const auto& s : simulate(ctx, *scenario_preset("s2"), TimingModel{}, 200, 5))
        if (s.two_arm()) CHECK(std::abs(s.arm_n[0] - s.arm_n[1]) <= 1);
}

TEST_CASE("an all-toxic truth rarely yields an MTD") {
    auto truth = *scenario_preset("s1");
    truth.name = "toxic";
    truth.dlt_rates = {0.80, 0.85, 0.90, 0.92, 0.95};
    for (auto design : {DesignConfig::bard_boin(), DesignConfig::bard_blrm()}) {
        auto ctx = std::make_shared<const DesignContext>(design);
        const auto runs = simulate(ctx, truth, TimingModel{}, 300, 3);
        const auto none = std::count_if(runs.begin(), runs.end(), [](const auto& s) { return !s.mtd; });
        CAPTURE(design.name);
        CHECK(static_cast<double>(none) / runs.size() > 0.9);
    }
}

TEST_CASE("minimization dominates simple randomization and is neutral on X3") {
    const auto r = props::minimization_dominance(10000, 31);
    INFO(r.detail);
    CHECK(r.ok);
}

TEST_CASE("fixed-spacing arrivals and suspended accrual") {
    auto design = DesignConfig::bard_boin();
    design.suspend_accrual = true;
    auto ctx = std::make_shared<const DesignContext>(design);
    TimingModel timing;
    timing.poisson = false;
    Rng rng(8);
    const auto r = run_trial(ctx, *scenario_preset("s3"), timing, rng);
    for (const auto& p : r.patients) CHECK(p.enrolled_at >= p.arrival);
    CHECK(r.summary.n_total == static_cast<int>(r.patients.size()));
}

TEST_CASE("invalid simulation inputs") {
    auto ctx = boin_ctx();
    CHECK_THROWS_AS(simulate(ctx, *scenario_preset("s1"), TimingModel{}, 0, 1), ConfigError);
    TimingModel bad;
    bad.accrual_rate = 0;
    CHECK_THROWS_AS(simulate(ctx, *scenario_preset("s1"), bad, 10, 1), ConfigError);
}
