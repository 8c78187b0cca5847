#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <tuple>

#include "bard/error.hpp"
#include "bard/service.hpp"
#include "bard/stats.hpp"

namespace fs = std::filesystem;

namespace bard::props {

namespace {

const std::string kTs = "2026-01-01T00:00:00Z";

std::string fail_note(std::string& detail, const std::string& msg) {
    if (detail.size() < 400) detail += (detail.empty() ? "" : "; ") + msg;
    return detail;
}

struct Step {
    double time;
    int order;  // outcomes settle before the stage ends, the stage ends before new arrivals
    int patient;
};

/// Time-ordered command script equivalent to a simulated trial.
std::vector<Step> script(const TrialResult& r) {
    std::vector<Step> steps;
    for (const auto& p : r.patients) {
        steps.push_back({p.enrolled_at, 2, p.id});
        steps.push_back({p.assessed_at, 0, p.id});
    }
    steps.push_back({r.summary.stage1_end, 1, 0});
    std::stable_sort(steps.begin(), steps.end(), [](const Step& a, const Step& b) {
        return std::tie(a.time, a.order) < std::tie(b.time, b.order);
    });
    return steps;
}

std::string route_of(Assignment::Kind k) {
    return k == Assignment::Kind::Backfill ? "backfill" : "escalation";
}

/// Runs the script against the engine; returns a mismatch description or "".
std::string drive(TrialEngine& eng, const TrialResult& r) {
    const auto& s = r.summary;
    for (const auto& st : script(r)) {
        if (st.order == 1) {
            if (!eng.stage1().finished()) return "engine stage 1 not finished at simulated end";
            eng.advance(std::nullopt, false, kTs);
            const auto& plan = eng.plan();
            if (!s.mtd) {
                if (eng.stage() != TrialStage::Terminated) return "engine found an MTD the simulator did not";
                continue;
            }
            if (!plan || plan->mtd != s.mtd) return "MTD differs";
            if (plan->doses != s.stage2_doses) return "stage-2 doses differ";
            if (plan->n1_low != s.n1_low || plan->n1_high != s.n1_high) return "stage-1 arm counts differ";
            if (plan->quota != s.n2_new) return "stage-2 quota differs";
            continue;
        }
        const auto& p = r.patients[static_cast<std::size_t>(st.patient - 1)];
        if (p.stage == 2) {
            if (st.order != 2 || eng.stage() != TrialStage::Stage2) continue;
            const auto res = eng.enroll(p.covariates, true, kTs);
            if (!res.enrolled) return "stage-2 patient refused";
            continue;
        }
        if (st.order == 2) {
            const auto res = eng.enroll(p.covariates, true, kTs);
            if (!res.enrolled) return "patient " + std::to_string(p.id) + " refused";
            if (*res.patient_id != p.id) return "patient ids diverge";
            if (res.assignment["dose"].get<int>() != p.dose + 1 ||
                res.assignment["kind"].get<std::string>() != route_of(p.route))
                return "assignment of patient " + std::to_string(p.id) + " differs";
        } else {
            eng.record_outcome(p.id, p.dlt, p.response, false, kTs);
        }
    }
    if (eng.decisions().size() != r.decisions.size()) return "decision count differs";
    for (std::size_t i = 0; i < r.decisions.size(); ++i) {
        const auto &a = eng.decisions()[i], &b = r.decisions[i];
        if (a.decision != b.decision || a.from != b.from || a.to != b.to ||
            a.conflict_dose != b.conflict_dose || a.stop != b.stop)
            return "decision " + std::to_string(i + 1) + " differs";
    }
    if (eng.stage() == TrialStage::Stage2) {
        if (eng.stage2_enrolled() != s.n2_new) return "stage-2 enrollment count differs";
        try {
            eng.enroll(r.patients.front().covariates, true, kTs);
            return "enrollment beyond the stage-2 quota was accepted";
        } catch (const QuotaError&) {
        }
    }
    return "";
}

/// Same script through the HTTP handler layer.
std::string drive_service(TrialService& svc, const std::string& id, const DesignConfig& design,
                          std::uint64_t seed, const TrialResult& r) {
    auto call = [&](const std::string& method, const std::string& path, const Json& body) {
        auto resp = svc.handle(method, path, body.is_null() ? "" : body.dump());
        if (resp.status >= 400 && resp.status != 409)
            throw std::runtime_error(path + ": " + resp.body.dump());
        return resp;
    };
    call("POST", "/trials",
         {{"trial_id", id}, {"design", design_to_json(design)}, {"seed", seed}});
    const std::string base = "/trials/" + id;
    for (const auto& st : script(r)) {
        if (st.order == 1) {
            call("POST", base + "/advance", Json::object());
            continue;
        }
        const auto& p = r.patients[static_cast<std::size_t>(st.patient - 1)];
        if (st.order == 2) {
            auto resp = call("POST", base + "/patients", {{"covariates", p.covariates}});
            if (p.stage == 1 && resp.body.value("patient_id", -1) != p.id)
                return "service enrolled patient " + std::to_string(p.id) + " differently";
        } else if (p.stage == 1) {
            call("POST", base + "/outcomes",
                 {{"patient_id", p.id}, {"dlt", p.dlt}, {"response", p.response}});
        }
    }
    return "";
}

}  // namespace

std::vector<double> isotonic_bruteforce(const std::vector<double>& rates,
                                        const std::vector<double>& weights) {
    const std::size_t n = rates.size();
    std::vector<double> best;
    double best_sse = 1e300;
    // Bit i set means a block boundary after entry i.
    for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
        std::vector<double> fit(n);
        std::size_t start = 0;
        bool ok = true;
        double prev = -1e300;
        for (std::size_t i = 0; i < n; ++i) {
            const bool cut = i == n - 1 || (mask >> i & 1u);
            if (!cut) continue;
            double sw = 0.0, swr = 0.0;
            for (std::size_t k = start; k <= i; ++k) {
                sw += weights[k];
                swr += weights[k] * rates[k];
            }
            const double m = swr / sw;
            if (m < prev - 1e-12) ok = false;
            prev = m;
            for (std::size_t k = start; k <= i; ++k) fit[k] = m;
            start = i + 1;
        }
        if (!ok) continue;
        double sse = 0.0;
        for (std::size_t k = 0; k < n; ++k) sse += weights[k] * (rates[k] - fit[k]) * (rates[k] - fit[k]);
        if (sse < best_sse - 1e-12) {
            best_sse = sse;
            best = fit;
        }
    }
    return best;
}

Result pava_equivalence(int max_len) {
    Result res;
    long instances = 0;
    for (int n = 1; n <= max_len; ++n) {
        std::vector<int> r(static_cast<std::size_t>(n), 0), w(static_cast<std::size_t>(n), 0);
        long total = 1;
        for (int i = 0; i < n; ++i) total *= 15;  // 5 rates x 3 weights per entry
        for (long code = 0; code < total; ++code) {
            long c = code;
            std::vector<double> rates(static_cast<std::size_t>(n)), weights(static_cast<std::size_t>(n));
            for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
                rates[i] = (c % 5) / 4.0;
                c /= 5;
                weights[i] = 1.0 + static_cast<double>(c % 3);
                c /= 3;
            }
            const auto got = pava(rates, weights);
            const auto want = isotonic_bruteforce(rates, weights);
            ++instances;
            for (std::size_t i = 0; i < rates.size(); ++i)
                if (std::abs(got[i] - want[i]) > 1e-9) {
                    res.ok = false;
                    fail_note(res.detail, "mismatch at instance " + std::to_string(code) +
                                              " (length " + std::to_string(n) + ")");
                    break;
                }
        }
    }
    if (res.ok) res.detail = std::to_string(instances) + " instances agree";
    return res;
}

Result beta_tail_monte_carlo(int draws, std::uint64_t seed) {
    Result res;
    std::mt19937_64 gen(seed);
    double worst = 0.0;
    int cases = 0;
    for (int n : {3, 6, 9, 12, 20}) {
        for (int y = 0; y <= n; y += (n > 9 ? 3 : 1)) {
            const auto post = BetaPosterior::from_counts(y, n);
            std::gamma_distribution<double> ga(post.a, 1.0), gb(post.b, 1.0);
            std::vector<double> sample(static_cast<std::size_t>(draws));
            for (auto& x : sample) {
                const double u = ga(gen), v = gb(gen);
                x = u / (u + v);
            }
            for (double cut : {0.2, 0.25, 0.3, 0.35, 0.5}) {
                const double exact = beta_tail(post, cut);
                const double mc = static_cast<double>(std::count_if(
                                      sample.begin(), sample.end(), [&](double x) { return x > cut; })) /
                                  draws;
                const double se = std::sqrt(std::max(exact * (1 - exact), 1e-6) / draws);
                const double z = std::abs(mc - exact) / se;
                worst = std::max(worst, z);
                ++cases;
                if (z > 5.0) {
                    res.ok = false;
                    fail_note(res.detail, "y=" + std::to_string(y) + " n=" + std::to_string(n) +
                                              " cut=" + std::to_string(cut) + " exact " +
                                              std::to_string(exact) + " mc " + std::to_string(mc));
                }
            }
        }
    }
    if (res.ok) {
        std::ostringstream os;
        os << cases << " tails, max |z| = " << worst;
        res.detail = os.str();
    }
    return res;
}

Result minimization_dominance(int reps, std::uint64_t seed) {
    const auto truth = *scenario_preset("s1");
    const TimingModel timing;
    auto bard = std::make_shared<const DesignContext>(DesignConfig::bard_boin());
    auto sr = std::make_shared<const DesignContext>(
        comparator_design(DesignConfig::bard_boin(), ComparatorMode::SimpleRandomization));
    const auto a = simulate(bard, truth, timing, reps, seed);
    const auto b = simulate(sr, truth, timing, reps, seed ^ 0x5bd1e995ULL);

    auto moments = [](const std::vector<TrialSummary>& runs, std::size_t k) {
        double s = 0, ss = 0;
        int n = 0;
        for (const auto& r : runs) {
            if (!r.two_arm() || r.imbalance.size() <= k) continue;
            s += r.imbalance[k];
            ss += r.imbalance[k] * r.imbalance[k];
            ++n;
        }
        const double m = s / n;
        return std::make_tuple(m, (ss / n - m * m) / n, n);
    };

    Result res;
    std::ostringstream os;
    os.precision(3);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto [ma, va, na] = moments(a, k);
        const auto [mb, vb, nb] = moments(b, k);
        const double z = (ma - mb) / std::sqrt(va + vb);
        os << "X" << k + 1 << " " << std::fixed << ma << " vs " << mb << " (z " << z << ")  ";
        if (k < 2 && !(z < -5.0)) res.ok = false;               // strictly better balance
        if (k == 2 && std::abs(z) > 3.29) res.ok = false;       // two-sided, alpha 0.001
    }
    res.detail = os.str();
    return res;
}

Result parallel_determinism(int reps, std::uint64_t seed, int threads) {
    const auto truth = *scenario_preset("s2");
    auto ctx = std::make_shared<const DesignContext>(DesignConfig::bard_boin());
    const auto a = simulate(ctx, truth, TimingModel{}, reps, seed, 1);
    const auto b = simulate(ctx, truth, TimingModel{}, reps, seed, threads);
    Result res;
    for (int i = 0; i < reps; ++i) {
        const auto &x = a[static_cast<std::size_t>(i)], &y = b[static_cast<std::size_t>(i)];
        if (x.n_total != y.n_total || x.duration != y.duration || x.mtd != y.mtd ||
            x.obd_margin != y.obd_margin || x.obd_utility != y.obd_utility ||
            x.imbalance != y.imbalance || x.arm_n != y.arm_n) {
            res.ok = false;
            res.detail = "replication " + std::to_string(i) + " differs";
            return res;
        }
    }
    res.detail = std::to_string(reps) + " replications identical with 1 and " +
                 std::to_string(threads) + " threads";
    return res;
}

Result decision_oracle(const std::shared_ptr<const DesignContext>& ctx,
                       const ScenarioTruth& truth, int trials, std::uint64_t seed,
                       const std::string& scratch_dir) {
    Result res;
    fs::remove_all(scratch_dir);
    TrialService svc({scratch_dir, std::nullopt});
    int decisions = 0, service_checked = 0;
    for (int i = 0; i < trials; ++i) {
        Rng rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
        const auto r = run_trial(ctx, truth, TimingModel{}, rng);
        const std::uint64_t trial_seed = seed + static_cast<std::uint64_t>(i);
        const std::string id = "oracle-" + std::to_string(i);
        try {
            auto eng = TrialEngine::create(id, ctx->design, trial_seed, kTs);
            if (auto why = drive(eng, r); !why.empty()) {
                res.ok = false;
                fail_note(res.detail, "trial " + std::to_string(i) + ": " + why);
                continue;
            }
            decisions += static_cast<int>(eng.decisions().size());
            if (TrialEngine::replay(eng.log()).state() != eng.state()) {
                res.ok = false;
                fail_note(res.detail, "trial " + std::to_string(i) + ": replay state differs");
            }
            if (i < 20) {
                if (auto why = drive_service(svc, id, ctx->design, trial_seed, r); !why.empty()) {
                    res.ok = false;
                    fail_note(res.detail, "trial " + std::to_string(i) + ": " + why);
                    continue;
                }
                auto st = svc.handle("GET", "/trials/" + id + "/state", "");
                if (st.body != eng.state()) {
                    res.ok = false;
                    fail_note(res.detail, "trial " + std::to_string(i) + ": service state differs");
                }
                ++service_checked;
            }
        } catch (const std::exception& e) {
            res.ok = false;
            fail_note(res.detail, "trial " + std::to_string(i) + ": " + e.what());
        }
    }
    if (res.ok)
        res.detail = std::to_string(trials) + " trials, " + std::to_string(decisions) +
                     " decisions agree; " + std::to_string(service_checked) +
                     " also through the service";
    return res;
}

Result replay_fidelity(int trials, std::uint64_t seed, const std::string& scratch_dir) {
    Result res;
    fs::create_directories(scratch_dir);
    const auto truth = *scenario_preset("s2");
    auto ctx = std::make_shared<const DesignContext>(DesignConfig::bard_boin());
    int corruptions = 0;
    for (int i = 0; i < trials; ++i) {
        Rng rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
        const auto r = run_trial(ctx, truth, TimingModel{}, rng);
        auto eng = TrialEngine::create("replay-" + std::to_string(i), ctx->design, seed, kTs);
        drive(eng, r);
        // Late outcomes for stage-2 patients so the log carries every event kind.
        for (const auto& p : eng.patients())
            if (p.stage == 2) eng.record_outcome(p.id, false, true, false, kTs);
        if (eng.stage() == TrialStage::Stage2) eng.advance(std::nullopt, false, kTs);

        const std::string path = (fs::path(scratch_dir) / ("t" + std::to_string(i) + ".jsonl")).string();
        fs::remove(path);
        append_event_log(path, eng.log());
        const auto back = read_event_log(path);
        if (back != eng.log() || TrialEngine::replay(back).state() != eng.state()) {
            res.ok = false;
            fail_note(res.detail, "trial " + std::to_string(i) + ": round trip differs");
            continue;
        }

        std::vector<std::string> lines;
        for (const auto& e : back) lines.push_back(e.to_json().dump());
        auto expect_error_at = [&](std::vector<std::string> ls, long long seq, const std::string& what) {
            const std::string bad = path + ".bad";
            {
                std::ofstream o(bad);
                for (const auto& l : ls) o << l << "\n";
            }
            try {
                TrialEngine::replay(read_event_log(bad));
                res.ok = false;
                fail_note(res.detail, what + " not detected");
            } catch (const ReplayError& e) {
                if (e.sequence != seq) {
                    res.ok = false;
                    fail_note(res.detail, what + " reported at " + std::to_string(e.sequence) +
                                              " instead of " + std::to_string(seq));
                }
            }
            ++corruptions;
        };
        const auto n = static_cast<long long>(lines.size());
        const long long k = 2 + (i * 7) % (n - 1);  // some line after TrialCreated
        auto ls = lines;
        ls[static_cast<std::size_t>(k - 1)] = ls[static_cast<std::size_t>(k - 1)].substr(0, 20);
        expect_error_at(ls, k, "truncated line");
        ls = lines;
        ls.erase(ls.begin() + (k - 1));
        expect_error_at(ls, k, "missing line");
        for (long long j = 1; j <= n; ++j) {
            auto e = back[static_cast<std::size_t>(j - 1)];
            if (e.kind == event_kind::DecisionTaken) {
                e.payload["to"] = e.payload["to"].get<int>() + 1;
                ls = lines;
                ls[static_cast<std::size_t>(j - 1)] = e.to_json().dump();
                expect_error_at(ls, j, "tampered decision");
                break;
            }
        }
        for (long long j = 2; j <= n; ++j) {
            auto e = back[static_cast<std::size_t>(j - 1)];
            if (e.kind == event_kind::PatientEnrolled && e.payload["stage"] == 1) {
                e.payload["dose"] = e.payload["dose"].get<int>() % 5 + 1;
                ls = lines;
                ls[static_cast<std::size_t>(j - 1)] = e.to_json().dump();
                expect_error_at(ls, j, "tampered assignment");
                break;
            }
        }
    }
    if (res.ok)
        res.detail = std::to_string(trials) + " logs replay exactly; " +
                     std::to_string(corruptions) + " corruptions located";
    return res;
}

}  // namespace bard::props
