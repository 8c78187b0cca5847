#include "bard/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <queue>
#include <thread>

#include "bard/error.hpp"

namespace bard {

void TimingModel::validate() const {
    if (!(accrual_rate > 0.0) || !(dlt_window > 0.0) || !(response_window > 0.0))
        throw ConfigError("timing parameters must be positive");
}

namespace {

struct Pending {
    double time;
    int patient;
    bool operator>(const Pending& o) const {
        return time != o.time ? time > o.time : patient > o.patient;
    }
};

class TrialSimulation {
   public:
    TrialSimulation(const std::shared_ptr<const DesignContext>& ctx,
                    const ScenarioTruth& truth, const TimingModel& timing, Rng& rng)
        : ctx_(ctx), design_(ctx->design), truth_(truth), timing_(timing), rng_(rng),
          stage1_(ctx) {}

    TrialResult run() {
        if (truth_.dose_count() != design_.dose_count)
            throw ConfigError("scenario " + truth_.name + " dose count does not match design");
        next_arrival_ = gap();
        run_stage1();
        run_stage2();
        finish();
        return std::move(result_);
    }

   private:
    double gap() {
        return timing_.poisson ? rng_.exponential(timing_.accrual_rate)
                               : 1.0 / timing_.accrual_rate;
    }
    double window() const { return std::max(timing_.dlt_window, timing_.response_window); }

    PatientRecord& admit(int stage, double arrival, double now, std::vector<int> covariates,
                         int dose, Assignment::Kind route) {
        PatientRecord p;
        p.id = static_cast<int>(result_.patients.size()) + 1;
        p.stage = stage;
        p.dose = dose;
        p.route = route;
        p.arrival = arrival;
        p.enrolled_at = now;
        p.assessed_at = now + timing_.dlt_window;
        const auto o = sample_outcome(truth_, dose, covariates, rng_);
        p.dlt = o.dlt;
        p.response = o.response;
        p.covariates = std::move(covariates);
        result_.patients.push_back(std::move(p));
        return result_.patients.back();
    }

    bool try_enroll_stage1(double arrival, double now, std::vector<int>& covariates) {
        const Assignment a = stage1_.propose();
        if (!a.enrolled()) return false;
        stage1_.enroll(a);
        const auto& p = admit(1, arrival, now, std::move(covariates), a.dose, a.kind);
        pending_.push({p.assessed_at, p.id - 1});
        return true;
    }

    void run_stage1() {
        double now = 0.0;
        while (!stage1_.finished()) {
            if (!pending_.empty() && pending_.top().time <= next_arrival_) {
                const Pending ev = pending_.top();
                pending_.pop();
                now = ev.time;
                const auto& p = result_.patients[static_cast<std::size_t>(ev.patient)];
                auto d = stage1_.record_outcome(
                    p.dose, p.route == Assignment::Kind::EscalationCohort, p.dlt, p.response);
                if (d) result_.decisions.push_back(*d);
                if (design_.suspend_accrual) {
                    while (!waiting_.empty() && !stage1_.finished()) {
                        auto& [arrival, cov] = waiting_.front();
                        if (!try_enroll_stage1(arrival, now, cov)) break;
                        waiting_.pop_front();
                    }
                }
            } else {
                now = next_arrival_;
                auto cov = sample_covariates(truth_, rng_);
                if (!try_enroll_stage1(now, now, cov) && design_.suspend_accrual)
                    waiting_.emplace_back(now, std::move(cov));
                next_arrival_ = now + gap();
            }
        }
        stage1_end_ = now;
        result_.summary.stop = stage1_.stop_reason();
        result_.summary.stage1_end = now;
        result_.summary.n1 = static_cast<int>(result_.patients.size());
    }

    void run_stage2() {
        auto& s = result_.summary;
        s.mtd = stage1_.select_mtd();
        if (!s.mtd) return;
        if (*s.mtd > 0) s.stage2_doses = {*s.mtd - 1, *s.mtd};
        else s.stage2_doses = {*s.mtd};

        const bool reuse = design_.stage2 == Stage2Mode::Conditional;
        const bool two_arm = s.two_arm();
        const CovariateSpec& spec = design_.balance;
        ArmCounts counts(spec);

        for (const auto& p : result_.patients) {
            for (std::size_t a = 0; a < s.stage2_doses.size(); ++a) {
                if (p.dose != s.stage2_doses[a]) continue;
                const Arm arm = two_arm ? static_cast<Arm>(a) : Arm::High;
                (arm == Arm::Low ? s.n1_low : s.n1_high) += 1;
                if (reuse) {
                    counts.add(spec, arm, p.covariates);
                    arms_[idx(arm)].push_back(p.id - 1);
                }
            }
        }

        int quota;
        if (two_arm) quota = reuse ? stage2_quota(design_.n2, s.n1_low, s.n1_high) : design_.n2;
        else quota = reuse ? stage2_quota(design_.n2_single, 0, s.n1_high) : design_.n2_single;

        const int cap = design_.arm_cap_slack >= 0
                            ? (design_.n2 + 1) / 2 + design_.arm_cap_slack
                            : -1;
        std::optional<Arm> block_second;
        double now = stage1_end_;
        for (int i = 0; i < quota; ++i) {
            double arrival;
            std::vector<int> cov;
            if (!waiting_.empty()) {
                arrival = waiting_.front().first;
                cov = std::move(waiting_.front().second);
                waiting_.pop_front();
            } else {
                now = next_arrival_;
                arrival = now;
                cov = sample_covariates(truth_, rng_);
                next_arrival_ = now + gap();
            }

            Arm arm = Arm::High;
            if (two_arm) {
                if (design_.stage2 == Stage2Mode::SimpleRandom) {
                    if (block_second) {
                        arm = *block_second;
                        block_second.reset();
                    } else {
                        arm = rng_.bernoulli(0.5) ? Arm::Low : Arm::High;
                        block_second = other(arm);
                    }
                    counts.add(spec, arm, cov);
                } else if (cap >= 0 && (counts.totals[0] >= cap || counts.totals[1] >= cap)) {
                    arm = counts.totals[0] >= cap ? Arm::High : Arm::Low;
                    counts.add(spec, arm, cov);
                } else {
                    arm = randomize(counts, spec, cov, design_.r, rng_);
                }
            }
            const int dose = s.stage2_doses[two_arm ? idx(arm) : 0];
            const auto& p = admit(2, arrival, now, std::move(cov), dose,
                                  Assignment::Kind::EscalationCohort);
            arms_[idx(arm)].push_back(p.id - 1);
            ++s.n2_new;
        }
    }

    void finish() {
        auto& s = result_.summary;
        s.n_total = static_cast<int>(result_.patients.size());
        double end = stage1_end_;
        for (const auto& p : result_.patients) end = std::max(end, p.enrolled_at + window());
        s.duration = end;
        if (s.stage2_doses.empty()) return;

        std::array<ArmOutcomes, 2> out;
        for (std::size_t a = 0; a < 2; ++a)
            for (int i : arms_[a]) {
                const auto& p = result_.patients[static_cast<std::size_t>(i)];
                out[a].add(p.dlt, p.response);
            }
        s.arm_n = {out[0].n, out[1].n};

        const auto& g = design_.gating;
        if (!s.two_arm()) {
            const auto& h = out[idx(Arm::High)];
            if (admissible(h.dlt, h.n, h.responses, h.n, g).ok())
                s.obd_margin = s.obd_utility = s.stage2_doses[0];
            return;
        }

        const auto adm = admissible_pair(out[0], out[1], g);
        const auto m = select_obd_margin(out[0].response_rate(), out[1].response_rate(),
                                         g.delta, adm, design_.margin_rule);
        if (m) s.obd_margin = s.stage2_doses[idx(*m)];
        const auto u = select_obd_utility(out[0].joint, out[1].joint, design_.utility,
                                          design_.dirichlet_prior, adm);
        if (u.arm) s.obd_utility = s.stage2_doses[idx(*u.arm)];

        const int K = truth_.covariate_count();
        s.imbalance.assign(static_cast<std::size_t>(K), 0.0);
        if (out[0].n == 0 || out[1].n == 0) return;
        for (int k = 0; k < K; ++k) {
            double share[2];
            for (std::size_t a = 0; a < 2; ++a) {
                int ones = 0;
                for (int i : arms_[a])
                    ones += result_.patients[static_cast<std::size_t>(i)]
                                .covariates[static_cast<std::size_t>(k)];
                share[a] = static_cast<double>(ones) / out[a].n;
            }
            s.imbalance[static_cast<std::size_t>(k)] = 100.0 * std::abs(share[0] - share[1]);
        }
    }

    std::shared_ptr<const DesignContext> ctx_;
    const DesignConfig& design_;
    const ScenarioTruth& truth_;
    const TimingModel& timing_;
    Rng& rng_;
    Stage1Controller stage1_;

    TrialResult result_;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> pending_;
    std::deque<std::pair<double, std::vector<int>>> waiting_;
    std::array<std::vector<int>, 2> arms_;
    double next_arrival_ = 0.0;
    double stage1_end_ = 0.0;
};

}  // namespace

TrialResult run_trial(const std::shared_ptr<const DesignContext>& ctx,
                      const ScenarioTruth& truth, const TimingModel& timing, Rng& rng) {
    return TrialSimulation(ctx, truth, timing, rng).run();
}

std::vector<TrialSummary> simulate(const std::shared_ptr<const DesignContext>& ctx,
                                   const ScenarioTruth& truth, const TimingModel& timing,
                                   int reps, std::uint64_t seed, int parallelism) {
    if (reps < 1) throw ConfigError("reps must be at least 1");
    truth.validate();
    timing.validate();
    std::vector<TrialSummary> out(static_cast<std::size_t>(reps));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < reps; i = next++) {
            Rng rng(stream_seed(seed, static_cast<std::uint64_t>(i)));
            out[static_cast<std::size_t>(i)] = run_trial(ctx, truth, timing, rng).summary;
        }
    };
    const int threads = std::clamp(parallelism, 1, reps);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return out;
}

OcReport aggregate(const std::vector<TrialSummary>& runs, const DesignConfig& design,
                   const ScenarioTruth& truth, std::uint64_t seed) {
    OcReport r;
    r.design = design.name;
    r.scenario = truth.name;
    r.reps = static_cast<int>(runs.size());
    r.seed = seed;
    const auto K = static_cast<std::size_t>(truth.covariate_count());
    r.imbalance.assign(K, 0.0);
    r.mtd_selection.assign(static_cast<std::size_t>(truth.dose_count()), 0.0);

    int two_arm = 0;
    int single = 0;
    int no_mtd = 0;
    for (const auto& s : runs) {
        r.mean_n += s.n_total;
        r.mean_duration += s.duration;
        r.mean_n1 += s.n1;
        r.pcs1 += s.obd_margin == truth.true_obd;
        r.pcs2 += s.obd_utility == truth.true_obd;
        r.pcs_stage2_doses += std::find(s.stage2_doses.begin(), s.stage2_doses.end(),
                                        truth.true_obd) != s.stage2_doses.end();
        if (s.mtd) r.mtd_selection[static_cast<std::size_t>(*s.mtd)] += 1;
        else ++no_mtd;
        if (s.stage2_doses.size() == 1) ++single;
        if (!s.two_arm()) continue;
        ++two_arm;
        for (std::size_t k = 0; k < K && k < s.imbalance.size(); ++k)
            r.imbalance[k] += s.imbalance[k];
        r.allocation_imbalance += std::abs(s.arm_n[0] - s.arm_n[1]);
        r.mean_n1_low += s.n1_low;
        r.mean_n1_high += s.n1_high;
        r.stage1_allocation_imbalance += std::abs(s.n1_low - s.n1_high);
    }
    const double n = static_cast<double>(runs.size());
    r.mean_n /= n;
    r.mean_duration /= n;
    r.mean_n1 /= n;
    r.pcs1 *= 100.0 / n;
    r.pcs2 *= 100.0 / n;
    r.pcs_stage2_doses *= 100.0 / n;
    r.pct_no_mtd = 100.0 * no_mtd / n;
    r.pct_single_arm = 100.0 * single / n;
    for (auto& v : r.mtd_selection) v *= 100.0 / n;
    if (two_arm > 0) {
        for (auto& v : r.imbalance) v /= two_arm;
        r.allocation_imbalance /= two_arm;
        r.mean_n1_low /= two_arm;
        r.mean_n1_high /= two_arm;
        r.stage1_allocation_imbalance /= two_arm;
    }
    return r;
}

OcReport replicate(const std::shared_ptr<const DesignContext>& ctx,
                   const ScenarioTruth& truth, const TimingModel& timing, int reps,
                   std::uint64_t seed, int parallelism) {
    return aggregate(simulate(ctx, truth, timing, reps, seed, parallelism), ctx->design,
                     truth, seed);
}

}  // namespace bard
