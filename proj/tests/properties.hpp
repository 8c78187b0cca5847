#pragma once

// Property checks shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <string>
#include <vector>

#include "bard/conduct.hpp"
#include "bard/sim.hpp"

namespace bard::props {

struct Result {
    bool ok = true;
    std::string detail;
};

/// Weighted isotonic fit by exhaustive search over contiguous block partitions.
std::vector<double> isotonic_bruteforce(const std::vector<double>& rates,
                                        const std::vector<double>& weights);

/// pava() against the brute force on every instance up to `max_len` entries
/// with rates from {0, 1/4, ..., 1} and weights from {1, 2, 3}.
Result pava_equivalence(int max_len);

/// beta_tail against Monte-Carlo draws (gamma ratio) on a grid of posteriors.
Result beta_tail_monte_carlo(int draws, std::uint64_t seed);

/// Minimization lowers X1/X2 imbalance relative to simple randomization and
/// leaves the omitted X3 where simple randomization puts it.
Result minimization_dominance(int reps, std::uint64_t seed);

/// Same summaries for parallelism 1 and `threads`.
Result parallel_determinism(int reps, std::uint64_t seed, int threads);

/// Drives a TrialEngine with a simulated trial's patients in time order,
/// through replay and through the service, and checks that assignments,
/// decisions, MTD and stage-2 plan agree with the simulator.
Result decision_oracle(const std::shared_ptr<const DesignContext>& ctx,
                       const ScenarioTruth& truth, int trials, std::uint64_t seed,
                       const std::string& scratch_dir);

/// Conducted trials replay to the same state; corrupted logs are rejected
/// with the offending sequence number.
Result replay_fidelity(int trials, std::uint64_t seed, const std::string& scratch_dir);

}  // namespace bard::props
