#include "bard/backfill.hpp"

#include "bard/error.hpp"

namespace bard {

std::vector<int> BackfillState::open_doses() const {
    std::vector<int> out;
    for (std::size_t j = 0; j < doses.size(); ++j)
        if (doses[j].open) out.push_back(static_cast<int>(j));
    return out;
}

std::optional<int> BackfillState::highest_open() const {
    for (std::size_t j = doses.size(); j-- > 0;)
        if (doses[j].open) return static_cast<int>(j);
    return std::nullopt;
}

namespace {

bool boin_toxic(const DoseTally& tally, int b, double lambda_d) {
    const auto& d = tally[b];
    if (d.n == 0 || d.rate() <= lambda_d) return false;
    int y = d.y;
    int n = d.n;
    if (b + 1 < tally.size()) {
        y += tally[b + 1].y;
        n += tally[b + 1].n;
    }
    return static_cast<double>(y) / n > lambda_d;
}

}  // namespace

void refresh_backfill(BackfillState& state, const DoseTally& tally, int c,
                      const BackfillRules& rules) {
    if (static_cast<int>(state.doses.size()) != tally.size())
        throw ParameterError("backfill state and tally differ in dose count");
    if (state.engine == EngineKind::Blrm && static_cast<int>(rules.pod.size()) != tally.size())
        throw ParameterError("BLRM backfill rules need POD for every dose");

    bool active = false;
    for (int b = 0; b < tally.size(); ++b) {
        auto& s = state.doses[static_cast<std::size_t>(b)];
        const auto& d = tally[b];
        active = active || d.responses > 0;

        if (d.enrolled >= state.n_cap) s.permanently_closed = true;
        s.temporarily_closed =
            state.engine == EngineKind::Boin
                ? boin_toxic(tally, b, rules.lambda_d)
                : rules.pod[static_cast<std::size_t>(b)] >= rules.eta;

        s.open = b < c && active && !d.eliminated && !s.permanently_closed &&
                 !s.temporarily_closed;
    }
}

Assignment assign_patient(const BackfillState& state, bool cohort_has_slot, int c) {
    if (cohort_has_slot) return {Assignment::Kind::EscalationCohort, c};
    if (auto b = state.highest_open()) return {Assignment::Kind::Backfill, *b};
    return {};
}

}  // namespace bard
