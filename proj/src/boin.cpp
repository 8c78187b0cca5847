#include "bard/boin.hpp"

#include <cmath>

#include "bard/error.hpp"
#include "bard/stats.hpp"

namespace bard {

std::string_view to_string(Decision d) {
    switch (d) {
        case Decision::Escalate: return "escalate";
        case Decision::Stay: return "stay";
        case Decision::DeEscalate: return "de-escalate";
        case Decision::TerminateAllToxic: return "terminate-all-toxic";
    }
    return "?";
}

Boundaries boin_boundaries(double phi) {
    if (!(phi > 0.0 && phi < 1.0)) throw ParameterError("phi must lie in (0, 1)");
    const double phi1 = 0.6 * phi;
    const double phi2 = 1.4 * phi;
    const double le = std::log((1 - phi1) / (1 - phi)) /
                      std::log(phi * (1 - phi1) / (phi1 * (1 - phi)));
    const double ld = std::log((1 - phi) / (1 - phi2)) /
                      std::log(phi2 * (1 - phi) / (phi * (1 - phi2)));
    return {le, ld};
}

BoinParams BoinParams::for_target(double phi) {
    BoinParams p;
    p.phi = phi;
    const auto b = boin_boundaries(phi);
    p.lambda_e = b.lambda_e;
    p.lambda_d = b.lambda_d;
    return p;
}

void BoinParams::validate() const {
    if (!(0.0 < lambda_e && lambda_e < phi && phi < lambda_d && lambda_d < 1.0))
        throw ParameterError("BOIN requires 0 < lambda_e < phi < lambda_d < 1");
    if (!(elimination_cutoff > 0.5 && elimination_cutoff < 1.0))
        throw ParameterError("elimination cutoff must lie in (0.5, 1)");
    if (n_stop < 1 || max_n1 < 1) throw ParameterError("n_stop and max_n1 must be positive");
}

std::optional<int> DoseTally::lowest_eliminated() const {
    for (int j = 0; j < size(); ++j)
        if (doses[static_cast<std::size_t>(j)].eliminated) return j;
    return std::nullopt;
}

namespace {

Decision raw_decision(double rate, const BoinParams& p) {
    if (rate <= p.lambda_e) return Decision::Escalate;
    if (rate > p.lambda_d) return Decision::DeEscalate;
    return Decision::Stay;
}

Decision resolve_boundaries(Decision d, const DoseTally& tally, int c) {
    if (d == Decision::Escalate && (c + 1 >= tally.size() || tally[c + 1].eliminated))
        return Decision::Stay;
    if (d == Decision::DeEscalate && c == 0) return Decision::Stay;
    return d;
}

void check_dose(const DoseTally& tally, int c) {
    if (c < 0 || c >= tally.size()) throw ParameterError("dose index out of range");
}

}  // namespace

Decision escalation_decision(const DoseTally& tally, int c, const BoinParams& params) {
    check_dose(tally, c);
    if (tally[c].n == 0) throw DeferredError("no completed DLT assessments at current dose");
    return resolve_boundaries(raw_decision(tally[c].rate(), params), tally, c);
}

bool overdose_rule(int y, int n, const BoinParams& params) {
    if (n < params.elimination_min_n || n == 0) return false;
    return beta_tail(BetaPosterior::from_counts(y, n), params.phi) > params.elimination_cutoff;
}

std::optional<int> eliminate_overdoses(DoseTally& tally, const BoinParams& params) {
    auto lowest = tally.lowest_eliminated();
    const int limit = lowest ? *lowest : tally.size();
    for (int j = 0; j < limit; ++j) {
        if (overdose_rule(tally[j].y, tally[j].n, params)) {
            lowest = j;
            break;
        }
    }
    if (lowest)
        for (int j = *lowest; j < tally.size(); ++j) tally[j].eliminated = true;
    return lowest;
}

std::vector<int> elimination_table(const BoinParams& params, int max_n) {
    std::vector<int> table(static_cast<std::size_t>(max_n) + 1, -1);
    for (int n = 0; n <= max_n; ++n) {
        for (int y = 0; y <= n; ++y) {
            if (overdose_rule(y, n, params)) {
                table[static_cast<std::size_t>(n)] = y;
                break;
            }
        }
    }
    return table;
}

double pooled_rate(const DoseTally& tally, int b_star, int j) {
    check_dose(tally, b_star);
    check_dose(tally, j);
    if (b_star > j) throw ParameterError("pooled rate requires b* <= j");
    int y = 0;
    int n = 0;
    for (int k = b_star; k <= j; ++k) {
        y += tally[k].y;
        n += tally[k].n;
    }
    if (n == 0) throw DeferredError("no completed assessments in pooled range");
    return static_cast<double>(y) / n;
}

ReconciledDecision reconciled_decision(const DoseTally& tally, int c,
                                       const BoinParams& params) {
    check_dose(tally, c);
    if (tally[c].n == 0) throw DeferredError("no completed DLT assessments at current dose");

    const double rate_c = tally[c].rate();
    const Decision signal_c = raw_decision(rate_c, params);

    std::optional<int> b_star;
    for (int b = 0; b < c; ++b) {
        if (tally[b].backfilled == 0 || tally[b].n == 0) continue;
        const Decision signal_b = raw_decision(tally[b].rate(), params);
        const bool conflict =
            signal_b == Decision::DeEscalate ||
            (signal_b == Decision::Stay && signal_c == Decision::Escalate);
        if (conflict) {
            b_star = b;
            break;
        }
    }

    ReconciledDecision out;
    if (!b_star) {
        out.decision = resolve_boundaries(signal_c, tally, c);
        out.rate = rate_c;
    } else {
        out.conflict_dose = b_star;
        const double q_c = pooled_rate(tally, *b_star, c);
        out.rate = q_c;
        if (q_c <= params.lambda_e) {
            out.decision = resolve_boundaries(Decision::Escalate, tally, c);
        } else if (q_c > params.lambda_d) {
            out.decision = Decision::DeEscalate;
            int target = *b_star - 1;
            for (int j = c - 1; j >= *b_star; --j) {
                if (pooled_rate(tally, *b_star, j) <= params.lambda_d) {
                    target = j;
                    break;
                }
            }
            out.target = target;
            return out;
        } else {
            out.decision = Decision::Stay;
        }
    }

    switch (out.decision) {
        case Decision::Escalate: out.target = c + 1; break;
        case Decision::DeEscalate: out.target = c - 1; break;
        default: out.target = c; break;
    }
    return out;
}

std::optional<int> select_mtd_boin(const DoseTally& tally, const BoinParams& params) {
    std::vector<int> idx;
    std::vector<double> rates, weights;
    for (int j = 0; j < tally.size(); ++j) {
        if (tally[j].eliminated || tally[j].n == 0) continue;
        idx.push_back(j);
        rates.push_back(tally[j].rate());
        weights.push_back(tally[j].n);
    }
    if (idx.empty()) return std::nullopt;
    const auto fit = pava(rates, weights);
    // Ties inside a pooled block resolve to the highest dose when the block
    // sits below phi and to the lowest when at or above it.
    auto distance = [&](std::size_t i) {
        return std::abs(fit[i] + 1e-10 * static_cast<double>(i + 1) - params.phi);
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < fit.size(); ++i)
        if (distance(i) < distance(best)) best = i;
    return idx[best];
}

}  // namespace bard
