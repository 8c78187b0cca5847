#include "bard/blrm.hpp"

#include "bard/error.hpp"

namespace bard {

void BlrmParams::validate() const {
    if (!(0.0 < gamma1 && gamma1 < gamma2 && gamma2 < 1.0))
        throw ParameterError("BLRM requires 0 < gamma1 < gamma2 < 1");
    if (!(eta > 0.0 && eta < 1.0)) throw ParameterError("eta must lie in (0, 1)");
    if (dosages.empty()) throw ParameterError("BLRM requires dosages");
    for (std::size_t j = 1; j < dosages.size(); ++j)
        if (!(dosages[j] > dosages[j - 1]))
            throw ParameterError("dosages must be strictly increasing");
    if (max_n1 < 1 || min_mtd_n < 0) throw ParameterError("invalid BLRM sample sizes");
}

std::shared_ptr<const BlrmModel> BlrmParams::make_model() const {
    return std::make_shared<const BlrmModel>(prior, dosages, ref_dosage,
                                             static_cast<std::size_t>(grid_nodes), 6.0,
                                             scale);
}

std::vector<BinomialCount> completed_counts(const DoseTally& tally) {
    std::vector<BinomialCount> out;
    out.reserve(tally.doses.size());
    for (const auto& d : tally.doses) out.push_back({d.y, d.n});
    return out;
}

std::vector<IntervalProbs> blrm_interval_probs(const BlrmPosteriorGrid& post,
                                               const BlrmParams& params) {
    std::vector<IntervalProbs> out;
    out.reserve(post.dose_count());
    for (std::size_t j = 0; j < post.dose_count(); ++j)
        out.push_back(interval_probs(post, j, params.gamma1, params.gamma2));
    return out;
}

BlrmAssessment blrm_decision_from(std::vector<IntervalProbs> probs, int c,
                                  const BlrmParams& params) {
    const int J = static_cast<int>(probs.size());
    if (c < 0 || c >= J) throw ParameterError("dose index out of range");
    BlrmAssessment out;
    out.probs = std::move(probs);
    for (int j = 0; j < J; ++j) {
        const auto& p = out.probs[static_cast<std::size_t>(j)];
        if (p.over >= params.eta) continue;
        if (!out.best_admissible ||
            p.target > out.probs[static_cast<std::size_t>(*out.best_admissible)].target)
            out.best_admissible = j;
    }
    if (!out.best_admissible)
        out.decision = Decision::TerminateAllToxic;
    else if (*out.best_admissible > c)
        out.decision = Decision::Escalate;
    else if (*out.best_admissible < c)
        out.decision = Decision::DeEscalate;
    else
        out.decision = Decision::Stay;
    return out;
}

BlrmAssessment blrm_decision(const DoseTally& tally, int c, const BlrmParams& params,
                             const std::shared_ptr<const BlrmModel>& model) {
    const auto data = completed_counts(tally);
    const auto post = blrm_posterior(model, data);
    return blrm_decision_from(blrm_interval_probs(post, params), c, params);
}

std::optional<int> select_mtd_blrm_from(const DoseTally& tally,
                                        std::span<const IntervalProbs> probs,
                                        const BlrmParams& params) {
    std::optional<int> best;
    for (int j = 0; j < tally.size(); ++j) {
        const auto& p = probs[static_cast<std::size_t>(j)];
        if (tally[j].enrolled < params.min_mtd_n || p.over >= params.eta) continue;
        if (!best || p.target > probs[static_cast<std::size_t>(*best)].target) best = j;
    }
    return best;
}

std::optional<int> select_mtd_blrm(const DoseTally& tally, const BlrmParams& params,
                                   const std::shared_ptr<const BlrmModel>& model) {
    const auto data = completed_counts(tally);
    const auto post = blrm_posterior(model, data);
    const auto probs = blrm_interval_probs(post, params);
    return select_mtd_blrm_from(tally, probs, params);
}

double rigidity_probe(std::span<const BinomialCount> data, const BlrmParams& params,
                      int dose) {
    const auto post = blrm_posterior(params.make_model(), data);
    return interval_probs(post, static_cast<std::size_t>(dose), params.gamma1,
                          params.gamma2)
        .over;
}

}  // namespace bard
