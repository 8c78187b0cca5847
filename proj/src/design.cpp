#include "bard/design.hpp"

#include <algorithm>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "bard/error.hpp"

namespace bard {

void DesignConfig::validate() const {
    if (dose_count < 1) throw ConfigError("design needs at least one dose");
    if (cohort_size < 1) throw ConfigError("cohort size must be positive");
    if (n_cap < 1) throw ConfigError("n_cap must be positive");
    if (n2 < 0 || n2_single < 0) throw ConfigError("stage-2 sample sizes must be nonnegative");
    if (!(r > 0.5 && r <= 1.0)) throw ConfigError("r must lie in (0.5, 1]");
    try {
        if (engine == EngineKind::Boin) {
            boin.validate();
        } else {
            blrm.validate();
            if (static_cast<int>(blrm.dosages.size()) != dose_count)
                throw ConfigError("BLRM dosages must list one dosage per dose");
        }
        balance.validate();
        gating.validate();
        utility.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    for (double a : dirichlet_prior)
        if (!(a > 0.0)) throw ConfigError("Dirichlet prior must be positive");
}

DesignConfig DesignConfig::bard_boin(int dose_count) {
    DesignConfig d;
    d.name = "bard-boin";
    d.dose_count = dose_count;
    if (dose_count == 3) d.boin.max_n1 = 18;
    return d;
}

DesignConfig DesignConfig::bard_blrm() {
    DesignConfig d;
    d.name = "bard-blrm";
    d.engine = EngineKind::Blrm;
    d.dose_count = static_cast<int>(d.blrm.dosages.size());
    return d;
}

DesignConfig comparator_design(DesignConfig design, ComparatorMode mode) {
    const std::string base = design.engine == EngineKind::Boin ? "boin" : "blrm";
    switch (mode) {
        case ComparatorMode::Bard:
            design.stage2 = Stage2Mode::Conditional;
            break;
        case ComparatorMode::SimpleRandomization:
            design.name = base + "-sr";
            design.stage2 = Stage2Mode::SimpleRandom;
            design.backfill = false;
            break;
        case ComparatorMode::PocockSimonFull:
            design.name = base + "-ps";
            design.stage2 = Stage2Mode::FullMinimization;
            break;
    }
    return design;
}

struct DesignContext::ProbCache {
    static constexpr std::size_t max_entries = 1 << 18;
    std::shared_mutex mu;
    std::unordered_map<std::string, std::vector<IntervalProbs>> map;
};

std::vector<IntervalProbs> DesignContext::blrm_probs(std::span<const BinomialCount> data) const {
    std::string key;
    key.reserve(data.size() * 2);
    for (const auto& c : data) {
        key.push_back(static_cast<char>(c.y));
        key.push_back(static_cast<char>(c.n));
    }
    const bool cacheable = std::all_of(data.begin(), data.end(),
                                       [](const BinomialCount& c) { return c.n < 128; });
    if (cacheable) {
        std::shared_lock lock(cache_->mu);
        if (auto it = cache_->map.find(key); it != cache_->map.end()) return it->second;
    }
    auto probs = blrm_interval_probs(blrm_posterior(blrm_model, data), design.blrm);
    if (cacheable) {
        std::unique_lock lock(cache_->mu);
        if (cache_->map.size() >= ProbCache::max_entries) cache_->map.clear();
        cache_->map.emplace(std::move(key), probs);
    }
    return probs;
}

DesignContext::DesignContext(DesignConfig cfg)
    : design(std::move(cfg)), cache_(std::make_shared<ProbCache>()) {
    design.validate();
    if (design.engine == EngineKind::Blrm) blrm_model = design.blrm.make_model();
    else elimination_min_y = elimination_table(design.boin, 256);
}

bool DesignContext::eliminates(int y, int n) const {
    if (n < static_cast<int>(elimination_min_y.size())) {
        const int t = elimination_min_y[static_cast<std::size_t>(n)];
        return t >= 0 && y >= t;
    }
    return overdose_rule(y, n, design.boin);
}

}  // namespace bard
