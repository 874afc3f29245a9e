#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metamix/episodes.hpp"
#include "metamix/rng.hpp"

namespace metamix {

enum class MixTarget { Query, Support, Both };
enum class LambdaScope { PerEpisode, PerPair };

inline const char* mix_target_name(MixTarget t) {
    switch (t) {
        case MixTarget::Query: return "query";
        case MixTarget::Support: return "support";
        case MixTarget::Both: return "both";
    }
    return "?";
}

struct MixConfig {
    double alpha_check = 1.0;
    MixTarget target_set = MixTarget::Query;
    LambdaScope lambda_scope = LambdaScope::PerEpisode;
    // Testing hook: bypasses the Beta draw but still consumes the stream.
    std::optional<double> forced_lambda;
};

// Virtual feature-target pair; y is a probability vector with at most two
// nonzero entries when the sources are one-hot.
struct VirtualExample {
    std::vector<double> x;
    std::vector<double> y;
};

using MixedSet = std::vector<VirtualExample>;

// Beta(a, a) via two Gamma(a, 1) draws: g1 / (g1 + g2).
inline double sample_beta(double alpha_check, RngEngine& eng) {
    if (!(alpha_check > 0.0)) {
        throw std::invalid_argument("sample_beta: alpha_check must be positive, got " +
                                    std::to_string(alpha_check));
    }
    for (;;) {
        const double g1 = gamma_draw(eng, alpha_check);
        const double g2 = gamma_draw(eng, alpha_check);
        const double s = g1 + g2;
        if (s > 0.0) return g1 / s;
        // both draws underflowed to zero; redraw
    }
}

// lambda*a + (1-lambda)*b, canonicalized so that the larger weight carries the
// exact Sterbenz complement. This makes (a,b,lambda) == (b,a,1-lambda) hold
// bitwise; the clamp pins the result inside the coordinate envelope and makes
// self-pairing exact for any lambda.
inline double mix_scalar(double a, double b, double lambda) {
    if (lambda < 0.5) return mix_scalar(b, a, 1.0 - lambda);
    const double r = lambda * a + (1.0 - lambda) * b;
    return std::clamp(r, std::min(a, b), std::max(a, b));
}

namespace detail {

inline VirtualExample mix_pair(const Example& first, const Example& second, double lambda) {
    VirtualExample out;
    out.x.resize(first.x.size());
    out.y.resize(first.y.size());
    for (std::size_t k = 0; k < first.x.size(); ++k)
        out.x[k] = mix_scalar(first.x[k], second.x[k], lambda);
    for (std::size_t k = 0; k < first.y.size(); ++k)
        out.y[k] = mix_scalar(first.y[k], second.y[k], lambda);
    return out;
}

}  // namespace detail

inline MixedSet passthrough(const std::vector<Example>& source) {
    MixedSet out;
    out.reserve(source.size());
    for (const auto& ex : source) out.push_back(VirtualExample{ex.x, ex.y});
    return out;
}

// Pairs each example with a shuffled copy of the set, so |mixed| == |source|.
// lambda is drawn once per call (PerEpisode) or per pair (PerPair).
inline MixedSet mix_set(const std::vector<Example>& source, const MixConfig& cfg, RngEngine& eng) {
    if (source.empty()) throw std::invalid_argument("mix_set: source set is empty");
    for (const auto& ex : source) {
        if (ex.y.size() != source[0].y.size() || ex.x.size() != source[0].x.size()) {
            throw std::invalid_argument("mix_set: examples disagree on dimensions");
        }
    }

    double episode_lambda = cfg.forced_lambda ? *cfg.forced_lambda : sample_beta(cfg.alpha_check, eng);

    std::vector<std::size_t> partner(source.size());
    std::iota(partner.begin(), partner.end(), 0);
    std::shuffle(partner.begin(), partner.end(), eng);

    MixedSet out;
    out.reserve(source.size());
    for (std::size_t z = 0; z < source.size(); ++z) {
        double lambda = episode_lambda;
        if (cfg.lambda_scope == LambdaScope::PerPair && z > 0) {
            lambda = cfg.forced_lambda ? *cfg.forced_lambda : sample_beta(cfg.alpha_check, eng);
        }
        out.push_back(detail::mix_pair(source[z], source[partner[z]], lambda));
    }
    return out;
}

// Applies mixing to the configured target set; the other set passes through
// unchanged. BOTH mixes support first, then query, with independent pairings
// and lambda draws.
inline std::pair<MixedSet, MixedSet> mix_for_episode(const Episode& episode, const MixConfig& cfg,
                                                     RngEngine& eng) {
    switch (cfg.target_set) {
        case MixTarget::Query:
            return {passthrough(episode.support), mix_set(episode.query, cfg, eng)};
        case MixTarget::Support:
            return {mix_set(episode.support, cfg, eng), passthrough(episode.query)};
        case MixTarget::Both: {
            MixedSet support = mix_set(episode.support, cfg, eng);
            MixedSet query = mix_set(episode.query, cfg, eng);
            return {std::move(support), std::move(query)};
        }
    }
    throw std::logic_error("mix_for_episode: bad target");
}

}  // namespace metamix
