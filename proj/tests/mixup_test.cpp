#include "metamix/mixup.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "metamix/dataset.hpp"
#include "metamix/episodes.hpp"

using namespace metamix;

namespace {

Example make_example(std::vector<double> x, std::size_t label, std::size_t ways) {
    Example ex;
    ex.x = std::move(x);
    ex.y.assign(ways, 0.0);
    ex.y[label] = 1.0;
    return ex;
}

std::vector<Example> random_set(std::size_t n, std::size_t dim, std::size_t ways,
                                std::mt19937_64& eng) {
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    std::uniform_int_distribution<std::size_t> label(0, ways - 1);
    std::vector<Example> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(dim);
        for (auto& v : x) v = unif(eng);
        out.push_back(make_example(std::move(x), label(eng), ways));
    }
    return out;
}

Episode toy_episode(std::mt19937_64& eng, std::size_t n = 5, std::size_t k = 1,
                    std::size_t h = 4) {
    Episode ep;
    for (std::size_t way = 0; way < n; ++way) {
        ep.way_classes.push_back(way);
        auto sup = random_set(k, 3, n, eng);
        auto qry = random_set(h, 3, n, eng);
        for (auto& ex : sup) {
            ex.y.assign(n, 0.0);
            ex.y[way] = 1.0;
            ep.support.push_back(ex);
        }
        for (auto& ex : qry) {
            ex.y.assign(n, 0.0);
            ex.y[way] = 1.0;
            ep.query.push_back(ex);
        }
    }
    return ep;
}

}  // namespace

TEST(Beta, UniformWhenAlphaIsOne) {
    RngEngine eng = make_engine(100);
    const int n = 100000;
    std::vector<double> draws(n);
    double mean = 0.0;
    for (auto& d : draws) {
        d = sample_beta(1.0, eng);
        ASSERT_GE(d, 0.0);
        ASSERT_LE(d, 1.0);
        mean += d;
    }
    mean /= n;
    EXPECT_GE(mean, 0.48);
    EXPECT_LE(mean, 0.52);

    // Kolmogorov-Smirnov statistic against U(0,1).
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        ks = std::max(ks, std::abs((i + 1.0) / n - draws[i]));
        ks = std::max(ks, std::abs(draws[i] - static_cast<double>(i) / n));
    }
    EXPECT_LT(ks, 0.01);
}

TEST(Beta, VarianceDecreasesWithAlpha) {
    RngEngine eng = make_engine(7);
    auto variance = [&](double alpha) {
        const int n = 100000;
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = sample_beta(alpha, eng);
            s += d;
            s2 += d * d;
        }
        double m = s / n;
        return s2 / n - m * m;
    };
    EXPECT_LT(variance(8.0), variance(0.5));
}

TEST(Beta, DrawsStayInUnitIntervalForExtremeAlpha) {
    RngEngine eng = make_engine(9);
    for (double alpha : {0.1, 0.5, 2.0, 8.0, 100.0}) {
        for (int i = 0; i < 2000; ++i) {
            double d = sample_beta(alpha, eng);
            ASSERT_GE(d, 0.0) << alpha;
            ASSERT_LE(d, 1.0) << alpha;
        }
    }
}

TEST(Beta, RejectsNonPositiveAlpha) {
    RngEngine eng = make_engine(1);
    EXPECT_THROW(sample_beta(0.0, eng), std::invalid_argument);
    EXPECT_THROW(sample_beta(-1.0, eng), std::invalid_argument);
}

TEST(MixScalar, LawsHoldOverRandomizedTrials) {
    std::mt19937_64 eng(55);
    std::uniform_real_distribution<double> val(-10.0, 10.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const double a = val(eng), b = val(eng), lam = unif(eng);
        const double m = mix_scalar(a, b, lam);
        // convexity, exact symmetry, exact self-pairing
        EXPECT_GE(m, std::min(a, b));
        EXPECT_LE(m, std::max(a, b));
        EXPECT_EQ(m, mix_scalar(b, a, 1.0 - lam));
        EXPECT_EQ(mix_scalar(a, a, lam), a);
    }
    EXPECT_EQ(mix_scalar(3.25, -7.5, 1.0), 3.25);
    EXPECT_EQ(mix_scalar(3.25, -7.5, 0.0), -7.5);
}

TEST(MixSet, LabelMassAndSparsity) {
    std::mt19937_64 gen(21);
    RngEngine eng = make_engine(22);
    MixConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
        auto source = random_set(12, 4, 5, gen);
        MixedSet mixed = mix_set(source, cfg, eng);
        ASSERT_EQ(mixed.size(), source.size());
        for (const auto& v : mixed) {
            double mass = 0.0;
            int nonzero = 0;
            for (double p : v.y) {
                EXPECT_GE(p, 0.0);
                EXPECT_LE(p, 1.0);
                mass += p;
                if (p != 0.0) ++nonzero;
            }
            EXPECT_NEAR(mass, 1.0, 1e-12);
            EXPECT_LE(nonzero, 2);
        }
    }
}

TEST(MixSet, ForcedLambdaOneIsIdentity) {
    std::mt19937_64 gen(33);
    RngEngine eng = make_engine(34);
    MixConfig cfg;
    cfg.forced_lambda = 1.0;
    auto source = random_set(9, 6, 4, gen);
    MixedSet mixed = mix_set(source, cfg, eng);
    ASSERT_EQ(mixed.size(), source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        EXPECT_EQ(mixed[i].x, source[i].x);
        EXPECT_EQ(mixed[i].y, source[i].y);
    }
}

TEST(MixSet, MidpointAndHandValues) {
    Example e1 = make_example({1.0, 0.0}, 0, 5);
    Example e2 = make_example({0.0, 1.0}, 1, 5);

    auto half = detail::mix_pair(e1, e2, 0.5);
    EXPECT_DOUBLE_EQ(half.y[0], 0.5);
    EXPECT_DOUBLE_EQ(half.y[1], 0.5);
    for (std::size_t k = 2; k < 5; ++k) EXPECT_DOUBLE_EQ(half.y[k], 0.0);

    auto third = detail::mix_pair(e1, e2, 0.3);
    EXPECT_NEAR(third.x[0], 0.3, 1e-15);
    EXPECT_NEAR(third.x[1], 0.7, 1e-15);
}

TEST(MixSet, SingleElementSetIsFixedPoint) {
    RngEngine eng = make_engine(77);
    MixConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Example> source{make_example({0.1, -2.3, 0.7}, 2, 4)};
        MixedSet mixed = mix_set(source, cfg, eng);
        EXPECT_EQ(mixed[0].x, source[0].x);
        EXPECT_EQ(mixed[0].y, source[0].y);
    }
}

TEST(MixSet, PerPairScopeDrawsDistinctLambdas) {
    std::mt19937_64 gen(41);
    RngEngine eng = make_engine(42);
    MixConfig cfg;
    cfg.lambda_scope = LambdaScope::PerPair;
    // With one-hot pairs, a mixed label's nonzero entries are {lam, 1-lam};
    // collect distinct lambdas across rows.
    auto source = random_set(40, 2, 8, gen);
    MixedSet mixed = mix_set(source, cfg, eng);
    std::set<double> lambdas;
    for (const auto& v : mixed) {
        double maxe = 0.0;
        for (double p : v.y) maxe = std::max(maxe, p);
        if (maxe < 1.0) lambdas.insert(maxe);
    }
    EXPECT_GE(lambdas.size(), 5u);
}

TEST(MixEpisode, QueryTargetLeavesSupportUntouched) {
    std::mt19937_64 gen(51);
    RngEngine eng = make_engine(52);
    Episode ep = toy_episode(gen);
    MixConfig cfg;
    auto [sup, qry] = mix_for_episode(ep, cfg, eng);
    ASSERT_EQ(sup.size(), ep.support.size());
    for (std::size_t i = 0; i < sup.size(); ++i) {
        EXPECT_EQ(sup[i].x, ep.support[i].x);
        EXPECT_EQ(sup[i].y, ep.support[i].y);
    }
    EXPECT_EQ(qry.size(), ep.query.size());
}

TEST(MixEpisode, SupportTargetKeepsCardinality) {
    std::mt19937_64 gen(61);
    RngEngine eng = make_engine(62);
    Episode ep = toy_episode(gen, 5, 1, 4);
    MixConfig cfg;
    cfg.target_set = MixTarget::Support;
    auto [sup, qry] = mix_for_episode(ep, cfg, eng);
    EXPECT_EQ(sup.size(), 5u);
    for (std::size_t i = 0; i < qry.size(); ++i) {
        EXPECT_EQ(qry[i].x, ep.query[i].x);
        EXPECT_EQ(qry[i].y, ep.query[i].y);
    }
}

TEST(MixEpisode, BothWithLambdaOneIsIdentity) {
    std::mt19937_64 gen(71);
    RngEngine eng = make_engine(72);
    Episode ep = toy_episode(gen);
    MixConfig cfg;
    cfg.target_set = MixTarget::Both;
    cfg.forced_lambda = 1.0;
    auto [sup, qry] = mix_for_episode(ep, cfg, eng);
    for (std::size_t i = 0; i < sup.size(); ++i) {
        EXPECT_EQ(sup[i].x, ep.support[i].x);
        EXPECT_EQ(sup[i].y, ep.support[i].y);
    }
    for (std::size_t i = 0; i < qry.size(); ++i) {
        EXPECT_EQ(qry[i].x, ep.query[i].x);
        EXPECT_EQ(qry[i].y, ep.query[i].y);
    }
}

TEST(MixSet, ConvexityAcrossFullPipeline) {
    std::mt19937_64 gen(81);
    RngEngine eng = make_engine(82);
    MixConfig cfg;
    cfg.lambda_scope = LambdaScope::PerPair;
    for (int trial = 0; trial < 100; ++trial) {
        auto source = random_set(16, 5, 6, gen);
        MixedSet mixed = mix_set(source, cfg, eng);
        double lo = 1e300, hi = -1e300;
        for (const auto& ex : source) {
            for (double v : ex.x) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        for (const auto& v : mixed) {
            for (double x : v.x) {
                EXPECT_GE(x, lo);
                EXPECT_LE(x, hi);
            }
        }
    }
}

TEST(MixSet, EmptySourceRejected) {
    RngEngine eng = make_engine(1);
    MixConfig cfg;
    std::vector<Example> empty;
    EXPECT_THROW(mix_set(empty, cfg, eng), std::invalid_argument);
}
