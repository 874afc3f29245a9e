#include "metamix/episodes.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <map>
#include <set>

#include "metamix/dataset.hpp"

using namespace metamix;

namespace {

// Independent split oracle: floor of each proportion, remainder to train.
SplitSizes split_oracle(std::size_t nc) {
    std::size_t tr = (nc * 64) / 100;
    std::size_t va = (nc * 16) / 100;
    std::size_t te = (nc * 20) / 100;
    return SplitSizes{tr + (nc - tr - va - te), va, te};
}

std::shared_ptr<const ClassDataset> make_dataset(std::size_t nc = 25, std::size_t per = 40,
                                                 std::size_t dim = 16, double spread = 0.5,
                                                 std::uint64_t seed = 42) {
    return std::make_shared<const ClassDataset>(generate_synthetic(nc, per, dim, spread, seed));
}

}  // namespace

TEST(Dataset, SplitFollowsProportions) {
    auto oracle = split_oracle(25);
    EXPECT_EQ(oracle.train, 16u);
    EXPECT_EQ(oracle.val, 4u);
    EXPECT_EQ(oracle.test, 5u);

    auto ds = generate_synthetic(25, 40, 16, 0.5, 1);
    EXPECT_EQ(ds.train_ids.size(), oracle.train);
    EXPECT_EQ(ds.val_ids.size(), oracle.val);
    EXPECT_EQ(ds.test_ids.size(), oracle.test);

    for (std::size_t nc : {10, 33, 64, 100, 101}) {
        auto ds2 = generate_synthetic(nc, 4, 2, 0.1, 3);
        auto o = split_oracle(nc);
        EXPECT_EQ(ds2.train_ids.size(), o.train) << nc;
        EXPECT_EQ(ds2.val_ids.size(), o.val) << nc;
        EXPECT_EQ(ds2.test_ids.size(), o.test) << nc;
    }
}

TEST(Dataset, SplitsAreDisjoint) {
    auto ds = generate_synthetic(25, 10, 4, 0.5, 7);
    std::set<std::uint64_t> seen;
    for (auto id : ds.train_ids) EXPECT_TRUE(seen.insert(id).second);
    for (auto id : ds.val_ids) EXPECT_TRUE(seen.insert(id).second);
    for (auto id : ds.test_ids) EXPECT_TRUE(seen.insert(id).second);
    EXPECT_EQ(seen.size(), 25u);
}

TEST(Dataset, SameSeedGivesIdenticalData) {
    EXPECT_TRUE(generate_synthetic(12, 6, 8, 0.7, 99) == generate_synthetic(12, 6, 8, 0.7, 99));
    EXPECT_FALSE(generate_synthetic(12, 6, 8, 0.7, 99) == generate_synthetic(12, 6, 8, 0.7, 100));
}

TEST(Dataset, ZeroSpreadCollapsesToMean) {
    auto ds = generate_synthetic(3, 5, 4, 0.0, 11);
    for (const auto& rec : ds.classes) {
        for (const auto& ex : rec.examples) EXPECT_EQ(ex, rec.examples[0]);
    }
}

TEST(Dataset, FractionIdentityAndCounts) {
    auto ds = generate_synthetic(25, 40, 4, 0.5, 5);
    EXPECT_TRUE(apply_fraction(ds, 1.0, 9) == ds);

    auto half = apply_fraction(ds, 0.5, 9);
    auto third = apply_fraction(ds, 0.3, 9);
    for (auto id : ds.train_ids) {
        EXPECT_EQ(half.class_by_id(id).examples.size(), 20u);
        EXPECT_EQ(third.class_by_id(id).examples.size(), 12u);
    }
    for (auto id : ds.val_ids) EXPECT_EQ(half.class_by_id(id).examples.size(), 40u);
    for (auto id : ds.test_ids) EXPECT_EQ(half.class_by_id(id).examples.size(), 40u);
}

TEST(Dataset, SaveLoadRoundTrip) {
    auto ds = generate_synthetic(10, 8, 6, 0.9, 77);
    const std::string path = "episodes_test_dataset.bin";
    save_dataset(ds, path);
    EXPECT_TRUE(load_dataset(path) == ds);
    std::remove(path.c_str());
}

TEST(Episodes, CardinalitiesForOneAndFiveShot) {
    auto ds = make_dataset();
    RngEngine eng = make_engine(1);

    TaskDistribution d1(ds, Split::Train, 5, 1, 16);
    Episode e1 = sample_episode(d1, eng);
    EXPECT_EQ(e1.support.size(), 5u);
    EXPECT_EQ(e1.query.size(), 80u);

    TaskDistribution d5(ds, Split::Train, 5, 5, 16);
    Episode e5 = sample_episode(d5, eng);
    EXPECT_EQ(e5.support.size(), 25u);
    EXPECT_EQ(e5.query.size(), 80u);
}

TEST(Episodes, SupportAndQueryShareNoExample) {
    auto ds = make_dataset();
    TaskDistribution dist(ds, Split::Train, 5, 5, 16);
    RngEngine eng = make_engine(3);
    for (int trial = 0; trial < 20; ++trial) {
        Episode ep = sample_episode(dist, eng);
        std::set<std::pair<std::uint64_t, std::size_t>> support_ids;
        for (const auto& ex : ep.support) support_ids.emplace(ex.class_id, ex.example_index);
        for (const auto& ex : ep.query) {
            EXPECT_EQ(support_ids.count({ex.class_id, ex.example_index}), 0u);
        }
    }
}

TEST(Episodes, LabelsAreABijectionOntoWays) {
    auto ds = make_dataset();
    TaskDistribution dist(ds, Split::Val, 4, 2, 3);
    RngEngine eng = make_engine(8);
    Episode ep = sample_episode(dist, eng);
    EXPECT_EQ(ep.way_classes.size(), 4u);
    std::map<std::uint64_t, std::size_t> class_to_way;
    for (const auto& ex : ep.support) {
        auto [it, fresh] = class_to_way.emplace(ex.class_id, ex.label());
        if (!fresh) EXPECT_EQ(it->second, ex.label());
        EXPECT_EQ(ep.way_classes[ex.label()], ex.class_id);
    }
    for (const auto& ex : ep.query) EXPECT_EQ(ep.way_classes[ex.label()], ex.class_id);
    EXPECT_EQ(class_to_way.size(), 4u);
}

TEST(Episodes, DeterministicGivenRngState) {
    auto ds = make_dataset();
    TaskDistribution dist(ds, Split::Train, 5, 1, 16);
    RngEngine a = make_engine(12345), b = make_engine(12345);
    for (int i = 0; i < 5; ++i) {
        Episode ea = sample_episode(dist, a);
        Episode eb = sample_episode(dist, b);
        EXPECT_EQ(ea.way_classes, eb.way_classes);
        ASSERT_EQ(ea.support.size(), eb.support.size());
        for (std::size_t j = 0; j < ea.support.size(); ++j) {
            EXPECT_EQ(ea.support[j].x, eb.support[j].x);
            EXPECT_EQ(ea.support[j].y, eb.support[j].y);
        }
    }
}

TEST(Episodes, TrainClassUsageIsRoughlyUniform) {
    auto ds = make_dataset();  // 16 train classes
    TaskDistribution dist(ds, Split::Train, 5, 1, 16);
    RngEngine eng = make_engine(2024);
    std::map<std::uint64_t, std::size_t> counts;
    const int episodes = 10000;
    for (int i = 0; i < episodes; ++i) {
        Episode ep = sample_episode(dist, eng);
        for (auto id : ep.way_classes) counts[id]++;
    }
    const double expected = episodes * 5.0 / 16.0;
    for (auto id : ds->train_ids) {
        EXPECT_GE(counts[id], expected * 0.8) << "class " << id;
        EXPECT_LE(counts[id], expected * 1.2) << "class " << id;
    }
}

TEST(Episodes, FractionedSamplingStaysInKeptSubset) {
    auto base = generate_synthetic(25, 40, 8, 0.5, 31);
    auto pruned = apply_fraction(base, 0.3, 17);

    // Kept (class, feature-vector) pairs.
    std::map<std::uint64_t, std::set<std::vector<double>>> kept;
    for (auto id : pruned.train_ids) {
        for (const auto& ex : pruned.class_by_id(id).examples) kept[id].insert(ex);
    }

    auto shared = std::make_shared<const ClassDataset>(base);
    TaskDistribution dist(shared, Split::Train, 5, 1, 8, 0.3, 17);
    RngEngine eng = make_engine(6);
    for (int trial = 0; trial < 50; ++trial) {
        Episode ep = sample_episode(dist, eng);
        for (const auto& ex : ep.support) EXPECT_EQ(kept[ex.class_id].count(ex.x), 1u);
        for (const auto& ex : ep.query) EXPECT_EQ(kept[ex.class_id].count(ex.x), 1u);
    }
}

TEST(Episodes, ErrorsDistinguishClassesFromExamples) {
    auto ds = make_dataset(25, 10, 4, 0.5, 3);
    RngEngine eng = make_engine(1);

    TaskDistribution too_many_ways(ds, Split::Val, 5, 1, 2);  // val has only 4 classes
    try {
        sample_episode(too_many_ways, eng);
        FAIL() << "expected insufficient-classes error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("classes"), std::string::npos);
    }

    TaskDistribution too_few_examples(ds, Split::Train, 5, 5, 16);  // needs 21 > 10
    try {
        sample_episode(too_few_examples, eng);
        FAIL() << "expected insufficient-examples error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("examples"), std::string::npos);
    }
}

TEST(Episodes, StackExamplesShapes) {
    auto ds = make_dataset();
    TaskDistribution dist(ds, Split::Train, 5, 1, 16);
    RngEngine eng = make_engine(4);
    Episode ep = sample_episode(dist, eng);
    auto [xs, ys] = stack_examples(ep.query);
    EXPECT_EQ(xs.shape(), (Shape{80, 16}));
    EXPECT_EQ(ys.shape(), (Shape{80, 5}));
    for (std::size_t r = 0; r < 80; ++r) {
        EXPECT_DOUBLE_EQ(ys.at(r, ep.query[r].label()), 1.0);
    }
}
