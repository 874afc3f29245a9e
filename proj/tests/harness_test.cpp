#include "metamix/harness.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

using namespace metamix;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

ExperimentConfig tiny_config(const std::string& out) {
    ExperimentConfig cfg;
    cfg.num_classes = 25;
    cfg.per_class = 20;
    cfg.dim = 8;
    cfg.hidden_dims = {16, 16};
    cfg.n_way = 5;
    cfg.k_shot = 1;
    cfg.h_query = 4;
    cfg.iterations = 10;
    cfg.eval_every = 5;
    cfg.val_episodes = 15;
    cfg.eval_episodes = 30;
    cfg.pretrain_iterations = 20;
    cfg.output_dir = out;
    return cfg;
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / "metamix_harness_test" / name;
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Config, DefaultsAreValidAndRoundTrip) {
    ExperimentConfig cfg;
    cfg.validate();
    ExperimentConfig parsed = parse_config(cfg.serialize());
    EXPECT_EQ(parsed, cfg);
    EXPECT_EQ(parse_config("").fingerprint(), cfg.fingerprint());
}

TEST(Config, RoundTripPreservesNonDefaults) {
    ExperimentConfig cfg = tiny_config("some/dir");
    cfg.algorithm = "meta_sgd";
    cfg.metamix = true;
    cfg.alpha_check = 2.0;
    cfg.mix_target = "both";
    cfg.spread = 0.35;
    cfg.hidden_dims = {};
    EXPECT_EQ(parse_config(cfg.serialize()), cfg);
}

TEST(Config, UnknownKeyReportsLine) {
    try {
        parse_config("[data]\nnum_classes = 10\nbogus_key = 3\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("bogus_key"), std::string::npos) << msg;
    }
}

TEST(Config, BadValueReportsField) {
    try {
        parse_config("[meta]\ninner_lr = banana\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("inner_lr"), std::string::npos);
    }
}

TEST(Config, FingerprintTracksResolvedFields) {
    ExperimentConfig a;
    ExperimentConfig b;
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    b.seed = 2;
    EXPECT_NE(a.fingerprint(), b.fingerprint());
    b = a;
    b.metamix = true;
    EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(Config, DisabledMixNormalizesToVanilla) {
    // With metamix off the mix sub-keys are canonicalized, so the resolved
    // config and fingerprint match a plain vanilla config.
    ExperimentConfig vanilla;
    ExperimentConfig noisy = parse_config(
        "[mix]\nmetamix = off\nalpha_check = 8\nmix_target = both\nlambda_scope = per_pair\n");
    EXPECT_EQ(noisy, vanilla);
    EXPECT_EQ(noisy.fingerprint(), vanilla.fingerprint());
}

TEST(Config, OverridesApplyInAnyOrder) {
    ExperimentConfig cfg;
    apply_override(cfg, "alpha_check=4");
    apply_override(cfg, "metamix=on");
    cfg.normalize();
    cfg.validate();
    EXPECT_TRUE(cfg.metamix);
    EXPECT_DOUBLE_EQ(cfg.alpha_check, 4.0);
    EXPECT_THROW(apply_override(cfg, "nope=1"), ConfigError);
}

TEST(Harness, ZeroIterationsReportsChanceLevel) {
    ExperimentConfig cfg = tiny_config(scratch("zero_iters").string());
    cfg.iterations = 0;
    cfg.eval_episodes = 300;
    RunOutcome o = run_experiment(cfg);
    EXPECT_EQ(o.exit_code, kExitOk);
    EXPECT_GE(o.test_mean, 0.12);
    EXPECT_LE(o.test_mean, 0.28);
}

TEST(Harness, ReportMeanMatchesPerEpisodeList) {
    ExperimentConfig cfg = tiny_config(scratch("mean_check").string());
    RunOutcome o = run_experiment(cfg);
    auto j = nlohmann::json::parse(slurp(o.out_dir / "report.json"));
    double mean = j["test"]["mean_accuracy"].get<double>();
    double recomputed = 0.0;
    for (const auto& v : j["test"]["per_episode_accuracy"]) recomputed += v.get<double>();
    recomputed /= j["test"]["per_episode_accuracy"].size();
    EXPECT_NEAR(mean, recomputed, 1e-12);
    EXPECT_EQ(j["config_fingerprint"].get<std::string>(), cfg.fingerprint());
}

TEST(Harness, RerunsAreByteIdentical) {
    ExperimentConfig a = tiny_config(scratch("det_a").string());
    ExperimentConfig b = tiny_config(scratch("det_b").string());
    RunOutcome oa = run_experiment(a);
    RunOutcome ob = run_experiment(b);
    EXPECT_EQ(slurp(oa.out_dir / "results.csv"), slurp(ob.out_dir / "results.csv"));
    // report.json embeds the fingerprint, which covers output_dir; compare the
    // rest by normalizing that single field.
    auto ja = slurp(oa.out_dir / "report.json");
    auto jb = slurp(ob.out_dir / "report.json");
    auto norm = [](std::string s, const std::string& fp) {
        auto pos = s.find(fp);
        if (pos != std::string::npos) s.replace(pos, fp.size(), "FP");
        return s;
    };
    EXPECT_EQ(norm(ja, a.fingerprint()), norm(jb, b.fingerprint()));

    // Same directory rerun: bitwise stable end to end.
    RunOutcome oc = run_experiment(a);
    EXPECT_EQ(slurp(oc.out_dir / "report.json"), ja);
}

TEST(Harness, MixingOnOffChangesOnlyAccuracyFields) {
    ExperimentConfig off_cfg = tiny_config(scratch("mix_off").string());
    ExperimentConfig on_cfg = tiny_config(scratch("mix_on").string());
    on_cfg.metamix = true;
    RunOutcome o1 = run_experiment(off_cfg);
    RunOutcome o2 = run_experiment(on_cfg);
    auto j1 = nlohmann::json::parse(slurp(o1.out_dir / "report.json"));
    auto j2 = nlohmann::json::parse(slurp(o2.out_dir / "report.json"));
    EXPECT_EQ(j1["test"]["num_episodes"], j2["test"]["num_episodes"]);
    EXPECT_EQ(j1["curve"].size(), j2["curve"].size());
    ASSERT_EQ(j1["validation"].size(), j2["validation"].size());
    for (std::size_t i = 0; i < j1["validation"].size(); ++i) {
        EXPECT_EQ(j1["validation"][i]["iteration"], j2["validation"][i]["iteration"]);
        EXPECT_EQ(j1["validation"][i]["num_episodes"], j2["validation"][i]["num_episodes"]);
    }
}

TEST(Harness, NonFiniteLossSavesPartialCurve) {
    ExperimentConfig cfg = tiny_config(scratch("blowup").string());
    cfg.inner_lr = 1e300;
    RunOutcome o = run_experiment(cfg);
    EXPECT_EQ(o.exit_code, kExitNumericalError);
    auto j = nlohmann::json::parse(slurp(o.out_dir / "report.json"));
    EXPECT_TRUE(j["test"].is_null());
    EXPECT_FALSE(j["aborted"].is_null());
}

TEST(Harness, OutputRootEnvVarIsHonored) {
    fs::path root = scratch("env_root");
    setenv("METAMIX_OUTPUT_ROOT", root.string().c_str(), 1);
    ExperimentConfig cfg = tiny_config("nested/run");
    cfg.iterations = 0;
    cfg.eval_episodes = 5;
    RunOutcome o = run_experiment(cfg);
    unsetenv("METAMIX_OUTPUT_ROOT");
    EXPECT_TRUE(fs::exists(root / "nested/run/report.json"));
    EXPECT_EQ(o.out_dir, root / "nested/run");
}

TEST(Harness, GenDataRoundTripAndSplitHeader) {
    fs::path dir = scratch("gendata");
    fs::create_directories(dir);
    fs::path file = dir / "ds.bin";
    std::string summary = gen_data(25, 12, 6, 0.4, 9, file.string());
    EXPECT_NE(summary.find("16/4/5"), std::string::npos) << summary;
    ClassDataset loaded = load_dataset(file.string());
    EXPECT_TRUE(loaded == generate_synthetic(25, 12, 6, 0.4, 9));
    // Sampling constraints are checked at sampling time, not generation time.
    auto shared = std::make_shared<const ClassDataset>(loaded);
    TaskDistribution dist(shared, Split::Train, 5, 5, 16);  // needs 21 > 12
    RngEngine eng = make_engine(1);
    EXPECT_THROW(sample_episode(dist, eng), std::runtime_error);
}

TEST(Suite, AblationProducesAllFourVariants) {
    fs::path dir = scratch("suite_ablation");
    ExperimentConfig base = tiny_config("unused");
    base.iterations = 4;
    base.eval_every = 4;
    base.val_episodes = 5;
    base.eval_episodes = 10;
    std::ostringstream log;
    int rc = run_suite("ablation", base, {1, 2}, dir.string(), log);
    EXPECT_EQ(rc, kExitOk);

    std::string csv = slurp(dir / "suite_results.csv");
    for (const char* variant : {"vanilla", "mix-q", "mix-s", "mix-qs"}) {
        for (const char* seed : {"1", "2"}) {
            std::string row = std::string(variant) + "," + seed + ",ok";
            EXPECT_NE(csv.find(row), std::string::npos) << row << "\n" << csv;
        }
    }
    EXPECT_TRUE(fs::exists(dir / "suite_aggregate.csv"));
    EXPECT_TRUE(fs::exists(dir / "paired_diff.csv"));

    // Aggregation is stable under re-aggregation.
    std::string agg = slurp(dir / "suite_aggregate.csv");
    std::ostringstream log2;
    reaggregate_suite(dir.string(), log2);
    EXPECT_EQ(slurp(dir / "suite_aggregate.csv"), agg);
}

TEST(Suite, SweepVariantCountsAndPlotFiles) {
    EXPECT_EQ(suite_variants("beta_sweep").size(), 8u);
    EXPECT_EQ(suite_variants("fraction_sweep").size(), 4u);
    EXPECT_EQ(suite_variants("main").size(), 8u);
    EXPECT_THROW(suite_variants("nope"), ConfigError);

    fs::path dir = scratch("suite_fraction");
    ExperimentConfig base = tiny_config("unused");
    base.per_class = 20;
    base.h_query = 2;  // K+H=3 <= ceil(0.3*20)=6
    base.iterations = 2;
    base.eval_every = 2;
    base.val_episodes = 4;
    base.eval_episodes = 6;
    std::ostringstream log;
    int rc = run_suite("fraction_sweep", base, {1, 2}, dir.string(), log);
    EXPECT_EQ(rc, kExitOk);
    std::string csv = slurp(dir / "suite_results.csv");
    int rows = 0;
    for (std::size_t pos = 0; (pos = csv.find("\nfrac_", pos)) != std::string::npos; ++pos) ++rows;
    EXPECT_EQ(rows, 8);  // 4 fractions x 2 seeds
    EXPECT_TRUE(fs::exists(dir / "fraction_sweep.dat"));
    std::string plot = slurp(dir / "fraction_sweep.dat");
    EXPECT_NE(plot.find("1 "), std::string::npos);
    EXPECT_NE(plot.find("0.3 "), std::string::npos);
}

TEST(Suite, FailedMemberIsMarkedAndOthersContinue) {
    fs::path dir = scratch("suite_partial");
    ExperimentConfig base = tiny_config("unused");
    base.per_class = 20;
    base.h_query = 16;  // K+H=17: fraction 0.3 keeps only 6 examples -> fails
    base.iterations = 2;
    base.eval_every = 2;
    base.val_episodes = 4;
    base.eval_episodes = 6;
    std::ostringstream log;
    int rc = run_suite("fraction_sweep", base, {1}, dir.string(), log);
    EXPECT_EQ(rc, kExitPartialSuite);
    std::string csv = slurp(dir / "suite_results.csv");
    EXPECT_NE(csv.find("frac_1,1,ok"), std::string::npos) << csv;
    EXPECT_NE(csv.find("frac_0.3,1,failed"), std::string::npos) << csv;
}
