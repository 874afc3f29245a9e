#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "metamix/config.hpp"
#include "metamix/dataset.hpp"
#include "metamix/episodes.hpp"
#include "metamix/metalearn.hpp"

namespace metamix {

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitNumericalError = 2;
inline constexpr int kExitPartialSuite = 3;

// Relative output paths are rooted at $METAMIX_OUTPUT_ROOT when set.
inline std::filesystem::path resolve_output_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    if (p.is_relative()) {
        if (const char* root = std::getenv("METAMIX_OUTPUT_ROOT")) {
            return std::filesystem::path(root) / p;
        }
    }
    return p;
}

struct RunOutcome {
    int exit_code = kExitOk;
    std::string message;
    std::filesystem::path out_dir;
    double test_mean = -1.0;
    double test_ci = 0.0;
    std::string fingerprint;
};

namespace detail {

inline double elapsed_seconds(std::chrono::steady_clock::time_point from) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
    os << text;
}

inline nlohmann::ordered_json eval_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["mean_accuracy"] = r.mean_accuracy;
    j["ci95_halfwidth"] = r.ci95_halfwidth;
    j["num_episodes"] = r.num_episodes;
    j["per_episode_accuracy"] = r.per_episode_accuracy;
    return j;
}

}  // namespace detail

// Trains per the config, evaluates on the test split, and writes report.json,
// results.csv, and resolved-config.txt (all byte-deterministic for a fixed
// config) plus timing.txt (wall-clock, intentionally separate).
inline RunOutcome run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunOutcome outcome;
    outcome.fingerprint = cfg.fingerprint();
    outcome.out_dir = resolve_output_dir(cfg.output_dir);
    std::filesystem::create_directories(outcome.out_dir);

    const auto t_start = std::chrono::steady_clock::now();

    auto dataset = std::make_shared<const ClassDataset>(
        cfg.dataset_path.empty()
            ? generate_synthetic(cfg.num_classes, cfg.per_class, cfg.dim, cfg.spread,
                                 derive_seed(cfg.seed, "data"))
            : load_dataset(cfg.dataset_path));

    TaskDistribution train_dist(dataset, Split::Train, cfg.n_way, cfg.k_shot, cfg.h_query,
                                cfg.fraction, derive_seed(cfg.seed, "fraction"));
    TaskDistribution val_dist = clamped_distribution(dataset, Split::Val, cfg.n_way, cfg.k_shot,
                                                     cfg.h_query);
    TaskDistribution test_dist = clamped_distribution(dataset, Split::Test, cfg.n_way, cfg.k_shot,
                                                      cfg.h_query);

    TrainOptions opt;
    opt.arch.input_dim = dataset->dim;
    opt.arch.hidden_dims = cfg.hidden_dims;
    opt.arch.output_dim = cfg.n_way;
    opt.meta = cfg.meta_config();
    opt.iterations = cfg.iterations;
    opt.eval_every = cfg.eval_every;
    opt.val_episodes = cfg.val_episodes;
    opt.master_seed = cfg.seed;

    TrainResult result = train(train_dist, val_dist, opt);
    const double train_seconds = detail::elapsed_seconds(t_start);

    std::optional<EvalReport> test;
    double test_seconds = 0.0;
    if (!result.abort_reason) {
        const auto t_eval = std::chrono::steady_clock::now();
        test = evaluate(result.state, test_dist, cfg.eval_episodes, opt.meta,
                        derive_seed(cfg.seed, "test"));
        test->config_fingerprint = outcome.fingerprint;
        test_seconds = detail::elapsed_seconds(t_eval);
        test->wall_seconds = test_seconds;
        outcome.test_mean = test->mean_accuracy;
        outcome.test_ci = test->ci95_halfwidth;
    }

    // resolved-config.txt: every default expanded.
    detail::write_text(outcome.out_dir / "resolved-config.txt", cfg.serialize());

    // report.json
    nlohmann::ordered_json report;
    report["config_fingerprint"] = outcome.fingerprint;
    report["algorithm"] = cfg.algorithm;
    report["metamix"] = cfg.metamix;
    report["best_iteration"] = result.best_iteration;
    report["best_val_accuracy"] = result.best_val_accuracy;
    if (parse_algorithm(cfg.algorithm) == Algorithm::MtlLite) {
        report["pretrain_accuracy"] = result.pretrain_accuracy;
    }
    report["aborted"] = result.abort_reason ? nlohmann::ordered_json(*result.abort_reason)
                                            : nlohmann::ordered_json(nullptr);
    report["test"] = test ? detail::eval_to_json(*test) : nlohmann::ordered_json(nullptr);
    {
        nlohmann::ordered_json vals = nlohmann::ordered_json::array();
        for (const auto& [iter, rep] : result.val_reports) {
            nlohmann::ordered_json v;
            v["iteration"] = iter;
            v["mean_accuracy"] = rep.mean_accuracy;
            v["ci95_halfwidth"] = rep.ci95_halfwidth;
            v["num_episodes"] = rep.num_episodes;
            vals.push_back(std::move(v));
        }
        report["validation"] = std::move(vals);
    }
    {
        nlohmann::ordered_json curve = nlohmann::ordered_json::array();
        for (const auto& p : result.curve) {
            nlohmann::ordered_json c;
            c["iteration"] = p.iteration;
            c["train_loss"] = p.train_loss;
            curve.push_back(std::move(c));
        }
        report["curve"] = std::move(curve);
    }
    detail::write_text(outcome.out_dir / "report.json", report.dump(2) + "\n");

    // results.csv: one row per completed evaluation.
    {
        std::ostringstream csv;
        csv << "iteration,split,mean_accuracy,ci95\n";
        for (const auto& [iter, rep] : result.val_reports) {
            csv << iter << ",val," << detail::format_double(rep.mean_accuracy) << ","
                << detail::format_double(rep.ci95_halfwidth) << "\n";
        }
        if (test) {
            csv << result.best_iteration << ",test," << detail::format_double(test->mean_accuracy)
                << "," << detail::format_double(test->ci95_halfwidth) << "\n";
        }
        detail::write_text(outcome.out_dir / "results.csv", csv.str());
    }

    // timing.txt: wall-clock only, never byte-compared.
    {
        char buf[160];
        std::snprintf(buf, sizeof buf, "train_seconds %.3f\ntest_eval_seconds %.3f\ntotal_seconds %.3f\n",
                      train_seconds, test_seconds, detail::elapsed_seconds(t_start));
        detail::write_text(outcome.out_dir / "timing.txt", buf);
    }

    if (result.abort_reason) {
        outcome.exit_code = kExitNumericalError;
        outcome.message = *result.abort_reason;
    } else {
        outcome.message = "test accuracy " + detail::format_double(test->mean_accuracy) + " +/- " +
                          detail::format_double(test->ci95_halfwidth);
    }
    return outcome;
}

// ---- suites ------------------------------------------------------------------

struct SuiteVariant {
    std::string name;
    std::string pair_base;  // variant to subtract for paired differences; empty if none
    double axis = std::numeric_limits<double>::quiet_NaN();  // sweep coordinate
    std::function<void(ExperimentConfig&)> apply;
};

inline std::vector<SuiteVariant> suite_variants(const std::string& suite) {
    std::vector<SuiteVariant> out;
    if (suite == "main") {
        for (const char* algo : {"maml", "fomaml", "meta_sgd", "mtl_lite"}) {
            out.push_back({algo, "", NAN, [a = std::string(algo)](ExperimentConfig& c) {
                               c.algorithm = a;
                               c.metamix = false;
                           }});
            out.push_back({std::string("metamix+") + algo, algo, NAN,
                           [a = std::string(algo)](ExperimentConfig& c) {
                               c.algorithm = a;
                               c.metamix = true;
                           }});
        }
    } else if (suite == "ablation") {
        out.push_back({"vanilla", "", NAN, [](ExperimentConfig& c) { c.metamix = false; }});
        for (const char* target : {"query", "support", "both"}) {
            std::string name = std::string("mix-") + (target[0] == 'q' ? "q" : target[0] == 's' ? "s" : "qs");
            out.push_back({name, "vanilla", NAN, [t = std::string(target)](ExperimentConfig& c) {
                               c.metamix = true;
                               c.mix_target = t;
                           }});
        }
    } else if (suite == "beta_sweep") {
        for (double alpha : {0.1, 0.2, 0.5, 0.8, 1.0, 2.0, 4.0, 8.0}) {
            out.push_back({"alpha_" + detail::format_double(alpha), "", alpha,
                           [alpha](ExperimentConfig& c) {
                               c.metamix = true;
                               c.alpha_check = alpha;
                           }});
        }
    } else if (suite == "fraction_sweep") {
        for (double fraction : {1.0, 0.5, 0.4, 0.3}) {
            out.push_back({"frac_" + detail::format_double(fraction), "", fraction,
                           [fraction](ExperimentConfig& c) { c.fraction = fraction; }});
        }
    } else {
        throw ConfigError("unknown suite '" + suite + "' (expected main, ablation, beta_sweep, "
                          "fraction_sweep)");
    }
    return out;
}

struct SuiteRow {
    std::string variant;
    std::uint64_t seed = 0;
    bool ok = false;
    double mean = 0.0;
    double ci = 0.0;
};

namespace detail {

// suite_aggregate.csv, paired_diff.csv, and the two-column sweep plot file.
inline void write_suite_summaries(const std::filesystem::path& dir, const std::string& suite,
                                  const std::vector<SuiteVariant>& variants,
                                  const std::vector<SuiteRow>& rows) {
    auto rows_for = [&](const std::string& variant) {
        std::vector<const SuiteRow*> out;
        for (const auto& r : rows)
            if (r.variant == variant && r.ok) out.push_back(&r);
        return out;
    };

    std::ostringstream agg;
    agg << "variant,seeds_ok,mean_accuracy,stddev_across_seeds\n";
    for (const auto& v : variants) {
        auto vr = rows_for(v.name);
        double mean = 0.0, sd = 0.0;
        for (auto* r : vr) mean += r->mean;
        if (!vr.empty()) mean /= static_cast<double>(vr.size());
        if (vr.size() > 1) {
            for (auto* r : vr) sd += (r->mean - mean) * (r->mean - mean);
            sd = std::sqrt(sd / static_cast<double>(vr.size() - 1));
        }
        agg << v.name << "," << vr.size() << "," << format_double(mean) << ","
            << format_double(sd) << "\n";
    }
    write_text(dir / "suite_aggregate.csv", agg.str());

    bool any_pairs = false;
    std::ostringstream paired;
    paired << "variant,base,seed,variant_accuracy,base_accuracy,diff\n";
    for (const auto& v : variants) {
        if (v.pair_base.empty()) continue;
        for (const auto& r : rows) {
            if (r.variant != v.name || !r.ok) continue;
            for (const auto& b : rows) {
                if (b.variant != v.pair_base || b.seed != r.seed || !b.ok) continue;
                paired << v.name << "," << v.pair_base << "," << r.seed << ","
                       << format_double(r.mean) << "," << format_double(b.mean) << ","
                       << format_double(r.mean - b.mean) << "\n";
                any_pairs = true;
            }
        }
    }
    if (any_pairs) write_text(dir / "paired_diff.csv", paired.str());

    const bool is_sweep = suite == "beta_sweep" || suite == "fraction_sweep";
    if (is_sweep) {
        std::ostringstream plot;
        for (const auto& v : variants) {
            auto vr = rows_for(v.name);
            if (vr.empty()) continue;
            double mean = 0.0;
            for (auto* r : vr) mean += r->mean;
            mean /= static_cast<double>(vr.size());
            plot << format_double(v.axis) << " " << format_double(mean) << "\n";
        }
        write_text(dir / (suite + ".dat"), plot.str());
    }
}

}  // namespace detail

// Runs the suite's variant grid across all seeds into suite_dir. Failed
// members are recorded and skipped; the suite continues.
inline int run_suite(const std::string& suite, const ExperimentConfig& base,
                     const std::vector<std::uint64_t>& seeds, const std::string& suite_dir_raw,
                     std::ostream& log) {
    if (seeds.empty()) throw ConfigError("suite: need at least one seed");
    const std::vector<SuiteVariant> variants = suite_variants(suite);
    const std::filesystem::path suite_dir = resolve_output_dir(suite_dir_raw);
    std::filesystem::create_directories(suite_dir);

    std::vector<SuiteRow> rows;
    for (const auto& variant : variants) {
        for (std::uint64_t seed : seeds) {
            ExperimentConfig cfg = base;
            variant.apply(cfg);
            cfg.seed = seed;
            cfg.output_dir = (suite_dir / (variant.name + "_s" + std::to_string(seed))).string();
            cfg.normalize();
            SuiteRow row;
            row.variant = variant.name;
            row.seed = seed;
            try {
                cfg.validate();
                RunOutcome o = run_experiment(cfg);
                if (o.exit_code == kExitOk) {
                    row.ok = true;
                    row.mean = o.test_mean;
                    row.ci = o.test_ci;
                }
                log << suite << " " << variant.name << " seed " << seed << ": " << o.message
                    << "\n";
            } catch (const std::exception& e) {
                log << suite << " " << variant.name << " seed " << seed << " failed: " << e.what()
                    << "\n";
            }
            rows.push_back(row);
        }
    }

    std::ostringstream csv;
    csv << "# suite: " << suite << "\n";
    csv << "variant,seed,status,mean_accuracy,ci95\n";
    for (const auto& r : rows) {
        csv << r.variant << "," << r.seed << "," << (r.ok ? "ok" : "failed") << ","
            << detail::format_double(r.mean) << "," << detail::format_double(r.ci) << "\n";
    }
    detail::write_text(suite_dir / "suite_results.csv", csv.str());
    detail::write_suite_summaries(suite_dir, suite, variants, rows);

    std::size_t ok = 0;
    for (const auto& r : rows) ok += r.ok ? 1 : 0;
    return ok == rows.size() ? kExitOk : kExitPartialSuite;
}

// Re-aggregates suite_results.csv (after manual edits or partial reruns).
inline int reaggregate_suite(const std::string& suite_dir_raw, std::ostream& log) {
    const std::filesystem::path dir = resolve_output_dir(suite_dir_raw);
    std::ifstream is(dir / "suite_results.csv");
    if (!is) throw ConfigError("report: cannot open " + (dir / "suite_results.csv").string());
    std::string line;
    std::string suite;
    std::vector<SuiteRow> rows;
    while (std::getline(is, line)) {
        if (line.rfind("# suite: ", 0) == 0) {
            suite = detail::trim(line.substr(9));
            continue;
        }
        if (line.empty() || line.rfind("variant,", 0) == 0) continue;
        std::istringstream ls(line);
        std::string variant, seed, status, mean, ci;
        std::getline(ls, variant, ',');
        std::getline(ls, seed, ',');
        std::getline(ls, status, ',');
        std::getline(ls, mean, ',');
        std::getline(ls, ci, ',');
        SuiteRow row;
        row.variant = variant;
        row.seed = static_cast<std::uint64_t>(detail::parse_int("seed", seed));
        row.ok = status == "ok";
        row.mean = detail::parse_double("mean_accuracy", mean);
        row.ci = detail::parse_double("ci95", ci);
        rows.push_back(row);
    }
    if (suite.empty()) throw ConfigError("report: suite_results.csv lacks a '# suite:' header");
    detail::write_suite_summaries(dir, suite, suite_variants(suite), rows);
    log << "re-aggregated " << rows.size() << " rows for suite '" << suite << "'\n";
    return kExitOk;
}

// Generates a synthetic dataset file; returns a one-line summary.
inline std::string gen_data(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                            double spread, std::uint64_t seed, const std::string& out_path) {
    ClassDataset ds = generate_synthetic(num_classes, per_class, dim, spread, seed);
    save_dataset(ds, out_path);
    std::ostringstream os;
    os << "wrote " << out_path << ": " << num_classes << " classes x " << per_class
       << " examples, dim " << dim << ", split " << ds.train_ids.size() << "/" << ds.val_ids.size()
       << "/" << ds.test_ids.size();
    return os.str();
}

}  // namespace metamix
