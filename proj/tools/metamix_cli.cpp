// Command-line front end: gen-data, run, suite, report.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metamix/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw metamix::ConfigError("cannot open config file '" + path + "'");
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

metamix::ExperimentConfig load_config(const std::string& path,
                                      const std::vector<std::string>& overrides) {
    metamix::ExperimentConfig cfg =
        path.empty() ? metamix::ExperimentConfig{} : metamix::parse_config(read_file(path));
    for (const auto& o : overrides) metamix::apply_override(cfg, o);
    cfg.normalize();
    cfg.validate();
    return cfg;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    std::vector<std::uint64_t> seeds;
    std::istringstream is(spec);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) seeds.push_back(std::stoull(tok));
    }
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale meta-learning laboratory (MAML family + MetaMix)"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic class-structured dataset");
    std::string gen_out = "dataset.bin";
    std::size_t gen_classes = 25, gen_per_class = 40, gen_dim = 16;
    double gen_spread = 0.6;
    std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "Output file");
    gen->add_option("--num-classes", gen_classes, "Number of classes");
    gen->add_option("--per-class", gen_per_class, "Examples per class");
    gen->add_option("--dim", gen_dim, "Feature dimension");
    gen->add_option("--spread", gen_spread, "Within-class noise scale");
    gen->add_option("--seed", gen_seed, "Generator seed");

    // run
    auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
    std::string run_config;
    std::vector<std::string> run_sets;
    run->add_option("config", run_config, "Config file (key = value with [sections])");
    run->add_option("--set", run_sets, "Override a config key, e.g. --set algorithm=fomaml")
        ->take_all();
    std::string run_algorithm, run_output, run_mix_target;
    std::string run_metamix;
    double run_inner_lr = -1, run_alpha = -1, run_fraction = -1, run_spread = -1;
    long long run_seed = -1, run_iterations = -1;
    run->add_option("--algorithm", run_algorithm, "maml|fomaml|meta_sgd|mtl_lite");
    run->add_option("--seed", run_seed, "Master seed");
    run->add_option("--iterations", run_iterations, "Meta-training iterations");
    run->add_option("--metamix", run_metamix, "on|off");
    run->add_option("--alpha-check", run_alpha, "Beta distribution parameter");
    run->add_option("--mix-target", run_mix_target, "query|support|both");
    run->add_option("--inner-lr", run_inner_lr, "Inner-loop learning rate");
    run->add_option("--fraction", run_fraction, "Training-data fraction");
    run->add_option("--spread", run_spread, "Synthetic data spread");
    run->add_option("--output-dir", run_output, "Artifact directory");

    // suite
    auto* suite = app.add_subcommand("suite", "Run an experiment suite across seeds");
    std::string suite_name, suite_config, suite_out = "suite_out", suite_seeds = "1";
    std::vector<std::string> suite_sets;
    suite->add_option("name", suite_name, "main|ablation|beta_sweep|fraction_sweep")->required();
    suite->add_option("config", suite_config, "Base config file");
    suite->add_option("--seeds", suite_seeds, "Comma-separated seeds, e.g. 1,2,3");
    suite->add_option("--output-dir", suite_out, "Suite directory");
    suite->add_option("--set", suite_sets, "Override a base-config key")->take_all();

    // report
    auto* rep = app.add_subcommand("report", "Re-aggregate a suite directory's CSVs");
    std::string rep_dir;
    rep->add_option("dir", rep_dir, "Suite directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            std::cout << metamix::gen_data(gen_classes, gen_per_class, gen_dim, gen_spread,
                                           gen_seed, gen_out)
                      << "\n";
            return metamix::kExitOk;
        }
        if (run->parsed()) {
            std::vector<std::string> overrides = run_sets;
            if (!run_algorithm.empty()) overrides.push_back("algorithm=" + run_algorithm);
            if (run_seed >= 0) overrides.push_back("seed=" + std::to_string(run_seed));
            if (run_iterations >= 0) overrides.push_back("iterations=" + std::to_string(run_iterations));
            if (!run_metamix.empty()) overrides.push_back("metamix=" + run_metamix);
            if (run_alpha >= 0) overrides.push_back("alpha_check=" + std::to_string(run_alpha));
            if (!run_mix_target.empty()) overrides.push_back("mix_target=" + run_mix_target);
            if (run_inner_lr >= 0) overrides.push_back("inner_lr=" + std::to_string(run_inner_lr));
            if (run_fraction >= 0) overrides.push_back("fraction=" + std::to_string(run_fraction));
            if (run_spread >= 0) overrides.push_back("spread=" + std::to_string(run_spread));
            if (!run_output.empty()) overrides.push_back("output_dir=" + run_output);
            metamix::ExperimentConfig cfg = load_config(run_config, overrides);
            metamix::RunOutcome outcome = metamix::run_experiment(cfg);
            std::cout << outcome.message << "\nartifacts: " << outcome.out_dir.string() << "\n";
            return outcome.exit_code;
        }
        if (suite->parsed()) {
            metamix::ExperimentConfig base = load_config(suite_config, suite_sets);
            return metamix::run_suite(suite_name, base, parse_seeds(suite_seeds), suite_out,
                                      std::cout);
        }
        if (rep->parsed()) {
            return metamix::reaggregate_suite(rep_dir, std::cout);
        }
    } catch (const metamix::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return metamix::kExitConfigError;
    } catch (const metamix::NonFiniteLossError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return metamix::kExitNumericalError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return metamix::kExitConfigError;
    }
    return metamix::kExitOk;
}
