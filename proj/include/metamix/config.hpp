#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metamix/metalearn.hpp"
#include "metamix/mixup.hpp"
#include "metamix/rng.hpp"

namespace metamix {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value experiment description with section headers. Every field has
// a default, so an empty file is a runnable configuration. Parsing a config
// with metamix=off canonicalizes the mix sub-keys back to their defaults, so
// disabled-mix configs resolve (and fingerprint) identically to vanilla ones.
struct ExperimentConfig {
    // [data]
    std::string dataset_path;  // empty: synthesize from the fields below
    std::size_t num_classes = 25;
    std::size_t per_class = 40;
    std::size_t dim = 16;
    double spread = 0.6;
    double fraction = 1.0;
    // [task]
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t h_query = 16;
    // [model]
    std::vector<std::size_t> hidden_dims = {64, 64};
    // [meta]
    std::string algorithm = "maml";
    double inner_lr = 0.01;
    double outer_lr = 0.001;
    int inner_steps_train = 1;
    int inner_steps_eval = 5;
    int meta_batch = 4;
    int pretrain_iterations = 500;
    int pretrain_batch = 64;
    double pretrain_lr = 0.001;
    // [mix]
    bool metamix = false;
    double alpha_check = 1.0;
    std::string mix_target = "query";
    std::string lambda_scope = "per_episode";
    std::string mtl_pretrain_mixup = "auto";  // auto: follow metamix
    // [run]
    int iterations = 2000;
    int eval_every = 200;
    int eval_episodes = 600;
    int val_episodes = 200;
    std::uint64_t seed = 1;
    std::string output_dir = "out";

    void normalize() {
        if (!metamix) {
            alpha_check = 1.0;
            mix_target = "query";
            lambda_scope = "per_episode";
            mtl_pretrain_mixup = "auto";
        }
    }

    void validate() const;
    std::string serialize() const;
    std::string fingerprint() const;

    MixConfig mix_config() const;
    MetaConfig meta_config() const;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline double parse_double(const std::string& field, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
        throw ConfigError("field '" + field + "': expected a number, got '" + v + "'");
    }
    return x;
}

inline long long parse_int(const std::string& field, const std::string& v) {
    std::size_t pos = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("field '" + field + "': expected an integer, got '" + v + "'");
    }
    if (pos != v.size()) {
        throw ConfigError("field '" + field + "': expected an integer, got '" + v + "'");
    }
    return x;
}

inline std::size_t parse_size(const std::string& field, const std::string& v) {
    long long x = parse_int(field, v);
    if (x < 0) throw ConfigError("field '" + field + "': must be nonnegative");
    return static_cast<std::size_t>(x);
}

inline bool parse_onoff(const std::string& field, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("field '" + field + "': expected on/off, got '" + v + "'");
}

inline std::vector<std::size_t> parse_dim_list(const std::string& field, const std::string& v) {
    std::vector<std::size_t> out;
    if (trim(v).empty()) return out;
    std::istringstream is(v);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(parse_size(field, trim(tok)));
    return out;
}

inline std::string format_dim_list(const std::vector<std::size_t>& dims) {
    std::string out;
    for (std::size_t i = 0; i < dims.size(); ++i)
        out += (i ? "," : "") + std::to_string(dims[i]);
    return out;
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
    if (dataset_path.empty()) {
        if (num_classes == 0 || per_class == 0 || dim == 0)
            throw ConfigError("field 'num_classes/per_class/dim': must be positive");
        if (spread < 0.0) throw ConfigError("field 'spread': must be nonnegative");
    }
    if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("field 'fraction': must be in (0,1]");
    if (n_way < 2) throw ConfigError("field 'n_way': must be >= 2");
    if (k_shot == 0 || h_query == 0) throw ConfigError("field 'k_shot/h_query': must be positive");
    parse_algorithm(algorithm);  // throws on unknown names
    if (!(inner_lr >= 0.0)) throw ConfigError("field 'inner_lr': must be >= 0");
    if (!(outer_lr > 0.0)) throw ConfigError("field 'outer_lr': must be > 0");
    if (inner_steps_train < 1 || inner_steps_eval < 1)
        throw ConfigError("field 'inner_steps_train/inner_steps_eval': must be >= 1");
    if (meta_batch < 1) throw ConfigError("field 'meta_batch': must be >= 1");
    if (pretrain_iterations < 0 || pretrain_batch < 1)
        throw ConfigError("field 'pretrain_iterations/pretrain_batch': invalid");
    if (!(alpha_check > 0.0)) throw ConfigError("field 'alpha_check': must be > 0");
    if (mix_target != "query" && mix_target != "support" && mix_target != "both")
        throw ConfigError("field 'mix_target': expected query/support/both, got '" + mix_target + "'");
    if (lambda_scope != "per_episode" && lambda_scope != "per_pair")
        throw ConfigError("field 'lambda_scope': expected per_episode/per_pair");
    if (mtl_pretrain_mixup != "auto" && mtl_pretrain_mixup != "on" && mtl_pretrain_mixup != "off")
        throw ConfigError("field 'mtl_pretrain_mixup': expected auto/on/off");
    if (iterations < 0) throw ConfigError("field 'iterations': must be >= 0");
    if (eval_every < 1) throw ConfigError("field 'eval_every': must be >= 1");
    if (eval_episodes < 1 || val_episodes < 1)
        throw ConfigError("field 'eval_episodes/val_episodes': must be >= 1");
    if (output_dir.empty()) throw ConfigError("field 'output_dir': must not be empty");
}

inline std::string ExperimentConfig::serialize() const {
    using detail::format_double;
    std::ostringstream os;
    os << "[data]\n";
    os << "dataset_path = " << dataset_path << "\n";
    os << "num_classes = " << num_classes << "\n";
    os << "per_class = " << per_class << "\n";
    os << "dim = " << dim << "\n";
    os << "spread = " << format_double(spread) << "\n";
    os << "fraction = " << format_double(fraction) << "\n";
    os << "[task]\n";
    os << "n_way = " << n_way << "\n";
    os << "k_shot = " << k_shot << "\n";
    os << "h_query = " << h_query << "\n";
    os << "[model]\n";
    os << "hidden_dims = " << detail::format_dim_list(hidden_dims) << "\n";
    os << "[meta]\n";
    os << "algorithm = " << algorithm << "\n";
    os << "inner_lr = " << format_double(inner_lr) << "\n";
    os << "outer_lr = " << format_double(outer_lr) << "\n";
    os << "inner_steps_train = " << inner_steps_train << "\n";
    os << "inner_steps_eval = " << inner_steps_eval << "\n";
    os << "meta_batch = " << meta_batch << "\n";
    os << "pretrain_iterations = " << pretrain_iterations << "\n";
    os << "pretrain_batch = " << pretrain_batch << "\n";
    os << "pretrain_lr = " << format_double(pretrain_lr) << "\n";
    os << "[mix]\n";
    os << "metamix = " << (metamix ? "on" : "off") << "\n";
    os << "alpha_check = " << format_double(alpha_check) << "\n";
    os << "mix_target = " << mix_target << "\n";
    os << "lambda_scope = " << lambda_scope << "\n";
    os << "mtl_pretrain_mixup = " << mtl_pretrain_mixup << "\n";
    os << "[run]\n";
    os << "iterations = " << iterations << "\n";
    os << "eval_every = " << eval_every << "\n";
    os << "eval_episodes = " << eval_episodes << "\n";
    os << "val_episodes = " << val_episodes << "\n";
    os << "seed = " << seed << "\n";
    os << "output_dir = " << output_dir << "\n";
    return os.str();
}

inline std::string ExperimentConfig::fingerprint() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(detail::fnv1a(serialize())));
    return buf;
}

inline MixConfig ExperimentConfig::mix_config() const {
    MixConfig m;
    m.alpha_check = alpha_check;
    m.target_set = mix_target == "query" ? MixTarget::Query
                 : mix_target == "support" ? MixTarget::Support
                                           : MixTarget::Both;
    m.lambda_scope = lambda_scope == "per_pair" ? LambdaScope::PerPair : LambdaScope::PerEpisode;
    return m;
}

inline MetaConfig ExperimentConfig::meta_config() const {
    MetaConfig m;
    m.algorithm = parse_algorithm(algorithm);
    m.inner_lr = inner_lr;
    m.outer_lr = outer_lr;
    m.inner_steps_train = inner_steps_train;
    m.inner_steps_eval = inner_steps_eval;
    m.meta_batch = meta_batch;
    m.pretrain_iterations = pretrain_iterations;
    m.pretrain_batch = pretrain_batch;
    m.pretrain_lr = pretrain_lr;
    if (metamix) m.metamix = mix_config();
    m.mtl_pretrain_mixup = mtl_pretrain_mixup == "on" ||
                           (mtl_pretrain_mixup == "auto" && metamix);
    return m;
}

namespace detail {

using Setter = std::function<void(ExperimentConfig&, const std::string& field, const std::string&)>;

inline const std::map<std::string, Setter>& config_setters() {
    static const std::map<std::string, Setter> table = {
        {"data.dataset_path", [](auto& c, const auto&, const auto& v) { c.dataset_path = v; }},
        {"data.num_classes", [](auto& c, const auto& f, const auto& v) { c.num_classes = parse_size(f, v); }},
        {"data.per_class", [](auto& c, const auto& f, const auto& v) { c.per_class = parse_size(f, v); }},
        {"data.dim", [](auto& c, const auto& f, const auto& v) { c.dim = parse_size(f, v); }},
        {"data.spread", [](auto& c, const auto& f, const auto& v) { c.spread = parse_double(f, v); }},
        {"data.fraction", [](auto& c, const auto& f, const auto& v) { c.fraction = parse_double(f, v); }},
        {"task.n_way", [](auto& c, const auto& f, const auto& v) { c.n_way = parse_size(f, v); }},
        {"task.k_shot", [](auto& c, const auto& f, const auto& v) { c.k_shot = parse_size(f, v); }},
        {"task.h_query", [](auto& c, const auto& f, const auto& v) { c.h_query = parse_size(f, v); }},
        {"model.hidden_dims", [](auto& c, const auto& f, const auto& v) { c.hidden_dims = parse_dim_list(f, v); }},
        {"meta.algorithm", [](auto& c, const auto&, const auto& v) { c.algorithm = v; }},
        {"meta.inner_lr", [](auto& c, const auto& f, const auto& v) { c.inner_lr = parse_double(f, v); }},
        {"meta.outer_lr", [](auto& c, const auto& f, const auto& v) { c.outer_lr = parse_double(f, v); }},
        {"meta.inner_steps_train", [](auto& c, const auto& f, const auto& v) { c.inner_steps_train = static_cast<int>(parse_int(f, v)); }},
        {"meta.inner_steps_eval", [](auto& c, const auto& f, const auto& v) { c.inner_steps_eval = static_cast<int>(parse_int(f, v)); }},
        {"meta.meta_batch", [](auto& c, const auto& f, const auto& v) { c.meta_batch = static_cast<int>(parse_int(f, v)); }},
        {"meta.pretrain_iterations", [](auto& c, const auto& f, const auto& v) { c.pretrain_iterations = static_cast<int>(parse_int(f, v)); }},
        {"meta.pretrain_batch", [](auto& c, const auto& f, const auto& v) { c.pretrain_batch = static_cast<int>(parse_int(f, v)); }},
        {"meta.pretrain_lr", [](auto& c, const auto& f, const auto& v) { c.pretrain_lr = parse_double(f, v); }},
        {"mix.metamix", [](auto& c, const auto& f, const auto& v) { c.metamix = parse_onoff(f, v); }},
        {"mix.alpha_check", [](auto& c, const auto& f, const auto& v) { c.alpha_check = parse_double(f, v); }},
        {"mix.mix_target", [](auto& c, const auto&, const auto& v) { c.mix_target = v; }},
        {"mix.lambda_scope", [](auto& c, const auto&, const auto& v) { c.lambda_scope = v; }},
        {"mix.mtl_pretrain_mixup", [](auto& c, const auto&, const auto& v) { c.mtl_pretrain_mixup = v; }},
        {"run.iterations", [](auto& c, const auto& f, const auto& v) { c.iterations = static_cast<int>(parse_int(f, v)); }},
        {"run.eval_every", [](auto& c, const auto& f, const auto& v) { c.eval_every = static_cast<int>(parse_int(f, v)); }},
        {"run.eval_episodes", [](auto& c, const auto& f, const auto& v) { c.eval_episodes = static_cast<int>(parse_int(f, v)); }},
        {"run.val_episodes", [](auto& c, const auto& f, const auto& v) { c.val_episodes = static_cast<int>(parse_int(f, v)); }},
        {"run.seed", [](auto& c, const auto& f, const auto& v) { c.seed = static_cast<std::uint64_t>(parse_int(f, v)); }},
        {"run.output_dir", [](auto& c, const auto&, const auto& v) { c.output_dir = v; }},
    };
    return table;
}

inline const Setter* find_setter(const std::string& key) {
    const auto& table = config_setters();
    auto it = table.find(key);
    if (it != table.end()) return &it->second;
    // bare key without section prefix
    for (const auto& [qualified, setter] : table) {
        auto dot = qualified.find('.');
        if (qualified.compare(dot + 1, std::string::npos, key) == 0) return &setter;
    }
    return nullptr;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = detail::trim(t.substr(1, t.size() - 2));
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got '" +
                              t + "'");
        }
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string value = detail::trim(t.substr(eq + 1));
        const std::string qualified = section.empty() ? key : section + "." + key;
        const detail::Setter* setter = detail::find_setter(qualified);
        if (!setter) {
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + qualified +
                              "'");
        }
        try {
            (*setter)(cfg, qualified, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.normalize();
    cfg.validate();
    return cfg;
}

// "key=value" or "section.key=value"; applied on top of a parsed config.
// Callers normalize() + validate() once after the last override.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "': expected key=value");
    }
    const std::string key = detail::trim(assignment.substr(0, eq));
    const std::string value = detail::trim(assignment.substr(eq + 1));
    const detail::Setter* setter = detail::find_setter(key);
    if (!setter) throw ConfigError("override: unknown key '" + key + "'");
    (*setter)(cfg, key, value);
}

}  // namespace metamix
