#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metamix/autodiff.hpp"
#include "metamix/episodes.hpp"
#include "metamix/mixup.hpp"
#include "metamix/models.hpp"
#include "metamix/optim.hpp"
#include "metamix/params.hpp"
#include "metamix/rng.hpp"

namespace metamix {

enum class Algorithm { Maml, Fomaml, MetaSgd, MtlLite };

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Maml: return "maml";
        case Algorithm::Fomaml: return "fomaml";
        case Algorithm::MetaSgd: return "meta_sgd";
        case Algorithm::MtlLite: return "mtl_lite";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& name) {
    if (name == "maml") return Algorithm::Maml;
    if (name == "fomaml") return Algorithm::Fomaml;
    if (name == "meta_sgd") return Algorithm::MetaSgd;
    if (name == "mtl_lite") return Algorithm::MtlLite;
    throw std::invalid_argument("unknown algorithm '" + name + "'");
}

struct MetaConfig {
    Algorithm algorithm = Algorithm::Maml;
    double inner_lr = 0.01;
    double outer_lr = 0.001;
    int inner_steps_train = 1;
    int inner_steps_eval = 5;
    int meta_batch = 4;
    std::optional<MixConfig> metamix;

    // mtl_lite pre-training stage
    int pretrain_iterations = 500;
    int pretrain_batch = 64;
    double pretrain_lr = 0.001;
    bool mtl_pretrain_mixup = false;

    void validate() const {
        if (!(inner_lr >= 0.0)) throw std::invalid_argument("MetaConfig: inner_lr must be >= 0");
        if (!(outer_lr > 0.0)) throw std::invalid_argument("MetaConfig: outer_lr must be > 0");
        if (inner_steps_train < 1 || inner_steps_eval < 1) {
            throw std::invalid_argument("MetaConfig: inner step counts must be >= 1");
        }
        if (meta_batch < 1) throw std::invalid_argument("MetaConfig: meta_batch must be >= 1");
    }
};

struct MetaState {
    MlpArchitecture arch;
    ParamSet theta;
    std::optional<ParamSet> alpha;       // per-parameter inner rates, MetaSgd only
    std::optional<FrozenSplit> frozen;   // MtlLite only
    Adam opt;
};

struct NonFiniteLossError : std::runtime_error {
    NonFiniteLossError(std::size_t episode_index, double loss)
        : std::runtime_error("non-finite loss " + std::to_string(loss) + " on episode " +
                             std::to_string(episode_index)),
          episode_index(episode_index), loss(loss) {}
    std::size_t episode_index;
    double loss;
};

// ---- inner loop -------------------------------------------------------------

namespace detail {

inline std::set<std::string> trainable_names(const VarMap& params, const FrozenSplit* frozen) {
    std::set<std::string> names;
    for (const auto& [name, v] : params) {
        if (!frozen || frozen->is_trainable(name)) names.insert(name);
    }
    return names;
}

}  // namespace detail

// Sequential gradient-descent updates p <- p - rate (*) grad(loss). With
// per-parameter alphas the step is elementwise; otherwise the scalar rate is
// used. When differentiable, every update stays on the graph so an outer loss
// can differentiate through the whole chain; otherwise each step is detached
// to plain values.
inline VarMap descend(const VarMap& params0, const std::function<Var(const VarMap&)>& loss_fn,
                      const std::optional<VarMap>& alphas, double rate, int steps,
                      bool differentiable, const FrozenSplit* frozen = nullptr) {
    const std::set<std::string> trainable = detail::trainable_names(params0, frozen);
    VarMap p = params0;
    for (int s = 0; s < steps; ++s) {
        Var loss = loss_fn(p);
        VarMap wrt;
        for (const auto& [name, v] : p)
            if (trainable.count(name)) wrt.emplace(name, v);
        VarMap g = grad(loss, wrt, /*create_graph=*/differentiable);
        VarMap next;
        for (const auto& [name, v] : p) {
            if (!trainable.count(name)) {
                next.emplace(name, v);
                continue;
            }
            Var step_vec = alphas ? mul(alphas->get(name), g.get(name)) : scale(g.get(name), rate);
            Var updated = sub(v, step_vec);
            next.emplace(name, differentiable ? updated : detach(updated));
        }
        p = next;
    }
    return p;
}

inline std::function<Var(const VarMap&)> support_loss_fn(const MlpArchitecture& arch,
                                                         const Tensor& sx, const Tensor& sy) {
    return [&arch, &sx, &sy](const VarMap& p) { return cross_entropy(forward(arch, p, sx), sy); };
}

// Adapted parameters for one episode. With differentiable=true the result is
// a live graph over the state's parameters and inner_steps_train steps are
// taken; otherwise plain values with inner_steps_eval steps (the evaluation
// path).
template <typename ExampleLike>
inline VarMap inner_adapt(const MetaState& state, const std::vector<ExampleLike>& support,
                          const MetaConfig& cfg, bool differentiable) {
    auto [sx, sy] = stack_examples(support);
    std::optional<VarMap> alphas;
    if (state.alpha) alphas = lift(*state.alpha);
    const FrozenSplit* frozen = state.frozen ? &*state.frozen : nullptr;
    const int steps = differentiable ? cfg.inner_steps_train : cfg.inner_steps_eval;
    return descend(lift(state.theta), support_loss_fn(state.arch, sx, sy), alphas, cfg.inner_lr,
                   steps, differentiable, frozen);
}

// Cross-entropy of the adapted model on the (possibly mixed) query set.
inline Var outer_loss(const MlpArchitecture& arch, const VarMap& adapted, const MixedSet& query) {
    auto [qx, qy] = stack_examples(query);
    return cross_entropy(forward(arch, adapted, qx), qy);
}

// ---- outer loop -------------------------------------------------------------

struct MetaStepInfo {
    double batch_loss = 0.0;           // sum of per-episode losses
    ParamSet theta_grad;               // summed meta-gradient, episode order
    std::optional<ParamSet> alpha_grad;
};

namespace detail {

inline void accumulate(ParamSet& sums, const VarMap& grads) {
    for (const auto& [name, g] : grads) {
        if (!sums.has(name)) {
            sums.emplace(name, g.value());
        } else {
            sums.get(name) = add(sums.get(name), g.value());
        }
    }
}

}  // namespace detail

// One outer update from a batch of episodes: per episode mix (when enabled),
// adapt, score on the query set; gradients of the summed loss drive a single
// optimizer step. FOMAML cuts the adaptation out of the graph, so its
// meta-gradient is the query gradient at the adapted parameters.
inline MetaStepInfo meta_step(MetaState& state, const std::vector<Episode>& episodes,
                              const MetaConfig& cfg, RngEngine& mix_eng) {
    const FrozenSplit* frozen = state.frozen ? &*state.frozen : nullptr;
    MetaStepInfo info;
    if (state.alpha) info.alpha_grad.emplace();

    for (std::size_t i = 0; i < episodes.size(); ++i) {
        MixedSet support, query;
        if (cfg.metamix) {
            std::tie(support, query) = mix_for_episode(episodes[i], *cfg.metamix, mix_eng);
        } else {
            support = passthrough(episodes[i].support);
            query = passthrough(episodes[i].query);
        }
        auto [sx, sy] = stack_examples(support);

        Var episode_loss;
        if (cfg.algorithm == Algorithm::Fomaml) {
            VarMap adapted = descend(lift(state.theta), support_loss_fn(state.arch, sx, sy),
                                     std::nullopt, cfg.inner_lr, cfg.inner_steps_train,
                                     /*differentiable=*/false, frozen);
            episode_loss = outer_loss(state.arch, adapted, query);
            VarMap wrt;
            for (const auto& [name, v] : adapted)
                if (!frozen || frozen->is_trainable(name)) wrt.emplace(name, v);
            detail::accumulate(info.theta_grad, grad(episode_loss, wrt, false));
        } else {
            VarMap theta_leaves = lift(state.theta);
            std::optional<VarMap> alpha_leaves;
            if (state.alpha) alpha_leaves = lift(*state.alpha);
            VarMap adapted = descend(theta_leaves, support_loss_fn(state.arch, sx, sy),
                                     alpha_leaves, cfg.inner_lr, cfg.inner_steps_train,
                                     /*differentiable=*/true, frozen);
            episode_loss = outer_loss(state.arch, adapted, query);

            VarMap wrt;
            for (const auto& [name, v] : theta_leaves)
                if (!frozen || frozen->is_trainable(name)) wrt.emplace(name, v);
            const std::size_t theta_count = wrt.size();
            if (alpha_leaves)
                for (const auto& [name, v] : *alpha_leaves) wrt.emplace("alpha." + name, v);

            VarMap grads = grad(episode_loss, wrt, false);
            VarMap theta_part, alpha_part;
            for (std::size_t k = 0; k < grads.size(); ++k) {
                if (k < theta_count) {
                    theta_part.emplace(grads[k].first, grads[k].second);
                } else {
                    alpha_part.emplace(grads[k].first.substr(6), grads[k].second);
                }
            }
            detail::accumulate(info.theta_grad, theta_part);
            if (info.alpha_grad) detail::accumulate(*info.alpha_grad, alpha_part);
        }

        const double loss_value = episode_loss.value().item();
        if (!std::isfinite(loss_value)) throw NonFiniteLossError(i, loss_value);
        info.batch_loss += loss_value;
    }

    const std::set<std::string>* trainable_filter = nullptr;
    std::set<std::string> head_names;
    if (frozen) {
        head_names = frozen->trainable;
        trainable_filter = &head_names;
    }
    state.opt.begin_step();
    state.opt.apply(state.theta, info.theta_grad, cfg.outer_lr, trainable_filter, "theta.");
    if (state.alpha && info.alpha_grad) {
        state.opt.apply(*state.alpha, *info.alpha_grad, cfg.outer_lr, nullptr, "alpha.");
    }
    return info;
}

// ---- evaluation -------------------------------------------------------------

struct EvalReport {
    double mean_accuracy = 0.0;
    double ci95_halfwidth = 0.0;
    int num_episodes = 0;
    std::vector<double> per_episode_accuracy;
    std::string config_fingerprint;
    double wall_seconds = 0.0;  // reported separately; never part of byte-compared artifacts
};

inline double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// 1.96 * s / sqrt(n) with s the (n-1)-denominator sample standard deviation.
inline double ci95_halfwidth(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (n < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    const double stddev = std::sqrt(ss / static_cast<double>(n - 1));
    return 1.96 * stddev / std::sqrt(static_cast<double>(n));
}

inline double episode_accuracy(const MetaState& state, const Episode& episode,
                               const MetaConfig& cfg) {
    VarMap adapted = inner_adapt(state, episode.support, cfg, /*differentiable=*/false);
    auto [qx, qy] = stack_examples(episode.query);
    Tensor logits = forward_values(state.arch, values(adapted), qx);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < episode.query.size(); ++r) {
        if (argmax_row(logits, r) == episode.query[r].label()) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(episode.query.size());
}

// Fine-tunes on each episode's support set (inner_steps_eval plain steps) and
// scores argmax accuracy on the untouched query set; queries are never mixed.
inline EvalReport evaluate(const MetaState& state, const TaskDistribution& dist, int num_episodes,
                           const MetaConfig& cfg, std::uint64_t seed) {
    RngEngine eng = make_engine(seed);
    EvalReport report;
    report.num_episodes = num_episodes;
    report.per_episode_accuracy.reserve(static_cast<std::size_t>(num_episodes));
    for (int i = 0; i < num_episodes; ++i) {
        Episode ep = sample_episode(dist, eng);
        report.per_episode_accuracy.push_back(episode_accuracy(state, ep, cfg));
    }
    report.mean_accuracy = mean_of(report.per_episode_accuracy);
    report.ci95_halfwidth = ci95_halfwidth(report.per_episode_accuracy);
    return report;
}

// ---- mtl_lite pre-training ---------------------------------------------------

struct MtlPretrainResult {
    ParamSet params;      // frozen trunk + fresh head
    FrozenSplit split;
    double train_accuracy = 0.0;
};

// Standard M-way mini-batch classification over every training-class example
// (optionally with plain within-batch mixup); afterwards the output layer is
// replaced by a fresh N-way head and everything else is frozen.
inline MtlPretrainResult mtl_pretrain(const ClassDataset& dataset, const MlpArchitecture& arch,
                                      const MetaConfig& cfg, bool use_mixup, std::uint64_t seed) {
    if (dataset.train_ids.empty()) throw std::invalid_argument("mtl_pretrain: empty training split");
    const std::size_t ways = dataset.train_ids.size();

    MlpArchitecture pre_arch = arch;
    pre_arch.output_dim = ways < 2 ? 2 : ways;

    std::vector<std::pair<const std::vector<double>*, std::size_t>> pool;
    for (std::size_t c = 0; c < dataset.train_ids.size(); ++c) {
        const ClassRecord& rec = dataset.class_by_id(dataset.train_ids[c]);
        for (const auto& ex : rec.examples) pool.emplace_back(&ex, c);
    }

    ParamSet params = init_params(pre_arch, derive_seed(seed, "mtl-init"));
    RngEngine batch_eng = make_engine(derive_seed(seed, "mtl-batch"));
    RngEngine mix_eng = make_engine(derive_seed(seed, "mtl-mix"));
    const double mix_alpha = cfg.metamix ? cfg.metamix->alpha_check : 1.0;
    Adam opt;

    const std::size_t batch = std::min<std::size_t>(cfg.pretrain_batch, pool.size());
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int it = 0; it < cfg.pretrain_iterations; ++it) {
        Tensor bx(Shape{batch, dataset.dim});
        Tensor by(Shape{batch, pre_arch.output_dim});
        std::vector<std::size_t> chosen(batch);
        for (std::size_t i = 0; i < batch; ++i) chosen[i] = pick(batch_eng);
        if (use_mixup) {
            std::vector<std::size_t> partner = chosen;
            std::shuffle(partner.begin(), partner.end(), mix_eng);
            const double lam = sample_beta(mix_alpha, mix_eng);
            for (std::size_t i = 0; i < batch; ++i) {
                const auto& [xa, la] = pool[chosen[i]];
                const auto& [xb, lb] = pool[partner[i]];
                for (std::size_t j = 0; j < dataset.dim; ++j)
                    bx.at(i, j) = mix_scalar((*xa)[j], (*xb)[j], lam);
                by.at(i, la) += lam;
                by.at(i, lb) += 1.0 - lam;
            }
        } else {
            for (std::size_t i = 0; i < batch; ++i) {
                const auto& [x, label] = pool[chosen[i]];
                std::copy(x->begin(), x->end(), bx.data() + i * dataset.dim);
                by.at(i, label) = 1.0;
            }
        }
        VarMap leaves = lift(params);
        Var loss = cross_entropy(forward(pre_arch, leaves, bx), by);
        VarMap g = grad(loss, leaves, false);
        ParamSet grads = values(g);
        opt.begin_step();
        opt.apply(params, grads, cfg.pretrain_lr, nullptr, "pre.");
    }

    // Held-in accuracy over the full pool.
    Tensor all_x(Shape{pool.size(), dataset.dim});
    for (std::size_t i = 0; i < pool.size(); ++i)
        std::copy(pool[i].first->begin(), pool[i].first->end(), all_x.data() + i * dataset.dim);
    Tensor logits = forward_values(pre_arch, params, all_x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (argmax_row(logits, i) == pool[i].second) ++hits;

    MtlPretrainResult result;
    result.train_accuracy = static_cast<double>(hits) / static_cast<double>(pool.size());
    const std::size_t head = arch.num_layers() - 1;
    for (std::size_t l = 0; l < head; ++l) {
        result.params.emplace(weight_name(l), params.get(weight_name(l)));
        result.params.emplace(bias_name(l), params.get(bias_name(l)));
        result.split.frozen.insert(weight_name(l));
        result.split.frozen.insert(bias_name(l));
    }
    MlpArchitecture head_arch;
    head_arch.input_dim = arch.layer_in(head);
    head_arch.output_dim = arch.output_dim;
    ParamSet head_params = init_params(head_arch, derive_seed(seed, "mtl-head"));
    result.params.emplace(weight_name(head), head_params.get("w0"));
    result.params.emplace(bias_name(head), head_params.get("b0"));
    result.split.trainable.insert(weight_name(head));
    result.split.trainable.insert(bias_name(head));
    return result;
}

// ---- training loop -----------------------------------------------------------

struct TrainOptions {
    MlpArchitecture arch;
    MetaConfig meta;
    int iterations = 2000;
    int eval_every = 200;
    int val_episodes = 200;
    std::uint64_t master_seed = 1;
};

struct CurvePoint {
    int iteration = 0;
    double train_loss = 0.0;
    double val_accuracy = -1.0;  // < 0 when no evaluation happened at this iteration
};

struct TrainResult {
    MetaState state;  // snapshot at the best (earliest) validation accuracy
    std::vector<CurvePoint> curve;
    std::vector<std::pair<int, EvalReport>> val_reports;
    int best_iteration = 0;
    double best_val_accuracy = -1.0;
    double pretrain_accuracy = -1.0;  // mtl_lite only
    std::optional<std::string> abort_reason;
};

inline MetaState init_meta_state(const MlpArchitecture& arch, const MetaConfig& cfg,
                                 const ClassDataset& dataset, std::uint64_t master_seed,
                                 double* pretrain_accuracy = nullptr) {
    MetaState state;
    state.arch = arch;
    if (cfg.algorithm == Algorithm::MtlLite) {
        auto pre = mtl_pretrain(dataset, arch, cfg, cfg.mtl_pretrain_mixup,
                                derive_seed(master_seed, "pretrain"));
        state.theta = std::move(pre.params);
        state.frozen = std::move(pre.split);
        if (pretrain_accuracy) *pretrain_accuracy = pre.train_accuracy;
    } else {
        state.theta = init_params(arch, derive_seed(master_seed, "init"));
    }
    if (cfg.algorithm == Algorithm::MetaSgd) {
        ParamSet alpha;
        for (const auto& [name, t] : state.theta)
            alpha.emplace(name, Tensor::full(t.shape(), cfg.inner_lr));
        state.alpha = std::move(alpha);
    }
    return state;
}

// Iterates meta_step over freshly sampled episode batches, periodically
// evaluating on the validation split; returns the snapshot with the best
// (earliest on ties) validation accuracy plus the training curve.
inline TrainResult train(const TaskDistribution& train_dist, const TaskDistribution& val_dist,
                         const TrainOptions& opt) {
    opt.meta.validate();
    TrainResult result;
    result.state = init_meta_state(opt.arch, opt.meta, train_dist.dataset(), opt.master_seed,
                                   &result.pretrain_accuracy);
    MetaState current = result.state;

    RngEngine episode_eng = make_engine(derive_seed(opt.master_seed, "episodes"));
    RngEngine mix_eng = make_engine(derive_seed(opt.master_seed, "mixing"));

    for (int t = 1; t <= opt.iterations; ++t) {
        std::vector<Episode> batch;
        batch.reserve(static_cast<std::size_t>(opt.meta.meta_batch));
        for (int b = 0; b < opt.meta.meta_batch; ++b)
            batch.push_back(sample_episode(train_dist, episode_eng));

        CurvePoint point;
        point.iteration = t;
        try {
            point.train_loss = meta_step(current, batch, opt.meta, mix_eng).batch_loss;
        } catch (const NonFiniteLossError& e) {
            result.abort_reason = e.what();
            break;
        }

        if (t % opt.eval_every == 0 || t == opt.iterations) {
            EvalReport val = evaluate(current, val_dist, opt.val_episodes, opt.meta,
                                      derive_seed(opt.master_seed, "eval-val", t));
            point.val_accuracy = val.mean_accuracy;
            if (val.mean_accuracy > result.best_val_accuracy) {
                result.best_val_accuracy = val.mean_accuracy;
                result.best_iteration = t;
                result.state = current;
            }
            result.val_reports.emplace_back(t, std::move(val));
        }
        result.curve.push_back(point);
    }
    return result;
}

}  // namespace metamix
