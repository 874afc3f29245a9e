#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "metamix/dataset.hpp"
#include "metamix/rng.hpp"
#include "metamix/tensor.hpp"

namespace metamix {

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

// One labeled example inside an episode. y is one-hot over the episode's N
// ways; class_id/example_index identify the underlying dataset record.
struct Example {
    std::vector<double> x;
    std::vector<double> y;
    std::uint64_t class_id = 0;
    std::size_t example_index = 0;

    std::size_t label() const {
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] == 1.0) return i;
        throw std::logic_error("Example: label vector is not one-hot");
    }
};

struct Episode {
    std::vector<Example> support;  // N*K examples
    std::vector<Example> query;    // N*H examples
    std::vector<std::uint64_t> way_classes;  // sampled class ids, label order
};

// N-way K-shot task distribution over one split of a dataset. data_fraction
// prunes the per-class training example lists before any sampling.
class TaskDistribution {
public:
    // label_width pads every one-hot vector to at least n_way entries, so a
    // model with a wider head can still adapt on this distribution; 0 means
    // exactly n_way.
    TaskDistribution(std::shared_ptr<const ClassDataset> dataset, Split split, std::size_t n_way,
                     std::size_t k_shot, std::size_t h_query, double data_fraction = 1.0,
                     std::uint64_t fraction_seed = 0, std::size_t label_width = 0)
        : split_(split), n_way_(n_way), k_shot_(k_shot), h_query_(h_query),
          label_width_(label_width == 0 ? n_way : label_width),
          data_fraction_(data_fraction) {
        if (!dataset) throw std::invalid_argument("TaskDistribution: null dataset");
        if (n_way_ == 0 || k_shot_ == 0 || h_query_ == 0) {
            throw std::invalid_argument("TaskDistribution: N, K, H must all be positive");
        }
        if (label_width_ < n_way_) {
            throw std::invalid_argument("TaskDistribution: label_width smaller than n_way");
        }
        if (data_fraction == 1.0) {
            dataset_ = std::move(dataset);
        } else {
            dataset_ = std::make_shared<const ClassDataset>(
                apply_fraction(*dataset, data_fraction, fraction_seed));
        }
    }

    const ClassDataset& dataset() const { return *dataset_; }
    Split split() const { return split_; }
    std::size_t n_way() const { return n_way_; }
    std::size_t k_shot() const { return k_shot_; }
    std::size_t h_query() const { return h_query_; }
    std::size_t label_width() const { return label_width_; }
    double data_fraction() const { return data_fraction_; }

    const std::vector<std::uint64_t>& split_ids() const {
        switch (split_) {
            case Split::Train: return dataset_->train_ids;
            case Split::Val: return dataset_->val_ids;
            case Split::Test: return dataset_->test_ids;
        }
        throw std::logic_error("TaskDistribution: bad split");
    }

private:
    std::shared_ptr<const ClassDataset> dataset_;
    Split split_;
    std::size_t n_way_, k_shot_, h_query_, label_width_;
    double data_fraction_;
};

// Distribution with N clamped to the split's class count and labels padded to
// the full requested width, so a wider model head can still adapt and score.
// Used for validation when the split is smaller than the task's N.
inline TaskDistribution clamped_distribution(std::shared_ptr<const ClassDataset> dataset,
                                             Split split, std::size_t n_way, std::size_t k_shot,
                                             std::size_t h_query, double data_fraction = 1.0,
                                             std::uint64_t fraction_seed = 0) {
    std::size_t available = 0;
    switch (split) {
        case Split::Train: available = dataset->train_ids.size(); break;
        case Split::Val: available = dataset->val_ids.size(); break;
        case Split::Test: available = dataset->test_ids.size(); break;
    }
    if (available == 0) throw std::invalid_argument("clamped_distribution: empty split");
    const std::size_t n = std::min(n_way, available);
    return TaskDistribution(std::move(dataset), split, n, k_shot, h_query, data_fraction,
                            fraction_seed, n_way);
}

namespace detail {

// First `take` entries of a seeded partial Fisher-Yates shuffle.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t take, RngEngine& eng) {
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(eng)]);
    }
    pool.resize(take);
    return pool;
}

}  // namespace detail

// N classes without replacement; per class K+H examples without replacement,
// first K to support, next H to query. One-hot index = position of the class
// in the sampled way ordering.
inline Episode sample_episode(const TaskDistribution& dist, RngEngine& eng) {
    const auto& ids = dist.split_ids();
    const std::size_t n = dist.n_way(), k = dist.k_shot(), h = dist.h_query();
    if (ids.size() < n) {
        throw std::runtime_error("sample_episode: split '" + std::string(split_name(dist.split())) +
                                 "' has " + std::to_string(ids.size()) + " classes, need " +
                                 std::to_string(n));
    }

    Episode ep;
    ep.way_classes = detail::sample_without_replacement(ids, n, eng);
    for (std::size_t way = 0; way < n; ++way) {
        const ClassRecord& rec = dist.dataset().class_by_id(ep.way_classes[way]);
        if (rec.examples.size() < k + h) {
            throw std::runtime_error("sample_episode: class " + std::to_string(rec.class_id) +
                                     " has " + std::to_string(rec.examples.size()) +
                                     " examples, need K+H=" + std::to_string(k + h));
        }
        std::vector<std::size_t> idx(rec.examples.size());
        std::iota(idx.begin(), idx.end(), 0);
        idx = detail::sample_without_replacement(std::move(idx), k + h, eng);

        for (std::size_t i = 0; i < k + h; ++i) {
            Example ex;
            ex.x = rec.examples[idx[i]];
            ex.y.assign(dist.label_width(), 0.0);
            ex.y[way] = 1.0;
            ex.class_id = rec.class_id;
            ex.example_index = idx[i];
            (i < k ? ep.support : ep.query).push_back(std::move(ex));
        }
    }
    return ep;
}

// Stack a set of examples into [n, dim] features and [n, ways] labels.
template <typename ExampleLike>
inline std::pair<Tensor, Tensor> stack_examples(const std::vector<ExampleLike>& set) {
    if (set.empty()) throw std::invalid_argument("stack_examples: empty set");
    const std::size_t n = set.size(), d = set[0].x.size(), w = set[0].y.size();
    Tensor xs(Shape{n, d});
    Tensor ys(Shape{n, w});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(set[i].x.begin(), set[i].x.end(), xs.data() + i * d);
        std::copy(set[i].y.begin(), set[i].y.end(), ys.data() + i * w);
    }
    return {std::move(xs), std::move(ys)};
}

}  // namespace metamix
