#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metamix/autodiff.hpp"
#include "metamix/params.hpp"
#include "metamix/rng.hpp"
#include "metamix/tensor.hpp"

namespace metamix {

// Fully connected relu network: input_dim -> hidden_dims... -> output_dim.
struct MlpArchitecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t output_dim = 0;

    std::size_t num_layers() const { return hidden_dims.size() + 1; }

    std::size_t layer_in(std::size_t layer) const {
        return layer == 0 ? input_dim : hidden_dims[layer - 1];
    }

    std::size_t layer_out(std::size_t layer) const {
        return layer == hidden_dims.size() ? output_dim : hidden_dims[layer];
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < num_layers(); ++l) n += layer_in(l) * layer_out(l) + layer_out(l);
        return n;
    }

    void validate() const {
        if (input_dim == 0) throw std::invalid_argument("MlpArchitecture: input_dim must be positive");
        if (output_dim < 2) throw std::invalid_argument("MlpArchitecture: output_dim must be >= 2");
        for (auto h : hidden_dims)
            if (h == 0) throw std::invalid_argument("MlpArchitecture: hidden dims must be positive");
    }

    // "16-64-64-5": all layer widths joined by dashes.
    std::string to_string() const {
        std::ostringstream os;
        os << input_dim;
        for (auto h : hidden_dims) os << '-' << h;
        os << '-' << output_dim;
        return os.str();
    }

    static MlpArchitecture parse(const std::string& text) {
        std::vector<std::size_t> dims;
        std::istringstream is(text);
        std::string token;
        while (std::getline(is, token, '-')) {
            if (token.empty()) throw std::invalid_argument("MlpArchitecture: bad spec '" + text + "'");
            dims.push_back(static_cast<std::size_t>(std::stoull(token)));
        }
        if (dims.size() < 2) throw std::invalid_argument("MlpArchitecture: bad spec '" + text + "'");
        MlpArchitecture a;
        a.input_dim = dims.front();
        a.output_dim = dims.back();
        a.hidden_dims.assign(dims.begin() + 1, dims.end() - 1);
        a.validate();
        return a;
    }

    friend bool operator==(const MlpArchitecture& a, const MlpArchitecture& b) {
        return a.input_dim == b.input_dim && a.hidden_dims == b.hidden_dims &&
               a.output_dim == b.output_dim;
    }
};

inline std::string weight_name(std::size_t layer) { return "w" + std::to_string(layer); }
inline std::string bias_name(std::size_t layer) { return "b" + std::to_string(layer); }

// Partition of parameter names into a frozen feature extractor and a
// trainable head. The two sets are disjoint and cover the full ParamSet.
struct FrozenSplit {
    std::set<std::string> frozen;
    std::set<std::string> trainable;

    bool is_trainable(const std::string& name) const { return trainable.count(name) > 0; }
};

// Glorot-style uniform init: weights ~ U(-sqrt(6/(fan_in+fan_out)), +...),
// biases zero. Same seed, same bits.
inline ParamSet init_params(const MlpArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    RngEngine eng = make_engine(seed);
    ParamSet p;
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const std::size_t fan_in = arch.layer_in(l);
        const std::size_t fan_out = arch.layer_out(l);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor w(Shape{fan_in, fan_out});
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = uniform_real(eng, -bound, bound);
        p.emplace(weight_name(l), std::move(w));
        p.emplace(bias_name(l), Tensor::zeros(Shape{fan_out}));
    }
    return p;
}

// Logits of the batch under externally supplied parameters; differentiable
// with respect to both params and x.
inline Var forward(const MlpArchitecture& arch, const VarMap& params, const Var& x) {
    if (x.value().rank() != 2 || x.value().dim(1) != arch.input_dim) {
        throw std::invalid_argument("forward: expected input [batch," +
                                    std::to_string(arch.input_dim) + "], got " +
                                    shape_str(x.shape()));
    }
    Var h = x;
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const Var& w = params.get(weight_name(l));
        const Var& b = params.get(bias_name(l));
        if (w.value().dim(0) != h.value().dim(1)) {
            throw std::invalid_argument("forward: layer " + std::to_string(l) + " expects input width " +
                                        std::to_string(w.value().dim(0)) + ", got " +
                                        shape_str(h.shape()));
        }
        h = add_bias(matmul(h, w), b);
        if (l + 1 < arch.num_layers()) h = relu(h);
    }
    return h;
}

inline Var forward(const MlpArchitecture& arch, const VarMap& params, const Tensor& x) {
    return forward(arch, params, Var::constant(x));
}

// Graph-free forward pass for evaluation-time use.
inline Tensor forward_values(const MlpArchitecture& arch, const ParamSet& params, const Tensor& x) {
    Tensor h = x;
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        h = add(matmul(h, params.get(weight_name(l))), tile_rows(params.get(bias_name(l)), h.dim(0)));
        if (l + 1 < arch.num_layers()) h = relu(h);
    }
    return h;
}

inline void validate_soft_targets(const Tensor& targets) {
    detail::require_rank("cross-entropy targets", targets, 2);
    const std::size_t rows = targets.dim(0), cols = targets.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = targets.at(r, c);
            if (v < 0.0) {
                throw std::invalid_argument("cross-entropy: target row " + std::to_string(r) +
                                            " has a negative entry");
            }
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw std::invalid_argument("cross-entropy: target row " + std::to_string(r) +
                                        " sums to " + std::to_string(total) + ", expected 1");
        }
    }
}

// -(1/batch) * sum_rows sum_classes target * log_softmax(logits). Targets may
// be soft rows; one-hot rows are the special case.
inline Var cross_entropy(const Var& logits, const Tensor& targets) {
    detail::require_same_shape("cross-entropy", logits.value(), targets);
    validate_soft_targets(targets);
    const double batch = static_cast<double>(targets.dim(0));
    return scale(neg(sum(mul(Var::constant(targets), log_softmax(logits)))), 1.0 / batch);
}

}  // namespace metamix
