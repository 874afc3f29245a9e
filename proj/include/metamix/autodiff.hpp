#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "metamix/tensor.hpp"

namespace metamix {

class Var;

// One node of the computation graph. Nodes are immutable after creation and
// the parent graph is acyclic by construction. The gradient rule (vjp) builds
// parent adjoints out of graph operations, so adjoints are themselves
// differentiable and grad() can be nested.
struct Node {
    Tensor value;
    std::vector<Var> parents;
    const char* op = "leaf";
    bool higher_order_ok = true;
    std::function<std::vector<Var>(const Var& self, const Var& adjoint)> vjp;
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value) : n_(std::make_shared<Node>()) { n_->value = std::move(value); }

    static Var constant(Tensor value) { return Var(std::move(value)); }

    static Var make(Tensor value, std::vector<Var> parents, const char* op,
                    std::function<std::vector<Var>(const Var&, const Var&)> vjp,
                    bool higher_order_ok = true) {
        Var v(std::move(value));
        v.n_->parents = std::move(parents);
        v.n_->op = op;
        v.n_->vjp = std::move(vjp);
        v.n_->higher_order_ok = higher_order_ok;
        return v;
    }

    bool defined() const { return n_ != nullptr; }
    const Tensor& value() const { return n_->value; }
    const Shape& shape() const { return n_->value.shape(); }
    std::size_t numel() const { return n_->value.numel(); }
    Node* node() const { return n_.get(); }
    const std::vector<Var>& parents() const { return n_->parents; }

private:
    std::shared_ptr<Node> n_;
};

inline Var detach(const Var& v) { return Var::constant(v.value()); }

// ---- graph-building operations ------------------------------------------

inline Var add(const Var& a, const Var& b) {
    return Var::make(add(a.value(), b.value()), {a, b}, "add",
                     [](const Var&, const Var& adj) { return std::vector<Var>{adj, adj}; });
}

inline Var neg(const Var& a);

inline Var sub(const Var& a, const Var& b) {
    return Var::make(sub(a.value(), b.value()), {a, b}, "subtract",
                     [](const Var&, const Var& adj) { return std::vector<Var>{adj, neg(adj)}; });
}

inline Var neg(const Var& a) {
    return Var::make(neg(a.value()), {a}, "negate",
                     [](const Var&, const Var& adj) { return std::vector<Var>{neg(adj)}; });
}

inline Var scale(const Var& a, double c) {
    return Var::make(scale(a.value(), c), {a}, "scalar-multiply",
                     [c](const Var&, const Var& adj) { return std::vector<Var>{scale(adj, c)}; });
}

inline Var mul(const Var& a, const Var& b) {
    return Var::make(mul(a.value(), b.value()), {a, b}, "elementwise-multiply",
                     [](const Var& self, const Var& adj) {
                         const auto& p = self.parents();
                         return std::vector<Var>{mul(adj, p[1]), mul(adj, p[0])};
                     });
}

inline Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false) {
    return Var::make(matmul(a.value(), b.value(), trans_a, trans_b), {a, b}, "matrix-multiply",
                     [trans_a, trans_b](const Var& self, const Var& adj) {
                         const Var& pa = self.parents()[0];
                         const Var& pb = self.parents()[1];
                         Var da = trans_a ? matmul(pb, adj, trans_b, true)
                                          : matmul(adj, pb, false, !trans_b);
                         Var db = trans_b ? matmul(adj, pa, true, trans_a)
                                          : matmul(pa, adj, !trans_a, false);
                         return std::vector<Var>{da, db};
                     });
}

// Derivative is the fixed 0/1 mask of the input sign; the second derivative is
// zero almost everywhere, so the mask enters the graph as a constant.
inline Var relu(const Var& a) {
    return Var::make(relu(a.value()), {a}, "relu", [](const Var& self, const Var& adj) {
        const Tensor& x = self.parents()[0].value();
        Tensor mask(x.shape());
        for (std::size_t i = 0; i < x.numel(); ++i) mask[i] = x[i] > 0.0 ? 1.0 : 0.0;
        return std::vector<Var>{mul(adj, Var::constant(std::move(mask)))};
    });
}

inline Var exp(const Var& a) {
    return Var::make(exp(a.value()), {a}, "exp", [](const Var& self, const Var& adj) {
        return std::vector<Var>{mul(adj, self)};
    });
}

// Row-wise log-softmax. dx = adj - softmax(x) * rowsum(adj), with softmax
// recovered as exp(self) and the row sums broadcast via an all-ones matmul so
// the rule stays differentiable.
inline Var log_softmax(const Var& a) {
    return Var::make(log_softmax_rows(a.value()), {a}, "log-softmax",
                     [](const Var& self, const Var& adj) {
                         const std::size_t n = self.value().dim(1);
                         Var ones_nn = Var::constant(Tensor::ones(Shape{n, n}));
                         Var row_totals = matmul(adj, ones_nn);
                         return std::vector<Var>{sub(adj, mul(exp(self), row_totals))};
                     });
}

inline Var broadcast_scalar(const Var& s, Shape shape);

inline Var sum(const Var& a) {
    return Var::make(Tensor::scalar(sum_all(a.value())), {a}, "sum",
                     [shape = a.shape()](const Var&, const Var& adj) {
                         return std::vector<Var>{broadcast_scalar(adj, shape)};
                     });
}

inline Var broadcast_scalar(const Var& s, Shape shape) {
    if (s.numel() != 1) {
        throw std::invalid_argument("broadcast-scalar: source has " + std::to_string(s.numel()) +
                                    " elements, expected 1");
    }
    return Var::make(Tensor::full(shape, s.value()[0]), {s}, "broadcast-scalar",
                     [](const Var&, const Var& adj) { return std::vector<Var>{sum(adj)}; });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

inline Var reshape(const Var& a, Shape shape) {
    return Var::make(reshape(a.value(), shape), {a}, "reshape",
                     [old_shape = a.shape()](const Var&, const Var& adj) {
                         return std::vector<Var>{reshape(adj, old_shape)};
                     });
}

inline Var colsum(const Var& a);

inline Var tile_rows(const Var& v, std::size_t rows) {
    return Var::make(tile_rows(v.value(), rows), {v}, "tile-rows",
                     [](const Var&, const Var& adj) { return std::vector<Var>{colsum(adj)}; });
}

inline Var colsum(const Var& a) {
    return Var::make(colsum(a.value()), {a}, "colsum",
                     [rows = a.value().dim(0)](const Var&, const Var& adj) {
                         return std::vector<Var>{tile_rows(adj, rows)};
                     });
}

// x: [batch, n] plus bias: [n], broadcast over rows.
inline Var add_bias(const Var& x, const Var& bias) {
    detail::require_rank("broadcast-add-bias", x.value(), 2);
    detail::require_rank("broadcast-add-bias", bias.value(), 1);
    if (x.value().dim(1) != bias.value().dim(0)) {
        throw std::invalid_argument("broadcast-add-bias: width mismatch " +
                                    shape_str(x.shape()) + " vs " + shape_str(bias.shape()));
    }
    return add(x, tile_rows(bias, x.value().dim(0)));
}

// ---- reverse accumulation -------------------------------------------------

namespace detail {

inline std::vector<Var> topo_order(const Var& root) {
    std::vector<Var> order;
    std::unordered_set<const Node*> visited;
    // Iterative post-order: parents are emitted before their consumers.
    std::vector<std::pair<Var, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first.parents().size()) {
            Var p = top.first.parents()[top.second++];
            if (visited.insert(p.node()).second) stack.emplace_back(std::move(p), 0);
        } else {
            order.push_back(top.first);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace detail

// Reverse-mode gradients of a scalar output with respect to `wrt`. Nodes not
// reachable from the output get zero gradients. With create_graph the results
// stay attached to a live graph and can be differentiated again.
inline std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph) {
    if (output.numel() != 1) {
        throw std::invalid_argument("grad: output must be a scalar, got shape " +
                                    shape_str(output.shape()));
    }
    std::vector<Var> topo = detail::topo_order(output);
    std::unordered_map<const Node*, Var> adjoint;
    adjoint.emplace(output.node(), Var::constant(Tensor::ones(output.shape())));

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const Var& v = *it;
        auto found = adjoint.find(v.node());
        if (found == adjoint.end() || !v.node()->vjp) continue;
        if (create_graph && !v.node()->higher_order_ok) {
            throw std::invalid_argument(std::string("grad: op '") + v.node()->op +
                                        "' has no differentiable gradient rule");
        }
        std::vector<Var> contribs = v.node()->vjp(v, found->second);
        const auto& parents = v.parents();
        for (std::size_t i = 0; i < parents.size(); ++i) {
            auto slot = adjoint.find(parents[i].node());
            if (slot == adjoint.end()) {
                adjoint.emplace(parents[i].node(), contribs[i]);
            } else {
                slot->second = add(slot->second, contribs[i]);
            }
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        auto found = adjoint.find(w.node());
        Var g = found != adjoint.end() ? found->second : Var::constant(Tensor::zeros(w.shape()));
        out.push_back(create_graph ? g : detach(g));
    }
    return out;
}

}  // namespace metamix
