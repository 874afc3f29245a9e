#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metamix/autodiff.hpp"
#include "metamix/tensor.hpp"

namespace metamix {

// Named, ordered parameter collections. ParamSet carries plain tensors,
// VarMap carries graph nodes for the same names.
class ParamSet {
public:
    ParamSet() = default;

    void emplace(std::string name, Tensor value) {
        items_.emplace_back(std::move(name), std::move(value));
    }

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

    const std::pair<std::string, Tensor>& operator[](std::size_t i) const { return items_[i]; }
    std::pair<std::string, Tensor>& operator[](std::size_t i) { return items_[i]; }

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }

    const Tensor& get(const std::string& name) const {
        for (const auto& [n, t] : items_)
            if (n == name) return t;
        throw std::out_of_range("ParamSet: no parameter named '" + name + "'");
    }

    Tensor& get(const std::string& name) {
        for (auto& [n, t] : items_)
            if (n == name) return t;
        throw std::out_of_range("ParamSet: no parameter named '" + name + "'");
    }

    bool has(const std::string& name) const {
        for (const auto& [n, t] : items_)
            if (n == name) return true;
        return false;
    }

    std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : items_) n += t.numel();
        return n;
    }

    friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.items_ == b.items_; }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

class VarMap {
public:
    VarMap() = default;

    void emplace(std::string name, Var v) { items_.emplace_back(std::move(name), std::move(v)); }

    std::size_t size() const { return items_.size(); }

    const std::pair<std::string, Var>& operator[](std::size_t i) const { return items_[i]; }
    std::pair<std::string, Var>& operator[](std::size_t i) { return items_[i]; }

    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    const Var& get(const std::string& name) const {
        for (const auto& [n, v] : items_)
            if (n == name) return v;
        throw std::out_of_range("VarMap: no parameter named '" + name + "'");
    }

    std::vector<Var> vars() const {
        std::vector<Var> out;
        out.reserve(items_.size());
        for (const auto& [n, v] : items_) out.push_back(v);
        return out;
    }

private:
    std::vector<std::pair<std::string, Var>> items_;
};

inline VarMap lift(const ParamSet& p) {
    VarMap m;
    for (const auto& [name, t] : p) m.emplace(name, Var::constant(t));
    return m;
}

inline ParamSet values(const VarMap& m) {
    ParamSet p;
    for (const auto& [name, v] : m) p.emplace(name, v.value());
    return p;
}

// Gradients of a scalar with respect to a named parameter map. Keys of the
// result are exactly the keys of wrt, shapes match the parameters.
inline VarMap grad(const Var& output, const VarMap& wrt, bool create_graph) {
    std::vector<Var> gs = grad(output, wrt.vars(), create_graph);
    VarMap out;
    for (std::size_t i = 0; i < wrt.size(); ++i) out.emplace(wrt[i].first, gs[i]);
    return out;
}

}  // namespace metamix
