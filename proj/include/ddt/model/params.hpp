#ifndef DDT_MODEL_PARAMS_HPP
#define DDT_MODEL_PARAMS_HPP

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ddt/graph.hpp"
#include "ddt/tensor.hpp"

namespace ddt {
namespace model {

/// Ordered registry of named trainable tensors. Registration order is the
/// canonical parameter order (checkpoints, optimizer state, leaf creation).
struct ParamRegistry {
    std::vector<std::pair<std::string, Tensor*>> entries;

    void add(const std::string& name, Tensor& t) { entries.emplace_back(name, &t); }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.second->numel();
        return n;
    }
};

/// Per-forward binding of registered parameters to graph leaves, created in
/// registry order so gradients can be read back positionally.
class ParamBinding {
public:
    ParamBinding(Graph& g, const ParamRegistry& reg) {
        ordered_.reserve(reg.entries.size());
        for (const auto& [name, t] : reg.entries) {
            Var v = g.leaf(*t);
            vars_[t] = v;
            ordered_.push_back(v);
        }
    }

    Var operator()(const Tensor& t) const {
        auto it = vars_.find(&t);
        if (it == vars_.end()) throw GraphError("ParamBinding: tensor was not registered");
        return it->second;
    }

    bool has(const Tensor& t) const { return vars_.count(&t) != 0; }

    const std::vector<Var>& ordered() const { return ordered_; }

private:
    std::unordered_map<const Tensor*, Var> vars_;
    std::vector<Var> ordered_;
};

/// Gradients for every registered parameter after Graph::backward, in
/// registry order.
inline std::vector<Tensor> collect_gradients(const Graph& g, const std::vector<Var>& leaves) {
    std::vector<Tensor> grads;
    grads.reserve(leaves.size());
    for (Var v : leaves) grads.push_back(g.grad(v));
    return grads;
}

} // namespace model
} // namespace ddt

#endif
