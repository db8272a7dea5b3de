#ifndef DDT_GRADCHECK_HPP
#define DDT_GRADCHECK_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ddt/graph.hpp"
#include "ddt/tensor.hpp"

namespace ddt {

/// Builds a scalar loss from leaf variables; used by the checker both to
/// obtain analytic gradients and to run central-difference probes.
using LossBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

namespace detail {

inline double eval_loss(const LossBuilder& build, const std::vector<Tensor>& point) {
    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(point.size());
    for (const Tensor& t : point) leaves.push_back(g.leaf(t));
    return g.value(build(g, leaves)).item();
}

} // namespace detail

/// Central-difference gradient check: relative error per element with
/// denominator max(|analytic|, |numeric|, 1e-8); returns the max.
inline GradCheckResult grad_check(const LossBuilder& build, std::vector<Tensor> point, double eps = 1e-5) {
    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(point.size());
    for (const Tensor& t : point) leaves.push_back(g.leaf(t));
    Var out = build(g, leaves);
    g.backward(out);
    std::vector<Tensor> analytic;
    analytic.reserve(point.size());
    for (Var v : leaves) analytic.push_back(g.grad(v));

    GradCheckResult res;
    for (std::size_t pi = 0; pi < point.size(); ++pi) {
        for (std::size_t ei = 0; ei < point[pi].numel(); ++ei) {
            const double saved = point[pi][ei];
            point[pi][ei] = saved + eps;
            const double fp = detail::eval_loss(build, point);
            point[pi][ei] = saved - eps;
            const double fm = detail::eval_loss(build, point);
            point[pi][ei] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi][ei];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = pi;
                res.worst_index = ei;
                res.analytic = a;
                res.numeric = fd;
            }
        }
    }
    return res;
}

} // namespace ddt

#endif
