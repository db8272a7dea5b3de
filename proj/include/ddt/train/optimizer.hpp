#ifndef DDT_TRAIN_OPTIMIZER_HPP
#define DDT_TRAIN_OPTIMIZER_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ddt/model/params.hpp"

namespace ddt {
namespace train {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moments optimizer over a parameter registry; moment slots follow
/// the registration order.
class Adam {
public:
    Adam(const model::ParamRegistry& reg, AdamConfig cfg = {}) : cfg_(cfg) {
        for (const auto& [name, t] : reg.entries) {
            m_.emplace_back(t->shape());
            v_.emplace_back(t->shape());
        }
    }

    const AdamConfig& config() const { return cfg_; }
    std::size_t steps() const { return step_; }

    void step(model::ParamRegistry& reg, const std::vector<Tensor>& grads) {
        if (grads.size() != reg.entries.size())
            throw std::invalid_argument("Adam::step: gradient count mismatch");
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < grads.size(); ++i) {
            Tensor& p = *reg.entries[i].second;
            const Tensor& grad = grads[i];
            if (!p.same_shape(grad))
                throw ShapeError("Adam::step: parameter '" + reg.entries[i].first + "' " +
                                 shape_str(p.shape()) + " vs gradient " + shape_str(grad.shape()));
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            for (std::size_t j = 0; j < p.numel(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * grad[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * grad[j] * grad[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::size_t step_ = 0;
};

} // namespace train
} // namespace ddt

#endif
