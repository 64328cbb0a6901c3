#include <cmath>
#include <stdexcept>

#include "actvocab/kernels.hpp"
#include "actvocab/optim.hpp"

namespace actvocab::grad {

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("optimizer beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("optimizer beta2 must lie in (0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("optimizer weight_decay must be nonnegative");
    if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer epsilon must be positive");
}

AdamW::AdamW(OptimizerConfig config) : config_(config) { config_.validate(); }

void AdamW::step(std::span<const NamedParam> params, std::uint64_t step_count) {
    if (step_count == 0) throw std::invalid_argument("adamw step_count starts at 1");
    for (const auto& p : params)
        if (!p.tensor.has_grad()) throw GraphError("adamw: parameter '" + p.name + "' has no gradient");

    const double t = static_cast<double>(step_count);
    const simd::AdamWScalars s{config_.learning_rate,
                               config_.beta1,
                               config_.beta2,
                               config_.weight_decay,
                               config_.epsilon,
                               1.0 - std::pow(config_.beta1, t),
                               1.0 - std::pow(config_.beta2, t)};
    for (const auto& p : params) {
        Tensor tensor = p.tensor;
        auto& mom = moments_[p.name];
        if (mom.m.size() != tensor.numel()) {
            mom.m.assign(tensor.numel(), 0.0);
            mom.v.assign(tensor.numel(), 0.0);
        }
        simd::adamw_update(s, tensor.mutable_data(), tensor.grad(), mom.m, mom.v);
        tensor.clear_grad();
    }
}

}  // namespace actvocab::grad
