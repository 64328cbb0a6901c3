#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "actvocab/tensor.hpp"

namespace actvocab::grad {

struct OptimizerConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.0;
    double epsilon = 1e-8;

    /// Throws std::invalid_argument when a field is outside its domain.
    void validate() const;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// First and second moment buffers for one parameter.
struct Moments {
    std::vector<double> m;
    std::vector<double> v;
};

// AdamW with decoupled weight decay and bias correction. Moments are keyed
// by parameter name and live across calls to step().
class AdamW {
public:
    explicit AdamW(OptimizerConfig config);

    /// Updates every tensor in `params` in place and clears its gradient.
    /// step_count is the 1-based update index used for bias correction.
    /// Throws if any parameter has no gradient or step_count is 0.
    void step(std::span<const NamedParam> params, std::uint64_t step_count);

    const OptimizerConfig& config() const { return config_; }
    const std::map<std::string, Moments>& moments() const { return moments_; }
    void set_moments(std::map<std::string, Moments> moments) { moments_ = std::move(moments); }

private:
    OptimizerConfig config_;
    std::map<std::string, Moments> moments_;
};

}  // namespace actvocab::grad
