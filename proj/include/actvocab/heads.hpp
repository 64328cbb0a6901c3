#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "actvocab/domain.hpp"
#include "actvocab/embodiments.hpp"
#include "actvocab/nn.hpp"

namespace actvocab {

// Per-domain decoder: tanh perceptron over [u_star, obs_features].
// Continuous outputs are squashed into [low, high] with
// mid + half_range * tanh(z); discrete outputs are raw logits.
class DecoderHead {
public:
    /// The output layer starts at zero unless zero_output is false.
    static DecoderHead init(DomainSpec spec, std::size_t code_dim, std::size_t feature_dim, std::size_t hidden,
                            std::uint64_t seed, bool zero_output = true);

    const DomainSpec& domain() const { return spec_; }
    std::size_t code_dim() const { return code_dim_; }
    std::size_t feature_dim() const { return feature_dim_; }

    /// [B, D] x [B, F] -> [B, action_dim]
    grad::Tensor forward(const grad::Tensor& u_star, const grad::Tensor& features) const;
    /// Sum over rows of the per-row loss (mean squared error over dimensions,
    /// or negative log-softmax at the label index).
    grad::Tensor loss_sum(const grad::Tensor& predicted, std::span<const sim::Action> labels) const;

    std::vector<double> decode(std::span<const double> u_star, std::span<const double> features) const;
    double loss(std::span<const double> predicted, const sim::Action& label) const;
    /// Continuous: clamped values. Discrete: {argmax index}.
    sim::Action to_action(std::span<const double> predicted) const;

    void collect(std::vector<grad::NamedParam>& out) const;
    std::size_t parameter_count() const;

private:
    DomainSpec spec_;
    std::size_t code_dim_ = 0;
    std::size_t feature_dim_ = 0;
    nn::Linear hidden_;
    nn::Linear output_;
    grad::Tensor mid_;
    grad::Tensor half_range_;
};

}  // namespace actvocab
