#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "actvocab/optim.hpp"
#include "actvocab/rng.hpp"
#include "actvocab/tensor.hpp"

namespace actvocab::nn {

// Affine layer y = x W + b with W stored [in, out].
struct Linear {
    grad::Tensor weight;
    grad::Tensor bias;

    /// Uniform(-1/sqrt(in), 1/sqrt(in)) weights and zero bias, or all zeros.
    static Linear init(std::size_t in, std::size_t out, Rng& rng, bool zero = false);

    std::size_t in_features() const { return weight.shape()[0]; }
    std::size_t out_features() const { return weight.shape()[1]; }
    std::size_t parameter_count() const { return weight.numel() + bias.numel(); }

    grad::Tensor forward(const grad::Tensor& x) const;
    void collect(const std::string& prefix, std::vector<grad::NamedParam>& out) const;
};

}  // namespace actvocab::nn
