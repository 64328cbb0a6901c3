#include <cmath>

#include "actvocab/nn.hpp"

namespace actvocab::nn {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool zero) {
    std::vector<double> w(in * out, 0.0);
    if (!zero) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& x : w) x = rng.uniform(-bound, bound);
    }
    return Linear{grad::Tensor::parameter({in, out}, std::move(w)), grad::Tensor::zeros({out}, true)};
}

grad::Tensor Linear::forward(const grad::Tensor& x) const { return grad::add(grad::matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, std::vector<grad::NamedParam>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

}  // namespace actvocab::nn
