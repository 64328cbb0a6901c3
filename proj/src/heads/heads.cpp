#include "actvocab/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "actvocab/codebook.hpp"

namespace actvocab {

DecoderHead DecoderHead::init(DomainSpec spec, std::size_t code_dim, std::size_t feature_dim, std::size_t hidden,
                              std::uint64_t seed, bool zero_output) {
    spec.validate();
    if (code_dim == 0 || feature_dim == 0 || hidden == 0) throw std::invalid_argument("head widths must be positive");
    Rng rng(seed, {0x4EAD5ULL});
    DecoderHead h;
    h.code_dim_ = code_dim;
    h.feature_dim_ = feature_dim;
    h.hidden_ = nn::Linear::init(code_dim + feature_dim, hidden, rng);
    h.output_ = nn::Linear::init(hidden, spec.output_width(), rng, zero_output);
    if (spec.action_kind == ActionKind::continuous) {
        std::vector<double> mid(spec.action_dim), half(spec.action_dim);
        for (std::size_t i = 0; i < spec.action_dim; ++i) {
            mid[i] = 0.5 * (spec.action_low[i] + spec.action_high[i]);
            half[i] = 0.5 * (spec.action_high[i] - spec.action_low[i]);
        }
        h.mid_ = grad::Tensor::constant({spec.action_dim}, std::move(mid));
        h.half_range_ = grad::Tensor::constant({spec.action_dim}, std::move(half));
    }
    h.spec_ = std::move(spec);
    return h;
}

grad::Tensor DecoderHead::forward(const grad::Tensor& u_star, const grad::Tensor& features) const {
    if (u_star.shape().size() != 2 || u_star.cols() != code_dim_)
        throw grad::ShapeError("head '" + spec_.domain_id + "' expects u_star [B, " + std::to_string(code_dim_) +
                               "], got " + grad::to_string(u_star.shape()));
    if (features.shape().size() != 2 || features.cols() != feature_dim_ || features.rows() != u_star.rows())
        throw grad::ShapeError("head '" + spec_.domain_id + "' expects features [B, " + std::to_string(feature_dim_) +
                               "], got " + grad::to_string(features.shape()));
    const auto z = output_.forward(grad::tanh(hidden_.forward(grad::concat_cols(u_star, features))));
    if (spec_.action_kind == ActionKind::discrete) return z;
    return grad::add(grad::mul(grad::tanh(z), half_range_), mid_);
}

grad::Tensor DecoderHead::loss_sum(const grad::Tensor& predicted, std::span<const sim::Action> labels) const {
    const std::size_t rows = predicted.rows(), width = spec_.output_width();
    if (predicted.shape().size() != 2 || predicted.cols() != width || labels.size() != rows)
        throw grad::ShapeError("head '" + spec_.domain_id + "' loss: prediction shape " +
                               grad::to_string(predicted.shape()) + " vs " + std::to_string(labels.size()) + " labels");
    for (const auto& label : labels) spec_.check_action(label);
    if (spec_.action_kind == ActionKind::continuous) {
        std::vector<double> target;
        target.reserve(rows * width);
        for (const auto& label : labels) target.insert(target.end(), label.begin(), label.end());
        const auto diff = grad::sub(predicted, grad::Tensor::constant({rows, width}, std::move(target)));
        return grad::scale(grad::sum(grad::mul(diff, diff)), 1.0 / static_cast<double>(width));
    }
    std::vector<double> onehot(rows * width, 0.0);
    for (std::size_t r = 0; r < rows; ++r) onehot[r * width + static_cast<std::size_t>(labels[r][0])] = 1.0;
    return grad::scale(
        grad::sum(grad::mul(grad::log_softmax(predicted), grad::Tensor::constant({rows, width}, std::move(onehot)))),
        -1.0);
}

std::vector<double> DecoderHead::decode(std::span<const double> u_star, std::span<const double> features) const {
    if (u_star.size() != code_dim_ || features.size() != feature_dim_)
        throw grad::ShapeError("head '" + spec_.domain_id + "' decode: got u_star of " + std::to_string(u_star.size()) +
                               " and features of " + std::to_string(features.size()) + ", expected " +
                               std::to_string(code_dim_) + " and " + std::to_string(feature_dim_));
    grad::NoGradGuard no_grad;
    const auto out = forward(grad::Tensor::constant({1, code_dim_}, {u_star.begin(), u_star.end()}),
                             grad::Tensor::constant({1, feature_dim_}, {features.begin(), features.end()}));
    std::vector<double> values(out.data().begin(), out.data().end());
    if (spec_.action_kind == ActionKind::continuous)
        for (std::size_t i = 0; i < values.size(); ++i)
            values[i] = std::clamp(values[i], spec_.action_low[i], spec_.action_high[i]);
    return values;
}

double DecoderHead::loss(std::span<const double> predicted, const sim::Action& label) const {
    if (predicted.size() != spec_.output_width())
        throw grad::ShapeError("head '" + spec_.domain_id + "' loss: expected " +
                               std::to_string(spec_.output_width()) + " predicted values");
    grad::NoGradGuard no_grad;
    const sim::Action labels[] = {label};
    return loss_sum(grad::Tensor::constant({1, predicted.size()}, {predicted.begin(), predicted.end()}), labels)
        .item();
}

sim::Action DecoderHead::to_action(std::span<const double> predicted) const {
    if (predicted.size() != spec_.output_width())
        throw grad::ShapeError("head '" + spec_.domain_id + "' to_action: wrong width");
    if (spec_.action_kind == ActionKind::discrete) return {static_cast<double>(codebook::argmax(predicted))};
    sim::Action a(predicted.begin(), predicted.end());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::clamp(a[i], spec_.action_low[i], spec_.action_high[i]);
    return a;
}

void DecoderHead::collect(std::vector<grad::NamedParam>& out) const {
    hidden_.collect("heads." + spec_.domain_id + ".hidden", out);
    output_.collect("heads." + spec_.domain_id + ".output", out);
}

std::size_t DecoderHead::parameter_count() const { return hidden_.parameter_count() + output_.parameter_count(); }

}  // namespace actvocab
