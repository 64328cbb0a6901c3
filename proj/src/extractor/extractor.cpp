#include "actvocab/extractor.hpp"

#include <algorithm>
#include <stdexcept>

namespace actvocab {

nlohmann::json to_json(const ExtractorConfig& c) {
    return {{"trunk_hidden", c.trunk_hidden}, {"feature_dim", c.feature_dim}, {"backbone_hidden", c.backbone_hidden}};
}

ExtractorConfig extractor_config_from_json(const nlohmann::json& j) {
    ExtractorConfig c;
    c.trunk_hidden = j.at("trunk_hidden").get<std::vector<std::size_t>>();
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.backbone_hidden = j.at("backbone_hidden").get<std::vector<std::size_t>>();
    return c;
}

std::array<double, kTrunkInputSize> trunk_input(std::span<const double> obs, const sim::Goal& goal) {
    sim::validate_observation(obs);
    std::array<double, kTrunkInputSize> in{};
    std::copy(obs.begin(), obs.end(), in.begin());
    const auto g = goal.encode();
    std::copy(g.begin(), g.end(), in.begin() + sim::kObservationSize);
    return in;
}

std::array<double, kBackboneInputSize> backbone_input(std::span<const double> obs) {
    sim::validate_observation(obs);
    std::array<double, kBackboneInputSize> in{};
    std::copy_n(obs.begin(), kBackboneInputSize, in.begin());
    return in;
}

ExtractorNet ExtractorNet::init(const ExtractorConfig& config, std::size_t n_codes, std::uint64_t seed) {
    if (config.trunk_hidden.empty()) throw std::invalid_argument("extractor trunk needs at least one hidden layer");
    if (config.backbone_hidden.empty()) throw std::invalid_argument("extractor backbone needs at least one hidden layer");
    const auto zero_width = [](const std::vector<std::size_t>& w) { return std::find(w.begin(), w.end(), 0) != w.end(); };
    if (config.feature_dim == 0 || zero_width(config.trunk_hidden) || zero_width(config.backbone_hidden) || n_codes < 2)
        throw std::invalid_argument("extractor widths must be positive");
    Rng rng(seed, {0xE7AC7ULL});
    ExtractorNet net;
    net.config_ = config;
    std::size_t in = kTrunkInputSize;
    for (auto width : config.trunk_hidden) {
        net.trunk_.push_back(nn::Linear::init(in, width, rng));
        in = width;
    }
    net.trunk_.push_back(nn::Linear::init(in, config.feature_dim, rng));
    net.logit_head_ = nn::Linear::init(config.feature_dim, n_codes, rng, /*zero=*/true);
    in = kBackboneInputSize;
    for (auto width : config.backbone_hidden) {
        net.backbone_.push_back(nn::Linear::init(in, width, rng));
        in = width;
    }
    net.backbone_.push_back(nn::Linear::init(in, config.feature_dim, rng));
    return net;
}

grad::Tensor ExtractorNet::logits(const grad::Tensor& trunk_in) const {
    if (trunk_in.shape().size() != 2 || trunk_in.cols() != kTrunkInputSize)
        throw grad::ShapeError("extractor trunk expects [B, " + std::to_string(kTrunkInputSize) + "], got " +
                               grad::to_string(trunk_in.shape()));
    grad::Tensor h = trunk_in;
    for (const auto& layer : trunk_) h = grad::tanh(layer.forward(h));
    return logit_head_.forward(h);
}

grad::Tensor ExtractorNet::features(const grad::Tensor& backbone_in) const {
    if (backbone_in.shape().size() != 2 || backbone_in.cols() != kBackboneInputSize)
        throw grad::ShapeError("extractor backbone expects [B, " + std::to_string(kBackboneInputSize) + "], got " +
                               grad::to_string(backbone_in.shape()));
    grad::Tensor h = backbone_in;
    for (const auto& layer : backbone_) h = grad::tanh(layer.forward(h));
    return h;
}

std::vector<double> ExtractorNet::extract_logits(std::span<const double> obs, const sim::Goal& goal) const {
    grad::NoGradGuard no_grad;
    const auto in = trunk_input(obs, goal);
    const auto out = logits(grad::Tensor::constant({1, kTrunkInputSize}, {in.begin(), in.end()}));
    return {out.data().begin(), out.data().end()};
}

std::vector<double> ExtractorNet::encode_obs_features(std::span<const double> obs) const {
    grad::NoGradGuard no_grad;
    const auto in = backbone_input(obs);
    const auto out = features(grad::Tensor::constant({1, kBackboneInputSize}, {in.begin(), in.end()}));
    return {out.data().begin(), out.data().end()};
}

void ExtractorNet::collect(std::vector<grad::NamedParam>& out) const {
    for (std::size_t i = 0; i < trunk_.size(); ++i) trunk_[i].collect("extractor.trunk." + std::to_string(i), out);
    logit_head_.collect("extractor.logit_head", out);
    for (std::size_t i = 0; i < backbone_.size(); ++i)
        backbone_[i].collect("extractor.backbone." + std::to_string(i), out);
}

std::size_t ExtractorNet::parameter_count() const {
    std::size_t n = logit_head_.parameter_count();
    for (const auto& l : trunk_) n += l.parameter_count();
    for (const auto& l : backbone_) n += l.parameter_count();
    return n;
}

}  // namespace actvocab
