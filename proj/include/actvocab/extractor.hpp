#pragma once

// The universal action extractor: a goal-conditioned perceptron producing
// logits over the codebook, plus the shared observation backbone whose
// features every decoder head consumes.
//
// The trunk reads the full observation and the goal. The backbone reads only
// the embodiment-side slots [0, 8) of the observation, so task and target
// information reaches the heads exclusively through the selected code.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "actvocab/embodiments.hpp"
#include "actvocab/json.hpp"
#include "actvocab/nn.hpp"

namespace actvocab {

inline constexpr std::size_t kTrunkInputSize = sim::kObservationSize + sim::kGoalSize;
inline constexpr std::size_t kBackboneInputSize = 8;

struct ExtractorConfig {
    std::vector<std::size_t> trunk_hidden{128, 128};
    std::size_t feature_dim = 64;
    std::vector<std::size_t> backbone_hidden{256, 256};

    bool operator==(const ExtractorConfig&) const = default;
};

nlohmann::json to_json(const ExtractorConfig& c);
ExtractorConfig extractor_config_from_json(const nlohmann::json& j);

std::array<double, kTrunkInputSize> trunk_input(std::span<const double> obs, const sim::Goal& goal);
std::array<double, kBackboneInputSize> backbone_input(std::span<const double> obs);

class ExtractorNet {
public:
    /// Hidden layers use uniform fan-in init; the logit head starts at zero so
    /// the initial code distribution is uniform.
    static ExtractorNet init(const ExtractorConfig& config, std::size_t n_codes, std::uint64_t seed);

    const ExtractorConfig& config() const { return config_; }
    std::size_t n_codes() const { return logit_head_.out_features(); }
    std::size_t feature_dim() const { return config_.feature_dim; }

    /// [B, 16] -> [B, N]
    grad::Tensor logits(const grad::Tensor& trunk_in) const;
    /// [B, 8] -> [B, feature_dim]
    grad::Tensor features(const grad::Tensor& backbone_in) const;

    std::vector<double> extract_logits(std::span<const double> obs, const sim::Goal& goal) const;
    std::vector<double> encode_obs_features(std::span<const double> obs) const;

    void collect(std::vector<grad::NamedParam>& out) const;
    std::size_t parameter_count() const;

private:
    ExtractorConfig config_;
    std::vector<nn::Linear> trunk_;
    nn::Linear logit_head_;
    std::vector<nn::Linear> backbone_;
};

}  // namespace actvocab
