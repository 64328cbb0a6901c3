#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "actvocab/codebook.hpp"
#include "actvocab/extractor.hpp"
#include "actvocab/heads.hpp"
#include "actvocab/json.hpp"

namespace actvocab {

struct ModelConfig {
    std::size_t n_codes = 32;
    std::size_t code_dim = 16;
    ExtractorConfig extractor;
    std::size_t head_hidden = 64;
    std::uint64_t seed = 0;

    bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

inline constexpr double kMaxHeadFraction = 0.05;

/// One closed-loop decision under hard selection.
struct Decision {
    std::size_t code = 0;
    std::vector<double> logits;
    std::vector<double> decoded;  // head output (squashed values or logits)
    sim::Action action;
};

// Codebook + extractor + one decoder head per domain. Parameters are tensor
// handles, so copying is disabled; clone() makes an independent deep copy.
class Model {
public:
    static Model init(const ModelConfig& config);

    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model clone() const;

    const ModelConfig& config() const { return config_; }
    const codebook::UniversalCodebook& codebook() const { return codebook_; }
    codebook::UniversalCodebook& codebook() { return codebook_; }
    const ExtractorNet& extractor() const { return extractor_; }

    /// Throws std::invalid_argument on a duplicate domain_id.
    DecoderHead& add_head(const DomainSpec& spec, std::uint64_t seed);
    bool has_head(const std::string& domain_id) const { return heads_.count(domain_id) != 0; }
    /// Throws std::out_of_range naming the known heads.
    const DecoderHead& head(const std::string& domain_id) const;
    const std::map<std::string, DecoderHead>& heads() const { return heads_; }

    /// Sorted by name; handles share storage with the model.
    std::vector<grad::NamedParam> named_parameters() const;
    std::size_t parameter_count() const;
    double head_fraction(const std::string& domain_id) const;
    /// Throws std::runtime_error if any head holds >= max_fraction of all parameters.
    void check_head_budget(double max_fraction = kMaxHeadFraction) const;

    /// Overwrites parameter values by name; shapes must match exactly.
    void load_values(const std::map<std::string, std::pair<grad::Shape, std::vector<double>>>& values);

    Decision act(const std::string& domain_id, std::span<const double> obs, const sim::Goal& goal) const;
    /// Decodes a fixed code against the current observation.
    std::vector<double> decode_code(const std::string& domain_id, std::size_t code, std::span<const double> obs) const;

private:
    Model() = default;

    ModelConfig config_;
    codebook::UniversalCodebook codebook_{codebook::UniversalCodebook::init(2, 1, 0)};
    ExtractorNet extractor_;
    std::map<std::string, DecoderHead> heads_;
};

}  // namespace actvocab
