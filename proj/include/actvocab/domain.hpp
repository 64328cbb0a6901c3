#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "actvocab/json.hpp"

namespace actvocab {

enum class ActionKind { continuous, discrete };
enum class LossKind { mse, cross_entropy };

// Action interface of one domain. Continuous domains carry per-dimension
// bounds and train with MSE; discrete domains carry a cardinality and train
// with cross-entropy.
struct DomainSpec {
    std::string domain_id;
    ActionKind action_kind = ActionKind::continuous;
    std::size_t action_dim = 1;
    std::vector<double> action_low;
    std::vector<double> action_high;
    LossKind loss_kind = LossKind::mse;

    static DomainSpec continuous(std::string id, std::vector<double> low, std::vector<double> high);
    static DomainSpec discrete(std::string id, std::size_t cardinality);

    void validate() const;
    /// Width of the head output: action_dim for both kinds.
    std::size_t output_width() const { return action_dim; }
    /// Throws std::invalid_argument if the action is malformed or out of bounds.
    void check_action(const std::vector<double>& action) const;

    bool operator==(const DomainSpec&) const = default;
};

nlohmann::json to_json(const DomainSpec& spec);
DomainSpec domain_spec_from_json(const nlohmann::json& j);

}  // namespace actvocab
