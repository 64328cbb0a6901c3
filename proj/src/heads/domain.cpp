#include "actvocab/domain.hpp"

#include <cmath>
#include <stdexcept>

namespace actvocab {

DomainSpec DomainSpec::continuous(std::string id, std::vector<double> low, std::vector<double> high) {
    DomainSpec s;
    s.domain_id = std::move(id);
    s.action_kind = ActionKind::continuous;
    s.action_dim = low.size();
    s.action_low = std::move(low);
    s.action_high = std::move(high);
    s.loss_kind = LossKind::mse;
    s.validate();
    return s;
}

DomainSpec DomainSpec::discrete(std::string id, std::size_t cardinality) {
    DomainSpec s;
    s.domain_id = std::move(id);
    s.action_kind = ActionKind::discrete;
    s.action_dim = cardinality;
    s.loss_kind = LossKind::cross_entropy;
    s.validate();
    return s;
}

void DomainSpec::validate() const {
    if (domain_id.empty()) throw std::invalid_argument("domain spec needs a domain_id");
    if (action_kind == ActionKind::continuous) {
        if (loss_kind != LossKind::mse)
            throw std::invalid_argument("domain '" + domain_id + "': continuous actions train with mse");
        if (action_dim == 0 || action_low.size() != action_dim || action_high.size() != action_dim)
            throw std::invalid_argument("domain '" + domain_id + "': bounds must have action_dim entries");
        for (std::size_t i = 0; i < action_dim; ++i)
            if (!(action_low[i] < action_high[i]))
                throw std::invalid_argument("domain '" + domain_id + "': low < high violated in dimension " +
                                            std::to_string(i));
    } else {
        if (loss_kind != LossKind::cross_entropy)
            throw std::invalid_argument("domain '" + domain_id + "': discrete actions train with cross_entropy");
        if (action_dim < 2) throw std::invalid_argument("domain '" + domain_id + "': cardinality must be >= 2");
        if (!action_low.empty() || !action_high.empty())
            throw std::invalid_argument("domain '" + domain_id + "': discrete domains carry no bounds");
    }
}

void DomainSpec::check_action(const std::vector<double>& action) const {
    if (action_kind == ActionKind::discrete) {
        if (action.size() != 1) throw std::invalid_argument("domain '" + domain_id + "': discrete action needs one index");
        const double idx = action[0];
        if (!(idx >= 0.0) || idx != std::floor(idx) || idx >= static_cast<double>(action_dim))
            throw std::invalid_argument("domain '" + domain_id + "': action index " + std::to_string(idx) +
                                        " outside [0, " + std::to_string(action_dim) + ")");
        return;
    }
    if (action.size() != action_dim)
        throw std::invalid_argument("domain '" + domain_id + "': expected " + std::to_string(action_dim) +
                                    " action values, got " + std::to_string(action.size()));
    for (std::size_t i = 0; i < action_dim; ++i)
        if (!(action[i] >= action_low[i] && action[i] <= action_high[i]))
            throw std::invalid_argument("domain '" + domain_id + "': action[" + std::to_string(i) + "] = " +
                                        std::to_string(action[i]) + " outside [" + std::to_string(action_low[i]) +
                                        ", " + std::to_string(action_high[i]) + "]");
}

nlohmann::json to_json(const DomainSpec& spec) {
    nlohmann::json j;
    j["domain_id"] = spec.domain_id;
    j["action_kind"] = spec.action_kind == ActionKind::continuous ? "continuous" : "discrete";
    j["action_dim"] = spec.action_dim;
    j["action_low"] = spec.action_low;
    j["action_high"] = spec.action_high;
    j["loss_kind"] = spec.loss_kind == LossKind::mse ? "mse" : "cross_entropy";
    return j;
}

DomainSpec domain_spec_from_json(const nlohmann::json& j) {
    DomainSpec s;
    s.domain_id = j.at("domain_id").get<std::string>();
    const auto kind = j.at("action_kind").get<std::string>();
    if (kind != "continuous" && kind != "discrete") throw std::invalid_argument("unknown action_kind '" + kind + "'");
    s.action_kind = kind == "continuous" ? ActionKind::continuous : ActionKind::discrete;
    s.action_dim = j.at("action_dim").get<std::size_t>();
    s.action_low = j.at("action_low").get<std::vector<double>>();
    s.action_high = j.at("action_high").get<std::vector<double>>();
    const auto loss = j.at("loss_kind").get<std::string>();
    if (loss != "mse" && loss != "cross_entropy") throw std::invalid_argument("unknown loss_kind '" + loss + "'");
    s.loss_kind = loss == "mse" ? LossKind::mse : LossKind::cross_entropy;
    s.validate();
    return s;
}

}  // namespace actvocab
