#include "actvocab/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace actvocab {

nlohmann::json to_json(const ModelConfig& c) {
    return {{"n_codes", c.n_codes},
            {"code_dim", c.code_dim},
            {"extractor", to_json(c.extractor)},
            {"head_hidden", c.head_hidden},
            {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_codes = j.at("n_codes").get<std::size_t>();
    c.code_dim = j.at("code_dim").get<std::size_t>();
    c.extractor = extractor_config_from_json(j.at("extractor"));
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

Model Model::init(const ModelConfig& config) {
    Model m;
    m.config_ = config;
    m.codebook_ = codebook::UniversalCodebook::init(config.n_codes, config.code_dim, derive_seed(config.seed, {1}));
    m.extractor_ = ExtractorNet::init(config.extractor, config.n_codes, derive_seed(config.seed, {2}));
    return m;
}

Model Model::clone() const {
    Model copy = init(config_);
    for (const auto& [_, h] : heads_) copy.add_head(h.domain(), 0);
    std::map<std::string, std::pair<grad::Shape, std::vector<double>>> values;
    for (const auto& p : named_parameters())
        values[p.name] = {p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}};
    copy.load_values(values);
    for (auto& p : copy.named_parameters()) {
        for (const auto& q : named_parameters())
            if (q.name == p.name) p.tensor.set_requires_grad(q.tensor.requires_grad());
    }
    return copy;
}

DecoderHead& Model::add_head(const DomainSpec& spec, std::uint64_t seed) {
    if (heads_.count(spec.domain_id))
        throw std::invalid_argument("a head for domain '" + spec.domain_id + "' already exists");
    auto head = DecoderHead::init(spec, config_.code_dim, extractor_.feature_dim(), config_.head_hidden, seed);
    return heads_.emplace(spec.domain_id, std::move(head)).first->second;
}

const DecoderHead& Model::head(const std::string& domain_id) const {
    auto it = heads_.find(domain_id);
    if (it == heads_.end()) {
        std::string known;
        for (const auto& [id, _] : heads_) known += (known.empty() ? "" : ", ") + id;
        throw std::out_of_range("no head for domain '" + domain_id + "' (model has: " + known + ")");
    }
    return it->second;
}

std::vector<grad::NamedParam> Model::named_parameters() const {
    std::vector<grad::NamedParam> out;
    out.push_back({"codebook.embeddings", codebook_.embeddings()});
    extractor_.collect(out);
    for (const auto& [_, h] : heads_) h.collect(out);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : named_parameters()) n += p.tensor.numel();
    return n;
}

double Model::head_fraction(const std::string& domain_id) const {
    return static_cast<double>(head(domain_id).parameter_count()) / static_cast<double>(parameter_count());
}

void Model::check_head_budget(double max_fraction) const {
    for (const auto& [id, h] : heads_) {
        const double f = head_fraction(id);
        if (!(f < max_fraction))
            throw std::runtime_error("head '" + id + "' holds " + std::to_string(h.parameter_count()) + " of " +
                                     std::to_string(parameter_count()) + " parameters (" + std::to_string(100.0 * f) +
                                     "%), above the " + std::to_string(100.0 * max_fraction) + "% budget");
    }
}

void Model::load_values(const std::map<std::string, std::pair<grad::Shape, std::vector<double>>>& values) {
    auto params = named_parameters();
    for (auto& p : params) {
        auto it = values.find(p.name);
        if (it == values.end()) throw std::runtime_error("missing parameter '" + p.name + "'");
        if (it->second.first != p.tensor.shape())
            throw std::runtime_error("parameter '" + p.name + "' has shape " + grad::to_string(it->second.first) +
                                     ", model expects " + grad::to_string(p.tensor.shape()));
        auto dst = p.tensor.mutable_data();
        std::copy(it->second.second.begin(), it->second.second.end(), dst.begin());
    }
}

Decision Model::act(const std::string& domain_id, std::span<const double> obs, const sim::Goal& goal) const {
    const auto& h = head(domain_id);
    Decision d;
    d.logits = extractor_.extract_logits(obs, goal);
    d.code = codebook::argmax(d.logits);
    d.decoded = h.decode(codebook_.row(d.code), extractor_.encode_obs_features(obs));
    d.action = h.to_action(d.decoded);
    return d;
}

std::vector<double> Model::decode_code(const std::string& domain_id, std::size_t code,
                                       std::span<const double> obs) const {
    const auto& h = head(domain_id);
    return h.decode(codebook_.row(code), extractor_.encode_obs_features(obs));
}

}  // namespace actvocab
