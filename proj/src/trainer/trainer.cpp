#include "actvocab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace actvocab {

namespace {

constexpr std::uint64_t kBatchTag = 0xBA7C4ULL;
constexpr std::uint64_t kNoiseTag = 0x6E015EULL;
constexpr std::uint64_t kEpisodeTag = 0xE7A1ULL;

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            throw std::invalid_argument("unknown key '" + key + "' in " + where + " (allowed: " + list + ")");
        }
    }
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void TrainConfig::validate() const {
    if (domains.empty()) throw std::invalid_argument("train config needs at least one domain");
    for (const auto& d : domains)
        if (!(d.sample_rate > 0.0) || !std::isfinite(d.sample_rate))
            throw std::invalid_argument("sample_rate for '" + d.path + "' must be positive");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (eval_every == 0) throw std::invalid_argument("eval_every must be positive");
    optimizer.validate();
    anneal.validate();
}

std::vector<double> TrainConfig::normalized_rates() const {
    std::vector<double> rates;
    for (const auto& d : domains) rates.push_back(d.sample_rate);
    const double total = std::accumulate(rates.begin(), rates.end(), 0.0);
    for (auto& r : rates) r /= total;
    return rates;
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json domains = nlohmann::json::array();
    for (const auto& d : c.domains) domains.push_back({{"path", d.path}, {"sample_rate", d.sample_rate}});
    return {{"domains", domains},
            {"batch_size", c.batch_size},
            {"total_steps", c.total_steps},
            {"optimizer",
             {{"learning_rate", c.optimizer.learning_rate},
              {"beta1", c.optimizer.beta1},
              {"beta2", c.optimizer.beta2},
              {"weight_decay", c.optimizer.weight_decay},
              {"epsilon", c.optimizer.epsilon}}},
            {"anneal",
             {{"tau_start", c.anneal.tau_start},
              {"tau_min", c.anneal.tau_min},
              {"decay_rate", c.anneal.decay_rate},
              {"total_steps", c.anneal.total_steps}}},
            {"selection_mode", codebook::to_string(c.selection_mode)},
            {"seed", c.seed},
            {"eval_every", c.eval_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"domains", "batch_size", "total_steps", "optimizer", "anneal", "selection_mode", "seed",
                         "eval_every"},
                        "train config");
    TrainConfig c;
    if (!j.contains("domains") || !j.at("domains").is_array())
        throw std::invalid_argument("train config needs a 'domains' array");
    for (const auto& d : j.at("domains")) {
        reject_unknown_keys(d, {"path", "sample_rate"}, "domains entry");
        DomainSource s;
        s.path = d.at("path").get<std::string>();
        read_if(d, "sample_rate", s.sample_rate);
        c.domains.push_back(std::move(s));
    }
    read_if(j, "batch_size", c.batch_size);
    read_if(j, "total_steps", c.total_steps);
    read_if(j, "seed", c.seed);
    read_if(j, "eval_every", c.eval_every);
    if (j.contains("selection_mode"))
        c.selection_mode = codebook::parse_selection_mode(j.at("selection_mode").get<std::string>());
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        reject_unknown_keys(o, {"learning_rate", "beta1", "beta2", "weight_decay", "epsilon"}, "optimizer");
        read_if(o, "learning_rate", c.optimizer.learning_rate);
        read_if(o, "beta1", c.optimizer.beta1);
        read_if(o, "beta2", c.optimizer.beta2);
        read_if(o, "weight_decay", c.optimizer.weight_decay);
        read_if(o, "epsilon", c.optimizer.epsilon);
    }
    double tau_start = 2.0, tau_min = 0.5;
    std::uint64_t anneal_steps = std::max<std::uint64_t>(c.total_steps, 1);
    std::optional<double> decay_rate;
    if (j.contains("anneal")) {
        const auto& a = j.at("anneal");
        reject_unknown_keys(a, {"tau_start", "tau_min", "decay_rate", "total_steps"}, "anneal");
        read_if(a, "tau_start", tau_start);
        read_if(a, "tau_min", tau_min);
        read_if(a, "total_steps", anneal_steps);
        if (a.contains("decay_rate")) decay_rate = a.at("decay_rate").get<double>();
    }
    c.anneal = codebook::AnnealSchedule::spanning(tau_start, tau_min, anneal_steps);
    if (decay_rate) c.anneal.decay_rate = *decay_rate;
    c.validate();
    return c;
}

TrainConfig read_train_config(const std::filesystem::path& path) {
    const auto text = sim::read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("train config " + path.string() + " is not valid JSON: " + e.what());
    }
    return train_config_from_json(j);
}

// ------------------------------------------------------------------ sampler

MixtureSampler::MixtureSampler(std::vector<sim::Dataset> datasets, std::vector<double> rates)
    : datasets_(std::move(datasets)), rates_(std::move(rates)) {
    if (datasets_.empty()) throw std::invalid_argument("mixture needs at least one dataset");
    if (rates_.size() != datasets_.size())
        throw std::invalid_argument("mixture has " + std::to_string(datasets_.size()) + " datasets but " +
                                    std::to_string(rates_.size()) + " sample rates");
    double total = 0.0;
    for (double r : rates_) {
        if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("sample rates must be positive");
        total += r;
    }
    double acc = 0.0;
    for (auto& r : rates_) {
        r /= total;
        acc += r;
        cumulative_.push_back(acc);
    }
    cumulative_.back() = 1.0;
    for (const auto& ds : datasets_) {
        std::vector<Ref> refs;
        for (std::size_t i = 0; i < ds.trajectories.size(); ++i)
            for (std::size_t t = 0; t < ds.trajectories[i].length(); ++t) refs.push_back({i, t});
        if (refs.empty()) throw std::invalid_argument("dataset '" + ds.header.domain_id + "' has no samples");
        index_.push_back(std::move(refs));
    }
}

std::size_t MixtureSampler::draw_source(Rng& rng) const {
    const double u = rng.uniform();
    return static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                                    cumulative_.begin());
}

std::vector<Sample> MixtureSampler::batch(std::uint64_t seed, std::uint64_t step, std::size_t batch_size) const {
    Rng rng(seed, {kBatchTag, step});
    std::vector<Sample> out(batch_size);
    for (auto& s : out) {
        s.source = std::min(draw_source(rng), datasets_.size() - 1);
        s.domain_id = &datasets_[s.source].header.domain_id;
        const auto& refs = index_[s.source];
        const auto ref = refs[rng.index(refs.size())];
        const auto& traj = datasets_[s.source].trajectories[ref.trajectory];
        s.observation = &traj.observations[ref.t];
        s.goal = &traj.goal;
        s.action = &traj.actions[ref.t];
    }
    return out;
}

// ------------------------------------------------------------------ trainer

Trainer::Trainer(Model& model, TrainConfig config, std::vector<sim::Dataset> datasets)
    : model_(model),
      config_(std::move(config)),
      sampler_(std::move(datasets), config_.normalized_rates()),
      optimizer_(config_.optimizer) {
    config_.validate();
    for (std::size_t i = 0; i < sampler_.source_count(); ++i)
        model_.head(sampler_.dataset(i).header.domain_id);  // throws naming the known heads
}

StepResult Trainer::train_step() {
    auto result = train_on(sampler_.batch(config_.seed, step_, config_.batch_size), step_);
    ++step_;
    return result;
}

BatchLoss batch_loss(const Model& model, std::span<const Sample> batch, std::span<const double> noise, double tau,
                     codebook::SelectionMode mode) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const std::size_t rows = batch.size();
    std::vector<double> trunk, back;
    trunk.reserve(rows * kTrunkInputSize);
    back.reserve(rows * kBackboneInputSize);
    std::map<std::string, std::vector<std::size_t>> rows_of_head;
    for (std::size_t r = 0; r < rows; ++r) {
        const auto ti = trunk_input(*batch[r].observation, *batch[r].goal);
        const auto bi = backbone_input(*batch[r].observation);
        trunk.insert(trunk.end(), ti.begin(), ti.end());
        back.insert(back.end(), bi.begin(), bi.end());
        rows_of_head[*batch[r].domain_id].push_back(r);
    }

    const auto& extractor = model.extractor();
    const auto logits = extractor.logits(grad::Tensor::constant({rows, kTrunkInputSize}, std::move(trunk)));
    const auto selection = codebook::select_batch(model.codebook(), logits, noise, tau, mode);
    const auto features = extractor.features(grad::Tensor::constant({rows, kBackboneInputSize}, std::move(back)));

    BatchLoss out;
    for (const auto& [id, idx] : rows_of_head) {
        const auto& head = model.head(id);
        const bool all = idx.size() == rows;
        const auto u = all ? selection.u_star : grad::gather_rows(selection.u_star, idx);
        const auto f = all ? features : grad::gather_rows(features, idx);
        std::vector<sim::Action> labels;
        labels.reserve(idx.size());
        for (auto r : idx) labels.push_back(*batch[r].action);
        const auto l = head.loss_sum(head.forward(u, f), labels);
        out.domain_loss[id] = l.item() / static_cast<double>(idx.size());
        out.domain_count[id] = idx.size();
        out.total = out.total.defined() ? grad::add(out.total, l) : l;
    }
    out.total = grad::scale(out.total, 1.0 / static_cast<double>(rows));
    out.selected = selection.selected;
    return out;
}

StepResult Trainer::train_on(const std::vector<Sample>& batch, std::uint64_t step) {
    StepResult result;
    result.step = step;
    result.tau = codebook::anneal(config_.anneal, step);
    std::vector<double> noise;
    if (config_.selection_mode != codebook::SelectionMode::hard) {
        Rng rng(config_.seed, {kNoiseTag, step});
        noise = codebook::sample_gumbel(batch.size() * model_.codebook().n_codes(), rng);
    }
    auto loss = batch_loss(model_, batch, noise, result.tau, config_.selection_mode);
    result.total_loss = loss.total.item();
    result.domain_loss = std::move(loss.domain_loss);
    result.domain_count = std::move(loss.domain_count);
    result.selected = std::move(loss.selected);

    if (!std::isfinite(result.total_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step << " (tau " << result.tau << ")";
        for (const auto& [id, l] : result.domain_loss) msg << "; " << id << " loss " << l;
        throw NonFiniteLoss(msg.str());
    }

    grad::backward(loss.total);
    std::vector<grad::NamedParam> trainable;
    for (auto& p : model_.named_parameters())
        if (p.tensor.requires_grad() && p.tensor.has_grad()) trainable.push_back(p);
    optimizer_.step(trainable, step + 1);
    return result;
}

void Trainer::run(std::uint64_t until, std::ostream* metrics, const std::function<void(const StepResult&)>& on_step) {
    std::map<std::string, double> loss_sum;
    std::map<std::string, std::size_t> loss_count;
    std::vector<std::size_t> selections;
    while (step_ < until) {
        const auto r = train_step();
        for (const auto& [id, l] : r.domain_loss) {
            loss_sum[id] += l * static_cast<double>(r.domain_count.at(id));
            loss_count[id] += r.domain_count.at(id);
        }
        selections.insert(selections.end(), r.selected.begin(), r.selected.end());
        if (on_step) on_step(r);
        if (metrics && (step_ % config_.eval_every == 0 || step_ == until)) {
            nlohmann::json losses = nlohmann::json::object();
            for (const auto& [id, s] : loss_sum) losses[id] = s / static_cast<double>(loss_count[id]);
            const auto u = codebook::utilization(selections, model_.codebook().n_codes());
            nlohmann::json line = {{"step", step_},
                                   {"loss", losses},
                                   {"tau", r.tau},
                                   {"utilization_entropy", u.entropy},
                                   {"perplexity", u.perplexity}};
            *metrics << line.dump() << '\n' << std::flush;
            loss_sum.clear();
            loss_count.clear();
            selections.clear();
        }
    }
}

void Trainer::restore(std::uint64_t step, std::map<std::string, grad::Moments> moments) {
    step_ = step;
    optimizer_.set_moments(std::move(moments));
}

// --------------------------------------------------------------- evaluation

Policy model_policy(const Model& model, sim::EmbodimentKind kind) {
    const std::string id = sim::to_string(kind);
    model.head(id);
    return [&model, kind, id](const sim::WorldState& s) {
        const auto obs = sim::observe(kind, s);
        return model.act(id, obs, s.goal).action;
    };
}

Policy expert_policy(sim::EmbodimentKind kind) {
    return [kind](const sim::WorldState& s) {
        return sim::expert_action(kind, s, s.goal, sim::ExpertNoise::none(), nullptr);
    };
}

Policy random_policy(sim::EmbodimentKind kind, std::uint64_t seed) {
    auto rng = std::make_shared<Rng>(seed, std::initializer_list<std::uint64_t>{0x7A4D0ULL});
    const auto spec = sim::domain_spec(kind);
    return [rng, spec](const sim::WorldState&) {
        if (spec.action_kind == ActionKind::discrete)
            return sim::Action{static_cast<double>(rng->index(spec.action_dim))};
        sim::Action a(spec.action_dim);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng->uniform(spec.action_low[i], spec.action_high[i]);
        return a;
    };
}

EvalResult evaluate_policy(sim::EmbodimentKind kind, sim::TaskKind task, std::uint64_t n_episodes,
                           std::uint64_t seed, const Policy& policy, std::uint64_t max_steps) {
    if (n_episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
    EvalResult r;
    r.episodes = n_episodes;
    double total_length = 0.0;
    for (std::uint64_t e = 0; e < n_episodes; ++e) {
        Rng rng(seed, {kEpisodeTag, e});
        auto state = sim::random_initial_state(kind, task, rng);
        std::uint64_t t = 0;
        bool solved = false;
        for (; t < max_steps; ++t) {
            state = sim::step(kind, state, policy(state));
            if (sim::success(state, state.goal)) {
                solved = true;
                ++t;
                break;
            }
        }
        if (solved) ++r.successes;
        total_length += static_cast<double>(solved ? t : max_steps);
    }
    r.success_rate = static_cast<double>(r.successes) / static_cast<double>(n_episodes);
    r.mean_length = total_length / static_cast<double>(n_episodes);
    return r;
}

EvalResult evaluate(const Model& model, sim::EmbodimentKind kind, sim::TaskKind task, std::uint64_t n_episodes,
                    std::uint64_t seed, std::uint64_t max_steps) {
    return evaluate_policy(kind, task, n_episodes, seed, model_policy(model, kind), max_steps);
}

// --------------------------------------------------------------- adaptation

void AdaptConfig::validate() const {
    if (steps == 0) throw std::invalid_argument("adaptation needs at least one step");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    optimizer.validate();
}

AdaptResult adapt(const Model& base, const DomainSpec& spec, std::vector<sim::Dataset> datasets,
                  const AdaptConfig& config) {
    config.validate();
    for (const auto& ds : datasets)
        if (ds.header.domain_id != spec.domain_id)
            throw std::invalid_argument("adaptation data for '" + ds.header.domain_id + "' does not match head '" +
                                        spec.domain_id + "'");
    AdaptResult out{base.clone()};
    for (auto& p : out.model.named_parameters()) p.tensor.set_requires_grad(false);
    out.model.add_head(spec, derive_seed(config.seed, {0xADA97ULL}));

    const std::string prefix = "heads." + spec.domain_id + ".";
    for (const auto& p : out.model.named_parameters()) {
        out.total_parameters += p.tensor.numel();
        if (p.tensor.requires_grad()) {
            if (p.name.rfind(prefix, 0) != 0) throw std::logic_error("unexpected trainable parameter " + p.name);
            out.trainable_parameters += p.tensor.numel();
        }
    }
    out.trainable_fraction =
        static_cast<double>(out.trainable_parameters) / static_cast<double>(out.total_parameters);

    TrainConfig tc;
    tc.domains.assign(datasets.size(), DomainSource{});
    tc.batch_size = config.batch_size;
    tc.total_steps = config.steps;
    tc.optimizer = config.optimizer;
    tc.anneal = codebook::AnnealSchedule::spanning(1.0, 1.0, 1);
    tc.selection_mode = config.selection_mode;
    tc.seed = config.seed;
    Trainer trainer(out.model, tc, std::move(datasets));
    trainer.run(config.steps);
    out.head_moments = trainer.optimizer().moments();
    return out;
}

codebook::Utilization mixture_utilization(const Model& model, const std::vector<sim::Dataset>& datasets,
                                          const std::vector<double>& rates) {
    if (datasets.size() != rates.size()) throw std::invalid_argument("one sample rate per dataset required");
    const double total = std::accumulate(rates.begin(), rates.end(), 0.0);
    std::vector<double> mix(model.codebook().n_codes(), 0.0);
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        std::vector<double> hist(mix.size(), 0.0);
        double count = 0.0;
        for (const auto& traj : datasets[d].trajectories)
            for (const auto& obs : traj.observations) {
                hist[codebook::argmax(model.extractor().extract_logits(obs, traj.goal))] += 1.0;
                count += 1.0;
            }
        if (count == 0.0) continue;
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += rates[d] / total * hist[i] / count;
    }
    return codebook::utilization_from_histogram(std::move(mix));
}

}  // namespace actvocab
