#pragma once

// Joint behavior-cloning over a mixture of heterogeneous demonstration sets.
//
// Every batch element first draws a dataset according to the sample rates
// and then one (observation, goal, action) tuple uniformly from it, so batch
// composition and Gumbel noise are pure functions of (seed, step). The
// codebook and extractor receive gradient from every element; each head only
// from elements of its own domain.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "actvocab/codebook.hpp"
#include "actvocab/dataset.hpp"
#include "actvocab/model.hpp"
#include "actvocab/optim.hpp"

namespace actvocab {

struct DomainSource {
    std::string path;
    double sample_rate = 1.0;

    bool operator==(const DomainSource&) const = default;
};

struct TrainConfig {
    std::vector<DomainSource> domains;
    std::size_t batch_size = 64;
    std::uint64_t total_steps = 20000;
    grad::OptimizerConfig optimizer;
    codebook::AnnealSchedule anneal = codebook::AnnealSchedule::spanning(2.0, 0.5, 20000);
    codebook::SelectionMode selection_mode = codebook::SelectionMode::soft;
    std::uint64_t seed = 0;
    std::uint64_t eval_every = 1000;

    void validate() const;
    /// Sample rates scaled to sum to one.
    std::vector<double> normalized_rates() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Unknown keys at any level are an error. Missing keys take defaults; a
/// missing anneal.decay_rate is derived so tau reaches tau_min at
/// anneal.total_steps (default: total_steps).
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig read_train_config(const std::filesystem::path& path);

struct Sample {
    std::size_t source = 0;  // index into the mixture
    const std::string* domain_id = nullptr;
    const sim::Observation* observation = nullptr;
    const sim::Goal* goal = nullptr;
    const sim::Action* action = nullptr;
};

class MixtureSampler {
public:
    /// datasets[i] is drawn with probability rates[i] (normalized here).
    MixtureSampler(std::vector<sim::Dataset> datasets, std::vector<double> rates);

    std::size_t source_count() const { return datasets_.size(); }
    const sim::Dataset& dataset(std::size_t i) const { return datasets_.at(i); }
    const std::vector<double>& rates() const { return rates_; }
    std::size_t draw_source(Rng& rng) const;
    std::vector<Sample> batch(std::uint64_t seed, std::uint64_t step, std::size_t batch_size) const;

private:
    struct Ref {
        std::size_t trajectory;
        std::size_t t;
    };
    std::vector<sim::Dataset> datasets_;
    std::vector<double> rates_;
    std::vector<double> cumulative_;
    std::vector<std::vector<Ref>> index_;
};

struct BatchLoss {
    grad::Tensor total;  // sum of per-element losses / B
    std::map<std::string, double> domain_loss;
    std::map<std::string, std::size_t> domain_count;
    std::vector<std::size_t> selected;
};

/// Forward pass of the joint objective. `noise` holds B*N Gumbel samples
/// (empty for hard selection).
BatchLoss batch_loss(const Model& model, std::span<const Sample> batch, std::span<const double> noise, double tau,
                     codebook::SelectionMode mode);

struct StepResult {
    std::uint64_t step = 0;
    double tau = 0.0;
    double total_loss = 0.0;
    std::map<std::string, double> domain_loss;  // mean per-element loss by head
    std::map<std::string, std::size_t> domain_count;
    std::vector<std::size_t> selected;
};

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Trainer {
public:
    /// Parameters with requires_grad=false stay frozen. Heads are looked up by
    /// each dataset's domain_id and must already exist on the model.
    Trainer(Model& model, TrainConfig config, std::vector<sim::Dataset> datasets);

    std::uint64_t step() const { return step_; }
    const TrainConfig& config() const { return config_; }
    const MixtureSampler& sampler() const { return sampler_; }
    grad::AdamW& optimizer() { return optimizer_; }
    const grad::AdamW& optimizer() const { return optimizer_; }

    /// Draws the batch for the current step, updates, and advances the step.
    StepResult train_step();
    /// One update on an explicit batch at step index `step` (does not advance).
    StepResult train_on(const std::vector<Sample>& batch, std::uint64_t step);

    /// Trains until step() == until, writing a metrics line every eval_every
    /// steps when `metrics` is non-null.
    void run(std::uint64_t until, std::ostream* metrics = nullptr,
             const std::function<void(const StepResult&)>& on_step = {});

    /// Resume support: restore the step counter and optimizer moments.
    void restore(std::uint64_t step, std::map<std::string, grad::Moments> moments);

private:
    Model& model_;
    TrainConfig config_;
    MixtureSampler sampler_;
    grad::AdamW optimizer_;
    std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------- evaluation

struct EvalResult {
    std::uint64_t episodes = 0;
    std::uint64_t successes = 0;
    double success_rate = 0.0;
    double mean_length = 0.0;  // failures count as max_steps
};

using Policy = std::function<sim::Action(const sim::WorldState&)>;

Policy model_policy(const Model& model, sim::EmbodimentKind kind);
Policy expert_policy(sim::EmbodimentKind kind);
/// Uniform random actions within the domain bounds.
Policy random_policy(sim::EmbodimentKind kind, std::uint64_t seed);

/// Episode e starts from random_initial_state drawn from (seed, e).
EvalResult evaluate_policy(sim::EmbodimentKind kind, sim::TaskKind task, std::uint64_t n_episodes,
                           std::uint64_t seed, const Policy& policy, std::uint64_t max_steps = sim::kDefaultMaxSteps);
/// Closed-loop rollouts under hard selection. Throws if the model has no head for `kind`.
EvalResult evaluate(const Model& model, sim::EmbodimentKind kind, sim::TaskKind task, std::uint64_t n_episodes,
                    std::uint64_t seed, std::uint64_t max_steps = sim::kDefaultMaxSteps);

// -------------------------------------------------------------- adaptation

struct AdaptConfig {
    std::uint64_t steps = 5000;
    std::size_t batch_size = 64;
    grad::OptimizerConfig optimizer;  // learning rate 3e-4 by default
    std::uint64_t seed = 0;
    /// Selection used to feed the new head while the extractor is frozen.
    codebook::SelectionMode selection_mode = codebook::SelectionMode::hard;

    void validate() const;
};

struct AdaptResult {
    explicit AdaptResult(Model m) : model(std::move(m)) {}

    Model model;
    std::size_t trainable_parameters = 0;
    std::size_t total_parameters = 0;
    double trainable_fraction = 0.0;
    std::map<std::string, grad::Moments> head_moments;
};

/// Returns a copy of `base` with a new head for `spec`, trained on `datasets`
/// while the codebook, extractor, and existing heads stay bit-frozen.
AdaptResult adapt(const Model& base, const DomainSpec& spec, std::vector<sim::Dataset> datasets,
                  const AdaptConfig& config);

/// Per-dataset mixture entropy of hard code selections over every stored
/// (observation, goal), weighted by sample rate.
codebook::Utilization mixture_utilization(const Model& model, const std::vector<sim::Dataset>& datasets,
                                          const std::vector<double>& rates);

}  // namespace actvocab
