#pragma once

// Interpretability studies over a trained model: code-utilization profiles,
// pairwise JS divergence between them, and a cross-embodiment consistency
// probe with a shuffled-code control.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "actvocab/dataset.hpp"
#include "actvocab/json.hpp"
#include "actvocab/model.hpp"

namespace actvocab::analysis {

struct UtilizationProfile {
    std::string domain_id;
    sim::TaskKind task = sim::TaskKind::reach;
    std::vector<double> histogram;
    std::uint64_t n_samples = 0;

    std::string label() const;
};

/// Hard selection on every stored (observation, goal) pair.
UtilizationProfile profile_utilization(const Model& model, const sim::Dataset& dataset);

/// Jensen-Shannon divergence in nats. Throws on length mismatch or if either
/// input is not a probability vector (tolerance 1e-9).
double js_divergence(std::span<const double> p, std::span<const double> q);

struct DivergenceMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> values;
    /// NaN when no pair of that kind exists.
    double same_task_cross_embodiment = 0.0;
    double cross_task_same_embodiment = 0.0;
};

DivergenceMatrix divergence_matrix(std::span<const UtilizationProfile> profiles);

struct ProbeConfig {
    std::size_t horizon = 5;
    std::size_t n_starts = 20;
    double cosine_threshold = 0.7;
    std::size_t control_seeds = 5;
    /// Starts are drawn uniformly from [-extent, extent]^2.
    double start_extent = 0.25;
    std::uint64_t seed = 0;
};

struct CodeConsistency {
    std::size_t code = 0;
    std::vector<std::string> embodiments;
    /// Mean net displacement direction per embodiment; empty if it vanishes.
    std::vector<std::optional<std::array<double, 2>>> directions;
    /// -1 when some direction is undefined.
    double min_cosine = -1.0;
    bool consistent = false;
};

/// Replays code_id's embedding for `horizon` steps from n_starts centered
/// starts on each embodiment. `mapping`, if given, holds one code->row
/// permutation per embodiment and replaces the identity lookup.
CodeConsistency consistency_probe(const Model& model, std::size_t code_id,
                                  std::span<const sim::EmbodimentKind> embodiments, const ProbeConfig& config,
                                  const std::vector<std::vector<std::size_t>>* mapping = nullptr);

struct ConsistencyReport {
    std::vector<CodeConsistency> codes;
    double consistent_fraction = 0.0;
    /// Mean over the control seeds.
    double control_fraction = 0.0;
    std::vector<double> control_fractions;
};

ConsistencyReport consistency_report(const Model& model, std::span<const sim::EmbodimentKind> embodiments,
                                     const ProbeConfig& config = {});

struct CodeSearch {
    std::vector<std::size_t> codes;
    bool success = false;
    sim::WorldState final_state;
};

/// Greedy search over code sequences. Each step expands every kept sequence
/// by every code and keeps the `beam_width` whose states lie closest to the
/// current target (the goal, or the object until it is carried). Width 1 is
/// plain one-step greedy.
CodeSearch greedy_code_search(const Model& model, sim::EmbodimentKind kind, const sim::WorldState& initial,
                              std::size_t max_steps, std::size_t beam_width = 8);

nlohmann::json to_json(const UtilizationProfile& p);
nlohmann::json to_json(const DivergenceMatrix& m);
nlohmann::json to_json(const ConsistencyReport& r);

/// Fixed-width table with the two group means underneath.
std::string render_matrix(const DivergenceMatrix& m);
std::string render_consistency(const ConsistencyReport& r);

}  // namespace actvocab::analysis
