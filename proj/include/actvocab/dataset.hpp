#pragma once

// Demonstration files: one JSON header line followed by one JSON line per
// trajectory. Reals are written in shortest round-trip form, so a file
// reads back bit-exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "actvocab/embodiments.hpp"
#include "actvocab/json.hpp"

namespace actvocab::sim {

inline constexpr int kDatasetFormatVersion = 1;

struct Trajectory {
    std::string domain_id;
    Goal goal;
    WorldState initial_state;
    std::vector<Observation> observations;
    std::vector<Action> actions;
    bool success = false;

    std::size_t length() const { return actions.size(); }
    bool operator==(const Trajectory&) const = default;
};

struct GeneratorConfig {
    std::uint64_t n_trajectories = 100;
    std::uint64_t seed = 0;
    ExpertNoise noise;
    std::uint64_t max_steps = kDefaultMaxSteps;

    bool operator==(const GeneratorConfig& o) const {
        return n_trajectories == o.n_trajectories && seed == o.seed && noise.sigma == o.noise.sigma &&
               noise.random_move_probability == o.noise.random_move_probability && max_steps == o.max_steps;
    }
};

struct DatasetHeader {
    int format_version = kDatasetFormatVersion;
    std::string domain_id;
    TaskKind task = TaskKind::reach;
    GeneratorConfig generator;

    bool operator==(const DatasetHeader&) const = default;
};

struct Dataset {
    DatasetHeader header;
    std::vector<Trajectory> trajectories;

    EmbodimentKind embodiment() const { return parse_embodiment(header.domain_id); }
    std::size_t sample_count() const;
    bool operator==(const Dataset&) const = default;
};

/// Rolls the expert once from `initial`; success=false if it times out.
Trajectory rollout_expert(EmbodimentKind kind, const WorldState& initial, const ExpertNoise& noise, Rng& rng,
                          std::uint64_t max_steps);

/// Trajectory i is drawn from a stream derived from (seed, i, attempt) and
/// failed attempts are redrawn, so the result is independent of `workers`.
Dataset generate_dataset(EmbodimentKind kind, TaskKind task, const GeneratorConfig& config, unsigned workers = 1);

nlohmann::json to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetHeader& h);
DatasetHeader header_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WorldState& s);
WorldState world_state_from_json(const nlohmann::json& j);

std::string serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(const std::string& text);
/// Write to a temporary sibling and rename into place.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Checks layout invariants, action bounds, and that replaying every
/// trajectory's actions from its initial state reproduces the recorded
/// observations bit-exactly. Throws std::runtime_error naming the first
/// offending trajectory and step.
void validate_dataset(const Dataset& dataset);

/// Writes `contents` to path atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace actvocab::sim
