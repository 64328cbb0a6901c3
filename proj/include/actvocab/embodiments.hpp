#pragma once

// Five 2D embodiments sharing one task family (reach, pick & place) but with
// incompatible action interfaces, plus their scripted experts.
//
//   point_velocity  pos += a,                     a in [-0.1, 0.1]^2
//   point_position  move <= 0.1 toward target a,  a in [-1, 1]^2
//   diff_drive      heading += w; pos += v (cos h, sin h),  v in [0, 0.1], w in [-0.5, 0.5]
//   grid_discrete   {+x, -x, +y, -y, stay, grip, release}, lattice step 0.1
//   accel_point     vel += a (|vel| <= 0.1), pos += vel,     a in [-0.05, 0.05]^2
//
// Continuous interfaces append a grip channel in [0, 1], engaged above 0.5.
// Within a step the gripper is resolved first (attach when engaged and the
// object is within 0.05, detach when released), then the agent moves and a
// carried object follows it. accel_point is held out of pretraining.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "actvocab/domain.hpp"
#include "actvocab/rng.hpp"

namespace actvocab::sim {

enum class EmbodimentKind { point_velocity, point_position, diff_drive, grid_discrete, accel_point };
enum class TaskKind { reach, pick_place };

inline constexpr std::size_t kObservationSize = 12;
inline constexpr std::size_t kGoalSize = 4;
inline constexpr double kSuccessRadius = 0.05;
inline constexpr double kGripRadius = 0.05;
inline constexpr double kGridStep = 0.1;
inline constexpr std::size_t kDefaultMaxSteps = 200;

std::string to_string(EmbodimentKind kind);
std::string to_string(TaskKind task);
/// Throws std::invalid_argument listing the allowed names.
EmbodimentKind parse_embodiment(const std::string& name);
TaskKind parse_task(const std::string& name);
std::span<const EmbodimentKind> all_embodiments();
std::span<const EmbodimentKind> pretraining_embodiments();

DomainSpec domain_spec(EmbodimentKind kind);

// Discrete action indices of grid_discrete.
enum GridAction : int { kPlusX = 0, kMinusX, kPlusY, kMinusY, kStay, kGrip, kRelease, kGridActionCount };

struct Goal {
    TaskKind task = TaskKind::reach;
    std::array<double, 2> target{0.0, 0.0};

    /// [reach, pick_place, target_x, target_y]
    std::array<double, kGoalSize> encode() const;
    bool operator==(const Goal&) const = default;
};

struct WorldState {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;  // diff_drive only, radians in [-pi, pi)
    double vx = 0.0;       // accel_point only
    double vy = 0.0;
    int grip = 0;
    double object_x = 0.0;
    double object_y = 0.0;
    int carried = 0;
    Goal goal;
    std::uint64_t step_count = 0;

    bool operator==(const WorldState&) const = default;
};

using Observation = std::array<double, kObservationSize>;
using Action = std::vector<double>;

/// Canonical layout: [agent_x, agent_y, heading, aux, grip, object_x,
/// object_y, carried, goal_x, goal_y, 0, 0]. diff_drive puts heading/pi in
/// the heading slot; accel_point puts its direction of travel there and
/// speed/0.1 in aux.
Observation observe(EmbodimentKind kind, const WorldState& state);
/// Throws std::invalid_argument when the vector breaks the layout invariants.
void validate_observation(std::span<const double> obs);

/// One dt=1 transition. Throws std::invalid_argument on invalid actions.
WorldState step(EmbodimentKind kind, const WorldState& state, const Action& action);
bool success(const WorldState& state, const Goal& goal);

struct ExpertNoise {
    double sigma = 0.01;                // Gaussian on continuous motion channels
    double random_move_probability = 0.05;  // grid_discrete

    static ExpertNoise none() { return {0.0, 0.0}; }
};

/// Proportional controller per interface. `rng` may be null when noise is
/// zero; noisy actions are clipped back into bounds.
Action expert_action(EmbodimentKind kind, const WorldState& state, const Goal& goal, const ExpertNoise& noise,
                     Rng* rng);

/// Agent, object and target uniform in [-0.8, 0.8]^2 (snapped to the lattice
/// for grid_discrete), never already solved.
WorldState random_initial_state(EmbodimentKind kind, TaskKind task, Rng& rng);

double distance(double ax, double ay, double bx, double by);

}  // namespace actvocab::sim
