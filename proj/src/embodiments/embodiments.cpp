#include "actvocab/embodiments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace actvocab::sim {

namespace {

constexpr std::array<EmbodimentKind, 5> kAll{EmbodimentKind::point_velocity, EmbodimentKind::point_position,
                                             EmbodimentKind::diff_drive, EmbodimentKind::grid_discrete,
                                             EmbodimentKind::accel_point};
constexpr std::array<EmbodimentKind, 4> kPretraining{EmbodimentKind::point_velocity, EmbodimentKind::point_position,
                                                     EmbodimentKind::diff_drive, EmbodimentKind::grid_discrete};

constexpr double kMaxVelocityStep = 0.1;
constexpr double kMaxPositionStep = 0.1;
constexpr double kMaxDriveSpeed = 0.1;
constexpr double kMaxTurn = 0.5;
constexpr double kMaxAccel = 0.05;
constexpr double kMaxSpeed = 0.1;
constexpr double kReleaseRadius = 0.04;
constexpr double kAlignTolerance = 0.2;
constexpr double kSpawnExtent = 0.8;

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }
double clip_pos(double v) { return clip(v, -1.0, 1.0); }
double snap(double v) { return std::round(v * 10.0) / 10.0; }

double wrap_angle(double a) {
    const double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a < 0.0) a += two_pi;
    return a - std::numbers::pi;
}

bool is_continuous(EmbodimentKind kind) { return kind != EmbodimentKind::grid_discrete; }

// Motion toward `target` through each interface, gripper channel excluded.
std::vector<double> motion_toward(EmbodimentKind kind, const WorldState& s, double tx, double ty) {
    const double dx = tx - s.x, dy = ty - s.y;
    switch (kind) {
        case EmbodimentKind::point_velocity:
            return {clip(dx, -kMaxVelocityStep, kMaxVelocityStep), clip(dy, -kMaxVelocityStep, kMaxVelocityStep)};
        case EmbodimentKind::point_position: return {tx, ty};
        case EmbodimentKind::diff_drive: {
            const double dist = std::hypot(dx, dy);
            if (dist < 1e-12) return {0.0, 0.0};
            const double err = wrap_angle(std::atan2(dy, dx) - s.heading);
            const double turn = clip(err, -kMaxTurn, kMaxTurn);
            const double speed = std::abs(err - turn) < kAlignTolerance ? std::min(kMaxDriveSpeed, dist) : 0.0;
            return {speed, turn};
        }
        case EmbodimentKind::accel_point:
            return {clip(0.5 * dx - 1.0 * s.vx, -kMaxAccel, kMaxAccel), clip(0.5 * dy - 1.0 * s.vy, -kMaxAccel, kMaxAccel)};
        case EmbodimentKind::grid_discrete: break;
    }
    throw std::logic_error("motion_toward: not a continuous embodiment");
}

std::vector<double> hold_still(EmbodimentKind kind, const WorldState& s) {
    switch (kind) {
        case EmbodimentKind::point_velocity: return {0.0, 0.0};
        case EmbodimentKind::point_position: return {s.x, s.y};
        case EmbodimentKind::diff_drive: return {0.0, 0.0};
        case EmbodimentKind::accel_point:
            return {clip(-s.vx, -kMaxAccel, kMaxAccel), clip(-s.vy, -kMaxAccel, kMaxAccel)};
        case EmbodimentKind::grid_discrete: break;
    }
    throw std::logic_error("hold_still: not a continuous embodiment");
}

int grid_move_toward(const WorldState& s, double tx, double ty) {
    const double dx = tx - s.x, dy = ty - s.y;
    const double half = kGridStep / 2.0;
    if (std::abs(dx) >= std::abs(dy) && std::abs(dx) > half) return dx > 0 ? kPlusX : kMinusX;
    if (std::abs(dy) > half) return dy > 0 ? kPlusY : kMinusY;
    return kStay;
}

}  // namespace

std::string to_string(EmbodimentKind kind) {
    switch (kind) {
        case EmbodimentKind::point_velocity: return "point_velocity";
        case EmbodimentKind::point_position: return "point_position";
        case EmbodimentKind::diff_drive: return "diff_drive";
        case EmbodimentKind::grid_discrete: return "grid_discrete";
        case EmbodimentKind::accel_point: return "accel_point";
    }
    return "unknown";
}

std::string to_string(TaskKind task) { return task == TaskKind::reach ? "reach" : "pick_place"; }

EmbodimentKind parse_embodiment(const std::string& name) {
    for (auto k : kAll)
        if (to_string(k) == name) return k;
    std::string allowed;
    for (auto k : kAll) allowed += (allowed.empty() ? "" : ", ") + to_string(k);
    throw std::invalid_argument("unknown embodiment '" + name + "'; allowed: " + allowed);
}

TaskKind parse_task(const std::string& name) {
    if (name == "reach") return TaskKind::reach;
    if (name == "pick_place") return TaskKind::pick_place;
    throw std::invalid_argument("unknown task '" + name + "'; allowed: reach, pick_place");
}

std::span<const EmbodimentKind> all_embodiments() { return kAll; }
std::span<const EmbodimentKind> pretraining_embodiments() { return kPretraining; }

DomainSpec domain_spec(EmbodimentKind kind) {
    const std::string id = to_string(kind);
    switch (kind) {
        case EmbodimentKind::point_velocity:
            return DomainSpec::continuous(id, {-kMaxVelocityStep, -kMaxVelocityStep, 0.0},
                                          {kMaxVelocityStep, kMaxVelocityStep, 1.0});
        case EmbodimentKind::point_position: return DomainSpec::continuous(id, {-1.0, -1.0, 0.0}, {1.0, 1.0, 1.0});
        case EmbodimentKind::diff_drive:
            return DomainSpec::continuous(id, {0.0, -kMaxTurn, 0.0}, {kMaxDriveSpeed, kMaxTurn, 1.0});
        case EmbodimentKind::grid_discrete: return DomainSpec::discrete(id, kGridActionCount);
        case EmbodimentKind::accel_point:
            return DomainSpec::continuous(id, {-kMaxAccel, -kMaxAccel, 0.0}, {kMaxAccel, kMaxAccel, 1.0});
    }
    throw std::logic_error("domain_spec: unknown embodiment");
}

std::array<double, kGoalSize> Goal::encode() const {
    return {task == TaskKind::reach ? 1.0 : 0.0, task == TaskKind::pick_place ? 1.0 : 0.0, target[0], target[1]};
}

double distance(double ax, double ay, double bx, double by) { return std::hypot(ax - bx, ay - by); }

Observation observe(EmbodimentKind kind, const WorldState& s) {
    double heading_slot = 0.0, aux = 0.0;
    if (kind == EmbodimentKind::diff_drive) {
        heading_slot = wrap_angle(s.heading) / std::numbers::pi;
    } else if (kind == EmbodimentKind::accel_point) {
        const double speed = std::hypot(s.vx, s.vy);
        if (speed > 0.0) heading_slot = std::atan2(s.vy, s.vx) / std::numbers::pi;
        aux = std::min(speed / kMaxSpeed, 1.0);
    }
    return {s.x,
            s.y,
            heading_slot,
            aux,
            static_cast<double>(s.grip),
            s.object_x,
            s.object_y,
            static_cast<double>(s.carried),
            s.goal.target[0],
            s.goal.target[1],
            0.0,
            0.0};
}

void validate_observation(std::span<const double> obs) {
    if (obs.size() != kObservationSize)
        throw std::invalid_argument("observation must have " + std::to_string(kObservationSize) + " entries, got " +
                                    std::to_string(obs.size()));
    for (double v : obs)
        if (!std::isfinite(v)) throw std::invalid_argument("observation has a non-finite entry");
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (obs[i] < -1.0 || obs[i] > 1.0)
            throw std::invalid_argument("observation slot " + std::to_string(i) + " outside [-1, 1]");
    for (std::size_t i : {4, 7})
        if (obs[i] != 0.0 && obs[i] != 1.0) throw std::invalid_argument("observation flag " + std::to_string(i) + " not 0/1");
    if (obs[10] != 0.0 || obs[11] != 0.0) throw std::invalid_argument("observation pad slots must be zero");
}

WorldState step(EmbodimentKind kind, const WorldState& state, const Action& action) {
    const DomainSpec spec = domain_spec(kind);
    spec.check_action(action);
    WorldState s = state;

    // Gripper first.
    if (is_continuous(kind)) {
        s.grip = action[2] > 0.5 ? 1 : 0;
    } else {
        const int a = static_cast<int>(action[0]);
        if (a == kGrip) s.grip = 1;
        if (a == kRelease) s.grip = 0;
    }
    if (s.grip == 0 && s.carried) s.carried = 0;
    if (s.grip == 1 && !s.carried && distance(s.x, s.y, s.object_x, s.object_y) <= kGripRadius) s.carried = 1;

    switch (kind) {
        case EmbodimentKind::point_velocity:
            s.x = clip_pos(s.x + action[0]);
            s.y = clip_pos(s.y + action[1]);
            break;
        case EmbodimentKind::point_position: {
            const double dx = action[0] - s.x, dy = action[1] - s.y;
            const double dist = std::hypot(dx, dy);
            if (dist <= kMaxPositionStep) {
                s.x = action[0];
                s.y = action[1];
            } else {
                s.x = clip_pos(s.x + dx * (kMaxPositionStep / dist));
                s.y = clip_pos(s.y + dy * (kMaxPositionStep / dist));
            }
            break;
        }
        case EmbodimentKind::diff_drive:
            s.heading = wrap_angle(s.heading + action[1]);
            s.x = clip_pos(s.x + action[0] * std::cos(s.heading));
            s.y = clip_pos(s.y + action[0] * std::sin(s.heading));
            break;
        case EmbodimentKind::grid_discrete: {
            const int a = static_cast<int>(action[0]);
            double dx = 0.0, dy = 0.0;
            if (a == kPlusX) dx = kGridStep;
            if (a == kMinusX) dx = -kGridStep;
            if (a == kPlusY) dy = kGridStep;
            if (a == kMinusY) dy = -kGridStep;
            s.x = clip_pos(snap(s.x + dx));
            s.y = clip_pos(snap(s.y + dy));
            break;
        }
        case EmbodimentKind::accel_point: {
            s.vx += action[0];
            s.vy += action[1];
            const double speed = std::hypot(s.vx, s.vy);
            if (speed > kMaxSpeed) {
                s.vx *= kMaxSpeed / speed;
                s.vy *= kMaxSpeed / speed;
            }
            const double nx = s.x + s.vx, ny = s.y + s.vy;
            s.x = clip_pos(nx);
            s.y = clip_pos(ny);
            if (s.x != nx) s.vx = 0.0;  // stopped by the wall
            if (s.y != ny) s.vy = 0.0;
            break;
        }
    }
    if (s.carried) {
        s.object_x = s.x;
        s.object_y = s.y;
    }
    ++s.step_count;
    return s;
}

bool success(const WorldState& s, const Goal& goal) {
    if (goal.task == TaskKind::reach) return distance(s.x, s.y, goal.target[0], goal.target[1]) <= kSuccessRadius;
    return !s.carried && distance(s.object_x, s.object_y, goal.target[0], goal.target[1]) <= kSuccessRadius;
}

Action expert_action(EmbodimentKind kind, const WorldState& s, const Goal& goal, const ExpertNoise& noise, Rng* rng) {
    const double gx = goal.target[0], gy = goal.target[1];
    if (kind == EmbodimentKind::grid_discrete) {
        int a = kStay;
        if (goal.task == TaskKind::reach) {
            a = grid_move_toward(s, gx, gy);
        } else if (s.carried) {
            a = distance(s.x, s.y, gx, gy) <= kReleaseRadius ? kRelease : grid_move_toward(s, gx, gy);
        } else if (distance(s.x, s.y, s.object_x, s.object_y) <= kGripRadius) {
            a = s.grip ? grid_move_toward(s, gx, gy) : kGrip;
        } else {
            a = s.grip ? kRelease : grid_move_toward(s, s.object_x, s.object_y);
        }
        if (noise.random_move_probability > 0.0) {
            if (rng == nullptr) throw std::invalid_argument("expert_action: noise requested without an rng");
            if (rng->uniform() < noise.random_move_probability) a = static_cast<int>(rng->index(4));
        }
        return {static_cast<double>(a)};
    }

    std::vector<double> motion;
    double grip = 0.0;
    if (goal.task == TaskKind::reach) {
        motion = motion_toward(kind, s, gx, gy);
    } else if (s.carried) {
        if (distance(s.x, s.y, gx, gy) <= kReleaseRadius) {
            motion = hold_still(kind, s);
        } else {
            motion = motion_toward(kind, s, gx, gy);
            grip = 1.0;
        }
    } else if (distance(s.x, s.y, s.object_x, s.object_y) <= kGripRadius) {
        motion = motion_toward(kind, s, gx, gy);
        grip = 1.0;
    } else {
        motion = motion_toward(kind, s, s.object_x, s.object_y);
    }

    const DomainSpec spec = domain_spec(kind);
    if (noise.sigma > 0.0) {
        if (rng == nullptr) throw std::invalid_argument("expert_action: noise requested without an rng");
        for (auto& m : motion) m += noise.sigma * rng->normal();
    }
    Action out(motion.begin(), motion.end());
    out.push_back(grip);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = clip(out[i], spec.action_low[i], spec.action_high[i]);
    return out;
}

WorldState random_initial_state(EmbodimentKind kind, TaskKind task, Rng& rng) {
    const bool lattice = kind == EmbodimentKind::grid_discrete;
    auto coord = [&]() {
        const double v = rng.uniform(-kSpawnExtent, kSpawnExtent);
        return lattice ? snap(v) : v;
    };
    for (;;) {
        WorldState s;
        s.x = coord();
        s.y = coord();
        s.heading = kind == EmbodimentKind::diff_drive ? rng.uniform(-std::numbers::pi, std::numbers::pi) : 0.0;
        s.object_x = coord();
        s.object_y = coord();
        s.goal.task = task;
        s.goal.target = {coord(), coord()};
        if (!success(s, s.goal)) return s;
    }
}

}  // namespace actvocab::sim
