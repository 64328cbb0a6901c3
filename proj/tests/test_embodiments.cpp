#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "actvocab/embodiments.hpp"
#include "actvocab/trainer.hpp"

using namespace actvocab;
using namespace actvocab::sim;

namespace {

WorldState at(double x, double y, TaskKind task = TaskKind::reach, double tx = 0.5, double ty = 0.5) {
    WorldState s;
    s.x = x;
    s.y = y;
    s.object_x = -0.5;
    s.object_y = -0.5;
    s.goal = {task, {tx, ty}};
    return s;
}

}  // namespace

TEST_CASE("names round-trip and unknown names list the allowed ones") {
    for (auto k : all_embodiments()) CHECK(parse_embodiment(to_string(k)) == k);
    CHECK(pretraining_embodiments().size() == 4);
    for (auto k : pretraining_embodiments()) CHECK(k != EmbodimentKind::accel_point);
    try {
        parse_embodiment("hexapod");
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("point_velocity") != std::string::npos);
    }
}

TEST_CASE("stated dynamics") {
    auto s = step(EmbodimentKind::point_velocity, at(0, 0), {0.1, 0.0, 0.0});
    CHECK(s.x == doctest::Approx(0.1));
    CHECK(s.y == 0.0);
    CHECK(s.step_count == 1);

    s = step(EmbodimentKind::point_position, at(0, 0), {1.0, 0.0, 0.0});
    CHECK(s.x == doctest::Approx(0.1));
    CHECK(s.y == 0.0);
    s = step(EmbodimentKind::point_position, at(0, 0), {0.05, 0.05, 0.0});
    CHECK(s.x == 0.05);
    CHECK(s.y == 0.05);

    s = step(EmbodimentKind::diff_drive, at(0, 0), {0.1, 0.0, 0.0});
    CHECK(s.x == doctest::Approx(0.1));
    CHECK(s.y == doctest::Approx(0.0));
    CHECK(s.heading == 0.0);

    s = step(EmbodimentKind::grid_discrete, at(0, 0), {static_cast<double>(kPlusY)});
    CHECK(s.y == doctest::Approx(0.1));

    s = step(EmbodimentKind::accel_point, at(0, 0), {0.05, 0.0, 0.0});
    CHECK(s.vx == doctest::Approx(0.05));
    CHECK(s.x == doctest::Approx(0.05));
    for (int i = 0; i < 5; ++i) s = step(EmbodimentKind::accel_point, s, {0.05, 0.05, 0.0});
    CHECK(std::hypot(s.vx, s.vy) <= 0.1 + 1e-12);
}

TEST_CASE("invalid actions are rejected") {
    CHECK_THROWS_AS(step(EmbodimentKind::point_velocity, at(0, 0), {0.2, 0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(step(EmbodimentKind::point_velocity, at(0, 0), {0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(step(EmbodimentKind::grid_discrete, at(0, 0), {7.0}), std::invalid_argument);
    CHECK_THROWS_AS(step(EmbodimentKind::grid_discrete, at(0, 0), {0.5}), std::invalid_argument);
    CHECK_THROWS_AS(step(EmbodimentKind::diff_drive, at(0, 0), {-0.01, 0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("positions stay in bounds") {
    Rng rng(3);
    for (auto kind : all_embodiments()) {
        auto s = at(0.95, -0.95);
        const auto spec = domain_spec(kind);
        for (int t = 0; t < 300; ++t) {
            Action a;
            if (spec.action_kind == ActionKind::discrete) {
                a = {static_cast<double>(rng.index(spec.action_dim))};
            } else {
                a.resize(spec.action_dim);
                for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(spec.action_low[i], spec.action_high[i]);
            }
            s = step(kind, s, a);
            CHECK(std::abs(s.x) <= 1.0);
            CHECK(std::abs(s.y) <= 1.0);
            CHECK(std::isfinite(s.x));
            validate_observation(observe(kind, s));
            if (s.carried) {
                CHECK(s.object_x == s.x);
                CHECK(s.object_y == s.y);
            }
        }
    }
}

TEST_CASE("gripper attaches within reach and carried objects follow") {
    auto s = at(0.0, 0.0, TaskKind::pick_place);
    s.object_x = 0.03;
    s.object_y = 0.0;
    s = step(EmbodimentKind::point_velocity, s, {0.1, 0.0, 1.0});
    CHECK(s.carried == 1);
    CHECK(s.object_x == s.x);
    s = step(EmbodimentKind::point_velocity, s, {0.0, 0.1, 0.0});
    CHECK(s.carried == 0);

    auto far = at(0.0, 0.0, TaskKind::pick_place);
    far.object_x = 0.2;
    far.object_y = 0.0;
    far = step(EmbodimentKind::point_velocity, far, {0.0, 0.0, 1.0});
    CHECK(far.carried == 0);
}

TEST_CASE("success predicate") {
    auto s = at(0.5, 0.5);
    CHECK(success(s, s.goal));
    s.x = 0.56;
    CHECK_FALSE(success(s, s.goal));

    auto p = at(0.0, 0.0, TaskKind::pick_place);
    p.object_x = 0.5;
    p.object_y = 0.5;
    CHECK(success(p, p.goal));
    p.carried = 1;
    CHECK_FALSE(success(p, p.goal));
}

TEST_CASE("expert examples") {
    const auto a = expert_action(EmbodimentKind::point_velocity, at(0, 0, TaskKind::reach, 1.0, 0.0),
                                 {TaskKind::reach, {1.0, 0.0}}, ExpertNoise::none(), nullptr);
    CHECK(a == Action{0.1, 0.0, 0.0});
}

TEST_CASE("noise-free experts are deterministic") {
    for (auto kind : all_embodiments()) {
        Rng a(5), b(5);
        const auto s0 = random_initial_state(kind, TaskKind::pick_place, a);
        const auto s1 = random_initial_state(kind, TaskKind::pick_place, b);
        CHECK(s0 == s1);
        Rng r1(1), r2(1);
        const auto t1 = rollout_expert(kind, s0, ExpertNoise::none(), r1, 200);
        const auto t2 = rollout_expert(kind, s1, ExpertNoise::none(), r2, 200);
        CHECK(t1 == t2);
    }
}

TEST_CASE("observation layout") {
    const auto obs = observe(EmbodimentKind::point_velocity, at(0.2, -0.3));
    CHECK(obs.size() == kObservationSize);
    CHECK(obs[0] == 0.2);
    CHECK(obs[1] == -0.3);
    CHECK(obs[8] == 0.5);
    CHECK(obs[10] == 0.0);
    CHECK(obs[11] == 0.0);
    auto bad = obs;
    bad[7] = 0.5;
    CHECK_THROWS_AS(validate_observation(bad), std::invalid_argument);
    bad = obs;
    bad[10] = 1.0;
    CHECK_THROWS_AS(validate_observation(bad), std::invalid_argument);
}

TEST_CASE("experts solve at least 99% of random episodes") {
    for (auto kind : all_embodiments())
        for (auto task : {TaskKind::reach, TaskKind::pick_place}) {
            const auto r = evaluate_policy(kind, task, 1000, 11, expert_policy(kind));
            INFO(to_string(kind) << " " << to_string(task));
            CHECK(r.success_rate >= 0.99);
        }
}

TEST_CASE("random policies rarely succeed") {
    const auto r = evaluate_policy(EmbodimentKind::point_velocity, TaskKind::pick_place, 100, 4,
                                   random_policy(EmbodimentKind::point_velocity, 4));
    CHECK(r.success_rate < 0.2);
    CHECK(r.mean_length > 100.0);
}
