#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support/oracles.hpp"
#include "actvocab/analysis.hpp"

using namespace actvocab;
using namespace actvocab::analysis;
using sim::EmbodimentKind;
using sim::TaskKind;

namespace {

std::vector<double> random_simplex(Rng& rng, std::size_t n, bool sparse) {
    std::vector<double> p(n);
    for (auto& x : p) x = (sparse && rng.uniform() < 0.3) ? 0.0 : -std::log(rng.uniform_open());
    if (std::accumulate(p.begin(), p.end(), 0.0) == 0.0) p[0] = 1.0;
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& x : p) x /= total;
    return p;
}

UtilizationProfile profile(const std::string& id, TaskKind task, std::vector<double> h) {
    UtilizationProfile p;
    p.domain_id = id;
    p.task = task;
    p.histogram = std::move(h);
    p.n_samples = 10;
    return p;
}

sim::Dataset small_dataset(EmbodimentKind kind, std::uint64_t n, std::uint64_t seed = 2) {
    sim::GeneratorConfig g;
    g.n_trajectories = n;
    g.seed = seed;
    return sim::generate_dataset(kind, TaskKind::reach, g);
}

}  // namespace

TEST_CASE("js divergence examples") {
    const std::vector<double> a{1.0, 0.0}, b{0.0, 1.0}, half{0.5, 0.5};
    CHECK(js_divergence(a, a) == 0.0);
    CHECK(js_divergence(a, b) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    // KL(a||m) = ln(4/3), KL(half||m) = 0.5 ln(2/3) + 0.5 ln 2
    const double expected = 0.5 * std::log(4.0 / 3.0) + 0.5 * (0.5 * std::log(2.0 / 3.0) + 0.5 * std::log(2.0));
    CHECK(js_divergence(a, half) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(js_divergence(a, half) == doctest::Approx(0.2158).epsilon(1e-3));

    CHECK_THROWS_AS(js_divergence(a, std::vector<double>{1.0, 0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(js_divergence(a, std::vector<double>{0.6, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(js_divergence(a, std::vector<double>{1.5, -0.5}), std::invalid_argument);
}

TEST_CASE("js divergence is symmetric and bounded") {
    Rng rng(41);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t n = 2 + rng.index(40);
        const auto p = random_simplex(rng, n, i % 2 == 0);
        const auto q = random_simplex(rng, n, i % 3 == 0);
        const double pq = js_divergence(p, q);
        CHECK(pq == js_divergence(q, p));
        CHECK(pq >= 0.0);
        CHECK(pq <= std::log(2.0) + 1e-12);
    }
}

TEST_CASE("divergence matrix") {
    const std::vector<UtilizationProfile> profiles{
        profile("a", TaskKind::reach, {1.0, 0.0, 0.0}),
        profile("b", TaskKind::reach, {0.5, 0.5, 0.0}),
        profile("a", TaskKind::pick_place, {0.0, 0.0, 1.0}),
        profile("b", TaskKind::pick_place, {0.0, 0.5, 0.5}),
    };
    const auto m = divergence_matrix(profiles);
    REQUIRE(m.values.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(m.values[i][i] == 0.0);
        for (std::size_t j = 0; j < 4; ++j) CHECK(m.values[i][j] == m.values[j][i]);
    }
    const double same_task = (js_divergence(profiles[0].histogram, profiles[1].histogram) +
                              js_divergence(profiles[2].histogram, profiles[3].histogram)) / 2.0;
    const double same_body = (js_divergence(profiles[0].histogram, profiles[2].histogram) +
                              js_divergence(profiles[1].histogram, profiles[3].histogram)) / 2.0;
    CHECK(m.same_task_cross_embodiment == doctest::Approx(same_task).epsilon(1e-15));
    CHECK(m.cross_task_same_embodiment == doctest::Approx(same_body).epsilon(1e-15));
    CHECK(m.labels[2] == "a/pick_place");
    CHECK(render_matrix(m).find("cross task, same embodiment") != std::string::npos);

    const auto j = to_json(m);
    CHECK(j.at("values").size() == 4);

    auto mismatched = profiles;
    mismatched[1].histogram = {0.5, 0.5};
    CHECK_THROWS_AS(divergence_matrix(mismatched), std::invalid_argument);
    CHECK_THROWS_AS(divergence_matrix(std::span(profiles.data(), 1)), std::invalid_argument);

    // no cross-task pair on the same embodiment
    const auto two = divergence_matrix(std::span(profiles.data(), 2));
    CHECK(std::isnan(two.cross_task_same_embodiment));
    CHECK(to_json(two).at("cross_task_same_embodiment").is_null());
}

TEST_CASE("utilization profiles") {
    const auto model = oracle::random_model(oracle::small_model_config(3), sim::pretraining_embodiments());
    auto ds = small_dataset(EmbodimentKind::point_velocity, 12);

    auto one = ds;
    one.trajectories.resize(1);
    one.trajectories[0].observations.resize(1);
    one.trajectories[0].actions.resize(1);
    const auto single = profile_utilization(model, one);
    CHECK(single.n_samples == 1);
    CHECK(std::count(single.histogram.begin(), single.histogram.end(), 1.0) == 1);

    const auto p = profile_utilization(model, ds);
    CHECK(p.n_samples == ds.sample_count());
    CHECK(std::accumulate(p.histogram.begin(), p.histogram.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    auto reversed = ds;
    std::reverse(reversed.trajectories.begin(), reversed.trajectories.end());
    CHECK(profile_utilization(model, reversed).histogram == p.histogram);

    // zero logits tie everywhere; the lowest index wins
    ModelConfig c;
    auto untrained = Model::init(c);
    const auto u = profile_utilization(untrained, ds);
    CHECK(u.histogram[0] == 1.0);

    auto empty = ds;
    empty.trajectories.clear();
    CHECK_THROWS(profile_utilization(model, empty));
    auto bad = ds;
    bad.trajectories[0].observations[0][0] = NAN;
    CHECK_THROWS(profile_utilization(model, bad));
}

TEST_CASE("consistency probe") {
    const auto model = oracle::random_model(oracle::small_model_config(6), sim::pretraining_embodiments());
    ProbeConfig config;
    config.n_starts = 6;

    const EmbodimentKind twice[] = {EmbodimentKind::point_velocity, EmbodimentKind::point_velocity};
    for (std::size_t c = 0; c < model.codebook().n_codes(); ++c) {
        const auto r = consistency_probe(model, c, twice, config);
        REQUIRE(r.directions[0].has_value());
        CHECK(r.min_cosine == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.consistent);
    }

    const auto kinds = sim::pretraining_embodiments();
    const auto report = consistency_report(model, kinds, config);
    CHECK(report.codes.size() == model.codebook().n_codes());
    CHECK(report.control_fractions.size() == 5);
    CHECK(report.consistent_fraction >= 0.0);
    CHECK(report.consistent_fraction <= 1.0);
    CHECK(report.control_fraction >= 0.0);
    CHECK(report.control_fraction <= 1.0);
    CHECK(report.control_fraction ==
          doctest::Approx(std::accumulate(report.control_fractions.begin(), report.control_fractions.end(), 0.0) / 5.0));
    for (const auto& c : report.codes)
        for (const auto& d : c.directions)
            if (d) CHECK(std::hypot((*d)[0], (*d)[1]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(to_json(report).at("codes").size() == model.codebook().n_codes());

    // a model that never moves has no defined directions
    ModelConfig mc;
    auto still = Model::init(mc);
    still.add_head(sim::domain_spec(EmbodimentKind::point_velocity), 0);
    const EmbodimentKind pv[] = {EmbodimentKind::point_velocity};
    const auto r = consistency_probe(still, 0, pv, config);
    CHECK_FALSE(r.directions[0].has_value());
    CHECK_FALSE(r.consistent);

    CHECK_THROWS_AS(consistency_probe(model, model.codebook().n_codes(), kinds, config), std::out_of_range);
    CHECK_THROWS(consistency_probe(still, 0, kinds, config));
}

TEST_CASE("greedy code search stops at success") {
    const auto model = oracle::random_model(oracle::small_model_config(7), sim::pretraining_embodiments());
    Rng rng(3);
    const auto s = sim::random_initial_state(EmbodimentKind::point_velocity, TaskKind::reach, rng);
    const auto r = greedy_code_search(model, EmbodimentKind::point_velocity, s, 15);
    CHECK(r.codes.size() <= 15);
    // replaying the codes reproduces the final state
    auto replay = s;
    const auto& head = model.head("point_velocity");
    for (auto c : r.codes) {
        const auto features = model.extractor().encode_obs_features(sim::observe(EmbodimentKind::point_velocity, replay));
        replay = sim::step(EmbodimentKind::point_velocity, replay, head.to_action(head.decode(model.codebook().row(c), features)));
    }
    CHECK(replay == r.final_state);
    CHECK(r.success == sim::success(replay, replay.goal));
    if (r.codes.size() < 15) CHECK(r.success);
}
