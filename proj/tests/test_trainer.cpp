#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support/oracles.hpp"
#include "actvocab/trainer.hpp"

using namespace actvocab;
using sim::EmbodimentKind;
using sim::TaskKind;

namespace {

sim::Dataset data(EmbodimentKind kind, TaskKind task, std::uint64_t n, std::uint64_t seed = 1) {
    sim::GeneratorConfig g;
    g.n_trajectories = n;
    g.seed = seed;
    return sim::generate_dataset(kind, task, g);
}

Model small_model(std::span<const EmbodimentKind> kinds, std::uint64_t seed = 0) {
    ModelConfig c;
    c.extractor.trunk_hidden = {32, 32};
    c.extractor.backbone_hidden = {32};
    c.seed = seed;
    auto m = Model::init(c);
    for (auto k : kinds) m.add_head(sim::domain_spec(k), seed);
    return m;
}

TrainConfig config_for(std::size_t n_domains, std::uint64_t steps, std::uint64_t seed = 0) {
    TrainConfig c;
    c.domains.assign(n_domains, DomainSource{});
    c.total_steps = steps;
    c.anneal = codebook::AnnealSchedule::spanning(2.0, 0.5, steps);
    c.seed = seed;
    c.eval_every = 5;
    return c;
}

std::map<std::string, std::vector<double>> snapshot(const Model& m) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& p : m.named_parameters()) out[p.name].assign(p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

}  // namespace

TEST_CASE("config parsing is strict about key names") {
    const auto j = nlohmann::json::parse(R"({
        "domains": [{"path": "a.jsonl", "sample_rate": 3}, {"path": "b.jsonl"}],
        "batch_size": 32, "total_steps": 1000, "seed": 4, "eval_every": 50,
        "optimizer": {"learning_rate": 0.001, "beta1": 0.9, "beta2": 0.95, "weight_decay": 0.0, "epsilon": 1e-8},
        "anneal": {"tau_start": 2.0, "tau_min": 0.5},
        "selection_mode": "ste"})");
    const auto c = train_config_from_json(j);
    CHECK(c.domains.size() == 2);
    CHECK(c.normalized_rates() == std::vector<double>{0.75, 0.25});
    CHECK(c.selection_mode == codebook::SelectionMode::ste);
    CHECK(c.anneal.total_steps == 1000);
    CHECK(codebook::anneal(c.anneal, 1000) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(train_config_from_json(to_json(c)).anneal.decay_rate == c.anneal.decay_rate);

    auto bad = j;
    bad["learning_rate"] = 0.1;
    CHECK_THROWS_WITH_AS(train_config_from_json(bad), doctest::Contains("learning_rate"), std::invalid_argument);
    bad = j;
    bad["optimizer"]["lr"] = 0.1;
    CHECK_THROWS_AS(train_config_from_json(bad), std::invalid_argument);
    bad = j;
    bad["domains"][0]["rate"] = 1;
    CHECK_THROWS_AS(train_config_from_json(bad), std::invalid_argument);
    bad = j;
    bad["domains"] = nlohmann::json::array();
    CHECK_THROWS_AS(train_config_from_json(bad), std::invalid_argument);
}

TEST_CASE("mixture sampling matches the sample rates") {
    std::vector<sim::Dataset> ds{data(EmbodimentKind::point_velocity, TaskKind::reach, 3),
                                 data(EmbodimentKind::grid_discrete, TaskKind::reach, 3),
                                 data(EmbodimentKind::diff_drive, TaskKind::reach, 3)};
    const std::vector<double> rates{0.5, 0.3, 0.2};
    MixtureSampler sampler(ds, rates);
    std::vector<double> counts(3, 0.0);
    const int draws = 100000;
    Rng rng(12);
    for (int i = 0; i < draws; ++i) counts[sampler.draw_source(rng)] += 1.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double sigma = std::sqrt(rates[i] * (1.0 - rates[i]) / draws);
        CHECK(std::abs(counts[i] / draws - rates[i]) < 3.0 * sigma);
    }
    const auto a = sampler.batch(3, 17, 64);
    const auto b = sampler.batch(3, 17, 64);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].observation == b[i].observation);
    CHECK_THROWS(MixtureSampler(ds, {1.0, 1.0}));

    auto empty = ds[0];
    empty.trajectories.clear();
    CHECK_THROWS(MixtureSampler({empty}, {1.0}));
}

TEST_CASE("a perfect prediction yields zero gradients") {
    const EmbodimentKind kinds[] = {EmbodimentKind::point_velocity};
    auto m = small_model(kinds);
    // zero-initialized output layer predicts the midpoint of the bounds
    sim::Observation obs{};
    const sim::Goal goal{TaskKind::reach, {0.5, 0.5}};
    const sim::Action label{0.0, 0.0, 0.5};
    const std::string id = "point_velocity";
    const Sample s{0, &id, &obs, &goal, &label};
    const std::vector<double> noise(m.codebook().n_codes(), 0.1);
    const auto loss = batch_loss(m, std::span(&s, 1), noise, 1.0, codebook::SelectionMode::soft);
    CHECK(loss.total.item() == 0.0);
    grad::backward(loss.total);
    for (const auto& p : m.named_parameters())
        if (p.tensor.has_grad())
            for (double g : p.tensor.grad()) CHECK(g == 0.0);
}

TEST_CASE("heads only receive gradient from their own domain") {
    const EmbodimentKind kinds[] = {EmbodimentKind::point_velocity, EmbodimentKind::diff_drive};
    auto m = small_model(kinds);
    const auto before = snapshot(m);
    TrainConfig c = config_for(1, 10);
    Trainer t(m, c, {data(EmbodimentKind::point_velocity, TaskKind::reach, 5)});
    for (int i = 0; i < 5; ++i) t.train_step();
    for (const auto& p : m.named_parameters()) {
        const bool other = p.name.rfind("heads.diff_drive.", 0) == 0;
        const bool same = std::equal(p.tensor.data().begin(), p.tensor.data().end(), before.at(p.name).begin());
        if (other) CHECK(same);
        if (p.name == "codebook.embeddings" || p.name.rfind("heads.point_velocity.", 0) == 0) CHECK_FALSE(same);
    }
}

TEST_CASE("the temperature follows the schedule exactly") {
    const EmbodimentKind kinds[] = {EmbodimentKind::point_velocity};
    auto m = small_model(kinds);
    const auto c = config_for(1, 20);
    Trainer t(m, c, {data(EmbodimentKind::point_velocity, TaskKind::reach, 3)});
    for (std::uint64_t i = 0; i < 20; ++i) CHECK(t.train_step().tau == codebook::anneal(c.anneal, i));
}

TEST_CASE("identical seeds give identical loss sequences and metric logs") {
    const EmbodimentKind kinds[] = {EmbodimentKind::point_velocity, EmbodimentKind::grid_discrete};
    auto run = [&] {
        auto m = small_model(kinds, 3);
        Trainer t(m, config_for(2, 30, 5),
                  {data(EmbodimentKind::point_velocity, TaskKind::reach, 4),
                   data(EmbodimentKind::grid_discrete, TaskKind::pick_place, 4)});
        std::ostringstream log;
        std::vector<double> losses;
        t.run(30, &log, [&](const StepResult& r) { losses.push_back(r.total_loss); });
        return std::make_pair(losses, log.str());
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    std::istringstream lines(a.second);
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.at("loss").contains("grid_discrete"));
        CHECK(j.contains("tau"));
        CHECK(j.contains("utilization_entropy"));
        ++n;
    }
    CHECK(n == 6);
}

TEST_CASE("missing heads are reported") {
    const EmbodimentKind kinds[] = {EmbodimentKind::point_velocity};
    auto m = small_model(kinds);
    CHECK_THROWS_WITH(Trainer(m, config_for(1, 5), {data(EmbodimentKind::diff_drive, TaskKind::reach, 2)}),
                      doctest::Contains("diff_drive"));
    CHECK_THROWS(evaluate(m, EmbodimentKind::grid_discrete, TaskKind::reach, 3, 0));
}

TEST_CASE("evaluation harness") {
    const EmbodimentKind kinds[] = {EmbodimentKind::point_velocity};
    auto untrained = small_model(kinds);
    const auto model = evaluate(untrained, EmbodimentKind::point_velocity, TaskKind::reach, 200, 3);
    const auto random = evaluate_policy(EmbodimentKind::point_velocity, TaskKind::reach, 200, 3,
                                        random_policy(EmbodimentKind::point_velocity, 3));
    // the zero-initialized head emits the null action, so the untrained model stands still
    const auto still = evaluate_policy(EmbodimentKind::point_velocity, TaskKind::reach, 200, 3,
                                       [](const sim::WorldState&) { return sim::Action{0.0, 0.0, 0.5}; });
    CHECK(model.successes == still.successes);
    // no better than chance: one-sided two-proportion z-test at 3 sigma
    const double p = (model.successes + random.successes) / 400.0;
    const double se = std::sqrt(std::max(p * (1.0 - p) * (2.0 / 200.0), 1e-12));
    CHECK(model.success_rate - random.success_rate <= 3.0 * se);
    CHECK(model.mean_length <= 200.0);

    const auto expert = evaluate_policy(EmbodimentKind::diff_drive, TaskKind::pick_place, 200, 3,
                                        expert_policy(EmbodimentKind::diff_drive));
    CHECK(expert.success_rate >= 0.99);
    const auto again = evaluate_policy(EmbodimentKind::diff_drive, TaskKind::pick_place, 200, 3,
                                       expert_policy(EmbodimentKind::diff_drive));
    CHECK(again.successes == expert.successes);
    CHECK(again.mean_length == expert.mean_length);
}

TEST_CASE("training reduces the loss on a toy run") {
    const EmbodimentKind kinds[] = {EmbodimentKind::point_velocity};
    ModelConfig c;
    auto m = Model::init(c);
    m.add_head(sim::domain_spec(EmbodimentKind::point_velocity), 0);
    Trainer t(m, config_for(1, 2000), {data(EmbodimentKind::point_velocity, TaskKind::reach, 200)});
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const double l = t.train_step().total_loss;
        if (i < 50) first += l / 50.0;
        if (i >= 1950) last += l / 50.0;
    }
    CHECK(last < 0.25 * first);
}

TEST_CASE("non-finite losses abort with diagnostics") {
    const EmbodimentKind kinds[] = {EmbodimentKind::point_velocity};
    auto m = small_model(kinds);
    auto p = m.named_parameters();
    for (auto& q : p)
        if (q.name == "heads.point_velocity.output.bias") q.tensor.mutable_data()[0] = NAN;
    Trainer t(m, config_for(1, 5), {data(EmbodimentKind::point_velocity, TaskKind::reach, 2)});
    CHECK_THROWS_WITH_AS(t.train_step(), doctest::Contains("point_velocity"), NonFiniteLoss);
}

TEST_CASE("adaptation trains only the new head") {
    const auto kinds = sim::pretraining_embodiments();
    auto base = small_model(kinds, 2);
    Trainer pre(base, config_for(1, 20), {data(EmbodimentKind::point_velocity, TaskKind::reach, 3)});
    pre.run(20);
    const auto before = snapshot(base);

    AdaptConfig ac;
    ac.steps = 30;
    ac.seed = 1;
    auto r = adapt(base, sim::domain_spec(EmbodimentKind::accel_point),
                   {data(EmbodimentKind::accel_point, TaskKind::reach, 5)}, ac);
    CHECK(r.trainable_fraction == doctest::Approx(double(r.trainable_parameters) / r.total_parameters));
    CHECK(r.trainable_parameters == r.model.head("accel_point").parameter_count());
    for (const auto& [name, _] : r.head_moments) CHECK(name.rfind("heads.accel_point.", 0) == 0);

    bool head_changed = false;
    for (const auto& p : r.model.named_parameters()) {
        if (p.name.rfind("heads.accel_point.", 0) == 0) {
            head_changed = head_changed || p.name.find("output") != std::string::npos;
            continue;
        }
        CHECK(std::equal(p.tensor.data().begin(), p.tensor.data().end(), before.at(p.name).begin()));
    }
    CHECK(head_changed);
    CHECK(snapshot(base) == before);  // the base model is untouched

    CHECK_THROWS(adapt(r.model, sim::domain_spec(EmbodimentKind::accel_point),
                       {data(EmbodimentKind::accel_point, TaskKind::reach, 2)}, ac));
    CHECK_THROWS(adapt(base, sim::domain_spec(EmbodimentKind::accel_point),
                       {data(EmbodimentKind::diff_drive, TaskKind::reach, 2)}, ac));
}
