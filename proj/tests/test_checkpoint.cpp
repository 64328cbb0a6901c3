#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "support/oracles.hpp"
#include "actvocab/checkpoint.hpp"
#include "actvocab/trainer.hpp"

using namespace actvocab;
using sim::EmbodimentKind;
using sim::TaskKind;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "actvocab_test_checkpoint";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::vector<sim::Dataset> datasets() {
    sim::GeneratorConfig g;
    g.n_trajectories = 6;
    g.seed = 4;
    return {sim::generate_dataset(EmbodimentKind::point_velocity, TaskKind::reach, g),
            sim::generate_dataset(EmbodimentKind::grid_discrete, TaskKind::reach, g)};
}

Model fresh_model() {
    auto m = Model::init(oracle::small_model_config(5));
    m.add_head(sim::domain_spec(EmbodimentKind::point_velocity), 5);
    m.add_head(sim::domain_spec(EmbodimentKind::grid_discrete), 5);
    return m;
}

TrainConfig train_config() {
    TrainConfig c;
    c.domains.assign(2, DomainSource{});
    c.total_steps = 20;
    c.anneal = codebook::AnnealSchedule::spanning(2.0, 0.5, 20);
    c.batch_size = 16;
    c.seed = 8;
    return c;
}

Checkpoint snapshot(const Trainer& t, const Model& m) {
    Checkpoint c(m.clone());
    c.step = t.step();
    c.rng = {t.config().seed, t.step()};
    c.moments = t.optimizer().moments();
    c.train_config = to_json(t.config());
    return c;
}

}  // namespace

TEST_CASE("round trip is bit-exact") {
    auto m = fresh_model();
    Trainer t(m, train_config(), datasets());
    t.run(7);
    auto ck = snapshot(t, m);
    ck.notes = {{"source", "unit"}};
    const auto path = scratch("round.ckpt");
    save_checkpoint(ck, path);
    const auto back = load_checkpoint(path);

    CHECK(checkpoint_arrays(back) == checkpoint_arrays(ck));
    CHECK(back.step == 7);
    CHECK(back.rng.seed == 8);
    CHECK(back.rng.next_step == 7);
    CHECK(back.notes == ck.notes);
    CHECK(back.train_config == ck.train_config);
    CHECK(encode_checkpoint(back) == encode_checkpoint(ck));

    // the loaded model computes the same actions
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        const auto s = sim::random_initial_state(EmbodimentKind::grid_discrete, TaskKind::reach, rng);
        const auto obs = sim::observe(EmbodimentKind::grid_discrete, s);
        const auto a = ck.model.act("grid_discrete", obs, s.goal);
        const auto b = back.model.act("grid_discrete", obs, s.goal);
        CHECK(a.logits == b.logits);
        CHECK(a.decoded == b.decoded);
    }
}

TEST_CASE("resuming matches an uninterrupted run") {
    auto a = fresh_model();
    Trainer straight(a, train_config(), datasets());
    straight.run(10);
    const auto path = scratch("resume.ckpt");
    save_checkpoint(snapshot(straight, a), path);
    std::vector<double> expected;
    straight.run(20, nullptr, [&](const StepResult& r) { expected.push_back(r.total_loss); });

    auto ck = load_checkpoint(path);
    Trainer resumed(ck.model, train_config_from_json(ck.train_config), datasets());
    resumed.restore(ck.step, ck.moments);
    std::vector<double> got;
    resumed.run(20, nullptr, [&](const StepResult& r) { got.push_back(r.total_loss); });

    CHECK(got == expected);
    const auto pa = a.named_parameters(), pb = ck.model.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
}

TEST_CASE("damaged files are rejected with specific errors") {
    auto m = fresh_model();
    const auto bytes = encode_checkpoint(Checkpoint(m.clone()));

    CHECK_THROWS_WITH_AS(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), doctest::Contains("truncated"),
                         CheckpointError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 5)), CheckpointError);

    auto wrong_version = bytes;
    const std::uint32_t v = kCheckpointVersion + 1;
    std::memcpy(wrong_version.data() + 8, &v, sizeof v);
    CHECK_THROWS_WITH_AS(decode_checkpoint(wrong_version), doctest::Contains("version 2"), CheckpointError);

    auto flipped = bytes;
    flipped[flipped.size() - 20] ^= 0x01;
    CHECK_THROWS_WITH_AS(decode_checkpoint(flipped), doctest::Contains("checksum"), CheckpointError);

    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(magic), CheckpointError);

    CHECK_THROWS_AS(decode_checkpoint(bytes + "extra"), CheckpointError);
    CHECK_THROWS(load_checkpoint(scratch("missing.ckpt")));
}

TEST_CASE("checksum") {
    // FNV-1a reference values
    CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}
