#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "actvocab/nn.hpp"
#include "actvocab/optim.hpp"
#include "actvocab/rng.hpp"
#include "actvocab/tensor.hpp"

using namespace actvocab;
using grad::Tensor;

namespace {

Tensor random_param(grad::Shape shape, Rng& rng, double scale = 1.0) {
    std::vector<double> v(grad::numel(shape));
    for (auto& x : v) x = scale * rng.normal();
    return Tensor::parameter(std::move(shape), std::move(v));
}

void expect_fd(std::vector<grad::NamedParam> params, const std::function<Tensor()>& f) {
    const auto r = oracle::check_gradients(params, f);
    INFO(r.worst);
    CHECK(r.checked > 0);
    CHECK(r.max_relative_error < 1e-4);
}

}  // namespace

TEST_CASE("forward primitives") {
    const auto x = Tensor::constant({3}, {-1.0, 0.0, 2.0});
    const auto r = grad::relu(x);
    CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{0.0, 0.0, 2.0});

    const auto m = grad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({3, 4}));
    CHECK(m.shape() == grad::Shape{2, 4});

    const auto s = grad::softmax(Tensor::constant({3}, {0.0, 0.0, 0.0}));
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("shape mismatches name the dimensions") {
    CHECK_THROWS_AS(grad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), grad::ShapeError);
    try {
        grad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    } catch (const grad::ShapeError& e) {
        CHECK(std::string(e.what()).find("[4, 2]") != std::string::npos);
    }
    CHECK_THROWS_AS(grad::add(Tensor::zeros({2, 3}), Tensor::zeros({2, 2})), grad::ShapeError);
    CHECK_THROWS_AS(grad::concat_cols(Tensor::zeros({2, 3}), Tensor::zeros({3, 3})), grad::ShapeError);
}

TEST_CASE("backward basics") {
    auto x = Tensor::parameter({1}, {3.0});
    grad::backward(grad::mul(x, x));
    CHECK(x.grad()[0] == 6.0);

    auto y = Tensor::parameter({4}, {0.3, -1.0, 2.0, 0.0});
    grad::backward(grad::sum(grad::softmax(y)));
    for (double g : y.grad()) CHECK(std::abs(g) < 1e-15);
}

TEST_CASE("backward rejects non-scalar outputs and a second pass") {
    auto x = Tensor::parameter({2}, {1.0, 2.0});
    CHECK_THROWS_AS(grad::backward(grad::tanh(x)), grad::ShapeError);
    const auto loss = grad::sum(grad::mul(x, x));
    grad::backward(loss);
    CHECK_THROWS_AS(grad::backward(loss), grad::GraphError);
}

TEST_CASE("leaf gradients are overwritten, not accumulated") {
    auto x = Tensor::parameter({1}, {2.0});
    grad::backward(grad::mul(x, x));
    grad::backward(grad::mul(x, x));
    CHECK(x.grad()[0] == 4.0);
}

TEST_CASE("no-grad mode records nothing") {
    auto x = Tensor::parameter({1}, {2.0});
    grad::NoGradGuard guard;
    const auto y = grad::mul(x, x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("every primitive matches central differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        auto a = random_param({3, 4}, rng);
        auto b = random_param({4, 5}, rng);
        auto c = random_param({3, 5}, rng);
        auto row = random_param({5}, rng);
        auto pos = Tensor::parameter({3, 5}, [&] {
            std::vector<double> v(15);
            for (auto& x : v) x = rng.uniform(0.5, 2.0);
            return v;
        }());
        auto w = Tensor::constant({3, 5}, [&] {
            std::vector<double> v(15);
            for (auto& x : v) x = rng.normal();
            return v;
        }());
        const std::size_t idx[] = {2, 0, 2};

        auto weighted = [&](const Tensor& t) { return grad::sum(grad::mul(t, w)); };
        expect_fd({{"a", a}, {"b", b}}, [&] { return weighted(grad::matmul(a, b)); });
        expect_fd({{"c", c}, {"row", row}}, [&] { return weighted(grad::add(c, row)); });
        expect_fd({{"c", c}, {"row", row}}, [&] { return weighted(grad::sub(c, row)); });
        expect_fd({{"c", c}, {"row", row}}, [&] { return weighted(grad::mul(c, row)); });
        expect_fd({{"c", c}, {"pos", pos}}, [&] { return weighted(grad::mul(c, pos)); });
        expect_fd({{"c", c}}, [&] { return weighted(grad::scale(c, -1.7)); });
        expect_fd({{"c", c}}, [&] { return weighted(grad::add_scalar(c, 0.3)); });
        expect_fd({{"c", c}}, [&] { return weighted(grad::tanh(c)); });
        expect_fd({{"c", c}}, [&] { return weighted(grad::exp(c)); });
        expect_fd({{"pos", pos}}, [&] { return weighted(grad::log(pos)); });
        expect_fd({{"c", c}}, [&] { return weighted(grad::softmax(c)); });
        expect_fd({{"c", c}}, [&] { return weighted(grad::log_softmax(c)); });
        expect_fd({{"c", c}}, [&] { return grad::mean(grad::mul(c, c)); });
        expect_fd({{"a", a}, {"c", c}}, [&] {
            return grad::sum(grad::mul(grad::concat_cols(a, c), grad::concat_cols(a, c)));
        });
        expect_fd({{"c", c}}, [&] { return weighted(grad::gather_rows(c, idx)); });
        // relu away from its kink
        auto shifted = Tensor::parameter({3, 5}, [&] {
            std::vector<double> v(15);
            for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
            return v;
        }());
        expect_fd({{"s", shifted}}, [&] { return weighted(grad::relu(shifted)); });
    }
}

TEST_CASE("straight-through forwards the given value and differentiates the carrier") {
    auto x = Tensor::parameter({1, 3}, {0.1, 0.5, -0.2});
    const auto soft = grad::softmax(x);
    const auto st = grad::straight_through(soft, {0.0, 1.0, 0.0});
    CHECK(st.data()[1] == 1.0);
    const auto w = Tensor::constant({1, 3}, {1.0, 2.0, 3.0});
    grad::backward(grad::sum(grad::mul(st, w)));
    std::vector<double> ref(x.grad().begin(), x.grad().end());

    auto x2 = Tensor::parameter({1, 3}, {0.1, 0.5, -0.2});
    grad::backward(grad::sum(grad::mul(grad::softmax(x2), w)));
    for (int i = 0; i < 3; ++i) CHECK(ref[i] == doctest::Approx(x2.grad()[i]).epsilon(1e-14));
}

TEST_CASE("random two-layer net gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed, {42});
        auto l1 = nn::Linear::init(5, 7, rng);
        auto l2 = nn::Linear::init(7, 3, rng);
        std::vector<double> in(4 * 5);
        for (auto& v : in) v = rng.normal();
        const auto input = Tensor::constant({4, 5}, in);
        std::vector<grad::NamedParam> params;
        l1.collect("l1", params);
        l2.collect("l2", params);
        expect_fd(params, [&] {
            const auto y = l2.forward(grad::tanh(l1.forward(input)));
            return grad::mean(grad::mul(y, y));
        });
    }
}

TEST_CASE("AdamW recurrence") {
    grad::OptimizerConfig cfg;
    cfg.learning_rate = 0.1;
    grad::AdamW opt(cfg);
    auto p = Tensor::parameter({1}, {1.0});
    grad::backward(grad::sum(p));  // g = 1
    const grad::NamedParam params[] = {{"p", p}};
    opt.step(params, 1);
    CHECK(p.data()[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK_FALSE(p.has_grad());
}

TEST_CASE("AdamW with zero gradient") {
    auto run = [](double wd) {
        grad::OptimizerConfig cfg;
        cfg.learning_rate = 0.1;
        cfg.weight_decay = wd;
        grad::AdamW opt(cfg);
        auto p = Tensor::parameter({2}, {1.0, -2.0});
        grad::backward(grad::scale(grad::sum(p), 0.0));
        const grad::NamedParam params[] = {{"p", p}};
        opt.step(params, 1);
        return std::vector<double>(p.data().begin(), p.data().end());
    };
    CHECK(run(0.0) == std::vector<double>{1.0, -2.0});
    const auto decayed = run(0.01);
    CHECK(decayed[0] == doctest::Approx(1.0 - 0.1 * 0.01 * 1.0).epsilon(1e-14));
    CHECK(decayed[1] == doctest::Approx(-2.0 - 0.1 * 0.01 * -2.0).epsilon(1e-14));
}

TEST_CASE("AdamW errors") {
    grad::AdamW opt({});
    auto p = Tensor::parameter({1}, {1.0});
    const grad::NamedParam params[] = {{"p", p}};
    CHECK_THROWS(opt.step(params, 1));  // no gradient
    grad::backward(grad::sum(p));
    CHECK_THROWS(opt.step(params, 0));
    grad::OptimizerConfig bad;
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("identical seeds give bit-identical parameter trajectories") {
    auto run = [] {
        Rng rng(9);
        auto l = nn::Linear::init(3, 2, rng);
        grad::AdamW opt({});
        std::vector<grad::NamedParam> params;
        l.collect("l", params);
        for (std::uint64_t t = 1; t <= 20; ++t) {
            std::vector<double> in(6);
            for (auto& v : in) v = rng.normal();
            const auto y = l.forward(Tensor::constant({2, 3}, in));
            grad::backward(grad::mean(grad::mul(y, y)));
            opt.step(params, t);
        }
        return std::vector<double>(l.weight.data().begin(), l.weight.data().end());
    };
    CHECK(run() == run());
}

TEST_CASE("full objective gradients match central differences") {
    const auto kinds = sim::pretraining_embodiments();
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto model = oracle::random_model(oracle::small_model_config(seed), kinds);
        auto batch = oracle::synthetic_batch(kinds, 8, seed);
        Rng rng(seed, {7});
        const auto noise = codebook::sample_gumbel(8 * model.codebook().n_codes(), rng);
        expect_fd(model.named_parameters(), [&] {
            return batch_loss(model, batch.samples, noise, 0.8, codebook::SelectionMode::soft).total;
        });
    }
}
