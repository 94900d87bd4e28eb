#include <doctest.h>

#include <cmath>
#include <random>

#include "ftrl/nn.hpp"

using namespace ftrl;

namespace {

// Independent dense forward: plain nested loops, no shared code path.
std::vector<double> naive_forward(const ModelParams& p, const MlpSpec& spec,
                                  std::vector<double> x) {
    for (int l = 0; l < spec.layer_count(); ++l) {
        const LayerParams& layer = p.layers[static_cast<std::size_t>(l)];
        std::vector<double> y(static_cast<std::size_t>(layer.out_dim), 0.0);
        for (int i = 0; i < layer.out_dim; ++i) {
            double acc = layer.b[static_cast<std::size_t>(i)];
            for (int j = 0; j < layer.in_dim; ++j) {
                acc += layer.w[static_cast<std::size_t>(i * layer.in_dim + j)] *
                       x[static_cast<std::size_t>(j)];
            }
            y[static_cast<std::size_t>(i)] = acc;
        }
        const bool last = l == spec.layer_count() - 1;
        const Activation act = last ? spec.output_activation : spec.hidden_activation;
        for (double& v : y) {
            if (act == Activation::kRelu) v = v > 0 ? v : 0;
            if (act == Activation::kTanh) v = std::tanh(v);
        }
        x = y;
    }
    return x;
}

MlpSpec small_spec(std::vector<int> sizes, Activation out_act) {
    MlpSpec spec;
    spec.layer_sizes = std::move(sizes);
    spec.output_activation = out_act;
    return spec;
}

}  // namespace

TEST_CASE("forward: zero network maps any input to zero under linear output") {
    const MlpSpec spec = small_spec({3, 4, 2}, Activation::kLinear);
    const ModelParams p = zeros_like(spec);
    const auto out = mlp_forward(p, spec, {1.5, -2.0, 0.25});
    REQUIRE(out.size() == 2);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
}

TEST_CASE("forward: 1->1 affine layer computes w*x + b") {
    const MlpSpec spec = small_spec({1, 1}, Activation::kLinear);
    ModelParams p = zeros_like(spec);
    p.layers[0].w[0] = 2.0;
    p.layers[0].b[0] = 1.0;
    const auto out = mlp_forward(p, spec, {3.0});
    CHECK(out[0] == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("forward: random 3->4->2 network matches the naive oracle") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const MlpSpec spec =
            small_spec({3, 4, 2}, trial % 2 ? Activation::kTanh : Activation::kLinear);
        const ModelParams p = init_params(spec, rng());
        std::vector<double> input{dist(rng), dist(rng), dist(rng)};
        const auto got = mlp_forward(p, spec, input);
        const auto want = naive_forward(p, spec, input);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::abs(got[i] - want[i]) <= 1e-12);
        }
    }
}

TEST_CASE("forward: tanh outputs lie strictly inside (-1,1)") {
    const MlpSpec spec = small_spec({2, 3, 1}, Activation::kTanh);
    ModelParams p = init_params(spec, 7);
    for (auto& layer : p.layers) {
        for (double& w : layer.w) w *= 100.0;  // saturate
    }
    const auto out = mlp_forward(p, spec, {50.0, -50.0});
    CHECK(out[0] > -1.0);
    CHECK(out[0] < 1.0);
}

TEST_CASE("forward: dimension mismatch raises a shape error") {
    const MlpSpec spec = small_spec({3, 2}, Activation::kLinear);
    const ModelParams p = zeros_like(spec);
    CHECK_THROWS_AS(mlp_forward(p, spec, {1.0, 2.0}), ShapeError);
}

TEST_CASE("backward: hand-checked chain rule on a linear 1->1 layer") {
    const MlpSpec spec = small_spec({1, 1}, Activation::kLinear);
    ModelParams p = zeros_like(spec);
    p.layers[0].w[0] = 2.0;
    ForwardCache cache;
    mlp_forward(p, spec, {3.0}, &cache);
    const BackwardResult res = mlp_backward(p, spec, cache, {1.0});
    CHECK(res.grads.layers[0].w[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(res.grads.layers[0].b[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(res.input_grad[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("backward: zero output gradient yields all-zero gradients") {
    const MlpSpec spec = small_spec({3, 5, 2}, Activation::kTanh);
    const ModelParams p = init_params(spec, 3);
    ForwardCache cache;
    mlp_forward(p, spec, {0.3, -0.4, 0.9}, &cache);
    const BackwardResult res = mlp_backward(p, spec, cache, {0.0, 0.0});
    for (const auto& layer : res.grads.layers) {
        for (double g : layer.w) CHECK(g == 0.0);
        for (double g : layer.b) CHECK(g == 0.0);
    }
    for (double g : res.input_grad) CHECK(g == 0.0);
}

TEST_CASE("backward: gradients match central finite differences") {
    std::mt19937_64 rng(2023);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    // Random small networks (<= 64 params) incl. the spec'd 4->8->1 shape.
    const std::vector<std::vector<int>> shapes = {{4, 8, 1}, {2, 3, 2}, {3, 4, 3}, {1, 5, 1}};
    for (const auto& sizes : shapes) {
        for (int trial = 0; trial < 5; ++trial) {
            const MlpSpec spec =
                small_spec(sizes, trial % 2 ? Activation::kTanh : Activation::kLinear);
            REQUIRE(param_count(spec) <= 64);
            const ModelParams p = init_params(spec, rng());
            std::vector<double> input(static_cast<std::size_t>(spec.input_dim()));
            for (double& v : input) v = dist(rng);
            std::vector<double> out_grad(static_cast<std::size_t>(spec.output_dim()));
            for (double& v : out_grad) v = dist(rng);

            ForwardCache cache;
            mlp_forward(p, spec, input, &cache);
            const auto analytic = flatten(mlp_backward(p, spec, cache, out_grad).grads);

            const auto loss = [&](const std::vector<double>& flat) {
                const auto out = mlp_forward(unflatten(flat, spec), spec, input);
                double acc = 0.0;
                for (std::size_t i = 0; i < out.size(); ++i) acc += out_grad[i] * out[i];
                return acc;
            };
            const std::vector<double> flat = flatten(p);
            const double h = 1e-6;
            for (std::size_t k = 0; k < flat.size(); ++k) {
                std::vector<double> up = flat, down = flat;
                up[k] += h;
                down[k] -= h;
                const double numeric = (loss(up) - loss(down)) / (2.0 * h);
                const double denom = std::max({std::abs(numeric), std::abs(analytic[k]), 1e-8});
                CHECK(std::abs(numeric - analytic[k]) / denom <= 1e-5);
            }
        }
    }
}

TEST_CASE("backward: stale cache raises a shape error") {
    const MlpSpec spec = small_spec({2, 3, 1}, Activation::kLinear);
    const ModelParams p = init_params(spec, 5);
    ForwardCache cache;
    mlp_forward(p, spec, {0.1, 0.2}, &cache);
    cache.pre.pop_back();
    CHECK_THROWS_AS(mlp_backward(p, spec, cache, {1.0}), ShapeError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, advances the step") {
    const MlpSpec spec = small_spec({2, 2}, Activation::kLinear);
    ModelParams p = init_params(spec, 11);
    const ModelParams before = p;
    AdamState st = make_adam_state(spec, 1e-3);
    adam_step(p, zeros_like(spec), st);
    CHECK(st.step == 1);
    CHECK(bitwise_equal(p, before));
}

TEST_CASE("adam: first step magnitude is about the learning rate") {
    const MlpSpec spec = small_spec({1, 1}, Activation::kLinear);
    ModelParams p = zeros_like(spec);
    ModelParams g = zeros_like(spec);
    g.layers[0].w[0] = 1.0;
    AdamState st = make_adam_state(spec, 1e-4);
    adam_step(p, g, st);
    CHECK(p.layers[0].w[0] == doctest::Approx(-1e-4).epsilon(1e-6));
}

TEST_CASE("adam: successive steps match a scripted recurrence") {
    const MlpSpec spec = small_spec({1, 1}, Activation::kLinear);
    ModelParams p = zeros_like(spec);
    p.layers[0].w[0] = 0.5;
    ModelParams g = zeros_like(spec);
    g.layers[0].w[0] = 0.3;
    AdamState st = make_adam_state(spec, 1e-2);

    // Scripted Adam on one scalar.
    double param = 0.5, m = 0.0, v = 0.0;
    const double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8, grad = 0.3;
    for (int t = 1; t <= 5; ++t) {
        adam_step(p, g, st);
        m = b1 * m + (1 - b1) * grad;
        v = b2 * v + (1 - b2) * grad * grad;
        const double m_hat = m / (1 - std::pow(b1, t));
        const double v_hat = v / (1 - std::pow(b2, t));
        param -= lr * m_hat / (std::sqrt(v_hat) + eps);
        CHECK(std::abs(p.layers[0].w[0] - param) <= 1e-12);
    }
}

TEST_CASE("adam: non-finite gradient raises a numeric error naming the layer") {
    const MlpSpec spec = small_spec({1, 2, 1}, Activation::kLinear);
    ModelParams p = init_params(spec, 1);
    ModelParams g = zeros_like(spec);
    g.layers[1].w[0] = std::numeric_limits<double>::quiet_NaN();
    AdamState st = make_adam_state(spec, 1e-3);
    CHECK_THROWS_WITH_AS(adam_step(p, g, st), doctest::Contains("layer 1"), NumericError);
}

TEST_CASE("soft_update: tau endpoints and midpoint") {
    const MlpSpec spec = small_spec({1, 1}, Activation::kLinear);
    ModelParams target = zeros_like(spec);
    ModelParams source = zeros_like(spec);
    source.layers[0].w[0] = 2.0;

    CHECK(bitwise_equal(soft_update(target, source, 1.0), source));
    CHECK(bitwise_equal(soft_update(target, source, 0.0), target));
    CHECK(soft_update(target, source, 0.5).layers[0].w[0] == doctest::Approx(1.0));
}

TEST_CASE("soft_update: affine symmetry property") {
    const MlpSpec spec = small_spec({2, 3, 1}, Activation::kLinear);
    const ModelParams a = init_params(spec, 21);
    const ModelParams b = init_params(spec, 22);
    const double tau = 0.3;
    const ModelParams ab = soft_update(a, b, tau);
    const ModelParams ba = soft_update(b, a, tau);
    const auto fa = flatten(a), fb = flatten(b), fab = flatten(ab), fba = flatten(ba);
    for (std::size_t k = 0; k < fa.size(); ++k) {
        CHECK(std::abs((fab[k] + fba[k]) - (fa[k] + fb[k])) <= 1e-12);
    }
}

TEST_CASE("soft_update: shape mismatch raises a shape error") {
    const ModelParams a = zeros_like(small_spec({1, 2}, Activation::kLinear));
    const ModelParams b = zeros_like(small_spec({1, 3}, Activation::kLinear));
    CHECK_THROWS_AS(soft_update(a, b, 0.5), ShapeError);
}

TEST_CASE("flatten: 1->1 layout and round trip") {
    const MlpSpec spec = small_spec({1, 1}, Activation::kLinear);
    ModelParams p = zeros_like(spec);
    p.layers[0].w[0] = 2.0;
    p.layers[0].b[0] = 1.0;
    const auto flat = flatten(p);
    REQUIRE(flat.size() == 2);
    CHECK(flat[0] == 2.0);
    CHECK(flat[1] == 1.0);
    CHECK(bitwise_equal(unflatten(flat, spec), p));
}

TEST_CASE("flatten: parameter count of a 3->4->2 network is 3*4+4+4*2+2") {
    const MlpSpec spec = small_spec({3, 4, 2}, Activation::kLinear);
    CHECK(param_count(spec) == 3 * 4 + 4 + 4 * 2 + 2);
    CHECK(flatten(zeros_like(spec)).size() == param_count(spec));
}

TEST_CASE("flatten: random models round-trip bit-exactly") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const MlpSpec spec = small_spec({4, 6, 3}, Activation::kTanh);
        const ModelParams p = init_params(spec, rng());
        CHECK(bitwise_equal(unflatten(flatten(p), spec), p));
    }
}

TEST_CASE("unflatten: length mismatch raises a shape error") {
    const MlpSpec spec = small_spec({2, 2}, Activation::kLinear);
    CHECK_THROWS_AS(unflatten(std::vector<double>(5, 0.0), spec), ShapeError);
}

TEST_CASE("spec and hyperparameter validation") {
    MlpSpec bad;
    bad.layer_sizes = {4};
    CHECK_THROWS_AS(validate_spec(bad), ValidationError);
    bad.layer_sizes = {4, 0};
    CHECK_THROWS_AS(validate_spec(bad), ValidationError);

    DdpgHyperparams hp;
    CHECK_NOTHROW(validate_hyperparams(hp));
    hp.gamma = 1.0;
    CHECK_THROWS_AS(validate_hyperparams(hp), ValidationError);
    hp.gamma = 0.99;
    hp.batch_size = hp.buffer_capacity + 1;
    CHECK_THROWS_AS(validate_hyperparams(hp), ValidationError);
}
