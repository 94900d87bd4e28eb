#include "ftrl/nn.hpp"

#include <cmath>
#include <cstddef>
#include <string>

namespace ftrl {

namespace {

// Largest double below 1; keeps saturated tanh strictly inside (-1, 1).
const double kTanhBound = std::nextafter(1.0, 0.0);

double activate(double z, Activation act) {
    switch (act) {
        case Activation::kRelu: return z > 0.0 ? z : 0.0;
        case Activation::kTanh: {
            const double t = std::tanh(z);
            return t >= 1.0 ? kTanhBound : (t <= -1.0 ? -kTanhBound : t);
        }
        case Activation::kLinear: return z;
    }
    return z;
}

// Derivative in terms of the pre-activation z.
double activate_grad(double z, Activation act) {
    switch (act) {
        case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::kTanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::kLinear: return 1.0;
    }
    return 1.0;
}

}  // namespace

void validate_spec(const MlpSpec& spec) {
    if (spec.layer_sizes.size() < 2) {
        throw ValidationError("MlpSpec needs at least 2 layer sizes, got " +
                              std::to_string(spec.layer_sizes.size()));
    }
    for (std::size_t i = 0; i < spec.layer_sizes.size(); ++i) {
        if (spec.layer_sizes[i] < 1) {
            throw ValidationError("MlpSpec layer size " + std::to_string(i) +
                                  " must be >= 1, got " + std::to_string(spec.layer_sizes[i]));
        }
    }
}

bool same_shape(const ModelParams& a, const ModelParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].out_dim != b.layers[i].out_dim) return false;
        if (a.layers[i].in_dim != b.layers[i].in_dim) return false;
    }
    return true;
}

bool matches_spec(const ModelParams& p, const MlpSpec& spec) {
    if (static_cast<int>(p.layers.size()) != spec.layer_count()) return false;
    for (int l = 0; l < spec.layer_count(); ++l) {
        if (p.layers[l].in_dim != spec.layer_sizes[l]) return false;
        if (p.layers[l].out_dim != spec.layer_sizes[l + 1]) return false;
    }
    return true;
}

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
    if (!same_shape(a, b)) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].w != b.layers[i].w) return false;
        if (a.layers[i].b != b.layers[i].b) return false;
    }
    return true;
}

bool all_finite(const ModelParams& p) {
    for (const auto& layer : p.layers) {
        for (double v : layer.w) {
            if (!std::isfinite(v)) return false;
        }
        for (double v : layer.b) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

std::size_t param_count(const MlpSpec& spec) {
    std::size_t n = 0;
    for (int l = 0; l < spec.layer_count(); ++l) {
        const std::size_t in = static_cast<std::size_t>(spec.layer_sizes[l]);
        const std::size_t out = static_cast<std::size_t>(spec.layer_sizes[l + 1]);
        n += out * in + out;
    }
    return n;
}

ModelParams zeros_like(const MlpSpec& spec) {
    validate_spec(spec);
    ModelParams p;
    p.layers.resize(spec.layer_count());
    for (int l = 0; l < spec.layer_count(); ++l) {
        LayerParams& layer = p.layers[l];
        layer.in_dim = spec.layer_sizes[l];
        layer.out_dim = spec.layer_sizes[l + 1];
        layer.w.assign(static_cast<std::size_t>(layer.out_dim) * layer.in_dim, 0.0);
        layer.b.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
    }
    return p;
}

ModelParams init_params(const MlpSpec& spec, std::uint64_t seed) {
    ModelParams p = zeros_like(spec);
    std::mt19937_64 rng(seed);
    for (auto& layer : p.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : layer.w) v = dist(rng);
        for (double& v : layer.b) v = dist(rng);
    }
    return p;
}

std::vector<double> mlp_forward(const ModelParams& params, const MlpSpec& spec,
                                const std::vector<double>& input, ForwardCache* cache) {
    validate_spec(spec);
    if (!matches_spec(params, spec)) {
        throw ShapeError("mlp_forward: params do not match spec");
    }
    if (static_cast<int>(input.size()) != spec.input_dim()) {
        throw ShapeError("mlp_forward: input length " + std::to_string(input.size()) +
                         " != spec input dim " + std::to_string(spec.input_dim()));
    }

    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }

    const int n_layers = spec.layer_count();
    std::vector<double> x = input;
    std::vector<double> z;
    for (int l = 0; l < n_layers; ++l) {
        const LayerParams& layer = params.layers[l];
        z.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
        for (int i = 0; i < layer.out_dim; ++i) {
            const double* row = layer.w.data() + static_cast<std::size_t>(i) * layer.in_dim;
            double acc = layer.b[static_cast<std::size_t>(i)];
            for (int j = 0; j < layer.in_dim; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
            z[static_cast<std::size_t>(i)] = acc;
        }
        if (cache) {
            cache->inputs.push_back(std::move(x));
            cache->pre.push_back(z);
        }
        const Activation act =
            (l == n_layers - 1) ? spec.output_activation : spec.hidden_activation;
        x.assign(z.size(), 0.0);
        for (std::size_t i = 0; i < z.size(); ++i) x[i] = activate(z[i], act);
    }
    if (cache) cache->output = x;
    return x;
}

BackwardResult mlp_backward(const ModelParams& params, const MlpSpec& spec,
                            const ForwardCache& cache, const std::vector<double>& output_grad) {
    const int n_layers = spec.layer_count();
    if (static_cast<int>(cache.inputs.size()) != n_layers ||
        static_cast<int>(cache.pre.size()) != n_layers) {
        throw ShapeError("mlp_backward: cache layer count does not match spec");
    }
    if (!matches_spec(params, spec)) {
        throw ShapeError("mlp_backward: params do not match spec");
    }
    if (static_cast<int>(output_grad.size()) != spec.output_dim()) {
        throw ShapeError("mlp_backward: output_grad length " + std::to_string(output_grad.size()) +
                         " != spec output dim " + std::to_string(spec.output_dim()));
    }
    for (int l = 0; l < n_layers; ++l) {
        if (static_cast<int>(cache.inputs[l].size()) != params.layers[l].in_dim ||
            static_cast<int>(cache.pre[l].size()) != params.layers[l].out_dim) {
            throw ShapeError("mlp_backward: cache shapes stale at layer " + std::to_string(l));
        }
    }

    BackwardResult res;
    res.grads.layers.resize(n_layers);

    std::vector<double> upstream = output_grad;  // dL/d(post-activation of layer l)
    for (int l = n_layers - 1; l >= 0; --l) {
        const LayerParams& layer = params.layers[l];
        const Activation act =
            (l == n_layers - 1) ? spec.output_activation : spec.hidden_activation;

        // delta = dL/dz
        std::vector<double> delta(static_cast<std::size_t>(layer.out_dim));
        for (int i = 0; i < layer.out_dim; ++i) {
            delta[static_cast<std::size_t>(i)] =
                upstream[static_cast<std::size_t>(i)] *
                activate_grad(cache.pre[l][static_cast<std::size_t>(i)], act);
        }

        LayerParams& g = res.grads.layers[l];
        g.in_dim = layer.in_dim;
        g.out_dim = layer.out_dim;
        g.w.assign(layer.w.size(), 0.0);
        g.b = delta;
        const std::vector<double>& x = cache.inputs[l];
        for (int i = 0; i < layer.out_dim; ++i) {
            double* grow = g.w.data() + static_cast<std::size_t>(i) * layer.in_dim;
            const double d = delta[static_cast<std::size_t>(i)];
            for (int j = 0; j < layer.in_dim; ++j) grow[j] = d * x[static_cast<std::size_t>(j)];
        }

        // dL/dx = W^T delta
        std::vector<double> down(static_cast<std::size_t>(layer.in_dim), 0.0);
        for (int i = 0; i < layer.out_dim; ++i) {
            const double* row = layer.w.data() + static_cast<std::size_t>(i) * layer.in_dim;
            const double d = delta[static_cast<std::size_t>(i)];
            for (int j = 0; j < layer.in_dim; ++j) down[static_cast<std::size_t>(j)] += row[j] * d;
        }
        upstream = std::move(down);
    }
    res.input_grad = std::move(upstream);
    return res;
}

AdamState make_adam_state(const MlpSpec& spec, double learning_rate) {
    AdamState st;
    st.m = zeros_like(spec);
    st.v = zeros_like(spec);
    st.learning_rate = learning_rate;
    return st;
}

namespace {

void adam_update_block(std::vector<double>& p, const std::vector<double>& g,
                       std::vector<double>& m, std::vector<double>& v, const AdamState& st,
                       double bc1, double bc2, int layer_index) {
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double grad = g[k];
        if (!std::isfinite(grad)) {
            throw NumericError("adam_step: non-finite gradient at layer " +
                               std::to_string(layer_index));
        }
        m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * grad;
        v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * grad * grad;
        const double m_hat = m[k] / bc1;
        const double v_hat = v[k] / bc2;
        p[k] -= st.learning_rate * m_hat / (std::sqrt(v_hat) + st.epsilon);
    }
}

}  // namespace

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state) {
    if (!same_shape(params, grads) || !same_shape(params, state.m)) {
        throw ShapeError("adam_step: parameter/gradient/moment shapes disagree");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        adam_update_block(params.layers[l].w, grads.layers[l].w, state.m.layers[l].w,
                          state.v.layers[l].w, state, bc1, bc2, static_cast<int>(l));
        adam_update_block(params.layers[l].b, grads.layers[l].b, state.m.layers[l].b,
                          state.v.layers[l].b, state, bc1, bc2, static_cast<int>(l));
    }
}

ModelParams soft_update(const ModelParams& target, const ModelParams& source, double tau) {
    if (!same_shape(target, source)) {
        throw ShapeError("soft_update: target and source shapes disagree");
    }
    if (tau < 0.0 || tau > 1.0) {
        throw ValidationError("soft_update: tau must lie in [0, 1], got " + std::to_string(tau));
    }
    ModelParams out = target;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        for (std::size_t k = 0; k < out.layers[l].w.size(); ++k) {
            out.layers[l].w[k] =
                (1.0 - tau) * target.layers[l].w[k] + tau * source.layers[l].w[k];
        }
        for (std::size_t k = 0; k < out.layers[l].b.size(); ++k) {
            out.layers[l].b[k] =
                (1.0 - tau) * target.layers[l].b[k] + tau * source.layers[l].b[k];
        }
    }
    return out;
}

std::vector<double> flatten(const ModelParams& params) {
    std::vector<double> out;
    std::size_t total = 0;
    for (const auto& layer : params.layers) total += layer.w.size() + layer.b.size();
    out.reserve(total);
    for (const auto& layer : params.layers) {
        out.insert(out.end(), layer.w.begin(), layer.w.end());
        out.insert(out.end(), layer.b.begin(), layer.b.end());
    }
    return out;
}

ModelParams unflatten(const std::vector<double>& values, const MlpSpec& spec) {
    if (values.size() != param_count(spec)) {
        throw ShapeError("unflatten: vector length " + std::to_string(values.size()) +
                         " != parameter count " + std::to_string(param_count(spec)));
    }
    ModelParams p = zeros_like(spec);
    std::size_t at = 0;
    for (auto& layer : p.layers) {
        for (double& v : layer.w) v = values[at++];
        for (double& v : layer.b) v = values[at++];
    }
    return p;
}

void validate_hyperparams(const DdpgHyperparams& hp) {
    if (!(hp.gamma > 0.0 && hp.gamma < 1.0)) {
        throw ValidationError("gamma must lie in (0, 1), got " + std::to_string(hp.gamma));
    }
    if (!(hp.tau > 0.0 && hp.tau <= 1.0)) {
        throw ValidationError("tau must lie in (0, 1], got " + std::to_string(hp.tau));
    }
    if (!(hp.actor_lr > 0.0) || !(hp.critic_lr > 0.0)) {
        throw ValidationError("learning rates must be positive");
    }
    if (hp.buffer_capacity < 1) {
        throw ValidationError("buffer_capacity must be positive");
    }
    if (hp.batch_size < 1 || hp.batch_size > hp.buffer_capacity) {
        throw ValidationError("batch_size must lie in [1, buffer_capacity]");
    }
}

}  // namespace ftrl
