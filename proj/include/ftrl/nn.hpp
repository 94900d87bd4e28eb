#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ftrl/errors.hpp"

namespace ftrl {

enum class Activation { kRelu, kTanh, kLinear };

// Shape description of a dense MLP. layer_sizes = {in, hidden..., out}.
struct MlpSpec {
    std::vector<int> layer_sizes;
    Activation hidden_activation = Activation::kRelu;
    Activation output_activation = Activation::kLinear;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
};

// Throws ValidationError unless the spec has >= 2 layer sizes, all >= 1.
void validate_spec(const MlpSpec& spec);

// One dense layer: w is row-major out_dim x in_dim, b has out_dim entries.
struct LayerParams {
    int out_dim = 0;
    int in_dim = 0;
    std::vector<double> w;
    std::vector<double> b;
};

struct ModelParams {
    std::vector<LayerParams> layers;
};

bool same_shape(const ModelParams& a, const ModelParams& b);
bool matches_spec(const ModelParams& p, const MlpSpec& spec);
bool bitwise_equal(const ModelParams& a, const ModelParams& b);
bool all_finite(const ModelParams& p);

// Total scalar count (weights + biases) of a conforming model.
std::size_t param_count(const MlpSpec& spec);

// Zero-filled parameters with the spec's shapes.
ModelParams zeros_like(const MlpSpec& spec);

// Seeded uniform init in +-1/sqrt(fan_in) for weights and biases.
ModelParams init_params(const MlpSpec& spec, std::uint64_t seed);

// Per/post-activation record from a forward pass, consumed by mlp_backward.
struct ForwardCache {
    std::vector<std::vector<double>> inputs;  // input vector of each layer
    std::vector<std::vector<double>> pre;     // pre-activation of each layer
    std::vector<double> output;
};

// Dense forward pass. ReLU on hidden layers, spec.output_activation on the last.
std::vector<double> mlp_forward(const ModelParams& params, const MlpSpec& spec,
                                const std::vector<double>& input, ForwardCache* cache = nullptr);

struct BackwardResult {
    ModelParams grads;
    std::vector<double> input_grad;
};

// Exact reverse-mode gradients for the loss whose dL/d(output) is output_grad.
// The cache must come from mlp_forward on the same params.
BackwardResult mlp_backward(const ModelParams& params, const MlpSpec& spec,
                            const ForwardCache& cache, const std::vector<double>& output_grad);

struct AdamState {
    ModelParams m;  // first moments
    ModelParams v;  // second moments
    long step = 0;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam_state(const MlpSpec& spec, double learning_rate);

// One bias-corrected Adam update in place. Throws NumericError (with layer
// index) on non-finite gradients.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state);

// Polyak average: (1-tau)*target + tau*source, elementwise.
ModelParams soft_update(const ModelParams& target, const ModelParams& source, double tau);

// Deterministic flattening: layer order, row-major weights, then bias.
std::vector<double> flatten(const ModelParams& params);
ModelParams unflatten(const std::vector<double>& values, const MlpSpec& spec);

struct DdpgHyperparams {
    double gamma = 0.99;
    double tau = 0.02;
    double actor_lr = 1e-4;
    double critic_lr = 1e-4;
    int buffer_capacity = 2500;
    int batch_size = 32;
};

// Throws ValidationError on out-of-range fields (gamma in (0,1), tau in (0,1],
// positive rates, batch_size <= buffer_capacity).
void validate_hyperparams(const DdpgHyperparams& hp);

}  // namespace ftrl
