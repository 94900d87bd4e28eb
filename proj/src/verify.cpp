#include "ftrl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ftrl/env.hpp"
#include "ftrl/federation.hpp"
#include "ftrl/nn.hpp"
#include "ftrl/transfer.hpp"

namespace ftrl {

namespace {

// Eq.-by-the-book reward: full sort, explicit mean, explicit power.
double reward_brute_force(const Observation& obs, const RewardParams& p) {
    std::vector<double> sorted(obs.begin(), obs.end());
    std::sort(sorted.begin(), sorted.end());
    const int k = static_cast<int>(std::floor(p.fraction * kLidarBeams));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += sorted[static_cast<std::size_t>(i)];
    const double m_d = sum / k;
    double reward = p.base_reward;
    if (sorted.front() < p.safe_distance) reward -= p.collision_penalty;
    reward -= std::pow(2.0, p.exponent_offset - m_d);
    return reward;
}

bool check_reward_oracle(std::ostream& out, int cases) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> dist(0.05, 12.0);
    RewardParams params;
    double worst = 0.0;
    for (int i = 0; i < cases; ++i) {
        Observation obs;
        for (double& d : obs) d = dist(rng);
        worst = std::max(worst, std::abs(compute_reward(obs, params) -
                                         reward_brute_force(obs, params)));
    }
    const bool ok = worst <= 1e-12;
    out << (ok ? "[ ok ]" : "[FAIL]") << " reward matches brute-force evaluation on " << cases
        << " observations (max |diff| = " << worst << ")\n";
    return ok;
}

bool check_gradients(std::ostream& out, int nets) {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> dim(1, 5);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    double worst = 0.0;
    for (int n = 0; n < nets; ++n) {
        MlpSpec spec;
        spec.layer_sizes = {dim(rng), dim(rng), dim(rng)};
        spec.output_activation = (n % 2 == 0) ? Activation::kTanh : Activation::kLinear;
        ModelParams params = init_params(spec, rng());
        std::vector<double> input(static_cast<std::size_t>(spec.input_dim()));
        for (double& v : input) v = val(rng);
        std::vector<double> out_grad(static_cast<std::size_t>(spec.output_dim()));
        for (double& v : out_grad) v = val(rng);

        ForwardCache cache;
        mlp_forward(params, spec, input, &cache);
        const BackwardResult analytic = mlp_backward(params, spec, cache, out_grad);

        // Central differences of L = out_grad . output over every parameter.
        const double h = 1e-6;
        std::vector<double> flat = flatten(params);
        const std::vector<double> grad_flat = flatten(analytic.grads);
        for (std::size_t k = 0; k < flat.size(); ++k) {
            const auto loss_at = [&](double delta) {
                std::vector<double> bumped = flat;
                bumped[k] += delta;
                const auto output = mlp_forward(unflatten(bumped, spec), spec, input);
                double loss = 0.0;
                for (std::size_t j = 0; j < output.size(); ++j) loss += out_grad[j] * output[j];
                return loss;
            };
            const double numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            const double denom = std::max({std::abs(numeric), std::abs(grad_flat[k]), 1e-8});
            worst = std::max(worst, std::abs(numeric - grad_flat[k]) / denom);
        }
    }
    const bool ok = worst <= 1e-5;
    out << (ok ? "[ ok ]" : "[FAIL]") << " analytic gradients match finite differences on "
        << nets << " networks (max rel err = " << worst << ")\n";
    return ok;
}

bool check_fedavg(std::ostream& out, int cases) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> n_models(1, 5);
    double worst = 0.0;
    bool identity_ok = true;
    for (int c = 0; c < cases; ++c) {
        MlpSpec spec;
        spec.layer_sizes = {3, 4, 2};
        const int n = n_models(rng);
        std::vector<ModelParams> models;
        for (int i = 0; i < n; ++i) models.push_back(init_params(spec, rng()));
        const ModelParams avg = fedavg(models);
        const std::vector<double> got = flatten(avg);
        // Independent elementwise mean.
        std::vector<std::vector<double>> flats;
        for (const auto& m : models) flats.push_back(flatten(m));
        for (std::size_t k = 0; k < got.size(); ++k) {
            double sum = 0.0;
            for (const auto& f : flats) sum += f[k];
            worst = std::max(worst, std::abs(got[k] - sum / n));
        }
        const std::vector<ModelParams> same(3, models[0]);
        identity_ok = identity_ok && bitwise_equal(fedavg(same), models[0]);
    }
    const bool ok = worst <= 1e-12 && identity_ok;
    out << (ok ? "[ ok ]" : "[FAIL]") << " fedavg matches elementwise mean on " << cases
        << " model sets, identity on equal models\n";
    return ok;
}

bool check_transfer(std::ostream& out, int cases) {
    std::mt19937_64 rng(2717);
    std::uniform_real_distribution<double> dist(0.01, 20.0);
    std::uniform_real_distribution<double> beta_dist(0.1, 10.0);
    std::uniform_real_distribution<double> act(-0.999, 0.999);
    double worst = 0.0;
    bool odd_ok = true;
    for (int c = 0; c < cases; ++c) {
        TransferProfile fwd{"native", beta_dist(rng), 0.6, false};
        TransferProfile inv{"standard", 1.0 / fwd.beta, 0.6, false};
        Observation obs;
        for (double& d : obs) d = dist(rng);
        const Observation back = transfer_observation(transfer_observation(obs, fwd), inv);
        for (int i = 0; i < kLidarBeams; ++i) {
            worst = std::max(worst, std::abs(back[static_cast<std::size_t>(i)] -
                                             obs[static_cast<std::size_t>(i)]));
        }
        const double a = act(rng);
        odd_ok = odd_ok && transfer_action(-a, fwd) == -transfer_action(a, fwd);
    }
    const bool ok = worst <= 1e-12 && odd_ok;
    out << (ok ? "[ ok ]" : "[FAIL]") << " transfer round-trip within 1e-12 and oddness exact on "
        << cases << " inputs\n";
    return ok;
}

bool check_protocol(std::ostream& out, int cases) {
    std::mt19937_64 rng(450);
    std::uniform_int_distribution<int> kind(0, 4);
    std::uniform_int_distribution<int> len(0, 64);
    std::uniform_int_distribution<int> byte(0, 255);
    bool roundtrip_ok = true;
    for (int c = 0; c < cases; ++c) {
        ModelEnvelope env;
        env.kind = static_cast<MessageKind>(kind(rng));
        env.agent_id = static_cast<std::uint32_t>(rng());
        env.round = static_cast<std::uint32_t>(rng());
        env.payload.resize(static_cast<std::size_t>(len(rng)));
        for (auto& b : env.payload) b = static_cast<std::uint8_t>(byte(rng));
        const auto bytes = encode_envelope(env);
        const ModelEnvelope back = decode_envelope(bytes);
        roundtrip_ok = roundtrip_ok && back.kind == env.kind && back.agent_id == env.agent_id &&
                       back.round == env.round && back.payload == env.payload;
    }

    // Any single-byte change to magic, version, or length must be rejected.
    ModelEnvelope env;
    env.kind = MessageKind::kAck;
    env.agent_id = 2;
    env.round = 7;
    const auto clean = encode_envelope(env);
    bool detect_ok = true;
    const auto corrupt_detected = [&](std::size_t offset) {
        for (int mask = 1; mask < 256; ++mask) {
            auto bad = clean;
            bad[offset] = static_cast<std::uint8_t>(bad[offset] ^ mask);
            try {
                decode_envelope(bad);
                return false;
            } catch (const ProtocolError&) {
            }
        }
        return true;
    };
    for (std::size_t off = 0; off < 5; ++off) detect_ok = detect_ok && corrupt_detected(off);
    for (std::size_t off = 14; off < kEnvelopeHeaderSize; ++off) {
        detect_ok = detect_ok && corrupt_detected(off);
    }

    const bool ok = roundtrip_ok && detect_ok;
    out << (ok ? "[ ok ]" : "[FAIL]") << " envelope codec round-trips " << cases
        << " frames, header corruption detected\n";
    return ok;
}

bool check_flatten(std::ostream& out, int cases) {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> dim(1, 6);
    bool ok = true;
    for (int c = 0; c < cases; ++c) {
        MlpSpec spec;
        spec.layer_sizes = {dim(rng), dim(rng), dim(rng)};
        const ModelParams p = init_params(spec, rng());
        ok = ok && bitwise_equal(unflatten(flatten(p), spec), p);
    }
    out << (ok ? "[ ok ]" : "[FAIL]") << " flatten/unflatten round-trips " << cases
        << " random models bit-exactly\n";
    return ok;
}

}  // namespace

bool run_verification(std::ostream& out) {
    bool ok = true;
    ok &= check_reward_oracle(out, 1000);
    ok &= check_gradients(out, 10);
    ok &= check_fedavg(out, 20);
    ok &= check_transfer(out, 200);
    ok &= check_protocol(out, 100);
    ok &= check_flatten(out, 20);
    out << (ok ? "all checks passed\n" : "SOME CHECKS FAILED\n");
    return ok;
}

}  // namespace ftrl
