#include "ftrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "ftrl/rng.hpp"

namespace ftrl {

namespace {

constexpr double kActionClamp = 1.0 - 1e-6;

void accumulate(ModelParams& into, const ModelParams& grads) {
    for (std::size_t l = 0; l < into.layers.size(); ++l) {
        for (std::size_t k = 0; k < into.layers[l].w.size(); ++k) {
            into.layers[l].w[k] += grads.layers[l].w[k];
        }
        for (std::size_t k = 0; k < into.layers[l].b.size(); ++k) {
            into.layers[l].b[k] += grads.layers[l].b[k];
        }
    }
}

}  // namespace

ReplayBuffer::ReplayBuffer(int capacity, std::uint64_t seed)
    : capacity_(static_cast<std::size_t>(capacity)), rng_(seed) {
    if (capacity < 1) throw ValidationError("replay buffer capacity must be positive");
}

void ReplayBuffer::record(const Experience& e) {
    entries_.push_back(e);
    if (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<Experience> ReplayBuffer::sample(int n) {
    if (!ready(n)) {
        throw ValidationError("replay buffer holds " + std::to_string(entries_.size()) +
                              " entries, cannot sample " + std::to_string(n));
    }
    std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
    std::vector<Experience> batch;
    batch.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) batch.push_back(entries_[pick(rng_)]);
    return batch;
}

OuNoise::OuNoise(OuNoiseParams params, std::uint64_t seed) : params_(params), rng_(seed) {}

double OuNoise::step() {
    value_ += params_.theta * (params_.mu - value_) * params_.dt +
              params_.sigma * std::sqrt(params_.dt) * gauss_(rng_);
    if (!std::isfinite(value_)) throw NumericError("OU noise diverged to a non-finite value");
    return value_;
}

void OuNoise::reset(double x0) {
    value_ = x0;
    gauss_.reset();
}

AgentNetworks make_networks(int hidden_units, int hidden_layers) {
    if (hidden_units < 1 || hidden_layers < 1) {
        throw ValidationError("networks need at least one hidden layer of width >= 1");
    }
    AgentNetworks nets;
    nets.actor.layer_sizes.push_back(kLidarBeams);
    for (int i = 0; i < hidden_layers; ++i) nets.actor.layer_sizes.push_back(hidden_units);
    nets.actor.layer_sizes.push_back(1);
    nets.actor.output_activation = Activation::kTanh;

    nets.critic.layer_sizes.push_back(kLidarBeams + 1);  // observation ++ action
    for (int i = 0; i < hidden_layers; ++i) nets.critic.layer_sizes.push_back(hidden_units);
    nets.critic.layer_sizes.push_back(1);
    nets.critic.output_activation = Activation::kLinear;
    return nets;
}

bool bitwise_equal(const ModelBundle& a, const ModelBundle& b) {
    return bitwise_equal(a.actor, b.actor) && bitwise_equal(a.critic, b.critic) &&
           bitwise_equal(a.target_actor, b.target_actor) &&
           bitwise_equal(a.target_critic, b.target_critic);
}

DdpgAgent::DdpgAgent(AgentNetworks nets, DdpgHyperparams hp, std::uint64_t seed, TrainGate gate,
                     OuNoiseParams noise)
    : nets_(std::move(nets)),
      hp_(hp),
      gate_(gate),
      actor_opt_(make_adam_state(nets_.actor, hp.actor_lr)),
      critic_opt_(make_adam_state(nets_.critic, hp.critic_lr)),
      buffer_(hp.buffer_capacity, mix_seed(seed, 0xB0FFE2)),
      noise_(noise, mix_seed(seed, 0x0113E)) {
    validate_hyperparams(hp_);
    model_.actor = init_params(nets_.actor, mix_seed(seed, 0xAC7));
    model_.critic = init_params(nets_.critic, mix_seed(seed, 0xC217));
    model_.target_actor = model_.actor;
    model_.target_critic = model_.critic;
}

double DdpgAgent::act(const Observation& obs, bool explore) {
    const std::vector<double> input(obs.begin(), obs.end());
    const std::vector<double> out = mlp_forward(model_.actor, nets_.actor, input);
    double action = out[0];
    if (!std::isfinite(action)) throw NumericError("actor produced a non-finite action");
    if (explore) {
        action = std::clamp(action + noise_.step(), -kActionClamp, kActionClamp);
    }
    return action;
}

bool DdpgAgent::train_ready() const {
    const int threshold = gate_ == TrainGate::kBatch ? hp_.batch_size : hp_.buffer_capacity;
    return buffer_.ready(threshold);
}

std::optional<TrainStats> DdpgAgent::train() {
    if (!train_ready()) return std::nullopt;
    return train_step(buffer_.sample(hp_.batch_size));
}

double DdpgAgent::critic_value(const ModelParams& critic, const Observation& obs, double action,
                               ForwardCache* cache) const {
    std::vector<double> input(obs.begin(), obs.end());
    input.push_back(action);
    return mlp_forward(critic, nets_.critic, input, cache)[0];
}

std::vector<double> DdpgAgent::td_targets(const std::vector<Experience>& batch) const {
    std::vector<double> targets;
    targets.reserve(batch.size());
    for (const Experience& e : batch) {
        if (e.bootstrap_cut) {
            targets.push_back(e.reward);
            continue;
        }
        const std::vector<double> next(e.next_obs.begin(), e.next_obs.end());
        const double next_action = mlp_forward(model_.target_actor, nets_.actor, next)[0];
        const double next_q = critic_value(model_.target_critic, e.next_obs, next_action, nullptr);
        targets.push_back(e.reward + hp_.gamma * next_q);
    }
    return targets;
}

TrainStats DdpgAgent::train_step(const std::vector<Experience>& batch) {
    if (static_cast<int>(batch.size()) != hp_.batch_size) {
        throw ValidationError("train_step: batch size " + std::to_string(batch.size()) +
                              " != configured batch_size " + std::to_string(hp_.batch_size));
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const std::vector<double> targets = td_targets(batch);

    // Critic: minimize mean squared TD error.
    TrainStats stats;
    ModelParams critic_grads = zeros_like(nets_.critic);
    for (std::size_t j = 0; j < batch.size(); ++j) {
        ForwardCache cache;
        const double q = critic_value(model_.critic, batch[j].obs, batch[j].action, &cache);
        const double err = q - targets[j];
        stats.critic_loss += err * err * inv_b;
        const BackwardResult back =
            mlp_backward(model_.critic, nets_.critic, cache, {2.0 * err * inv_b});
        accumulate(critic_grads, back.grads);
    }
    if (!std::isfinite(stats.critic_loss)) {
        throw NumericError("train_step: critic loss is non-finite (batch of " +
                           std::to_string(batch.size()) + ")");
    }
    adam_step(model_.critic, critic_grads, critic_opt_);

    // Actor: ascend the mean critic value of its own actions.
    ModelParams actor_grads = zeros_like(nets_.actor);
    for (const Experience& e : batch) {
        ForwardCache actor_cache;
        const std::vector<double> input(e.obs.begin(), e.obs.end());
        const double action = mlp_forward(model_.actor, nets_.actor, input, &actor_cache)[0];
        ForwardCache critic_cache;
        const double q = critic_value(model_.critic, e.obs, action, &critic_cache);
        stats.actor_objective += q * inv_b;
        const BackwardResult critic_back =
            mlp_backward(model_.critic, nets_.critic, critic_cache, {1.0});
        const double dq_da = critic_back.input_grad[kLidarBeams];
        const BackwardResult actor_back =
            mlp_backward(model_.actor, nets_.actor, actor_cache, {-dq_da * inv_b});
        accumulate(actor_grads, actor_back.grads);
    }
    if (!std::isfinite(stats.actor_objective)) {
        throw NumericError("train_step: actor objective is non-finite");
    }
    adam_step(model_.actor, actor_grads, actor_opt_);

    model_.target_actor = soft_update(model_.target_actor, model_.actor, hp_.tau);
    model_.target_critic = soft_update(model_.target_critic, model_.critic, hp_.tau);
    return stats;
}

void DdpgAgent::set_model(const ModelBundle& m) {
    if (!matches_spec(m.actor, nets_.actor) || !matches_spec(m.critic, nets_.critic) ||
        !matches_spec(m.target_actor, nets_.actor) ||
        !matches_spec(m.target_critic, nets_.critic)) {
        throw ShapeError("set_model: bundle does not match this agent's network shapes");
    }
    model_ = m;
}

AgentLoop::AgentLoop(DdpgAgent& agent, Environment& env, TransferProfile profile,
                     FederationLink* link, long sync_cycle_steps, bool explore)
    : agent_(agent),
      env_(env),
      profile_(std::move(profile)),
      link_(link),
      sync_cycle_steps_(sync_cycle_steps),
      explore_(explore) {
    validate_profile(profile_);
    if (env_.track().scale_label != profile_.scale_label) {
        throw ValidationError("agent loop: environment scale '" + env_.track().scale_label +
                              "' != profile scale '" + profile_.scale_label + "'");
    }
}

long AgentLoop::sync_now() {
    if (!link_) return held_round_;
    if (!link_->push_model(agent_.model())) return held_round_;  // unreachable: retry next cycle
    const auto pulled = link_->pull_snapshot();
    if (!pulled) return held_round_;
    if (pulled->model && pulled->round >= held_round_ && pulled->round > 0) {
        agent_.set_model(*pulled->model);
        held_round_ = pulled->round;
    }
    return held_round_;
}

StepRecord AgentLoop::step_once() {
    const Observation s = transfer_observation(env_.observe(), profile_);
    const double action = agent_.act(s, explore_);
    const double native_action = transfer_action(action, profile_);
    const StepResult res = env_.step(native_action);
    const Observation s_next = transfer_observation(res.obs, profile_);
    agent_.record(Experience{s, action, res.reward, s_next, res.collided});

    ++step_;
    long synced = -1;
    if (link_ && sync_cycle_steps_ > 0 && step_ % sync_cycle_steps_ == 0) {
        synced = sync_now();
    }
    if (agent_.train_ready()) agent_.train();

    StepRecord rec;
    rec.step = step_;
    rec.sim_time_s = env_.sim_time();
    rec.reward = res.reward;
    rec.collided = res.collided;
    rec.min_dist = *std::min_element(s_next.begin(), s_next.end());
    rec.synced = synced;
    log_.push_back(rec);
    return rec;
}

std::vector<StepRecord> run_agent_loop(AgentLoop& loop, long steps) {
    for (long i = 0; i < steps; ++i) loop.step_once();
    return loop.log();
}

void write_step_log_csv(const std::string& path, const std::vector<StepRecord>& log) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open step log for writing: " + path);
    out << "step,sim_time_s,reward,collided,min_dist,synced\n";
    char buf[64];
    for (const StepRecord& r : log) {
        out << r.step << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", r.sim_time_s);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", r.reward);
        out << buf << ',' << (r.collided ? 1 : 0) << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", r.min_dist);
        out << buf << ',' << r.synced << '\n';
    }
}

}  // namespace ftrl
