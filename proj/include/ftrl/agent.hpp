#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "ftrl/env.hpp"
#include "ftrl/nn.hpp"
#include "ftrl/transfer.hpp"

namespace ftrl {

// One replayable transition, already mapped to the standard scale.
struct Experience {
    Observation obs;
    double action = 0.0;  // standardized, in (-1, 1)
    double reward = 0.0;
    Observation next_obs;
    bool bootstrap_cut = false;  // suppress the TD bootstrap across a respawn
};

// Bounded FIFO with seeded uniform sampling (with replacement).
class ReplayBuffer {
  public:
    ReplayBuffer(int capacity, std::uint64_t seed);

    void record(const Experience& e);
    bool ready(int batch_size) const { return static_cast<int>(entries_.size()) >= batch_size; }
    // Throws ValidationError when fewer than n entries are stored.
    std::vector<Experience> sample(int n);

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Experience& at(std::size_t i) const { return entries_[i]; }  // oldest first

  private:
    std::deque<Experience> entries_;
    std::size_t capacity_;
    std::mt19937_64 rng_;
};

struct OuNoiseParams {
    double theta = 0.15;
    double sigma = 0.2;
    double mu = 0.0;
    double dt = 1.0;
};

// Ornstein-Uhlenbeck process, discretized as
//   x' = x + theta*(mu - x)*dt + sigma*sqrt(dt)*N(0,1)
class OuNoise {
  public:
    OuNoise(OuNoiseParams params, std::uint64_t seed);

    double step();
    double value() const { return value_; }
    void reset(double x0 = 0.0);

  private:
    OuNoiseParams params_;
    double value_ = 0.0;
    std::mt19937_64 rng_;
    std::normal_distribution<double> gauss_{0.0, 1.0};
};

// Actor/critic shapes shared by every agent of a federation.
struct AgentNetworks {
    MlpSpec actor;   // observation -> standardized action, tanh output
    MlpSpec critic;  // observation ++ action -> Q value, linear output
};

AgentNetworks make_networks(int hidden_units = 128, int hidden_layers = 3);

// The four DDPG networks, the unit exchanged with the federation server.
struct ModelBundle {
    ModelParams actor;
    ModelParams critic;
    ModelParams target_actor;
    ModelParams target_critic;
};

bool bitwise_equal(const ModelBundle& a, const ModelBundle& b);

enum class TrainGate { kBatch, kFull };

struct TrainStats {
    double critic_loss = 0.0;
    double actor_objective = 0.0;
};

// Single DDPG learner: deterministic actor with OU exploration, TD-trained
// critic, Polyak-averaged target networks, bounded replay.
class DdpgAgent {
  public:
    DdpgAgent(AgentNetworks nets, DdpgHyperparams hp, std::uint64_t seed,
              TrainGate gate = TrainGate::kBatch, OuNoiseParams noise = {});

    // Deterministic actor output, plus one OU step when exploring. Exploring
    // actions are clamped to (-1+1e-6, 1-1e-6).
    double act(const Observation& obs, bool explore);

    void record(const Experience& e) { buffer_.record(e); }
    bool train_ready() const;

    // Samples a batch internally; returns nullopt when the gate is closed.
    std::optional<TrainStats> train();

    // One critic + actor + target update on an explicit batch. The batch size
    // must equal the configured batch_size.
    TrainStats train_step(const std::vector<Experience>& batch);

    // y_j = r_j + gamma * Q_target(s'_j, mu_target(s'_j)), gamma term dropped
    // on bootstrap-cut transitions.
    std::vector<double> td_targets(const std::vector<Experience>& batch) const;

    const ModelBundle& model() const { return model_; }
    void set_model(const ModelBundle& m);  // adopt a federation snapshot

    const AgentNetworks& networks() const { return nets_; }
    const DdpgHyperparams& hyperparams() const { return hp_; }
    ReplayBuffer& buffer() { return buffer_; }
    OuNoise& noise() { return noise_; }

  private:
    double critic_value(const ModelParams& critic, const Observation& obs, double action,
                        ForwardCache* cache) const;

    AgentNetworks nets_;
    DdpgHyperparams hp_;
    TrainGate gate_;
    ModelBundle model_;
    AdamState actor_opt_;
    AdamState critic_opt_;
    ReplayBuffer buffer_;
    OuNoise noise_;
};

// Agent-side view of the federation server; implementations live with the
// federation code (in-process for the virtual clock, TCP for wall clock).
struct PullResult {
    long round = 0;
    std::optional<ModelBundle> model;  // empty while no federation happened
};

class FederationLink {
  public:
    virtual ~FederationLink() = default;
    virtual bool push_model(const ModelBundle& m) = 0;          // false: unreachable
    virtual std::optional<PullResult> pull_snapshot() = 0;      // nullopt: unreachable
};

// One row of the per-step CSV log.
struct StepRecord {
    long step = 0;  // 1-based
    double sim_time_s = 0.0;
    double reward = 0.0;
    bool collided = false;
    double min_dist = 0.0;  // standard scale, over the post-step observation
    long synced = -1;       // held snapshot round on sync steps, -1 otherwise
};

// Drives one agent through observe -> transfer -> act -> transfer -> step ->
// record -> (periodic sync) -> train. step_once() is the unit the lockstep
// scheduler interleaves across agents.
class AgentLoop {
  public:
    AgentLoop(DdpgAgent& agent, Environment& env, TransferProfile profile,
              FederationLink* link, long sync_cycle_steps, bool explore = true);

    StepRecord step_once();

    // Runs UPDATEMODEL now: pushes the local model, pulls the snapshot, and
    // adopts it unless its round is below the one already held. Returns the
    // held round afterwards.
    long sync_now();

    long steps_done() const { return step_; }
    long held_round() const { return held_round_; }
    const std::vector<StepRecord>& log() const { return log_; }
    DdpgAgent& agent() { return agent_; }
    Environment& env() { return env_; }
    const TransferProfile& profile() const { return profile_; }

  private:
    DdpgAgent& agent_;
    Environment& env_;
    TransferProfile profile_;
    FederationLink* link_;
    long sync_cycle_steps_;
    bool explore_;
    long step_ = 0;
    long held_round_ = 0;
    std::vector<StepRecord> log_;
};

std::vector<StepRecord> run_agent_loop(AgentLoop& loop, long steps);

void write_step_log_csv(const std::string& path, const std::vector<StepRecord>& log);

}  // namespace ftrl
