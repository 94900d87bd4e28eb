#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ftrl/agent.hpp"
#include "ftrl/config.hpp"
#include "ftrl/federation.hpp"
#include "ftrl/metrics.hpp"

namespace ftrl {

struct FederationEvent {
    double at = 0.0;  // virtual step or wall seconds
    long round = 0;
};

struct ExperimentResult {
    std::vector<int> agent_ids;
    std::vector<std::vector<StepRecord>> agent_logs;
    std::vector<FederationEvent> federation_events;
    std::vector<EvalRow> eval_rows;
    std::string out_dir;
};

// Trains one solo DDPG agent on the pretrain track and returns its model;
// with steps = 0 this is the shared seeded initialization.
ModelBundle run_pretrain(const ExperimentConfig& cfg);

// Full scenario run: optional pretrain, agent loops (lockstep round-robin in
// virtual mode, threads + TCP in wall mode), periodic federation, and the
// output files (step logs, rp curves, eval report, model checkpoints).
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Builds the native-scale environment of one configured agent.
Environment make_agent_environment(const ExperimentConfig& cfg, const AgentSetup& setup);

// rp series tolerant of the all-constant-reward corner: indices where both
// stages saw the identical reward contribute rp = 0 even when the whole run
// is degenerate.
std::vector<double> rp_series_or_zero(const StageSeries& stages);

}  // namespace ftrl
