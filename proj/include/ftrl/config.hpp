#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ftrl/agent.hpp"
#include "ftrl/env.hpp"
#include "ftrl/federation.hpp"
#include "ftrl/nn.hpp"
#include "ftrl/transfer.hpp"

namespace ftrl {

enum class Scenario { kSolo, kFtrl, kFtrlSim };

std::string to_string(Scenario s);

struct AgentSetup {
    int id = 0;  // from the [agent.<id>] section
    std::string track_file;
    TransferProfile profile;
    std::optional<std::uint64_t> seed;  // explicit seed, if the config gave one
};

struct PretrainConfig {
    std::string track_file;
    long steps = 0;
};

struct EvalConfig {
    std::string track_file;
    int cycles = 50;
};

struct ExperimentConfig {
    Scenario scenario = Scenario::kSolo;
    std::uint64_t seed = 1;
    long steps = 7500;
    std::string out_dir = "out";
    std::vector<AgentSetup> agents;
    DdpgHyperparams ddpg;
    TrainGate train_gate = TrainGate::kBatch;
    OuNoiseParams noise;
    RewardParams reward;
    FederationConfig federation;
    EnvParams env;  // standard-scale kinematics; per-agent params derive via beta
    int hidden_units = 128;
    int hidden_layers = 3;
    std::optional<PretrainConfig> pretrain;
    std::optional<EvalConfig> eval;
};

// Explicit agent seed, or experiment seed + agent id. Resolved at run time
// so a late seed override reaches every agent.
std::uint64_t agent_seed(const ExperimentConfig& cfg, const AgentSetup& setup);

// Parses the INI-style experiment file, fills defaults, and validates the
// scenario invariants. Throws ConfigError naming the offending section/key.
ExperimentConfig parse_config(const std::string& path);

// Semantic checks shared by parse_config and programmatic construction.
void validate_config(const ExperimentConfig& cfg);

}  // namespace ftrl
