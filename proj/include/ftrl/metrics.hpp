#pragma once

#include <string>
#include <vector>

#include "ftrl/agent.hpp"
#include "ftrl/env.hpp"

namespace ftrl {

struct StageConfig {
    int stage_length = 2500;   // steps per stage
    int warmup_stages = 1;     // stages dropped before stage I
};

// rp = (r_II - r_I) / (r_max - r_min). Throws ValidationError when the run is
// degenerate (r_max == r_min) or the rewards fall outside [r_min, r_max].
double relative_performance(double reward_stage1, double reward_stage2, double r_max,
                            double r_min);

struct StageSeries {
    std::vector<double> stage1;
    std::vector<double> stage2;
    double r_max = 0.0;
    double r_min = 0.0;
};

// Slices stages I and II out of a step log (after the warmup stages) and takes
// r_max/r_min over the whole run. Throws ValidationError when the log is
// shorter than (warmup + 2) stages.
StageSeries stage_series(const std::vector<StepRecord>& log, const StageConfig& cfg = {});

std::vector<double> rp_series(const StageSeries& stages);
std::vector<double> cumulative_rp(const std::vector<double>& rp);

struct EvalReport {
    double avg_dist = 0.0;     // mean per-step minimum distance, standard scale
    int coll_no = 0;           // respawn count
    int cycles_completed = 0;  // lap-line crossings in the configured direction
    long steps = 0;
    bool timed_out = false;
};

// Noise-free rollout until `cycles` lap crossings (or the step budget runs
// out, default cycles * 10000). The track must define a lap line.
EvalReport evaluate_policy(DdpgAgent& agent, Environment& env, const TransferProfile& profile,
                           int cycles, long step_budget = 0);

// step,rp,cumsum rows, 1-based step index.
void write_rp_curve_csv(const std::string& path, const std::vector<double>& rp,
                        const std::vector<double>& cumsum);

struct EvalRow {
    std::string scenario;
    std::string agent;
    EvalReport report;
};

// scenario,agent,avg_dist,coll_no rows.
void write_eval_report_csv(const std::string& path, const std::vector<EvalRow>& rows);

}  // namespace ftrl
