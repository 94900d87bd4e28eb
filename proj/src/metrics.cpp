#include "ftrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "ftrl/transfer.hpp"

namespace ftrl {

double relative_performance(double reward_stage1, double reward_stage2, double r_max,
                            double r_min) {
    if (!(r_max > r_min)) {
        throw ValidationError("relative_performance: degenerate run, r_max <= r_min");
    }
    if (reward_stage1 < r_min || reward_stage1 > r_max || reward_stage2 < r_min ||
        reward_stage2 > r_max) {
        throw ValidationError("relative_performance: reward outside [r_min, r_max]");
    }
    return (reward_stage2 - reward_stage1) / (r_max - r_min);
}

StageSeries stage_series(const std::vector<StepRecord>& log, const StageConfig& cfg) {
    if (cfg.stage_length < 1) throw ValidationError("stage_series: stage_length must be >= 1");
    if (cfg.warmup_stages < 0) throw ValidationError("stage_series: warmup_stages must be >= 0");
    const std::size_t needed =
        static_cast<std::size_t>(cfg.warmup_stages + 2) * static_cast<std::size_t>(cfg.stage_length);
    if (log.size() < needed) {
        throw ValidationError("stage_series: log has " + std::to_string(log.size()) +
                              " steps, needs at least " + std::to_string(needed));
    }
    StageSeries out;
    const std::size_t stage1_begin =
        static_cast<std::size_t>(cfg.warmup_stages) * static_cast<std::size_t>(cfg.stage_length);
    const std::size_t stage2_begin = stage1_begin + static_cast<std::size_t>(cfg.stage_length);
    out.stage1.reserve(static_cast<std::size_t>(cfg.stage_length));
    out.stage2.reserve(static_cast<std::size_t>(cfg.stage_length));
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.stage_length); ++i) {
        out.stage1.push_back(log[stage1_begin + i].reward);
        out.stage2.push_back(log[stage2_begin + i].reward);
    }
    out.r_max = -std::numeric_limits<double>::infinity();
    out.r_min = std::numeric_limits<double>::infinity();
    for (const StepRecord& r : log) {
        out.r_max = std::max(out.r_max, r.reward);
        out.r_min = std::min(out.r_min, r.reward);
    }
    return out;
}

std::vector<double> rp_series(const StageSeries& stages) {
    std::vector<double> rp;
    rp.reserve(stages.stage1.size());
    for (std::size_t i = 0; i < stages.stage1.size(); ++i) {
        rp.push_back(
            relative_performance(stages.stage1[i], stages.stage2[i], stages.r_max, stages.r_min));
    }
    return rp;
}

std::vector<double> cumulative_rp(const std::vector<double>& rp) {
    std::vector<double> out;
    out.reserve(rp.size());
    double acc = 0.0;
    for (double v : rp) {
        acc += v;
        out.push_back(acc);
    }
    return out;
}

namespace {

// Signed side of point p relative to the directed lap line a->b.
double line_side(const Vec2& a, const Vec2& b, const Vec2& p) {
    return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

}  // namespace

EvalReport evaluate_policy(DdpgAgent& agent, Environment& env, const TransferProfile& profile,
                           int cycles, long step_budget) {
    if (cycles < 1) throw ValidationError("evaluate_policy: cycles must be >= 1");
    if (!env.track().lap_line) {
        throw ValidationError("evaluate_policy: track has no lap line");
    }
    if (step_budget <= 0) step_budget = static_cast<long>(cycles) * 10000;
    const Vec2 lap_a = (*env.track().lap_line)[0];
    const Vec2 lap_b = (*env.track().lap_line)[1];

    EvalReport report;
    double dist_sum = 0.0;
    Vec2 prev_pos = env.state().position;
    while (report.cycles_completed < cycles && report.steps < step_budget) {
        const Observation s = transfer_observation(env.observe(), profile);
        const double action = agent.act(s, /*explore=*/false);
        const StepResult res = env.step(transfer_action(action, profile));
        const Observation s_next = transfer_observation(res.obs, profile);
        dist_sum += *std::min_element(s_next.begin(), s_next.end());
        ++report.steps;
        if (res.collided) {
            ++report.coll_no;
            // Respawn teleports the car; the motion segment is meaningless.
            prev_pos = res.state.position;
            continue;
        }
        const Vec2 cur_pos = res.state.position;
        if (segments_intersect(prev_pos, cur_pos, lap_a, lap_b) &&
            line_side(lap_a, lap_b, prev_pos) < 0.0 && line_side(lap_a, lap_b, cur_pos) >= 0.0) {
            ++report.cycles_completed;
        }
        prev_pos = cur_pos;
    }
    report.avg_dist = report.steps > 0 ? dist_sum / static_cast<double>(report.steps) : 0.0;
    report.timed_out = report.cycles_completed < cycles;
    return report;
}

void write_rp_curve_csv(const std::string& path, const std::vector<double>& rp,
                        const std::vector<double>& cumsum) {
    if (rp.size() != cumsum.size()) {
        throw ValidationError("rp curve: rp and cumsum lengths differ");
    }
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open rp curve for writing: " + path);
    out << "step,rp,cumsum\n";
    char buf[64];
    for (std::size_t i = 0; i < rp.size(); ++i) {
        out << (i + 1) << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", rp[i]);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", cumsum[i]);
        out << buf << '\n';
    }
}

void write_eval_report_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open eval report for writing: " + path);
    out << "scenario,agent,avg_dist,coll_no\n";
    char buf[64];
    for (const EvalRow& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.6f", row.report.avg_dist);
        out << row.scenario << ',' << row.agent << ',' << buf << ',' << row.report.coll_no
            << '\n';
    }
}

}  // namespace ftrl
