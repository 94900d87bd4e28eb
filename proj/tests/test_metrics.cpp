#include <doctest.h>

#include <cmath>
#include <random>

#include "ftrl/metrics.hpp"

using namespace ftrl;

namespace {

std::vector<StepRecord> synthetic_log(long steps, double dt = 0.25) {
    std::vector<StepRecord> log;
    log.reserve(static_cast<std::size_t>(steps));
    for (long i = 0; i < steps; ++i) {
        StepRecord r;
        r.step = i + 1;
        r.sim_time_s = static_cast<double>(i + 1) * dt;
        r.reward = static_cast<double>(i);  // ramp
        log.push_back(r);
    }
    return log;
}

Track corridor_track(double half_width, double length) {
    Track t;
    t.boundary = {{-2.0, -half_width}, {length, -half_width}, {length, half_width},
                  {-2.0, half_width}};
    t.spawns = {{0.0, -0.5, 0.0}};  // 1.5 m clearance to the near wall
    t.scale_label = "standard";
    // Directed so that +x travel crosses from the negative to the positive side.
    t.lap_line = {{Vec2{10.0, half_width}, Vec2{10.0, -half_width}}};
    return t;
}

}  // namespace

TEST_CASE("relative performance: direct evaluations and bounds") {
    CHECK(relative_performance(3.0, 3.0, 10.0, -10.0) == 0.0);
    CHECK(relative_performance(1.0, 6.0, 10.0, 0.0) == doctest::Approx(0.5));
    CHECK(relative_performance(-10.0, 10.0, 10.0, -10.0) == 1.0);
    CHECK_THROWS_AS(relative_performance(1.0, 1.0, 5.0, 5.0), ValidationError);
    CHECK_THROWS_AS(relative_performance(11.0, 1.0, 10.0, 0.0), ValidationError);
}

TEST_CASE("stage series: slices [2500,5000) and [5000,7500) with whole-run extremes") {
    const auto log = synthetic_log(7500);
    const StageSeries s = stage_series(log, StageConfig{});
    REQUIRE(s.stage1.size() == 2500);
    REQUIRE(s.stage2.size() == 2500);
    CHECK(s.stage1.front() == 2500.0);
    CHECK(s.stage1.back() == 4999.0);
    CHECK(s.stage2.front() == 5000.0);
    CHECK(s.stage2.back() == 7499.0);
    CHECK(s.r_min == 0.0);
    CHECK(s.r_max == 7499.0);

    // Stage windows in seconds: steps begin at (step-1)*dt.
    const double dt = 0.25;
    CHECK(log[2500].sim_time_s - dt == doctest::Approx(625.0));
    CHECK(log[4999].sim_time_s - dt == doctest::Approx(1249.75));
    CHECK(log[5000].sim_time_s - dt == doctest::Approx(1250.0));
    CHECK(log[7499].sim_time_s - dt == doctest::Approx(1874.75));
}

TEST_CASE("stage series: ramp log gives a constant rp and a linear cumulative sum") {
    const auto log = synthetic_log(7500);
    const StageSeries s = stage_series(log, StageConfig{});
    const auto rp = rp_series(s);
    const double expected = 2500.0 / 7499.0;
    for (double v : rp) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
    const auto cum = cumulative_rp(rp);
    CHECK(cum.back() == doctest::Approx(2500.0 * expected).epsilon(1e-9));
    for (std::size_t i = 1; i < cum.size(); ++i) {
        CHECK(cum[i] - cum[i - 1] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("stage series: a 7499-step log is insufficient") {
    const auto log = synthetic_log(7499);
    CHECK_THROWS_AS(stage_series(log, StageConfig{}), ValidationError);
}

TEST_CASE("cumulative rp: prefix sums") {
    const std::vector<double> rp = {0.5, -0.2, 0.1};
    const auto cum = cumulative_rp(rp);
    REQUIRE(cum.size() == 3);
    CHECK(cum[0] == doctest::Approx(0.5));
    CHECK(cum[1] == doctest::Approx(0.3));
    CHECK(cum[2] == doctest::Approx(0.4));

    CHECK(cumulative_rp(std::vector<double>(5, 0.0)) == std::vector<double>(5, 0.0));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> rnd(100);
    for (double& v : rnd) v = dist(rng);
    const auto got = cumulative_rp(rnd);
    for (std::size_t i = 0; i < rnd.size(); ++i) {
        double acc = 0.0;  // naive double loop
        for (std::size_t j = 0; j <= i; ++j) acc += rnd[j];
        CHECK(got[i] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("cumulative rp is linear") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> a(50), b(50), sum(50);
    for (std::size_t i = 0; i < 50; ++i) {
        a[i] = dist(rng);
        b[i] = dist(rng);
        sum[i] = a[i] + b[i];
    }
    const auto ca = cumulative_rp(a);
    const auto cb = cumulative_rp(b);
    const auto cs = cumulative_rp(sum);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(cs[i] == doctest::Approx(ca[i] + cb[i]).epsilon(1e-12));
    }
}

TEST_CASE("evaluate: straight policy down a corridor hugs the spawn-side clearance") {
    const Track track = corridor_track(2.0, 60.0);
    const TransferProfile profile{"standard", 1.0, 0.6, true};
    AgentNetworks nets = make_networks(4, 1);
    DdpgHyperparams hp;
    hp.batch_size = 4;
    hp.buffer_capacity = 16;
    DdpgAgent agent(nets, hp, 3);
    ModelBundle zeroed = agent.model();
    zeroed.actor = zeros_like(nets.actor);  // action 0: straight ahead
    agent.set_model(zeroed);

    Environment env(track, EnvParams{}, 8);
    const EvalReport report = evaluate_policy(agent, env, profile, 1);
    CHECK(report.coll_no == 0);
    CHECK(report.cycles_completed == 1);
    CHECK_FALSE(report.timed_out);
    // Near wall is 1.5 m away at spawn; the -90 deg beam reads it perpendicular.
    CHECK(report.avg_dist == doctest::Approx(1.5).epsilon(0.05));
}

TEST_CASE("evaluate: hard-steering policy collides within the budget") {
    const Track track = corridor_track(2.0, 60.0);
    const TransferProfile profile{"standard", 1.0, 0.6, true};
    AgentNetworks nets = make_networks(4, 1);
    DdpgHyperparams hp;
    hp.batch_size = 4;
    hp.buffer_capacity = 16;
    DdpgAgent agent(nets, hp, 3);
    ModelBundle steer_hard = agent.model();
    steer_hard.actor = zeros_like(nets.actor);
    steer_hard.actor.layers.back().b[0] = 5.0;  // tanh(5) ~ 0.9999
    agent.set_model(steer_hard);

    Environment env(track, EnvParams{}, 8);
    const EvalReport report = evaluate_policy(agent, env, profile, 1, 10000);
    CHECK(report.coll_no >= 1);
}

TEST_CASE("evaluate: deterministic given the same seed and model") {
    const Track track = corridor_track(2.0, 60.0);
    const TransferProfile profile{"standard", 1.0, 0.6, true};
    AgentNetworks nets = make_networks(8, 1);
    DdpgHyperparams hp;
    hp.batch_size = 4;
    hp.buffer_capacity = 16;

    DdpgAgent agent_a(nets, hp, 3);
    DdpgAgent agent_b(nets, hp, 3);
    Environment env_a(track, EnvParams{}, 8);
    Environment env_b(track, EnvParams{}, 8);
    const EvalReport ra = evaluate_policy(agent_a, env_a, profile, 1, 500);
    const EvalReport rb = evaluate_policy(agent_b, env_b, profile, 1, 500);
    CHECK(ra.avg_dist == rb.avg_dist);
    CHECK(ra.coll_no == rb.coll_no);
    CHECK(ra.cycles_completed == rb.cycles_completed);
    CHECK(ra.steps == rb.steps);
}

TEST_CASE("evaluate: lap never reached yields a timeout report with partial data") {
    Track track = corridor_track(2.0, 60.0);
    track.lap_line = {{Vec2{-1.5, -2.0}, Vec2{-1.5, 2.0}}};  // behind the spawn
    const TransferProfile profile{"standard", 1.0, 0.6, true};
    AgentNetworks nets = make_networks(4, 1);
    DdpgHyperparams hp;
    hp.batch_size = 4;
    hp.buffer_capacity = 16;
    DdpgAgent agent(nets, hp, 3);
    ModelBundle zeroed = agent.model();
    zeroed.actor = zeros_like(nets.actor);
    agent.set_model(zeroed);

    Environment env(track, EnvParams{}, 8);
    const EvalReport report = evaluate_policy(agent, env, profile, 1, 300);
    CHECK(report.timed_out);
    CHECK(report.steps == 300);
    CHECK(report.cycles_completed == 0);
}

TEST_CASE("evaluate: a track without a lap line is rejected") {
    Track track = corridor_track(2.0, 60.0);
    track.lap_line.reset();
    AgentNetworks nets = make_networks(4, 1);
    DdpgHyperparams hp;
    hp.batch_size = 4;
    hp.buffer_capacity = 16;
    DdpgAgent agent(nets, hp, 3);
    Environment env(track, EnvParams{}, 8);
    CHECK_THROWS_AS(evaluate_policy(agent, env, TransferProfile{"standard", 1.0, 0.6, true}, 1),
                    ValidationError);
}
