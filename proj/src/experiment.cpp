#include "ftrl/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <thread>

#include "ftrl/rng.hpp"

namespace ftrl {

namespace {

constexpr std::uint64_t kSaltAgent = 0xA6E27;
constexpr std::uint64_t kSaltEnv = 0xE27;
constexpr std::uint64_t kSaltEval = 0xE7A1;
constexpr std::uint64_t kSaltPretrain = 0x92E;

EnvParams native_env_params(const ExperimentConfig& cfg, const TransferProfile& profile) {
    EnvParams standard = cfg.env;
    standard.reward = cfg.reward;
    standard.beta = 1.0;
    standard.max_steer = profile.max_action;
    if (profile.beta == 1.0) return standard;
    return scale_env_params(standard, profile.beta);
}

TransferProfile pretrain_profile(const ExperimentConfig& cfg, const std::string& scale_label) {
    TransferProfile profile;
    profile.scale_label = scale_label;
    profile.beta = 1.0;
    profile.is_standard = true;
    profile.max_action = 0.6;
    for (const AgentSetup& a : cfg.agents) {
        if (a.profile.is_standard) {
            profile.max_action = a.profile.max_action;
            break;
        }
    }
    return profile;
}

void write_federation_events_csv(const std::string& path,
                                 const std::vector<FederationEvent>& events) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open federation log for writing: " + path);
    out << "at,round\n";
    for (const FederationEvent& e : events) out << e.at << ',' << e.round << '\n';
}

}  // namespace

Environment make_agent_environment(const ExperimentConfig& cfg, const AgentSetup& setup) {
    Track track = load_track(setup.track_file);
    if (track.scale_label != setup.profile.scale_label) {
        throw ConfigError("[agent." + std::to_string(setup.id) + "] track scale '" +
                          track.scale_label + "' != profile scale '" +
                          setup.profile.scale_label + "'");
    }
    return Environment(std::move(track), native_env_params(cfg, setup.profile),
                       mix_seed(agent_seed(cfg, setup), kSaltEnv));
}

std::vector<double> rp_series_or_zero(const StageSeries& stages) {
    std::vector<double> rp;
    rp.reserve(stages.stage1.size());
    for (std::size_t i = 0; i < stages.stage1.size(); ++i) {
        if (stages.stage1[i] == stages.stage2[i]) {
            rp.push_back(0.0);
            continue;
        }
        rp.push_back(
            relative_performance(stages.stage1[i], stages.stage2[i], stages.r_max, stages.r_min));
    }
    return rp;
}

ModelBundle run_pretrain(const ExperimentConfig& cfg) {
    if (!cfg.pretrain) throw ConfigError("run_pretrain: config has no [pretrain] section");
    const AgentNetworks nets = make_networks(cfg.hidden_units, cfg.hidden_layers);
    DdpgAgent agent(nets, cfg.ddpg, mix_seed(cfg.seed, kSaltPretrain), cfg.train_gate, cfg.noise);
    if (cfg.pretrain->steps == 0) return agent.model();

    Track track = load_track(cfg.pretrain->track_file);
    const TransferProfile profile = pretrain_profile(cfg, track.scale_label);
    EnvParams params = cfg.env;
    params.reward = cfg.reward;
    params.beta = 1.0;
    params.max_steer = profile.max_action;
    Environment env(std::move(track), params, mix_seed(cfg.seed, kSaltPretrain ^ kSaltEnv));

    AgentLoop loop(agent, env, profile, nullptr, 0);
    for (long i = 0; i < cfg.pretrain->steps; ++i) {
        const StepRecord rec = loop.step_once();
        if (!std::isfinite(rec.reward)) {
            throw NumericError("pretrain diverged at step " + std::to_string(rec.step) +
                               " (seed " + std::to_string(cfg.seed) + ")");
        }
    }
    return agent.model();
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const auto out_path = [&](const std::string& name) {
        return (fs::path(cfg.out_dir) / name).string();
    };

    const AgentNetworks nets = make_networks(cfg.hidden_units, cfg.hidden_layers);
    std::optional<ModelBundle> start_model;
    if (cfg.pretrain) {
        start_model = run_pretrain(cfg);
        save_model_file(out_path("pretrained.model"), *start_model);
    }

    std::vector<std::unique_ptr<DdpgAgent>> agents;
    std::vector<std::unique_ptr<Environment>> envs;
    for (const AgentSetup& setup : cfg.agents) {
        agents.push_back(std::make_unique<DdpgAgent>(nets, cfg.ddpg,
                                                     mix_seed(agent_seed(cfg, setup), kSaltAgent),
                                                     cfg.train_gate, cfg.noise));
        if (start_model) agents.back()->set_model(*start_model);
        envs.push_back(std::make_unique<Environment>(make_agent_environment(cfg, setup)));
    }

    const bool federated = cfg.scenario != Scenario::kSolo;
    std::shared_ptr<ServerCore> server;
    std::unique_ptr<TcpFederationServer> tcp_server;
    std::vector<std::unique_ptr<FederationLink>> links(cfg.agents.size());

    ExperimentResult result;
    result.out_dir = cfg.out_dir;
    for (const AgentSetup& setup : cfg.agents) result.agent_ids.push_back(setup.id);

    if (federated) {
        server = std::make_shared<ServerCore>();
        if (cfg.federation.clock_mode == ClockMode::kWall) {
            const auto [host, port] =
                resolve_server_addr(cfg.federation.host, cfg.federation.port);
            tcp_server = std::make_unique<TcpFederationServer>(server, host, port,
                                                               cfg.federation.federation_cycle);
            tcp_server->start();
            for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
                links[i] = std::make_unique<TcpLink>(host, tcp_server->port(),
                                                     static_cast<std::uint32_t>(cfg.agents[i].id));
            }
        } else {
            for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
                links[i] = std::make_unique<InProcLink>(
                    server, static_cast<std::uint32_t>(cfg.agents[i].id));
            }
        }
    }

    std::vector<std::unique_ptr<AgentLoop>> loops;
    const long t_u_steps = static_cast<long>(std::llround(cfg.federation.sync_cycle));
    for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
        const long cycle =
            (federated && cfg.federation.clock_mode == ClockMode::kVirtual) ? t_u_steps : 0;
        loops.push_back(std::make_unique<AgentLoop>(*agents[i], *envs[i], cfg.agents[i].profile,
                                                    links[i].get(), cycle));
    }

    if (!federated || cfg.federation.clock_mode == ClockMode::kVirtual) {
        // Lockstep: every agent advances one step (ascending id), then the
        // server's cycle fires. Fully deterministic.
        const long t_f_steps = static_cast<long>(std::llround(cfg.federation.federation_cycle));
        for (long step = 1; step <= cfg.steps; ++step) {
            for (auto& loop : loops) loop->step_once();
            if (federated && step % t_f_steps == 0) {
                if (server->federate(static_cast<double>(step))) {
                    result.federation_events.push_back({static_cast<double>(step),
                                                        server->round()});
                }
            }
        }
    } else {
        // Wall clock: one thread per agent, sync driven by elapsed time.
        using clock = std::chrono::steady_clock;
        std::vector<std::thread> threads;
        threads.reserve(loops.size());
        for (auto& loop : loops) {
            threads.emplace_back([&cfg, &loop]() {
                auto last_sync = clock::now();
                for (long step = 1; step <= cfg.steps; ++step) {
                    loop->step_once();
                    const auto now = clock::now();
                    const double elapsed =
                        std::chrono::duration<double>(now - last_sync).count();
                    if (elapsed > cfg.federation.sync_cycle) {
                        loop->sync_now();
                        last_sync = now;
                    }
                }
            });
        }
        for (auto& t : threads) t.join();
        tcp_server->stop();
        long round = server->round();
        for (long r = 1; r <= round; ++r) result.federation_events.push_back({0.0, r});
    }

    // Outputs.
    for (std::size_t i = 0; i < loops.size(); ++i) {
        const std::string id = std::to_string(cfg.agents[i].id);
        result.agent_logs.push_back(loops[i]->log());
        write_step_log_csv(out_path("agent_" + id + "_steps.csv"), loops[i]->log());
        save_model_file(out_path("agent_" + id + "_final.model"), agents[i]->model());
        const StageConfig stages;
        if (loops[i]->log().size() >=
            static_cast<std::size_t>(stages.stage_length) * (stages.warmup_stages + 2)) {
            const StageSeries series = stage_series(loops[i]->log(), stages);
            const std::vector<double> rp = rp_series_or_zero(series);
            write_rp_curve_csv(out_path("agent_" + id + "_rp_curve.csv"), rp, cumulative_rp(rp));
        }
    }
    if (federated) {
        write_federation_events_csv(out_path("server_rounds.csv"), result.federation_events);
    }

    if (cfg.eval) {
        const Track eval_std = load_track(cfg.eval->track_file);
        for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
            const TransferProfile& profile = cfg.agents[i].profile;
            Track native = profile.beta == 1.0 ? eval_std
                                               : scale_track(eval_std, 1.0 / profile.beta);
            native.scale_label = profile.scale_label;
            Environment eval_env(std::move(native), native_env_params(cfg, profile),
                                 mix_seed(agent_seed(cfg, cfg.agents[i]), kSaltEval));
            EvalRow row;
            row.scenario = to_string(cfg.scenario);
            row.agent = "agent_" + std::to_string(cfg.agents[i].id);
            row.report = evaluate_policy(*agents[i], eval_env, profile, cfg.eval->cycles);
            result.eval_rows.push_back(row);
        }
        write_eval_report_csv(out_path("eval_report.csv"), result.eval_rows);
    }

    return result;
}

}  // namespace ftrl
