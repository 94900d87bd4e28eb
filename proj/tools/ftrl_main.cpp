#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ftrl/config.hpp"
#include "ftrl/experiment.hpp"
#include "ftrl/federation.hpp"
#include "ftrl/metrics.hpp"
#include "ftrl/verify.hpp"

namespace {

void apply_overrides(ftrl::ExperimentConfig& cfg, const std::optional<long>& seed,
                     const std::optional<std::string>& out,
                     const std::optional<std::string>& clock) {
    if (seed) cfg.seed = static_cast<std::uint64_t>(*seed);
    if (out) cfg.out_dir = *out;
    if (clock) {
        if (*clock == "virtual") {
            cfg.federation.clock_mode = ftrl::ClockMode::kVirtual;
        } else if (*clock == "wall") {
            cfg.federation.clock_mode = ftrl::ClockMode::kWall;
        } else {
            throw ftrl::ConfigError("--clock expects virtual|wall, got '" + *clock + "'");
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ftrl - federated transfer RL collision-avoidance experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string model_path;
    std::optional<long> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> clock;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment config file")->required();
        cmd->add_option("--seed", seed, "override the experiment seed");
        cmd->add_option("--out", out_dir, "override the output directory");
        cmd->add_option("--clock", clock, "override the clock mode (virtual|wall)");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "run the configured scenario");
    add_common(run_cmd);

    CLI::App* pretrain_cmd = app.add_subcommand("pretrain", "run only the pretraining phase");
    add_common(pretrain_cmd);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a model checkpoint");
    add_common(eval_cmd);
    eval_cmd->add_option("--model", model_path, "model checkpoint file")->required();

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the built-in oracle checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify_cmd->parsed()) {
            return ftrl::run_verification(std::cout) ? 0 : 1;
        }

        ftrl::ExperimentConfig cfg = ftrl::parse_config(config_path);
        apply_overrides(cfg, seed, out_dir, clock);

        if (run_cmd->parsed()) {
            const ftrl::ExperimentResult result = ftrl::run_experiment(cfg);
            std::cout << "run complete: " << result.agent_logs.size() << " agent log(s), "
                      << result.federation_events.size() << " federation round(s), outputs in "
                      << result.out_dir << "\n";
            return 0;
        }

        if (pretrain_cmd->parsed()) {
            if (!cfg.pretrain) {
                std::cerr << "config has no [pretrain] section\n";
                return 1;
            }
            const ftrl::ModelBundle model = ftrl::run_pretrain(cfg);
            std::filesystem::create_directories(cfg.out_dir);
            const std::string path =
                (std::filesystem::path(cfg.out_dir) / "pretrained.model").string();
            ftrl::save_model_file(path, model);
            std::cout << "pretrained model written to " << path << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            if (!cfg.eval) {
                std::cerr << "config has no [eval] section\n";
                return 1;
            }
            const ftrl::ModelBundle model = ftrl::load_model_file(model_path);
            const ftrl::AgentNetworks nets =
                ftrl::make_networks(cfg.hidden_units, cfg.hidden_layers);
            const ftrl::Track eval_std = ftrl::load_track(cfg.eval->track_file);
            std::vector<ftrl::EvalRow> rows;
            for (const ftrl::AgentSetup& setup : cfg.agents) {
                ftrl::DdpgAgent agent(nets, cfg.ddpg, ftrl::agent_seed(cfg, setup), cfg.train_gate, cfg.noise);
                agent.set_model(model);
                ftrl::Track native = setup.profile.beta == 1.0
                                         ? eval_std
                                         : ftrl::scale_track(eval_std, 1.0 / setup.profile.beta);
                native.scale_label = setup.profile.scale_label;
                ftrl::ExperimentConfig env_cfg = cfg;
                ftrl::Environment env = [&]() {
                    ftrl::EnvParams params = env_cfg.env;
                    params.reward = env_cfg.reward;
                    params.beta = 1.0;
                    params.max_steer = setup.profile.max_action;
                    if (setup.profile.beta != 1.0) {
                        params = ftrl::scale_env_params(params, setup.profile.beta);
                    }
                    return ftrl::Environment(std::move(native), params, ftrl::agent_seed(cfg, setup));
                }();
                ftrl::EvalRow row;
                row.scenario = ftrl::to_string(cfg.scenario);
                row.agent = "agent_" + std::to_string(setup.id);
                row.report =
                    ftrl::evaluate_policy(agent, env, setup.profile, cfg.eval->cycles);
                rows.push_back(row);
                std::cout << row.agent << ": avg_dist=" << row.report.avg_dist
                          << " coll_no=" << row.report.coll_no
                          << " cycles=" << row.report.cycles_completed
                          << (row.report.timed_out ? " (timed out)" : "") << "\n";
            }
            std::filesystem::create_directories(cfg.out_dir);
            ftrl::write_eval_report_csv(
                (std::filesystem::path(cfg.out_dir) / "eval_report.csv").string(), rows);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
