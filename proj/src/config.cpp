#include "ftrl/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ftrl {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// Flat INI file: ordered sections of key=value pairs, '#'/';' comments.
struct IniFile {
    // section -> key -> value; insertion order kept separately for agents.
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::vector<std::string> section_order;

    static IniFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        IniFile ini;
        std::string line;
        std::string current;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto comment = line.find_first_of("#;");
            if (comment != std::string::npos) line.erase(comment);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw ConfigError("malformed section header at line " +
                                      std::to_string(line_no));
                }
                current = trim(line.substr(1, line.size() - 2));
                if (current.empty()) {
                    throw ConfigError("empty section name at line " + std::to_string(line_no));
                }
                if (!ini.sections.count(current)) ini.section_order.push_back(current);
                ini.sections[current];  // create
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("expected key = value at line " + std::to_string(line_no));
            }
            if (current.empty()) {
                throw ConfigError("key outside any section at line " + std::to_string(line_no));
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) throw ConfigError("empty key at line " + std::to_string(line_no));
            ini.sections[current][key] = value;
        }
        return ini;
    }
};

// Tracks which keys were consumed so leftovers can be reported by name.
class SectionReader {
  public:
    SectionReader(const IniFile& ini, const std::string& name) : name_(name) {
        const auto it = ini.sections.find(name);
        if (it != ini.sections.end()) {
            present_ = true;
            entries_ = &it->second;
        }
    }

    bool present() const { return present_; }

    std::optional<std::string> raw(const std::string& key) {
        if (!entries_) return std::nullopt;
        const auto it = entries_->find(key);
        if (it == entries_->end()) return std::nullopt;
        used_.insert(key);
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        const auto v = raw(key);
        return v ? *v : fallback;
    }

    double get_double(const std::string& key, double fallback) {
        const auto v = raw(key);
        if (!v) return fallback;
        try {
            std::size_t pos = 0;
            const double d = std::stod(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("trailing");
            return d;
        } catch (const std::exception&) {
            throw ConfigError("[" + name_ + "] " + key + ": expected a number, got '" + *v + "'");
        }
    }

    long get_long(const std::string& key, long fallback) {
        const auto v = raw(key);
        if (!v) return fallback;
        try {
            std::size_t pos = 0;
            const long n = std::stol(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("trailing");
            return n;
        } catch (const std::exception&) {
            throw ConfigError("[" + name_ + "] " + key + ": expected an integer, got '" + *v +
                              "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        const auto v = raw(key);
        if (!v) return fallback;
        std::string low = *v;
        std::transform(low.begin(), low.end(), low.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (low == "true" || low == "1" || low == "yes" || low == "on") return true;
        if (low == "false" || low == "0" || low == "no" || low == "off") return false;
        throw ConfigError("[" + name_ + "] " + key + ": expected a boolean, got '" + *v + "'");
    }

    void finish() const {
        if (!entries_) return;
        for (const auto& [key, value] : *entries_) {
            if (!used_.count(key)) {
                throw ConfigError("unknown key '" + key + "' in section [" + name_ + "]");
            }
        }
    }

  private:
    std::string name_;
    bool present_ = false;
    const std::map<std::string, std::string>* entries_ = nullptr;
    std::set<std::string> used_;
};

Scenario parse_scenario(const std::string& s) {
    if (s == "solo") return Scenario::kSolo;
    if (s == "ftrl") return Scenario::kFtrl;
    if (s == "ftrl_sim") return Scenario::kFtrlSim;
    throw ConfigError("[experiment] scenario: expected solo|ftrl|ftrl_sim, got '" + s + "'");
}

}  // namespace

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::kSolo: return "solo";
        case Scenario::kFtrl: return "ftrl";
        case Scenario::kFtrlSim: return "ftrl_sim";
    }
    return "?";
}

std::uint64_t agent_seed(const ExperimentConfig& cfg, const AgentSetup& setup) {
    if (setup.seed) return *setup.seed;
    return cfg.seed + static_cast<std::uint64_t>(setup.id);
}

ExperimentConfig parse_config(const std::string& path) {
    const IniFile ini = IniFile::load(path);
    ExperimentConfig cfg;

    const std::set<std::string> known_fixed = {"experiment", "ddpg",       "noise", "reward",
                                               "federation", "environment", "pretrain", "eval"};
    for (const auto& name : ini.section_order) {
        if (known_fixed.count(name)) continue;
        if (name.rfind("agent.", 0) == 0) continue;
        throw ConfigError("unknown section [" + name + "]");
    }

    {
        SectionReader s(ini, "experiment");
        cfg.scenario = parse_scenario(s.get_string("scenario", "solo"));
        cfg.seed = static_cast<std::uint64_t>(s.get_long("seed", 1));
        cfg.steps = s.get_long("steps", 7500);
        cfg.out_dir = s.get_string("out", "out");
        const std::string clock = s.get_string("clock", "virtual");
        if (clock == "virtual") {
            cfg.federation.clock_mode = ClockMode::kVirtual;
        } else if (clock == "wall") {
            cfg.federation.clock_mode = ClockMode::kWall;
        } else {
            throw ConfigError("[experiment] clock: expected virtual|wall, got '" + clock + "'");
        }
        cfg.hidden_units = static_cast<int>(s.get_long("hidden_units", 128));
        cfg.hidden_layers = static_cast<int>(s.get_long("hidden_layers", 3));
        s.finish();
    }
    {
        SectionReader s(ini, "ddpg");
        cfg.ddpg.gamma = s.get_double("gamma", 0.99);
        cfg.ddpg.tau = s.get_double("tau", 0.02);
        cfg.ddpg.actor_lr = s.get_double("actor_lr", 1e-4);
        cfg.ddpg.critic_lr = s.get_double("critic_lr", 1e-4);
        cfg.ddpg.buffer_capacity = static_cast<int>(s.get_long("buffer_capacity", 2500));
        cfg.ddpg.batch_size = static_cast<int>(s.get_long("batch_size", 32));
        const std::string gate = s.get_string("train_gate", "batch");
        if (gate == "batch") {
            cfg.train_gate = TrainGate::kBatch;
        } else if (gate == "full") {
            cfg.train_gate = TrainGate::kFull;
        } else {
            throw ConfigError("[ddpg] train_gate: expected batch|full, got '" + gate + "'");
        }
        s.finish();
    }
    {
        SectionReader s(ini, "noise");
        cfg.noise.theta = s.get_double("theta", 0.15);
        cfg.noise.sigma = s.get_double("sigma", 0.2);
        cfg.noise.mu = s.get_double("mu", 0.0);
        cfg.noise.dt = s.get_double("dt", 1.0);
        s.finish();
    }
    {
        SectionReader s(ini, "reward");
        cfg.reward.base_reward = s.get_double("base_reward", 8.0);
        cfg.reward.collision_penalty = s.get_double("collision_penalty", 60.0);
        cfg.reward.safe_distance = s.get_double("safe_distance", 1.1);
        cfg.reward.exponent_offset = s.get_double("exponent_offset", 7.0);
        cfg.reward.fraction = s.get_double("fraction", 0.2);
        s.finish();
    }
    {
        SectionReader s(ini, "federation");
        cfg.federation.federation_cycle = s.get_double("federation_cycle", 480.0);
        cfg.federation.sync_cycle = s.get_double("sync_cycle", 720.0);
        cfg.federation.host = s.get_string("host", "127.0.0.1");
        cfg.federation.port = static_cast<int>(s.get_long("port", 47815));
        s.finish();
    }
    {
        SectionReader s(ini, "environment");
        cfg.env.speed = s.get_double("speed", 1.0);
        cfg.env.wheelbase = s.get_double("wheelbase", 0.5);
        cfg.env.max_range = s.get_double("max_range", 12.0);
        cfg.env.dt = s.get_double("dt", 0.25);
        cfg.env.noise_sigma = s.get_double("lidar_noise_sigma", 0.0);
        s.finish();
    }
    {
        SectionReader s(ini, "pretrain");
        if (s.present()) {
            PretrainConfig pre;
            pre.track_file = s.get_string("track", "");
            pre.steps = s.get_long("steps", 0);
            if (pre.track_file.empty()) {
                throw ConfigError("[pretrain] track: required when the section is present");
            }
            cfg.pretrain = pre;
        }
        s.finish();
    }
    {
        SectionReader s(ini, "eval");
        if (s.present()) {
            EvalConfig ev;
            ev.track_file = s.get_string("track", "");
            ev.cycles = static_cast<int>(s.get_long("cycles", 50));
            if (ev.track_file.empty()) {
                throw ConfigError("[eval] track: required when the section is present");
            }
            cfg.eval = ev;
        }
        s.finish();
    }

    for (const auto& name : ini.section_order) {
        if (name.rfind("agent.", 0) != 0) continue;
        const std::string id_str = name.substr(6);
        int id = 0;
        try {
            std::size_t pos = 0;
            id = std::stoi(id_str, &pos);
            if (pos != id_str.size() || id < 0) throw std::invalid_argument("bad");
        } catch (const std::exception&) {
            throw ConfigError("section [" + name + "]: agent id must be a non-negative integer");
        }
        SectionReader s(ini, name);
        AgentSetup agent;
        agent.id = id;
        agent.track_file = s.get_string("track", "");
        if (agent.track_file.empty()) {
            throw ConfigError("[" + name + "] track: required");
        }
        agent.profile.is_standard = s.get_bool("standard", false);
        agent.profile.beta = s.get_double("beta", agent.profile.is_standard ? 1.0 : 6.67);
        agent.profile.max_action = s.get_double("max_action", 0.6);
        agent.profile.scale_label = s.get_string("scale", agent.profile.is_standard
                                                              ? std::string("standard")
                                                              : "native_" + id_str);
        if (const auto seed = s.raw("seed")) {
            try {
                agent.seed = static_cast<std::uint64_t>(std::stoll(*seed));
            } catch (const std::exception&) {
                throw ConfigError("[" + name + "] seed: expected an integer, got '" + *seed +
                                  "'");
            }
        }
        s.finish();
        cfg.agents.push_back(agent);
    }

    std::sort(cfg.agents.begin(), cfg.agents.end(),
              [](const AgentSetup& a, const AgentSetup& b) { return a.id < b.id; });

    validate_config(cfg);
    return cfg;
}

void validate_config(const ExperimentConfig& cfg) {
    try {
        validate_hyperparams(cfg.ddpg);
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("[ddpg] ") + e.what());
    }
    try {
        validate_federation_config(cfg.federation);
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("[federation] ") + e.what());
    }
    if (cfg.steps < 1) throw ConfigError("[experiment] steps must be >= 1");
    if (cfg.hidden_units < 1 || cfg.hidden_layers < 1) {
        throw ConfigError("[experiment] hidden_units/hidden_layers must be >= 1");
    }
    if (!(cfg.reward.fraction > 0.0 && cfg.reward.fraction < 1.0)) {
        throw ConfigError("[reward] fraction must lie in (0, 1)");
    }
    if (cfg.agents.empty()) throw ConfigError("at least one [agent.<id>] section is required");

    std::set<int> ids;
    for (const AgentSetup& a : cfg.agents) {
        const std::string where = "[agent." + std::to_string(a.id) + "] ";
        if (!ids.insert(a.id).second) throw ConfigError(where + "duplicate agent id");
        try {
            validate_profile(a.profile);
        } catch (const ValidationError& e) {
            throw ConfigError(where + e.what());
        }
    }

    const int n_standard = static_cast<int>(
        std::count_if(cfg.agents.begin(), cfg.agents.end(),
                      [](const AgentSetup& a) { return a.profile.is_standard; }));
    const int n_scaled = static_cast<int>(
        std::count_if(cfg.agents.begin(), cfg.agents.end(),
                      [](const AgentSetup& a) { return a.profile.beta != 1.0; }));

    if (cfg.scenario == Scenario::kSolo) return;

    if (cfg.agents.size() < 2) {
        throw ConfigError(to_string(cfg.scenario) + " scenario requires at least 2 agents");
    }
    if (n_standard != 1) {
        throw ConfigError(to_string(cfg.scenario) +
                          " scenario requires exactly one agent with standard = true, found " +
                          std::to_string(n_standard));
    }
    if (cfg.scenario == Scenario::kFtrlSim && n_scaled < 1) {
        throw ConfigError("ftrl_sim scenario requires at least one agent with beta != 1");
    }
}

}  // namespace ftrl
