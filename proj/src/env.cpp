#include "ftrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace ftrl {

namespace {

constexpr double kPi = std::numbers::pi;

// Keeps a backed-off pose strictly on the free side after a tunneling stop.
constexpr double kWallBackoff = 1e-6;

struct Edge {
    Vec2 a;
    Vec2 b;
};

template <typename Fn>
void for_each_edge(const std::vector<Vec2>& poly, Fn&& fn) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) fn(poly[i], poly[(i + 1) % n]);
}

template <typename Fn>
void for_each_track_edge(const Track& track, Fn&& fn) {
    for_each_edge(track.boundary, fn);
    for (const auto& obs : track.obstacles) for_each_edge(obs, fn);
}

double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

Vec2 sub(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }

}  // namespace

double normalize_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0.0) a += 2.0 * kPi;
    return a - kPi;
}

std::optional<double> ray_segment_distance(const Vec2& origin, const Vec2& dir, const Vec2& a,
                                           const Vec2& b) {
    // origin + t*dir = a + s*(b-a),  t >= 0, s in [0,1]
    const Vec2 seg = sub(b, a);
    const double denom = cross(dir, seg);
    if (std::abs(denom) < 1e-15) return std::nullopt;  // parallel (or degenerate edge)
    const Vec2 diff = sub(a, origin);
    const double t = cross(diff, seg) / denom;
    const double s = cross(diff, dir) / denom;
    if (t < 0.0 || s < 0.0 || s > 1.0) return std::nullopt;
    return t;
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    const auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
        const double v = cross(sub(b, a), sub(c, a));
        if (v > 1e-15) return 1;
        if (v < -1e-15) return -1;
        return 0;
    };
    const int o1 = orient(p1, p2, q1);
    const int o2 = orient(p1, p2, q2);
    const int o3 = orient(q1, q2, p1);
    const int o4 = orient(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;

    const auto on_segment = [](const Vec2& a, const Vec2& b, const Vec2& p) {
        return std::min(a.x, b.x) - 1e-15 <= p.x && p.x <= std::max(a.x, b.x) + 1e-15 &&
               std::min(a.y, b.y) - 1e-15 <= p.y && p.y <= std::max(a.y, b.y) + 1e-15;
    };
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
}

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
    // Even-odd rule against a +X ray.
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        const bool straddles = (a.y > p.y) != (b.y > p.y);
        if (straddles && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
    }
    return inside;
}

bool in_free_space(const Vec2& p, const Track& track) {
    if (!point_in_polygon(p, track.boundary)) return false;
    for (const auto& obs : track.obstacles) {
        if (point_in_polygon(p, obs)) return false;
    }
    return true;
}

void validate_track(const Track& track) {
    if (track.boundary.size() < 3) {
        throw ValidationError("track: boundary needs at least 3 vertices");
    }
    for (const auto& obs : track.obstacles) {
        if (obs.size() < 3) throw ValidationError("track: obstacle needs at least 3 vertices");
    }
    // Boundary must be simple: no crossing among non-adjacent edges.
    const std::size_t n = track.boundary.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_intersect(track.boundary[i], track.boundary[(i + 1) % n],
                                   track.boundary[j], track.boundary[(j + 1) % n])) {
                throw ValidationError("track: boundary is self-intersecting near edge " +
                                      std::to_string(i));
            }
        }
    }
    for (std::size_t k = 0; k < track.obstacles.size(); ++k) {
        const auto& obs = track.obstacles[k];
        for (const Vec2& v : obs) {
            if (!point_in_polygon(v, track.boundary)) {
                throw ValidationError("track: obstacle " + std::to_string(k) +
                                      " extends outside the boundary");
            }
        }
        for_each_edge(obs, [&](const Vec2& a, const Vec2& b) {
            for_each_edge(track.boundary, [&](const Vec2& c, const Vec2& d) {
                if (segments_intersect(a, b, c, d)) {
                    throw ValidationError("track: obstacle " + std::to_string(k) +
                                          " crosses the boundary");
                }
            });
        });
    }
    if (track.spawns.empty()) throw ValidationError("track: at least one spawn pose required");
    for (std::size_t i = 0; i < track.spawns.size(); ++i) {
        const Vec2 p{track.spawns[i].x, track.spawns[i].y};
        if (!in_free_space(p, track)) {
            throw ValidationError("track: spawn " + std::to_string(i) + " is not in free space");
        }
    }
}

namespace {

std::vector<Vec2> parse_points(const std::string& body, const std::string& context) {
    std::vector<Vec2> pts;
    std::istringstream iss(body);
    std::string tok;
    while (iss >> tok) {
        const auto comma = tok.find(',');
        if (comma == std::string::npos) {
            throw ValidationError("track: malformed point '" + tok + "' in " + context);
        }
        try {
            Vec2 v;
            v.x = std::stod(tok.substr(0, comma));
            v.y = std::stod(tok.substr(comma + 1));
            pts.push_back(v);
        } catch (const std::exception&) {
            throw ValidationError("track: malformed point '" + tok + "' in " + context);
        }
    }
    return pts;
}

}  // namespace

Track load_track(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("track: cannot open " + path);
    Track track;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw ValidationError("track: missing ':' at " + path + ":" + std::to_string(line_no));
        }
        const std::string key = line.substr(first, colon - first);
        const std::string body = line.substr(colon + 1);
        if (key == "boundary") {
            track.boundary = parse_points(body, "boundary");
        } else if (key == "obstacle") {
            track.obstacles.push_back(parse_points(body, "obstacle"));
        } else if (key == "spawn") {
            std::istringstream iss(body);
            std::string tok;
            iss >> tok;
            std::replace(tok.begin(), tok.end(), ',', ' ');
            std::istringstream fields(tok);
            Pose pose;
            if (!(fields >> pose.x >> pose.y >> pose.heading)) {
                throw ValidationError("track: malformed spawn at line " + std::to_string(line_no));
            }
            pose.heading = normalize_angle(pose.heading);
            track.spawns.push_back(pose);
        } else if (key == "scale") {
            std::istringstream iss(body);
            iss >> track.scale_label;
        } else if (key == "lapline") {
            const auto pts = parse_points(body, "lapline");
            if (pts.size() != 2) {
                throw ValidationError("track: lapline needs exactly 2 points");
            }
            track.lap_line = {pts[0], pts[1]};
        } else {
            throw ValidationError("track: unknown record '" + key + "' at line " +
                                  std::to_string(line_no));
        }
    }
    validate_track(track);
    return track;
}

Track scale_track(const Track& track, double factor) {
    if (!(factor > 0.0)) throw ValidationError("scale_track: factor must be positive");
    Track out = track;
    const auto scale_pt = [factor](Vec2& v) {
        v.x *= factor;
        v.y *= factor;
    };
    for (auto& v : out.boundary) scale_pt(v);
    for (auto& obs : out.obstacles) for (auto& v : obs) scale_pt(v);
    for (auto& s : out.spawns) {
        s.x *= factor;
        s.y *= factor;
    }
    if (out.lap_line) {
        scale_pt((*out.lap_line)[0]);
        scale_pt((*out.lap_line)[1]);
    }
    return out;
}

Observation cast_lidar(const CarState& state, const Track& track, double max_range) {
    if (!in_free_space(state.position, track)) {
        throw ValidationError("cast_lidar: pose is not in free space");
    }
    Observation obs{};
    for (int k = 0; k < kLidarBeams; ++k) {
        const double beam_angle =
            state.heading + (-90.0 + k * (180.0 / (kLidarBeams - 1))) * kPi / 180.0;
        const Vec2 dir{std::cos(beam_angle), std::sin(beam_angle)};
        double best = max_range;
        for_each_track_edge(track, [&](const Vec2& a, const Vec2& b) {
            if (const auto t = ray_segment_distance(state.position, dir, a, b)) {
                if (*t < best) best = *t;
            }
        });
        obs[static_cast<std::size_t>(k)] = best;
    }
    return obs;
}

double compute_reward(const Observation& next_obs, const RewardParams& params) {
    const int k = static_cast<int>(std::floor(params.fraction * kLidarBeams));
    if (k <= 0) {
        throw ConfigError("compute_reward: floor(f*n) == 0, fraction too small for n=" +
                          std::to_string(kLidarBeams));
    }
    std::array<double, kLidarBeams> sorted = next_obs;
    std::partial_sort(sorted.begin(), sorted.begin() + k, sorted.end());
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += sorted[static_cast<std::size_t>(i)];
    const double m_d = sum / k;
    const double min_dist = *std::min_element(next_obs.begin(), next_obs.end());
    const double collision_term =
        min_dist < params.safe_distance ? params.collision_penalty : 0.0;
    return params.base_reward - collision_term - std::exp2(params.exponent_offset - m_d);
}

bool detect_collision(const Observation& obs, double safe_distance) {
    return *std::min_element(obs.begin(), obs.end()) < safe_distance;
}

EnvParams scale_env_params(const EnvParams& standard, double beta) {
    if (!(beta > 0.0)) throw ValidationError("scale_env_params: beta must be positive");
    EnvParams native = standard;
    native.speed = standard.speed / beta;
    native.wheelbase = standard.wheelbase / beta;
    native.max_range = standard.max_range / beta;
    native.beta = beta;
    return native;
}

Environment::Environment(Track track, EnvParams params, std::uint64_t seed)
    : track_(std::move(track)), params_(params) {
    validate_track(track_);
    if (!(params_.dt > 0.0)) throw ValidationError("environment: dt must be positive");
    if (!(params_.max_steer > 0.0)) throw ValidationError("environment: max_steer must be positive");
    reset(seed);
}

std::pair<CarState, Observation> Environment::reset(std::uint64_t seed) {
    rng_.seed(seed);
    std::uniform_int_distribution<std::size_t> pick(0, track_.spawns.size() - 1);
    const Pose& pose = track_.spawns[pick(rng_)];
    state_ = CarState{{pose.x, pose.y}, normalize_angle(pose.heading), params_.speed};
    sim_time_ = 0.0;
    clamped_steer_count_ = 0;
    current_obs_ = sense(state_);
    return {state_, current_obs_};
}

Observation Environment::sense(const CarState& at) {
    Observation obs = cast_lidar(at, track_, params_.max_range);
    if (params_.noise_sigma > 0.0) {
        std::normal_distribution<double> gauss(0.0, params_.noise_sigma);
        for (double& d : obs) {
            d *= 1.0 + gauss(rng_);
            d = std::clamp(d, 1e-9, params_.max_range);
        }
    }
    return obs;
}

void Environment::respawn_nearest(const Vec2& from) {
    double best = std::numeric_limits<double>::infinity();
    const Pose* chosen = &track_.spawns.front();
    for (const Pose& s : track_.spawns) {
        const double dx = s.x - from.x;
        const double dy = s.y - from.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best) {
            best = d2;
            chosen = &s;
        }
    }
    state_ = CarState{{chosen->x, chosen->y}, normalize_angle(chosen->heading), params_.speed};
}

StepResult Environment::step(double steer) {
    double applied = steer;
    if (applied > params_.max_steer || applied < -params_.max_steer) {
        applied = std::clamp(applied, -params_.max_steer, params_.max_steer);
        ++clamped_steer_count_;
    }

    const double heading =
        normalize_angle(state_.heading + (params_.speed / params_.wheelbase) *
                                             std::tan(applied) * params_.dt);
    const Vec2 old_pos = state_.position;
    Vec2 new_pos{old_pos.x + params_.speed * params_.dt * std::cos(heading),
                 old_pos.y + params_.speed * params_.dt * std::sin(heading)};

    // Stop short of any wall the motion segment would sweep through. With the
    // default step length well below the safe distance this never fires; it is
    // the guard against tunneling under unusual configurations.
    {
        const Vec2 dir{std::cos(heading), std::sin(heading)};
        const double move_len = params_.speed * params_.dt;
        double nearest = std::numeric_limits<double>::infinity();
        for_each_track_edge(track_, [&](const Vec2& a, const Vec2& b) {
            if (const auto t = ray_segment_distance(old_pos, dir, a, b)) {
                if (*t < nearest) nearest = *t;
            }
        });
        if (nearest <= move_len) {
            const double stop = std::max(0.0, nearest - kWallBackoff);
            new_pos = Vec2{old_pos.x + stop * dir.x, old_pos.y + stop * dir.y};
        }
    }

    state_ = CarState{new_pos, heading, params_.speed};
    sim_time_ += params_.dt;

    const Observation native_obs = sense(state_);
    Observation standard_obs = native_obs;
    for (double& d : standard_obs) d *= params_.beta;

    StepResult result;
    result.obs = native_obs;
    result.reward = compute_reward(standard_obs, params_.reward);
    result.collided = detect_collision(standard_obs, params_.reward.safe_distance);
    if (result.collided) {
        respawn_nearest(new_pos);
        current_obs_ = sense(state_);
    } else {
        current_obs_ = native_obs;
    }
    result.state = state_;
    return result;
}

}  // namespace ftrl
