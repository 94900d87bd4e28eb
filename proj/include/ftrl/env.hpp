#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ftrl/errors.hpp"

namespace ftrl {

inline constexpr int kLidarBeams = 60;

// Front-view LIDAR distances, beam 0 at -90 deg through beam 59 at +90 deg
// relative to the car heading. Units are the environment's native scale.
using Observation = std::array<double, kLidarBeams>;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

// Wraps an angle into [-pi, pi).
double normalize_angle(double a);

// --- planar geometry helpers -------------------------------------------------

// Distance along the ray (origin, unit dir) to the segment a-b, if it hits.
std::optional<double> ray_segment_distance(const Vec2& origin, const Vec2& dir, const Vec2& a,
                                           const Vec2& b);

// Proper or touching intersection of segments p1-p2 and q1-q2.
bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2);

// Even-odd rule point-in-polygon test.
bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly);

// --- track -------------------------------------------------------------------

struct Track {
    std::vector<Vec2> boundary;                // closed simple polygon
    std::vector<std::vector<Vec2>> obstacles;  // closed polygons inside the boundary
    std::vector<Pose> spawns;
    std::string scale_label;
    std::optional<std::array<Vec2, 2>> lap_line;  // optional, used by evaluation
};

// Inside the boundary and outside every obstacle.
bool in_free_space(const Vec2& p, const Track& track);

// Throws ValidationError: non-simple boundary, obstacle outside the boundary,
// spawn pose in occupied space, or no spawn at all.
void validate_track(const Track& track);

// Parses the line-oriented track format (boundary: / obstacle: / spawn: /
// scale: / lapline: records, '#' comments) and validates the result.
Track load_track(const std::string& path);

// Uniformly scales every coordinate (used to derive native-scale variants).
Track scale_track(const Track& track, double factor);

// --- car & sensing -----------------------------------------------------------

struct CarState {
    Vec2 position;
    double heading = 0.0;  // radians in [-pi, pi)
    double speed = 0.0;    // native units / second, constant per run
};

// Casts the 60-beam fan from the car pose. Distances are capped at max_range.
// Throws ValidationError if the pose is not in free space.
Observation cast_lidar(const CarState& state, const Track& track, double max_range);

struct RewardParams {
    double base_reward = 8.0;        // r-bar
    double collision_penalty = 60.0; // c-bar
    double safe_distance = 1.1;     // d, standard-scale meters
    double exponent_offset = 7.0;   // d-bar
    double fraction = 0.2;          // f, share of beams averaged into m_d
};

// r-bar - c-bar*[min < d] - 2^(d-bar - m_d), where m_d is the mean of the
// floor(f*n) smallest distances. Throws ConfigError when floor(f*n) == 0.
double compute_reward(const Observation& next_obs, const RewardParams& params);

// Strictly-below-safe-distance test.
bool detect_collision(const Observation& obs, double safe_distance);

// --- simulation --------------------------------------------------------------

struct EnvParams {
    double speed = 1.0;       // native units / second
    double wheelbase = 0.5;   // native units
    double max_steer = 0.6;   // radians
    double max_range = 12.0;  // native units
    double dt = 0.25;         // seconds per decision step
    double beta = 1.0;        // native -> standard scale ratio for this env
    double noise_sigma = 0.0; // multiplicative lidar noise, 0 = deterministic
    RewardParams reward;      // standard-scale reward parameters
};

// Derives the native-scale parameter set of an environment whose observations
// map to standard scale through beta (lengths shrink by beta, angles keep).
EnvParams scale_env_params(const EnvParams& standard, double beta);

struct StepResult {
    CarState state;   // post-step state (respawned when collided)
    Observation obs;  // native-scale observation at the pre-respawn pose
    double reward;    // computed on the standard-scale observation
    bool collided = false;
};

// Deterministic 2D steering environment: constant forward speed, kinematic
// bicycle heading update, raycast LIDAR, collision respawn at the nearest
// spawn pose. Reward and collision tests run on the observation scaled by
// beta so that every agent trains against the standard-scale reward.
class Environment {
  public:
    Environment(Track track, EnvParams params, std::uint64_t seed);

    // Re-seeds the environment and places the car at a seeded-random spawn.
    std::pair<CarState, Observation> reset(std::uint64_t seed);

    StepResult step(double steer);

    const CarState& state() const { return state_; }
    const Observation& observe() const { return current_obs_; }
    const Track& track() const { return track_; }
    const EnvParams& params() const { return params_; }
    double sim_time() const { return sim_time_; }
    int clamped_steer_count() const { return clamped_steer_count_; }

  private:
    Observation sense(const CarState& at);
    void respawn_nearest(const Vec2& from);

    Track track_;
    EnvParams params_;
    CarState state_;
    Observation current_obs_{};
    std::mt19937_64 rng_;
    double sim_time_ = 0.0;
    int clamped_steer_count_ = 0;
};

}  // namespace ftrl
