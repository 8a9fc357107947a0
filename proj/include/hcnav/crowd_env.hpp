// Dec-POMDP social-navigation environment: circle-crossing scenarios in a
// 20 m x 20 m open space, ORCA / Social-Force pedestrians that never see the
// robot, holonomic Euler stepping, reward, and termination.

#ifndef HCNAV_CROWD_ENV_HPP
#define HCNAV_CROWD_ENV_HPP

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hcnav/orca.hpp"

namespace hcnav::env {

using Eigen::Vector2d;

enum class PedPolicy { Orca, SocialForce };

struct AgentState {
  Vector2d p = Vector2d::Zero();   // position [m]
  Vector2d v = Vector2d::Zero();   // velocity [m/s]
  double rho = 0.3;                // radius [m]
  Vector2d g = Vector2d::Zero();   // goal [m] (private for humans)
  double v_pref = 1.0;             // preferred speed [m/s] (private for humans)
  bool is_static = false;          // motionless pedestrian standing in for an obstacle
};

struct SocialForceParams {
  double tau = 0.5;   // relaxation time [s]
  double A = 2.0;     // repulsion strength [m/s^2]
  double B = 0.08;    // repulsion range [m]
  double f_max = 100.0;
};

// Driving relaxation toward the goal plus exponential pairwise repulsion.
// Coincident agents get a capped push along a direction drawn from `rng`.
Vector2d social_force(const AgentState& self, const std::vector<AgentState>& neighbors,
                      const Vector2d& goal, const SocialForceParams& params,
                      std::mt19937_64& rng);

struct EnvConfig {
  int n_humans = 5;
  int n_static = 0;
  PedPolicy ped_policy = PedPolicy::Orca;
  double time_step = 0.25;      // [s]
  double time_limit = 40.0;     // [s]
  double radius = 0.3;          // agent radius [m]
  double v_pref = 1.0;          // preferred speed [m/s]
  double circle_radius = 8.0;   // spawn circle [m]
  double arena_half = 10.0;     // 20 m x 20 m arena
  double angular_jitter = 0.35; // [rad] placement jitter
  double orca_horizon = 5.0;    // [s]
  double orca_safety = 0.05;    // radius inflation for human ORCA constraints [m]
  double sigma_env = 0.0;       // transition noise std [m]
  SocialForceParams sf;
  // reward weights
  double r_success = 10.0;
  double r_collision = -20.0;
  double w_discomfort = 0.5;
  double d_social = 0.5;        // comfort distance [m]
  double w_progress = 2.0;
  double r_step = -0.01;
};

struct WorldState {
  AgentState robot;
  std::vector<AgentState> humans;  // static obstacles included, flagged is_static
  double t = 0.0;
  double time_step = 0.25;
};

enum class Done { None, Success, Collision, Timeout };

inline const char* done_name(Done d) {
  switch (d) {
    case Done::None: return "none";
    case Done::Success: return "success";
    case Done::Collision: return "collision";
    case Done::Timeout: return "timeout";
  }
  return "?";
}

// Flat observation: robot s^r = [px,py,vx,vy,rho,gx,gy,v_pref] followed by
// each human's public s^ho = [px,py,vx,vy,rho].
struct Observation {
  AgentState robot;
  std::vector<AgentState> humans;  // public fields only are meaningful
};

struct RewardBreakdown {
  double success = 0, collision = 0, discomfort = 0, progress = 0, step = 0;
  double total() const { return success + collision + discomfort + progress + step; }
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  Done done = Done::None;
  double min_separation = 0.0;  // closest robot-human surface distance this step [m]
  RewardBreakdown breakdown;
};

RewardBreakdown reward(const EnvConfig& cfg, const WorldState& prev, const WorldState& next,
                       Done done, double min_human_dist);

class CrowdEnv {
 public:
  explicit CrowdEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {}

  // Circle-crossing scenario, deterministic under seed. Throws after 1000
  // failed placement attempts.
  Observation reset(std::uint64_t seed);

  StepOutcome step(const Vector2d& robot_action);

  const WorldState& world() const { return world_; }
  const EnvConfig& config() const { return cfg_; }
  bool done() const { return done_ != Done::None; }
  Done done_kind() const { return done_; }

  Observation observe() const;

 private:
  Vector2d human_velocity(size_t idx) const;

  EnvConfig cfg_;
  WorldState world_;
  Done done_ = Done::Timeout;  // poisoned until reset
  bool active_ = false;
  mutable std::mt19937_64 rng_{0};
};

}  // namespace hcnav::env

#endif  // HCNAV_CROWD_ENV_HPP
