#include "hcnav/crowd_env.hpp"

#include <cmath>
#include <stdexcept>

namespace hcnav::env {

Vector2d social_force(const AgentState& self, const std::vector<AgentState>& neighbors,
                      const Vector2d& goal, const SocialForceParams& params,
                      std::mt19937_64& rng) {
  Vector2d to_goal = goal - self.p;
  Vector2d e_goal = Vector2d::Zero();
  if (to_goal.norm() > 1e-9) e_goal = to_goal.normalized();
  Vector2d force = (self.v_pref * e_goal - self.v) / params.tau;

  for (const AgentState& other : neighbors) {
    Vector2d diff = self.p - other.p;
    double d = diff.norm();
    Vector2d n;
    if (d < 1e-12) {
      std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
      double a = u(rng);
      n = Vector2d(std::cos(a), std::sin(a));
      force += params.f_max * n;
      continue;
    }
    n = diff / d;
    double mag = params.A * std::exp((self.rho + other.rho - d) / params.B);
    force += std::min(mag, params.f_max) * n;
  }
  return force;
}

RewardBreakdown reward(const EnvConfig& cfg, const WorldState& prev, const WorldState& next,
                       Done done, double min_human_dist) {
  RewardBreakdown rb;
  if (done == Done::Success) rb.success = cfg.r_success;
  if (done == Done::Collision) rb.collision = cfg.r_collision;
  if (done != Done::Collision && min_human_dist < cfg.d_social)
    rb.discomfort = -cfg.w_discomfort * (cfg.d_social - min_human_dist) / cfg.d_social;
  double prev_dist = (prev.robot.p - prev.robot.g).norm();
  double next_dist = (next.robot.p - next.robot.g).norm();
  rb.progress = cfg.w_progress * (prev_dist - next_dist);
  rb.step = cfg.r_step;
  return rb;
}

Observation CrowdEnv::observe() const {
  Observation o;
  o.robot = world_.robot;
  o.humans = world_.humans;
  for (auto& h : o.humans) {
    // public state only: goal and preferred speed are private
    h.g = Vector2d::Zero();
    h.v_pref = 0.0;
  }
  return o;
}

Observation CrowdEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  world_ = WorldState{};
  world_.time_step = cfg_.time_step;

  world_.robot.rho = cfg_.radius;
  world_.robot.v_pref = cfg_.v_pref;
  world_.robot.p = Vector2d(0.0, -cfg_.circle_radius);
  world_.robot.g = Vector2d(0.0, cfg_.circle_radius);
  world_.robot.v = Vector2d::Zero();

  if (cfg_.n_humans < 0 || cfg_.n_humans > 15)
    throw std::invalid_argument("reset: human count must be in [0, 15]");

  std::uniform_real_distribution<double> jitter(-cfg_.angular_jitter, cfg_.angular_jitter);
  std::uniform_real_distribution<double> anywhere(-cfg_.arena_half + 1.0, cfg_.arena_half - 1.0);

  world_.humans.clear();
  for (int i = 0; i < cfg_.n_humans; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      double base = 2.0 * M_PI * i / cfg_.n_humans;
      double angle = base + (cfg_.angular_jitter > 0 ? jitter(rng_) : 0.0);
      AgentState h;
      h.rho = cfg_.radius;
      h.v_pref = cfg_.v_pref;
      h.p = cfg_.circle_radius * Vector2d(std::cos(angle), std::sin(angle));
      h.g = -h.p;  // antipodal goal
      placed = true;
      if ((h.p - world_.robot.p).norm() < h.rho + world_.robot.rho + 0.2) placed = false;
      for (const auto& other : world_.humans)
        if ((h.p - other.p).norm() < h.rho + other.rho + 0.2) placed = false;
      if (placed) world_.humans.push_back(h);
    }
    if (!placed)
      throw std::runtime_error("reset: failed to place human " + std::to_string(i) +
                               " after 1000 attempts");
  }

  for (int i = 0; i < cfg_.n_static; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      AgentState s;
      s.rho = cfg_.radius;
      s.v_pref = 0.0;
      s.is_static = true;
      s.p = Vector2d(anywhere(rng_), anywhere(rng_));
      s.g = s.p;
      placed = true;
      if ((s.p - world_.robot.p).norm() < s.rho + world_.robot.rho + 0.2) placed = false;
      if ((s.p - world_.robot.g).norm() < s.rho + world_.robot.rho + 0.2) placed = false;
      for (const auto& other : world_.humans)
        if ((s.p - other.p).norm() < s.rho + other.rho + 0.2) placed = false;
      if (placed) world_.humans.push_back(s);
    }
    if (!placed)
      throw std::runtime_error("reset: failed to place static obstacle after 1000 attempts");
  }

  done_ = Done::None;
  active_ = true;
  return observe();
}

Vector2d CrowdEnv::human_velocity(size_t idx) const {
  const AgentState& self = world_.humans[idx];
  if (self.is_static) return Vector2d::Zero();
  Vector2d to_goal = self.g - self.p;
  if (to_goal.norm() < self.rho) return Vector2d::Zero();  // arrived

  // Invisible robot: neighbor lists are built from humans only.
  if (cfg_.ped_policy == PedPolicy::Orca) {
    // small radius inflation absorbs Euler-step overshoot between decisions
    std::vector<orca::Body> neighbors;
    for (size_t j = 0; j < world_.humans.size(); ++j) {
      if (j == idx) continue;
      const AgentState& o = world_.humans[j];
      neighbors.push_back({o.p, o.v, o.rho + cfg_.orca_safety});
    }
    Vector2d pref = to_goal.normalized() *
                    std::min(self.v_pref, to_goal.norm() / cfg_.time_step);
    orca::Body body{self.p, self.v, self.rho + cfg_.orca_safety};
    return orca::orca_velocity(body, neighbors, pref, self.v_pref, cfg_.orca_horizon,
                               cfg_.time_step)
        .velocity;
  }

  std::vector<AgentState> neighbors;
  for (size_t j = 0; j < world_.humans.size(); ++j)
    if (j != idx) neighbors.push_back(world_.humans[j]);
  Vector2d acc = social_force(self, neighbors, self.g, cfg_.sf, rng_);
  Vector2d v = self.v + acc * cfg_.time_step;
  if (v.norm() > self.v_pref) v = v.normalized() * self.v_pref;
  return v;
}

StepOutcome CrowdEnv::step(const Vector2d& robot_action) {
  if (!active_ || done_ != Done::None)
    throw std::runtime_error("step: episode is finished; call reset first");

  WorldState prev = world_;

  Vector2d action = robot_action;
  if (action.norm() > world_.robot.v_pref + 1e-9)
    action = action.normalized() * world_.robot.v_pref;

  // all humans decide simultaneously from the pre-step state
  std::vector<Vector2d> human_v(world_.humans.size());
  for (size_t i = 0; i < world_.humans.size(); ++i) human_v[i] = human_velocity(i);

  world_.robot.v = action;
  world_.robot.p += action * cfg_.time_step;
  for (size_t i = 0; i < world_.humans.size(); ++i) {
    world_.humans[i].v = human_v[i];
    world_.humans[i].p += human_v[i] * cfg_.time_step;
  }
  if (cfg_.sigma_env > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg_.sigma_env);
    world_.robot.p += Vector2d(noise(rng_), noise(rng_));
    for (auto& h : world_.humans)
      if (!h.is_static) h.p += Vector2d(noise(rng_), noise(rng_));
  }
  world_.t += cfg_.time_step;

  double min_sep = std::numeric_limits<double>::infinity();
  bool collision = false;
  for (const auto& h : world_.humans) {
    double sep = (world_.robot.p - h.p).norm() - world_.robot.rho - h.rho;
    min_sep = std::min(min_sep, sep);
    if ((world_.robot.p - h.p).norm() < world_.robot.rho + h.rho) collision = true;
  }
  if (world_.humans.empty()) min_sep = std::numeric_limits<double>::max();

  Done done = Done::None;
  if (collision)
    done = Done::Collision;
  else if ((world_.robot.p - world_.robot.g).norm() < world_.robot.rho)
    done = Done::Success;
  else if (world_.t > cfg_.time_limit)
    done = Done::Timeout;

  double min_center_dist = min_sep + 2.0 * cfg_.radius;  // center distance of closest pair
  RewardBreakdown rb = reward(cfg_, prev, world_, done, min_center_dist);

  done_ = done;
  StepOutcome out;
  out.observation = observe();
  out.reward = rb.total();
  out.done = done;
  out.min_separation = min_sep;
  out.breakdown = rb;
  return out;
}

}  // namespace hcnav::env
