// PPO policy initialization: GAE, clipped-ratio actor loss, value
// regression, rollout collection, and the seeded training loop.

#ifndef HCNAV_RL_HPP
#define HCNAV_RL_HPP

#include "hcnav/crowd_env.hpp"
#include "hcnav/policy.hpp"

namespace hcnav::rl {

using ad::Var;
using Vec2 = Eigen::Vector2d;

struct TrainConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch = 256;
  int total_episodes = 2000;
  int episodes_per_update = 16;
  int workers = 16;
  double learning_rate = 4e-5;
  double value_coef = 0.5;
  int checkpoint_interval = 10;  // updates

  void validate() const {
    if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("gamma must be in (0, 1]");
    if (!(lambda >= 0 && lambda <= 1)) throw std::invalid_argument("lambda must be in [0, 1]");
    if (!(clip_eps > 0 && clip_eps < 1)) throw std::invalid_argument("clip rate must be in (0, 1)");
    if (epochs < 1 || minibatch < 1 || episodes_per_update < 1 || workers < 1)
      throw std::invalid_argument("epochs/minibatch/episodes/workers must be >= 1");
  }
};

struct GaeResult {
  Eigen::VectorXd advantages;
  Eigen::VectorXd value_targets;  // A_t + V(s_t)
};

// A_t = sum_{l>=0} (gamma lambda)^l delta_{t+l},
// delta_t = r_t + gamma V(s_{t+1}) - V(s_t), with V(s_T) = bootstrap.
GaeResult gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, double bootstrap,
              double gamma, double lambda);

struct StepRecord {
  enc::ObservationWindow window;
  env::Observation observation;
  Vec2 action;
  double reward = 0;
  double value = 0;
  double log_prob = 0;
  bool terminal = false;
  double advantage = 0;
  double value_target = 0;
};

struct EpisodeRecord {
  std::vector<StepRecord> steps;
  env::Done outcome = env::Done::None;
  double episode_return = 0;
  std::uint64_t seed = 0;
};

// Time-ordered trajectories collected under one policy snapshot.
struct RolloutBuffer {
  std::vector<EpisodeRecord> episodes;

  size_t total_steps() const {
    size_t n = 0;
    for (const auto& e : episodes) n += e.steps.size();
    return n;
  }
  std::vector<StepRecord*> flatten();
};

EpisodeRecord collect_episode(env::CrowdEnv& env, const policy::Policy& pol,
                              std::uint64_t seed, bool stochastic);

// -E[min(rho A, clip(rho, 1-eps, 1+eps) A)], rho from the log-prob
// difference against the collecting snapshot. Advantages must be normalized
// by the caller.
Var ppo_actor_loss_sample(const policy::Policy& pol, const StepRecord& step, double d_social,
                          double clip_eps);

Var critic_loss_sample(const policy::Policy& pol, const StepRecord& step);

struct UpdateStats {
  double actor_loss = 0;
  double critic_loss = 0;
};

// One PPO update over the buffer: GAE already filled in; runs `epochs`
// minibatched passes and steps the optimizer.
UpdateStats ppo_update(policy::Policy& pol, RolloutBuffer& buffer, const TrainConfig& cfg,
                       double d_social, std::mt19937_64& rng);

struct TrainResult {
  int updates = 0;
  int episodes = 0;
  std::vector<std::string> log_lines;
  std::vector<double> episode_returns;
  bool aborted_nan = false;
};

// Full training loop; writes the metrics log and checkpoints through the
// callbacks (either may be empty).
TrainResult train(const TrainConfig& cfg, const env::EnvConfig& env_cfg, policy::Policy& pol,
                  std::uint64_t seed,
                  const std::function<void(const std::string&)>& log_line = {},
                  const std::function<void(int)>& save_checkpoint = {});

}  // namespace hcnav::rl

#endif  // HCNAV_RL_HPP
