// Declarative run configuration (JSON): environment, training, and policy
// settings, plus the round-trip used to embed the config in checkpoints.

#ifndef HCNAV_CONFIG_HPP
#define HCNAV_CONFIG_HPP

#include <json.hpp>

#include <fstream>

#include "hcnav/rl.hpp"

namespace hcnav::cfg {

using nlohmann::json;

struct RunConfig {
  env::EnvConfig env;
  rl::TrainConfig train;
  policy::PolicyConfig policy;
};

inline json to_json(const RunConfig& c) {
  json j;
  j["env"] = {{"n_humans", c.env.n_humans},
              {"n_static", c.env.n_static},
              {"ped_policy", c.env.ped_policy == env::PedPolicy::Orca ? "orca" : "sf"},
              {"time_step", c.env.time_step},
              {"time_limit", c.env.time_limit},
              {"radius", c.env.radius},
              {"v_pref", c.env.v_pref},
              {"circle_radius", c.env.circle_radius},
              {"angular_jitter", c.env.angular_jitter},
              {"orca_horizon", c.env.orca_horizon},
              {"sigma_env", c.env.sigma_env},
              {"d_social", c.env.d_social},
              {"r_success", c.env.r_success},
              {"r_collision", c.env.r_collision},
              {"w_discomfort", c.env.w_discomfort},
              {"w_progress", c.env.w_progress},
              {"r_step", c.env.r_step}};
  j["train"] = {{"gamma", c.train.gamma},
                {"lambda", c.train.lambda},
                {"clip_eps", c.train.clip_eps},
                {"epochs", c.train.epochs},
                {"minibatch", c.train.minibatch},
                {"total_episodes", c.train.total_episodes},
                {"episodes_per_update", c.train.episodes_per_update},
                {"workers", c.train.workers},
                {"learning_rate", c.train.learning_rate},
                {"value_coef", c.train.value_coef},
                {"checkpoint_interval", c.train.checkpoint_interval}};
  j["policy"] = {{"d", c.policy.encoder.d},
                 {"heads", c.policy.encoder.heads},
                 {"window", c.policy.encoder.T},
                 {"hidden", c.policy.encoder.hidden},
                 {"diff_hidden", c.policy.diff_hidden},
                 {"critic_hidden", c.policy.critic_hidden},
                 {"mass", c.policy.mass},
                 {"stiffness", c.policy.stiffness},
                 {"damping", c.policy.damping},
                 {"log_std_init", c.policy.log_std_init},
                 {"diffusion",
                  {{"K", c.policy.schedule.K},
                   {"kappa", c.policy.schedule.kappa},
                   {"candidates", c.policy.schedule.T_candidates},
                   {"alpha_lo", c.policy.schedule.alphas.size() ? c.policy.schedule.alphas(0) : 1e-4},
                   {"alpha_hi", c.policy.schedule.alphas.size()
                                    ? c.policy.schedule.alphas(c.policy.schedule.alphas.size() - 1)
                                    : 0.05}}}};
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline RunConfig from_json(const json& j) {
  RunConfig c;
  if (j.contains("env")) {
    const json& e = j.at("env");
    maybe(e, "n_humans", c.env.n_humans);
    maybe(e, "n_static", c.env.n_static);
    if (e.contains("ped_policy")) {
      std::string p = e.at("ped_policy").get<std::string>();
      if (p == "orca")
        c.env.ped_policy = env::PedPolicy::Orca;
      else if (p == "sf")
        c.env.ped_policy = env::PedPolicy::SocialForce;
      else
        throw std::invalid_argument("config: ped_policy must be orca or sf");
    }
    maybe(e, "time_step", c.env.time_step);
    maybe(e, "time_limit", c.env.time_limit);
    maybe(e, "radius", c.env.radius);
    maybe(e, "v_pref", c.env.v_pref);
    maybe(e, "circle_radius", c.env.circle_radius);
    maybe(e, "angular_jitter", c.env.angular_jitter);
    maybe(e, "orca_horizon", c.env.orca_horizon);
    maybe(e, "sigma_env", c.env.sigma_env);
    maybe(e, "d_social", c.env.d_social);
    maybe(e, "r_success", c.env.r_success);
    maybe(e, "r_collision", c.env.r_collision);
    maybe(e, "w_discomfort", c.env.w_discomfort);
    maybe(e, "w_progress", c.env.w_progress);
    maybe(e, "r_step", c.env.r_step);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    maybe(t, "gamma", c.train.gamma);
    maybe(t, "lambda", c.train.lambda);
    maybe(t, "clip_eps", c.train.clip_eps);
    maybe(t, "epochs", c.train.epochs);
    maybe(t, "minibatch", c.train.minibatch);
    maybe(t, "total_episodes", c.train.total_episodes);
    maybe(t, "episodes_per_update", c.train.episodes_per_update);
    maybe(t, "workers", c.train.workers);
    maybe(t, "learning_rate", c.train.learning_rate);
    maybe(t, "value_coef", c.train.value_coef);
    maybe(t, "checkpoint_interval", c.train.checkpoint_interval);
  }
  if (j.contains("policy")) {
    const json& p = j.at("policy");
    maybe(p, "d", c.policy.encoder.d);
    maybe(p, "heads", c.policy.encoder.heads);
    maybe(p, "window", c.policy.encoder.T);
    maybe(p, "hidden", c.policy.encoder.hidden);
    maybe(p, "diff_hidden", c.policy.diff_hidden);
    maybe(p, "critic_hidden", c.policy.critic_hidden);
    maybe(p, "mass", c.policy.mass);
    maybe(p, "stiffness", c.policy.stiffness);
    maybe(p, "damping", c.policy.damping);
    maybe(p, "log_std_init", c.policy.log_std_init);
    int K = 100, kappa = 5, cands = 20;
    double lo = 1e-4, hi = 0.05;
    if (p.contains("diffusion")) {
      const json& d = p.at("diffusion");
      maybe(d, "K", K);
      maybe(d, "kappa", kappa);
      maybe(d, "candidates", cands);
      maybe(d, "alpha_lo", lo);
      maybe(d, "alpha_hi", hi);
    }
    c.policy.schedule = diff::DiffusionSchedule::linear(K, kappa, cands, lo, hi);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  json j = json::parse(f);
  return from_json(j);
}

}  // namespace hcnav::cfg

#endif  // HCNAV_CONFIG_HPP
