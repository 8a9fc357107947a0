#include "hcnav/rl.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>
#include <thread>

namespace hcnav::rl {

GaeResult gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values, double bootstrap,
              double gamma, double lambda) {
  if (rewards.size() != values.size())
    throw std::invalid_argument("gae: rewards/values length mismatch");
  Eigen::Index n = rewards.size();
  GaeResult out;
  out.advantages.resize(n);
  out.value_targets.resize(n);
  double acc = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    double v_next = (t == n - 1) ? bootstrap : values(t + 1);
    double delta = rewards(t) + gamma * v_next - values(t);
    acc = delta + gamma * lambda * acc;
    out.advantages(t) = acc;
    out.value_targets(t) = acc + values(t);
  }
  return out;
}

std::vector<StepRecord*> RolloutBuffer::flatten() {
  std::vector<StepRecord*> out;
  out.reserve(total_steps());
  for (auto& e : episodes)
    for (auto& s : e.steps) out.push_back(&s);
  return out;
}

EpisodeRecord collect_episode(env::CrowdEnv& env, const policy::Policy& pol,
                              std::uint64_t seed, bool stochastic) {
  EpisodeRecord ep;
  ep.seed = seed;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  env::Observation obs = env.reset(seed);
  enc::WindowBuffer buf(pol.config().encoder.T);
  buf.push(obs);

  while (!env.done()) {
    StepRecord rec;
    rec.window = buf.window();
    rec.observation = obs;
    diff::ConditionVector cond = policy::make_condition(obs, env.config().d_social);
    if (stochastic) {
      auto s = pol.act_sample(rec.window, obs, cond, rng);
      rec.action = s.action;
      rec.log_prob = s.log_prob;
    } else {
      rec.action = pol.act_mean(rec.window, obs, cond);
      rec.log_prob = 0.0;
    }
    rec.value = pol.value(rec.window);
    env::StepOutcome out = env.step(rec.action);
    rec.reward = out.reward;
    rec.terminal = out.done != env::Done::None;
    ep.episode_return += out.reward;
    ep.steps.push_back(std::move(rec));
    obs = out.observation;
    buf.push(obs);
    if (out.done != env::Done::None) {
      ep.outcome = out.done;
      break;
    }
  }
  return ep;
}

static void fill_gae(EpisodeRecord& ep, const policy::Policy& pol, const TrainConfig& cfg,
                     const enc::ObservationWindow& final_window) {
  Eigen::Index n = static_cast<Eigen::Index>(ep.steps.size());
  Eigen::VectorXd rewards(n), values(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    rewards(t) = ep.steps[static_cast<size_t>(t)].reward;
    values(t) = ep.steps[static_cast<size_t>(t)].value;
  }
  // truncation (timeout) bootstraps with the critic; real terminals use 0
  double bootstrap = ep.outcome == env::Done::Timeout ? pol.value(final_window) : 0.0;
  GaeResult g = gae(rewards, values, bootstrap, cfg.gamma, cfg.lambda);
  for (Eigen::Index t = 0; t < n; ++t) {
    ep.steps[static_cast<size_t>(t)].advantage = g.advantages(t);
    ep.steps[static_cast<size_t>(t)].value_target = g.value_targets(t);
  }
}

Var ppo_actor_loss_sample(const policy::Policy& pol, const StepRecord& step, double d_social,
                          double clip_eps) {
  diff::ConditionVector cond = policy::make_condition(step.observation, d_social);
  policy::Policy::Forward fwd = pol.forward_mean(step.window, step.observation, cond);
  Var logp = pol.log_prob_var(fwd, step.action);
  Var ratio = ad::exp_(ad::sub(logp, ad::scalar(step.log_prob)));
  double rho = ratio->value(0, 0);
  if (!std::isfinite(rho)) throw std::runtime_error("ppo_actor_loss: non-finite ratio");
  double a = step.advantage;
  double clipped_rho = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
  // min(rho A, clip(rho) A): pick the branch numerically, keep its graph
  Var surr;
  if (rho * a <= clipped_rho * a) {
    surr = ad::scale(ratio, a);
  } else if (clipped_rho == rho) {
    surr = ad::scale(ratio, a);
  } else {
    surr = ad::scalar(clipped_rho * a);  // clipped branch: zero gradient
  }
  return ad::neg(surr);
}

Var critic_loss_sample(const policy::Policy& pol, const StepRecord& step) {
  Var v = pol.value_var(step.window);
  Var err = ad::sub(v, ad::scalar(step.value_target));
  return ad::mul(err, err);
}

UpdateStats ppo_update(policy::Policy& pol, RolloutBuffer& buffer, const TrainConfig& cfg,
                       double d_social, std::mt19937_64& rng) {
  std::vector<StepRecord*> steps = buffer.flatten();
  if (steps.empty()) return {};

  // normalize advantages over the whole update
  double mean = 0, var = 0;
  for (auto* s : steps) mean += s->advantage;
  mean /= double(steps.size());
  for (auto* s : steps) var += (s->advantage - mean) * (s->advantage - mean);
  double stddev = std::sqrt(var / double(steps.size())) + 1e-8;
  for (auto* s : steps) s->advantage = (s->advantage - mean) / stddev;

  UpdateStats stats;
  int loss_count = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(steps.begin(), steps.end(), rng);
    for (size_t start = 0; start < steps.size(); start += static_cast<size_t>(cfg.minibatch)) {
      size_t end = std::min(steps.size(), start + static_cast<size_t>(cfg.minibatch));
      pol.store().zero_grad();
      double batch_actor = 0, batch_critic = 0;
      for (size_t i = start; i < end; ++i) {
        Var actor = ppo_actor_loss_sample(pol, *steps[i], d_social, cfg.clip_eps);
        Var critic = critic_loss_sample(pol, *steps[i]);
        Var loss = ad::scale(ad::add(actor, ad::scale(critic, cfg.value_coef)),
                             1.0 / double(end - start));
        double lv = loss->value(0, 0);
        if (!std::isfinite(lv)) throw std::runtime_error("ppo_update: non-finite loss");
        pol.store().accumulate(loss);
        batch_actor += actor->value(0, 0);
        batch_critic += critic->value(0, 0);
      }
      pol.store().adam_step(cfg.learning_rate);
      stats.actor_loss += batch_actor / double(end - start);
      stats.critic_loss += batch_critic / double(end - start);
      ++loss_count;
    }
  }
  if (loss_count > 0) {
    stats.actor_loss /= loss_count;
    stats.critic_loss /= loss_count;
  }
  return stats;
}

TrainResult train(const TrainConfig& cfg, const env::EnvConfig& env_cfg, policy::Policy& pol,
                  std::uint64_t seed, const std::function<void(const std::string&)>& log_line,
                  const std::function<void(int)>& save_checkpoint) {
  cfg.validate();
  TrainResult result;
  std::mt19937_64 update_rng(seed);
  int episode_index = 0;

  if (log_line)
    log_line("update\tepisodes\tmean_return\tsuccess_rate\tactor_loss\tcritic_loss");

  while (episode_index < cfg.total_episodes) {
    int batch = std::min(cfg.episodes_per_update, cfg.total_episodes - episode_index);

    // frozen snapshot for collection; worker results merged in episode order
    policy::Policy snapshot(pol);
    RolloutBuffer buffer;
    buffer.episodes.resize(static_cast<size_t>(batch));
    std::vector<enc::ObservationWindow> final_windows(static_cast<size_t>(batch));

    int n_workers = std::min(cfg.workers, batch);
    std::vector<std::thread> threads;
    std::atomic<int> cursor{0};
    auto work = [&]() {
      for (;;) {
        int k = cursor.fetch_add(1);
        if (k >= batch) break;
        std::uint64_t ep_seed = seed * 1000003ull + static_cast<std::uint64_t>(episode_index + k);
        env::CrowdEnv env(env_cfg);
        EpisodeRecord ep = collect_episode(env, snapshot, ep_seed, /*stochastic=*/true);
        enc::WindowBuffer buf(snapshot.config().encoder.T);
        for (const auto& s : ep.steps) buf.push(s.observation);
        buf.push(env.observe());
        final_windows[static_cast<size_t>(k)] = buf.window();
        buffer.episodes[static_cast<size_t>(k)] = std::move(ep);
      }
    };
    if (n_workers <= 1) {
      work();
    } else {
      for (int w = 0; w < n_workers; ++w) threads.emplace_back(work);
      for (auto& t : threads) t.join();
    }

    for (size_t k = 0; k < buffer.episodes.size(); ++k)
      fill_gae(buffer.episodes[k], snapshot, cfg, final_windows[k]);

    double mean_return = 0, success = 0;
    for (const auto& ep : buffer.episodes) {
      mean_return += ep.episode_return;
      if (ep.outcome == env::Done::Success) success += 1;
      result.episode_returns.push_back(ep.episode_return);
    }
    mean_return /= double(batch);
    success = 100.0 * success / double(batch);

    UpdateStats stats;
    try {
      stats = ppo_update(pol, buffer, cfg, env_cfg.d_social, update_rng);
    } catch (const std::runtime_error&) {
      result.aborted_nan = true;
      if (log_line) log_line("# aborted: non-finite loss; last checkpoint retained");
      break;
    }

    episode_index += batch;
    ++result.updates;
    result.episodes = episode_index;

    std::ostringstream line;
    line << result.updates << '\t' << episode_index << '\t' << mean_return << '\t' << success
         << '\t' << stats.actor_loss << '\t' << stats.critic_loss;
    result.log_lines.push_back(line.str());
    if (log_line) log_line(line.str());
    if (save_checkpoint &&
        (result.updates % cfg.checkpoint_interval == 0 || episode_index >= cfg.total_episodes))
      save_checkpoint(result.updates);
  }
  return result;
}

}  // namespace hcnav::rl
