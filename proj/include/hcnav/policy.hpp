// The full navigation policy: ST-encoder features -> learned Hamiltonian
// terms -> pairwise PH control -> diffusion head, plus the value critic and
// the Gaussian exploration wrapper used by PPO.

#ifndef HCNAV_POLICY_HPP
#define HCNAV_POLICY_HPP

#include "hcnav/diffusion.hpp"
#include "hcnav/ph.hpp"
#include "hcnav/st_encoder.hpp"

namespace hcnav::policy {

using ad::Mat;
using ad::Var;
using Vec2 = Eigen::Vector2d;

struct PolicyConfig {
  enc::EncoderConfig encoder;
  diff::DiffusionSchedule schedule = diff::DiffusionSchedule::linear();
  int diff_hidden = 32;
  int critic_hidden = 32;
  // nominal robot plant
  double mass = 1.0;
  double stiffness = 1.0;
  double damping = 0.5;
  double log_std_init = -0.7;
};

inline diff::ConditionVector make_condition(const env::Observation& obs, double d_social) {
  int n_static = 0;
  for (const auto& h : obs.humans)
    if (h.is_static) ++n_static;
  return diff::ConditionVector::make(obs.robot.g - obs.robot.p, d_social,
                                     static_cast<double>(n_static));
}

class Policy {
 public:
  Policy(const PolicyConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    std::mt19937_64 rng(seed);
    encoder_ = enc::STEncoder(store_, cfg.encoder, rng);
    heads_ = diff::DiffusionHeads(store_, cfg.diff_hidden, rng);
    critic_embed_ = nn::Linear(store_, "critic.embed", enc::kRawDim, cfg.critic_hidden, rng);
    critic_head_ = nn::Mlp(store_, "critic.head", cfg.critic_hidden, cfg.critic_hidden, 1, rng);
    log_std_ = store_.create("policy.log_std", Mat::Constant(1, 2, cfg.log_std_init));
  }

  Policy(const Policy& other) : cfg_(other.cfg_), store_(other.store_.snapshot()) { rebind(); }
  Policy& operator=(const Policy&) = delete;
  Policy(Policy&&) = default;

  const PolicyConfig& config() const { return cfg_; }
  nn::ParamStore& store() { return store_; }
  const nn::ParamStore& store() const { return store_; }

  struct Forward {
    Var u_ph;   // [1 x 2] PH action
    Var mean;   // [1 x 2] deterministic denoised action
    enc::LearnedHamiltonian lh;
    ph::PHTerms nominal;
  };

  // Deterministic forward pass: zero-noise leapfrog + reverse denoising.
  Forward forward_mean(const enc::ObservationWindow& w, const env::Observation& obs,
                       const diff::ConditionVector& cond) const {
    Var wvar = ad::leaf(w.features);
    enc::FusedFeatures f = encoder_.encode(wvar, w.N, w.T);
    enc::LearnedHamiltonian lh = encoder_.hamiltonian_heads(f, wvar);

    ph::NominalSystem nom(cfg_.mass, obs.robot.g, cfg_.stiffness, cfg_.damping);
    ph::Vec x_r(4);
    x_r << obs.robot.p.x(), obs.robot.p.y(), obs.robot.v.x(), obs.robot.v.y();
    ph::PHTerms nominal = nom.terms_at(x_r);

    Var acc = ad::constant(Mat::Zero(4, 1));
    for (int n = 0; n < lh.N; ++n) {
      Var jg = ad::matmul(lh.J_r[static_cast<size_t>(n)], lh.gradH[static_cast<size_t>(n)]);
      Var rg = ad::mul(ad::transpose(lh.R_r_diag[static_cast<size_t>(n)]),
                       lh.gradH[static_cast<size_t>(n)]);
      acc = ad::add(acc, ad::sub(jg, rg));
    }
    ph::Vec drift = (nominal.J - nominal.R) * nominal.gradH;
    Mat gp = ph::pseudo_inverse(nominal.G);
    Var u4 = ad::sub(acc, ad::constant(drift));
    Var u_ph = ad::transpose(ad::matmul(ad::constant(gp), u4));  // [1 x 2]

    Var zero = ad::constant(Mat::Zero(1, 2));
    Var u = heads_.leapfrog_candidate(u_ph, zero);
    for (int omega = cfg_.schedule.kappa; omega >= 1; --omega)
      u = diff::denoise_step(u, omega, cond, cfg_.schedule, heads_, zero);

    Forward out;
    out.u_ph = u_ph;
    out.mean = u;
    out.lh = std::move(lh);
    out.nominal = std::move(nominal);
    return out;
  }

  // Log-density of `action` under the Gaussian around the deterministic mean
  // with the learned state-independent log-std.
  Var log_prob_var(const Forward& fwd, const Vec2& action) const {
    Mat a(1, 2);
    a << action.x(), action.y();
    Var diff = ad::sub(ad::constant(a), fwd.mean);
    Var inv_sigma = ad::exp_(ad::neg(log_std_));
    Var z = ad::mul(diff, inv_sigma);
    Var quad = ad::scale(ad::sum_all(ad::mul(z, z)), -0.5);
    Var norm = ad::add(ad::sum_all(log_std_), ad::scalar(std::log(2.0 * M_PI)));
    return ad::sub(quad, norm);
  }

  Var value_var(const enc::ObservationWindow& w) const {
    std::vector<Eigen::Index> newest(static_cast<size_t>(w.N));
    for (int i = 0; i < w.N; ++i) newest[static_cast<size_t>(i)] = w.row(i, w.T - 1);
    Mat frame(w.N, enc::kRawDim);
    for (int i = 0; i < w.N; ++i) frame.row(i) = w.features.row(newest[static_cast<size_t>(i)]);
    Var h = ad::tanh_(critic_embed_(ad::constant(frame)));
    Var pooled = ad::scale(ad::matmul(ad::constant(Mat::Ones(1, w.N)), h), 1.0 / w.N);
    return critic_head_(pooled);
  }

  double value(const enc::ObservationWindow& w) const { return value_var(w)->value(0, 0); }

  Vec2 act_mean(const enc::ObservationWindow& w, const env::Observation& obs,
                const diff::ConditionVector& cond) const {
    Var m = forward_mean(w, obs, cond).mean;
    return Vec2(m->value(0, 0), m->value(0, 1));
  }

  struct Sampled {
    Vec2 action;
    double log_prob;
  };

  Sampled act_sample(const enc::ObservationWindow& w, const env::Observation& obs,
                     const diff::ConditionVector& cond, std::mt19937_64& rng) const {
    Vec2 mean = act_mean(w, obs, cond);
    Vec2 sigma(std::exp(log_std_->value(0, 0)), std::exp(log_std_->value(0, 1)));
    std::normal_distribution<double> n01(0.0, 1.0);
    Vec2 a = mean + Vec2(sigma.x() * n01(rng), sigma.y() * n01(rng));
    double logp = 0.0;
    for (int i = 0; i < 2; ++i) {
      double z = (a(i) - mean(i)) / sigma(i);
      logp += -0.5 * z * z - std::log(sigma(i)) - 0.5 * std::log(2.0 * M_PI);
    }
    return {a, logp};
  }

  // Stochastic leapfrog sampling: T candidates denoised kappa -> 0.
  std::vector<Vec2> candidates(const enc::ObservationWindow& w, const env::Observation& obs,
                               const diff::ConditionVector& cond, std::mt19937_64& rng) const {
    Forward fwd = forward_mean(w, obs, cond);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<Vec2> out;
    out.reserve(static_cast<size_t>(cfg_.schedule.T_candidates));
    for (int tau = 0; tau < cfg_.schedule.T_candidates; ++tau) {
      Mat noise(1, 2);
      noise << n01(rng), n01(rng);
      Var u = heads_.leapfrog_candidate(fwd.u_ph, ad::constant(noise));
      for (int omega = cfg_.schedule.kappa; omega >= 1; --omega) {
        Mat eta(1, 2);
        eta << n01(rng), n01(rng);
        u = diff::denoise_step(u, omega, cond, cfg_.schedule, heads_, ad::constant(eta));
      }
      out.emplace_back(u->value(0, 0), u->value(0, 1));
    }
    return out;
  }

  const diff::DiffusionHeads& diffusion_heads() const { return heads_; }
  const enc::STEncoder& encoder() const { return encoder_; }
  Var log_std() const { return log_std_; }

 private:
  void rebind() {
    encoder_ = enc::STEncoder::from(store_, cfg_.encoder);
    heads_ = diff::DiffusionHeads::from(store_);
    critic_embed_ = nn::Linear::from(store_, "critic.embed");
    critic_head_ = nn::Mlp::from(store_, "critic.head");
    log_std_ = store_.get("policy.log_std");
  }

  PolicyConfig cfg_;
  nn::ParamStore store_;
  enc::STEncoder encoder_;
  diff::DiffusionHeads heads_;
  nn::Linear critic_embed_;
  nn::Mlp critic_head_;
  Var log_std_;
};

}  // namespace hcnav::policy

#endif  // HCNAV_POLICY_HPP
