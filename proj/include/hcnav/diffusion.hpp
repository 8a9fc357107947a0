// Leapfrog diffusion head: forward noising of the PH action, learned
// intermediate-step initialization that skips reverse steps K..kappa, the
// conditioned reverse denoiser, and final candidate selection.

#ifndef HCNAV_DIFFUSION_HPP
#define HCNAV_DIFFUSION_HPP

#include "hcnav/nn.hpp"

namespace hcnav::diff {

using ad::Mat;
using ad::Var;
using Vec2 = Eigen::Vector2d;

struct DiffusionSchedule {
  int K = 100;
  int kappa = 5;
  int T_candidates = 20;
  Eigen::VectorXd alphas;  // alphas(k-1) = alpha_k, k = 1..K

  static DiffusionSchedule linear(int K = 100, int kappa = 5, int T_candidates = 20,
                                  double alpha_lo = 1e-4, double alpha_hi = 0.05) {
    DiffusionSchedule s;
    s.K = K;
    s.kappa = kappa;
    s.T_candidates = T_candidates;
    s.alphas.resize(K);
    for (int k = 0; k < K; ++k)
      s.alphas(k) = K > 1 ? alpha_lo + (alpha_hi - alpha_lo) * k / double(K - 1) : alpha_lo;
    s.validate();
    return s;
  }

  void validate() const {
    if (K < 1 || kappa < 1 || kappa > K)
      throw std::invalid_argument("schedule: need 1 <= kappa <= K");
    if (T_candidates < 1) throw std::invalid_argument("schedule: need T_candidates >= 1");
    if (alphas.size() != K) throw std::invalid_argument("schedule: alphas size != K");
    for (int k = 0; k < K; ++k)
      if (!(alphas(k) > 0.0 && alphas(k) < 1.0))
        throw std::invalid_argument("schedule: alphas must lie in (0, 1)");
    double prev = alpha_bar(0);
    for (int k = 1; k <= K; ++k) {
      double ab = alpha_bar(k);
      if (!(ab < prev)) throw std::invalid_argument("schedule: alpha_bar must strictly decrease");
      prev = ab;
    }
  }

  // cumulative product prod_{j<=k} (1 - alpha_j); alpha_bar(0) = 1
  double alpha_bar(int k) const {
    double p = 1.0;
    for (int j = 1; j <= k; ++j) p *= 1.0 - alphas(j - 1);
    return p;
  }

  double alpha(int k) const {
    if (k < 1 || k > K) throw std::out_of_range("schedule: alpha index " + std::to_string(k));
    return alphas(k - 1);
  }
};

// Conditioning features standing in for the language front-end: goal offset,
// preferred social distance, static-obstacle summary.
struct ConditionVector {
  Eigen::VectorXd I_C;
  static constexpr int kDim = 4;

  static ConditionVector make(const Vec2& goal_offset, double d_social, double n_static) {
    ConditionVector c;
    c.I_C.resize(kDim);
    c.I_C << goal_offset.x(), goal_offset.y(), d_social, n_static;
    if (!c.I_C.allFinite()) throw std::invalid_argument("condition vector must be finite");
    return c;
  }
};

// Closed-form marginal of the forward process at step k:
// sqrt(abar_k) u0 + sqrt(1 - abar_k) noise.
inline Eigen::VectorXd forward_noise(const Eigen::VectorXd& u0, int k,
                                     const DiffusionSchedule& s, const Eigen::VectorXd& noise) {
  if (k < 1 || k > s.K)
    throw std::out_of_range("forward_noise: step " + std::to_string(k) + " outside [1, K]");
  double ab = s.alpha_bar(k);
  return std::sqrt(ab) * u0 + std::sqrt(1.0 - ab) * noise;
}

// One reverse update given raw coefficients:
// (1/sqrt(1-alpha)) (u - (alpha/sqrt(1-alpha_bar)) eps) + sqrt(alpha) eta.
inline Eigen::VectorXd denoise_core(const Eigen::VectorXd& u, double alpha, double alpha_bar,
                                    const Eigen::VectorXd& eps, const Eigen::VectorXd& eta) {
  double c1 = 1.0 / std::sqrt(1.0 - alpha);
  double c2 = alpha / std::sqrt(1.0 - alpha_bar);
  return c1 * (u - c2 * eps) + std::sqrt(alpha) * eta;
}

inline Var denoise_core_var(const Var& u, double alpha, double alpha_bar, const Var& eps,
                            const Var& eta) {
  double c1 = 1.0 / std::sqrt(1.0 - alpha);
  double c2 = alpha / std::sqrt(1.0 - alpha_bar);
  Var inner = ad::sub(u, ad::scale(eps, c2));
  return ad::add(ad::scale(inner, c1), ad::scale(eta, std::sqrt(alpha)));
}

// Learned heads of the leapfrog sampler. The candidate spread is a positive
// gain on the noise so the sampled cooperation instances stay zero-mean.
struct DiffusionHeads {
  nn::Mlp f_mu;     // 2 -> 2
  nn::Mlp f_sigma;  // 2 -> 2, softplus applied on top
  nn::Mlp f_gain;   // (2 + 2) -> 2, gain = 1 + 0.5 tanh(.)
  nn::Mlp f_eps;    // (2 + 1 + cond) -> 2

  DiffusionHeads() = default;
  DiffusionHeads(nn::ParamStore& store, int hidden, std::mt19937_64& rng)
      : f_mu(store, "diff.mu", 2, hidden, 2, rng),
        f_sigma(store, "diff.sigma", 2, hidden, 2, rng),
        f_gain(store, "diff.gain", 4, hidden, 2, rng),
        f_eps(store, "diff.eps", 3 + ConditionVector::kDim, hidden, 2, rng) {}
  static DiffusionHeads from(const nn::ParamStore& store) {
    DiffusionHeads h;
    h.f_mu = nn::Mlp::from(store, "diff.mu");
    h.f_sigma = nn::Mlp::from(store, "diff.sigma");
    h.f_gain = nn::Mlp::from(store, "diff.gain");
    h.f_eps = nn::Mlp::from(store, "diff.eps");
    return h;
  }

  Var mu(const Var& u_ph) const { return f_mu(u_ph); }
  Var sigma(const Var& u_ph) const { return ad::softplus_(f_sigma(u_ph)); }

  // candidate at step kappa for one noise draw; u_ph, noise: [1 x 2]
  Var leapfrog_candidate(const Var& u_ph, const Var& noise) const {
    Var m = mu(u_ph);
    Var s = sigma(u_ph);
    Var gain = ad::add(ad::constant(Mat::Ones(1, 2)),
                       ad::scale(ad::tanh_(f_gain(ad::concat_cols({u_ph, s}))), 0.5));
    Var coop = ad::mul(gain, noise);
    return ad::add(m, ad::mul(s, coop));
  }

  Var eps(const Var& u, int omega, int kappa, const ConditionVector& cond) const {
    Mat extra(1, 1 + ConditionVector::kDim);
    extra(0, 0) = double(omega) / double(kappa);
    for (int i = 0; i < ConditionVector::kDim; ++i) extra(0, 1 + i) = cond.I_C(i);
    return f_eps(ad::concat_cols({u, ad::constant(extra)}));
  }
};

// One reverse step omega -> omega-1 of the conditioned denoiser. The final
// step (omega = 1) suppresses the injected noise; the schedule index is
// floored at 1 where the paper's omega-1 = 0 coefficient degenerates.
inline Var denoise_step(const Var& u_hat, int omega, const ConditionVector& cond,
                        const DiffusionSchedule& s, const DiffusionHeads& heads,
                        const Var& noise) {
  if (omega < 1 || omega > s.kappa)
    throw std::out_of_range("denoise_step: step " + std::to_string(omega) +
                            " outside [1, kappa]");
  int idx = std::max(omega - 1, 1);
  Var eps = heads.eps(u_hat, omega, s.kappa, cond);
  Var eta = omega > 1 ? noise : ad::constant(Mat::Zero(1, 2));
  return denoise_core_var(u_hat, s.alpha(idx), s.alpha_bar(idx), eps, eta);
}

enum class SampleMode { Train, Eval };

// Final selection among the T denoised candidates: uniform draw when
// exploring, candidate mean when evaluating; output clipped to |a| <= v_pref.
inline Vec2 sample_policy(const std::vector<Vec2>& candidates, SampleMode mode,
                          std::mt19937_64& rng, double v_pref) {
  if (candidates.empty()) throw std::invalid_argument("sample_policy: no candidates");
  Vec2 a;
  if (mode == SampleMode::Train) {
    std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
    a = candidates[pick(rng)];
  } else {
    a = Vec2::Zero();
    for (const auto& c : candidates) a += c;
    a /= double(candidates.size());
  }
  if (a.norm() > v_pref) a = a.normalized() * v_pref;
  return a;
}

}  // namespace hcnav::diff

#endif  // HCNAV_DIFFUSION_HPP
