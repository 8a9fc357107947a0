#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "hcnav/diffusion.hpp"

using namespace hcnav;
using ad::Mat;
using ad::Var;
using Eigen::Vector2d;

TEST_CASE("linear schedule validates and alpha_bar strictly decreases") {
  diff::DiffusionSchedule s = diff::DiffusionSchedule::linear();
  CHECK(s.K == 100);
  CHECK(s.alpha_bar(0) == doctest::Approx(1.0));
  double prev = 1.0;
  for (int k = 1; k <= s.K; ++k) {
    double ab = s.alpha_bar(k);
    CHECK(ab < prev);
    CHECK(1.0 - ab > 1.0 - prev);  // marginal variance strictly increasing
    prev = ab;
  }
  CHECK(s.alpha_bar(s.K) > 0.0);
  CHECK(s.alpha_bar(1) < 1.0);
}

TEST_CASE("schedule rejects malformed parameters") {
  CHECK_THROWS_AS((void)diff::DiffusionSchedule::linear(10, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)diff::DiffusionSchedule::linear(10, 11), std::invalid_argument);
  CHECK_THROWS_AS((void)diff::DiffusionSchedule::linear(10, 5, 0), std::invalid_argument);
  diff::DiffusionSchedule bad = diff::DiffusionSchedule::linear(10, 5, 20);
  bad.alphas(3) = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("forward noise: no-noise limit and zero-signal case") {
  diff::DiffusionSchedule s = diff::DiffusionSchedule::linear(10, 5, 20, 1e-12, 1e-11);
  Eigen::VectorXd u0(2), noise(2);
  u0 << 0.3, -0.8;
  noise << 1.0, -1.0;
  Eigen::VectorXd out = diff::forward_noise(u0, 10, s, noise);
  CHECK((out - u0).norm() < 1e-4);

  diff::DiffusionSchedule s2 = diff::DiffusionSchedule::linear();
  Eigen::VectorXd z = diff::forward_noise(Eigen::VectorXd::Zero(2), 7, s2, noise);
  double scale = std::sqrt(1.0 - s2.alpha_bar(7));
  CHECK(z(0) == doctest::Approx(scale * noise(0)));
  CHECK(z(1) == doctest::Approx(scale * noise(1)));
  CHECK_THROWS_AS((void)diff::forward_noise(u0, 0, s2, noise), std::out_of_range);
  CHECK_THROWS_AS((void)diff::forward_noise(u0, 101, s2, noise), std::out_of_range);
}

TEST_CASE("constant alpha 0.1 at k = 2: scale 0.9 and variance 0.19") {
  diff::DiffusionSchedule s;
  s.K = 2;
  s.kappa = 1;
  s.T_candidates = 1;
  s.alphas = Eigen::VectorXd::Constant(2, 0.1);
  s.validate();
  CHECK(std::sqrt(s.alpha_bar(2)) == doctest::Approx(0.9));
  CHECK(1.0 - s.alpha_bar(2) == doctest::Approx(0.19));
  Eigen::VectorXd u0(1), noise(1);
  u0 << 1.0;
  noise << 2.0;
  Eigen::VectorXd out = diff::forward_noise(u0, 2, s, noise);
  CHECK(out(0) == doctest::Approx(0.9 + std::sqrt(0.19) * 2.0));
}

TEST_CASE("closed-form marginal matches composed single-step kernels, 3 sigma, 1e4 samples") {
  // single step kernel: u^k = sqrt(1 - alpha_k) u^{k-1} + sqrt(alpha_k) xi
  diff::DiffusionSchedule s = diff::DiffusionSchedule::linear(20, 5, 20, 0.01, 0.2);
  int k = 12, n = 10000;
  double u0 = 0.7;
  std::mt19937_64 rng(123);
  std::normal_distribution<double> n01(0, 1);
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double u = u0;
    for (int j = 1; j <= k; ++j)
      u = std::sqrt(1.0 - s.alpha(j)) * u + std::sqrt(s.alpha(j)) * n01(rng);
    sum += u;
    sumsq += u * u;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  double m_expected = std::sqrt(s.alpha_bar(k)) * u0;
  double v_expected = 1.0 - s.alpha_bar(k);
  double se_mean = std::sqrt(v_expected / n);
  double se_var = v_expected * std::sqrt(2.0 / n);
  CHECK(std::abs(mean - m_expected) < 3 * se_mean);
  CHECK(std::abs(var - v_expected) < 3 * se_var);
}

TEST_CASE("oracle-eps reverse step exactly inverts one forward step") {
  // forward: u^k = sqrt(1-alpha) u^{k-1} + sqrt(alpha) xi. Feeding the
  // reverse formula eps = sqrt(1-abar) xi / sqrt(alpha) recovers u^{k-1}.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01(0, 1);
  diff::DiffusionSchedule s = diff::DiffusionSchedule::linear(10, 5, 20, 0.05, 0.3);
  for (int it = 0; it < 100; ++it) {
    int k = 1 + static_cast<int>(rng() % 10);
    double alpha = s.alpha(k), abar = s.alpha_bar(k);
    Eigen::VectorXd u_prev(2), xi(2);
    u_prev << n01(rng), n01(rng);
    xi << n01(rng), n01(rng);
    Eigen::VectorXd u_k = std::sqrt(1.0 - alpha) * u_prev + std::sqrt(alpha) * xi;
    Eigen::VectorXd eps = std::sqrt(1.0 - abar) / std::sqrt(alpha) * xi;
    Eigen::VectorXd rec = diff::denoise_core(u_k, alpha, abar, eps, Eigen::VectorXd::Zero(2));
    CHECK((rec - u_prev).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("denoise core matches the hand-evaluated scalar case") {
  Eigen::VectorXd u(1), eps(1), eta(1);
  u << 1.0;
  eps << 0.5;
  eta << 0.0;
  Eigen::VectorXd out = diff::denoise_core(u, 0.5, 0.25, eps, eta);
  double expected = (1.0 / std::sqrt(0.5)) * (1.0 - (0.5 / std::sqrt(0.75)) * 0.5);
  CHECK(out(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("degenerate step: eps = 0, eta = 0, alpha -> 0 is the identity") {
  Eigen::VectorXd u(2);
  u << 0.4, -0.2;
  Eigen::VectorXd out = diff::denoise_core(u, 1e-12, 0.5, Eigen::VectorXd::Zero(2),
                                           Eigen::VectorXd::Zero(2));
  CHECK((out - u).cwiseAbs().maxCoeff() < 1e-9);
}

namespace {

struct Heads {
  nn::ParamStore store;
  diff::DiffusionHeads heads;
  explicit Heads(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    heads = diff::DiffusionHeads(store, 16, rng);
  }
};

}  // namespace

TEST_CASE("leapfrog candidates with zero noise all equal the mean head") {
  Heads h(1);
  Mat u_ph(1, 2);
  u_ph << 0.5, -0.3;
  Var up = ad::constant(u_ph);
  Var mu = h.heads.mu(up);
  Var cand = h.heads.leapfrog_candidate(up, ad::constant(Mat::Zero(1, 2)));
  CHECK((cand->value - mu->value).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("sigma head output is strictly positive") {
  Heads h(2);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int it = 0; it < 50; ++it) {
    Mat up(1, 2);
    up << u(rng), u(rng);
    Var s = h.heads.sigma(ad::constant(up));
    CHECK(s->value(0, 0) > 0.0);
    CHECK(s->value(0, 1) > 0.0);
  }
}

TEST_CASE("candidate moments match mu and sigma * std(gain * noise) over 1e4 draws") {
  Heads h(3);
  Mat u_ph(1, 2);
  u_ph << 0.2, -0.6;
  Var up = ad::constant(u_ph);
  double mu0 = h.heads.mu(up)->value(0, 0);
  double sig0 = h.heads.sigma(up)->value(0, 0);

  int n = 10000;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n01(0, 1);
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    Mat noise(1, 2);
    noise << n01(rng), n01(rng);
    Var c = h.heads.leapfrog_candidate(up, ad::constant(noise));
    double v = c->value(0, 0);
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  // gain is deterministic given (u_ph, sigma): candidate = mu + sigma*gain*z
  Var g = ad::sub(h.heads.leapfrog_candidate(up, ad::constant(Mat::Ones(1, 2))),
                  h.heads.mu(up));
  double spread = g->value(0, 0);  // sigma * gain for unit noise
  double sd_expected = std::abs(spread);
  double se_mean = sd_expected / std::sqrt(double(n));
  double se_var = sd_expected * sd_expected * std::sqrt(2.0 / n);
  CHECK(std::abs(mean - mu0) < 3 * se_mean);
  CHECK(std::abs(var - sd_expected * sd_expected) < 3 * se_var);
  CHECK(sig0 > 0.0);
}

TEST_CASE("denoise_step range checks and final-step noise suppression") {
  Heads h(4);
  diff::DiffusionSchedule s = diff::DiffusionSchedule::linear(10, 3, 5);
  diff::ConditionVector cond = diff::ConditionVector::make({1.0, 2.0}, 0.5, 0.0);
  Var u = ad::constant(Mat::Constant(1, 2, 0.3));
  CHECK_THROWS_AS((void)diff::denoise_step(u, 0, cond, s, h.heads, u), std::out_of_range);
  CHECK_THROWS_AS((void)diff::denoise_step(u, 4, cond, s, h.heads, u), std::out_of_range);

  // omega = 1 ignores the injected noise entirely
  Var big = ad::constant(Mat::Constant(1, 2, 1e6));
  Var a = diff::denoise_step(u, 1, cond, s, h.heads, big);
  Var b = diff::denoise_step(u, 1, cond, s, h.heads, ad::constant(Mat::Zero(1, 2)));
  CHECK((a->value - b->value).cwiseAbs().maxCoeff() == 0.0);

  // omega > 1 does not
  Var c = diff::denoise_step(u, 2, cond, s, h.heads, ad::constant(Mat::Ones(1, 2)));
  Var d = diff::denoise_step(u, 2, cond, s, h.heads, ad::constant(Mat::Zero(1, 2)));
  CHECK((c->value - d->value).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("full reverse pass is deterministic given the noise stream") {
  Heads h(5);
  diff::DiffusionSchedule s = diff::DiffusionSchedule::linear(20, 5, 5);
  diff::ConditionVector cond = diff::ConditionVector::make({0.0, 8.0}, 0.5, 1.0);
  auto run = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0, 1);
    Var u = ad::constant(Mat::Constant(1, 2, 0.4));
    for (int omega = s.kappa; omega >= 1; --omega) {
      Mat eta(1, 2);
      eta << n01(rng), n01(rng);
      u = diff::denoise_step(u, omega, cond, s, h.heads, ad::constant(eta));
    }
    return u->value;
  };
  CHECK((run(11) - run(11)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_policy: singleton, symmetric mean, and clipping") {
  std::mt19937_64 rng(1);
  std::vector<Vector2d> one{{0.3, 0.1}};
  CHECK((diff::sample_policy(one, diff::SampleMode::Train, rng, 1.0) - one[0]).norm() == 0.0);
  CHECK((diff::sample_policy(one, diff::SampleMode::Eval, rng, 1.0) - one[0]).norm() == 0.0);

  std::vector<Vector2d> sym{{1, 0}, {-1, 0}};
  CHECK(diff::sample_policy(sym, diff::SampleMode::Eval, rng, 1.0).norm() == doctest::Approx(0.0));

  std::vector<Vector2d> big{{3, 4}};
  Vector2d clipped = diff::sample_policy(big, diff::SampleMode::Eval, rng, 1.0);
  CHECK(clipped.norm() == doctest::Approx(1.0));
  CHECK(clipped.x() == doctest::Approx(0.6));
  CHECK(clipped.y() == doctest::Approx(0.8));

  CHECK_THROWS_AS((void)diff::sample_policy({}, diff::SampleMode::Eval, rng, 1.0),
                  std::invalid_argument);
}

TEST_CASE("train-mode selection is uniform over candidates within 3 sigma") {
  std::mt19937_64 rng(42);
  std::vector<Vector2d> cands{{0.1, 0}, {0.2, 0}, {0.3, 0}};
  int n = 10000;
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) {
    Vector2d a = diff::sample_policy(cands, diff::SampleMode::Train, rng, 1.0);
    for (int j = 0; j < 3; ++j)
      if (a == cands[static_cast<size_t>(j)]) ++counts[j];
  }
  double p = 1.0 / 3.0;
  double sd = std::sqrt(n * p * (1 - p));
  for (int j = 0; j < 3; ++j) CHECK(std::abs(counts[j] - n * p) < 3 * sd);
}
