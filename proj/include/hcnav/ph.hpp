// Port-Hamiltonian algebra: open-loop dynamics, power balance, EB-PBC
// controller synthesis, the pairwise policy head, and the zero-order-hold
// discretization.

#ifndef HCNAV_PH_HPP
#define HCNAV_PH_HPP

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcnav::ph {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// The quadruple (J, R, gradH, G) plus the stored energy, evaluated at a
// state. J skew and R PSD are enforced at construction.
struct PHTerms {
  Mat J;      // interconnection, n x n, skew
  Mat R;      // dissipation, n x n, symmetric PSD
  Vec gradH;  // gradient of H at x, n
  double H = 0.0;
  Mat G;      // input map, n x m

  Eigen::Index n() const { return J.rows(); }
  Eigen::Index m() const { return G.cols(); }
};

// Builds validated terms from raw matrices: J is antisymmetrized exactly, R
// is symmetrized and negative eigenvalues clipped at zero.
inline PHTerms make_terms(const Mat& J_raw, const Mat& R_raw, const Vec& gradH, double H,
                          const Mat& G) {
  Eigen::Index n = J_raw.rows();
  if (J_raw.cols() != n || R_raw.rows() != n || R_raw.cols() != n || gradH.size() != n ||
      G.rows() != n)
    throw std::invalid_argument("make_terms: inconsistent dimensions");
  if (G.cols() > n) throw std::invalid_argument("make_terms: G has more columns than states");
  if (!std::isfinite(H) || !gradH.allFinite() || !G.allFinite())
    throw std::invalid_argument("make_terms: non-finite entries");
  PHTerms t;
  t.J = 0.5 * (J_raw - J_raw.transpose());
  Mat Rs = 0.5 * (R_raw + R_raw.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(Rs);
  Vec ev = es.eigenvalues().cwiseMax(0.0);
  t.R = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  t.R = 0.5 * (t.R + t.R.transpose());
  t.gradH = gradH;
  t.H = H;
  t.G = G;
  return t;
}

// Point-mass robot plant: H = 1/2 m |v|^2 + 1/2 k |p - goal|^2 over
// x = (p, v), canonical J, damping on the velocity states, force input.
struct NominalSystem {
  double mass = 1.0;
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  double stiffness = 1.0;
  double damping = 0.0;

  NominalSystem() = default;
  NominalSystem(double m, Eigen::Vector2d g, double k, double d)
      : mass(m), goal(std::move(g)), stiffness(k), damping(d) {
    if (mass <= 0) throw std::invalid_argument("NominalSystem: mass must be > 0");
    if (stiffness < 0 || damping < 0)
      throw std::invalid_argument("NominalSystem: stiffness/damping must be >= 0");
  }

  PHTerms terms_at(const Vec& x) const {
    if (x.size() != 4) throw std::invalid_argument("NominalSystem: state must be (px,py,vx,vy)");
    Eigen::Vector2d p = x.head<2>(), v = x.tail<2>();
    Mat J = Mat::Zero(4, 4);
    J.topRightCorner(2, 2) = Mat::Identity(2, 2);
    J.bottomLeftCorner(2, 2) = -Mat::Identity(2, 2);
    Mat R = Mat::Zero(4, 4);
    R.bottomRightCorner(2, 2) = damping * Mat::Identity(2, 2);
    Vec gradH(4);
    gradH.head<2>() = stiffness * (p - goal);
    gradH.tail<2>() = mass * v;
    double H = 0.5 * mass * v.squaredNorm() + 0.5 * stiffness * (p - goal).squaredNorm();
    Mat G = Mat::Zero(4, 2);
    G.bottomRows(2) = Mat::Identity(2, 2);
    PHTerms t;
    t.J = J;
    t.R = R;
    t.gradH = gradH;
    t.H = H;
    t.G = G;
    return t;
  }
};

struct DampingMatrix {
  Mat D;  // m x m
};

struct Flow {
  Vec xdot;  // state derivative
  Vec y;     // conjugate output G^T gradH
};

inline Flow open_loop_dynamics(const Vec& x, const Vec& u, const PHTerms& t) {
  if (x.size() != t.n())
    throw std::invalid_argument("open_loop_dynamics: state dim " + std::to_string(x.size()) +
                                " != " + std::to_string(t.n()));
  if (u.size() != t.m())
    throw std::invalid_argument("open_loop_dynamics: input dim " + std::to_string(u.size()) +
                                " != " + std::to_string(t.m()));
  Flow f;
  f.xdot = (t.J - t.R) * t.gradH + t.G * u;
  f.y = t.G.transpose() * t.gradH;
  return f;
}

struct PowerBalance {
  double Hdot = 0.0;       // total energy rate
  double supplied = 0.0;   // u^T y
  double dissipated = 0.0; // gradH^T R gradH >= 0
};

inline PowerBalance power_balance(const Vec& x, const Vec& u, const PHTerms& t) {
  Flow f = open_loop_dynamics(x, u, t);
  PowerBalance pb;
  pb.dissipated = t.gradH.dot(t.R * t.gradH);
  pb.supplied = u.dot(f.y);
  pb.Hdot = -pb.dissipated + pb.supplied;
  return pb;
}

// Moore-Penrose left inverse (G^T G)^-1 G^T for full-column-rank G.
inline Mat pseudo_inverse(const Mat& G) {
  Eigen::JacobiSVD<Mat> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  double smin = sv(sv.size() - 1), smax = sv(0);
  if (smin <= 0.0 || smax / smin > 1e12)
    throw std::invalid_argument("pseudo_inverse: rank-deficient input, smallest singular value " +
                                std::to_string(smin));
  Mat GtG = G.transpose() * G;
  return GtG.ldlt().solve(G.transpose());
}

// Energy shaping + damping injection: u = G^+ [(J_d - R_d) gradH_d - (J - R) gradH].
// Shared input map G taken from `nominal`.
inline Vec ebpbc_policy(const Vec& x, const PHTerms& nominal, const PHTerms& desired) {
  if (nominal.n() != desired.n())
    throw std::invalid_argument("ebpbc_policy: nominal/desired state dims differ");
  Mat Gp = pseudo_inverse(nominal.G);
  Vec target = (desired.J - desired.R) * desired.gradH;
  Vec drift = (nominal.J - nominal.R) * nominal.gradH;
  return Gp * (target - drift);
}

// Damping-injection matrix for which the two controller forms coincide when
// G is square invertible: D = G^+ (J - R) G^{+T}.
inline DampingMatrix damping_injection_matrix(const PHTerms& t) {
  Mat Gp = pseudo_inverse(t.G);
  return DampingMatrix{Gp * (t.J - t.R) * Gp.transpose()};
}

// First (damping-injection) form of the controller:
// u = G^+ (J_d - R_d) gradH_d - D y.
inline Vec ebpbc_policy_di_form(const Vec& x, const PHTerms& nominal, const PHTerms& desired,
                                const DampingMatrix& D) {
  Mat Gp = pseudo_inverse(nominal.G);
  Vec y = nominal.G.transpose() * nominal.gradH;
  return Gp * (desired.J - desired.R) * desired.gradH - D.D * y;
}

// One learned pairwise block: interaction and dissipation between the robot
// and one agent.
struct PairBlock {
  Mat J;  // n x n
  Mat R;  // n x n
};

// u = G^+ ( sum_n (J_rn - R_rn) gradH_n  -  (J - R) gradH_r ), the pairwise
// policy head. `blocks` and `gradH_theta` are indexed by agent id; every id
// in `agents` must be present in both.
inline Vec ph_policy_head(const std::vector<int>& agents,
                          const std::map<int, PairBlock>& blocks,
                          const std::map<int, Vec>& gradH_theta, const PHTerms& nominal) {
  Vec acc = Vec::Zero(nominal.n());
  for (int id : agents) {
    auto bit = blocks.find(id);
    auto git = gradH_theta.find(id);
    if (bit == blocks.end() || git == gradH_theta.end())
      throw std::invalid_argument("ph_policy_head: missing pair block for agent " +
                                  std::to_string(id));
    acc += (bit->second.J - bit->second.R) * git->second;
  }
  acc -= (nominal.J - nominal.R) * nominal.gradH;
  Vec u = pseudo_inverse(nominal.G) * acc;
  if (!u.allFinite()) throw std::runtime_error("ph_policy_head: non-finite control");
  return u;
}

// Zero-order-hold explicit Euler step: s + T * f(s).
inline Vec discretize_step(const Vec& s, double T, const std::function<Vec(const Vec&)>& f) {
  if (T <= 0) throw std::invalid_argument("discretize_step: timestep must be > 0");
  Vec d = f(s);
  if (!d.allFinite()) throw std::runtime_error("discretize_step: non-finite derivative");
  return s + T * d;
}

}  // namespace hcnav::ph

#endif  // HCNAV_PH_HPP
