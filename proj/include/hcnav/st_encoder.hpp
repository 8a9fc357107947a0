// Spatial-temporal attention encoder and the heads that map fused features
// into learned Hamiltonian terms (pairwise interaction blocks, dissipation
// blocks, and the scalar energy with its state gradient).

#ifndef HCNAV_ST_ENCODER_HPP
#define HCNAV_ST_ENCODER_HPP

#include "hcnav/crowd_env.hpp"
#include "hcnav/nn.hpp"

namespace hcnav::enc {

using ad::Mat;
using ad::Var;

// Raw per-agent per-step features. Humans carry zeros in the private goal /
// preferred-speed slots.
inline constexpr int kRawDim = 9;  // px py vx vy rho gx gy v_pref is_robot
inline constexpr int kStateDim = 4;  // leading (px, py, vx, vy) block

// Last-T-steps stacked observations; agent 0 is the robot. Row (i*T + t)
// holds agent i at window position t (t = T-1 newest).
struct ObservationWindow {
  int N = 0;
  int T = 0;
  Mat features;  // [N*T x kRawDim]

  Eigen::Index row(int agent, int t) const { return agent * T + t; }
};

// Rolling window assembler: repeats the oldest observation until T real
// frames exist.
class WindowBuffer {
 public:
  explicit WindowBuffer(int T) : T_(T) {}
  void clear() { frames_.clear(); }
  void push(const env::Observation& obs);
  ObservationWindow window() const;

 private:
  int T_;
  std::vector<Mat> frames_;  // each [N x kRawDim]
};

Mat raw_features(const env::Observation& obs);

struct EncoderConfig {
  int d = 32;
  int heads = 2;
  int T = 5;
  int hidden = 32;
};

struct FusedFeatures {
  Var Y_S;   // [N*T x d]
  Var Y_T;   // [N*T x d]
  Var Y_F;   // [N*T x d]
  Var F_R;   // [N*N x d], pairwise, row (i*N + j)
  Var pooled;  // [N x d], time-mean of Y_F
  int N = 0;
  int T = 0;
};

// Learned Hamiltonian terms over the agent graph. Off-diagonal dissipation
// blocks are diagonal 4x4 matrices; with nonnegative entries and the
// diagonal-dominant self block the full R is PSD. J blocks are exactly skew
// blockwise by antisymmetrization.
struct LearnedHamiltonian {
  int N = 0;
  // robot-row blocks (r = 0), one per agent, kept on the tape for the policy
  std::vector<Var> J_r;      // each [4 x 4]
  std::vector<Var> R_r_diag; // each [1 x 4], diagonal of the block
  std::vector<Var> gradH;    // each [4 x 1], d H_theta / d x_i at the newest frame
  Var H;  // [1 x 1]
  Var E;
  Var U;
  // dense assemblies (values only, for diagnostics and tests)
  Mat J_full;  // [4N x 4N]
  Mat R_full;  // [4N x 4N]
};

class STEncoder {
 public:
  STEncoder() = default;
  STEncoder(nn::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);
  // Rebind to parameters already present in a store (e.g. a snapshot).
  static STEncoder from(const nn::ParamStore& store, const EncoderConfig& cfg);

  FusedFeatures encode(const Var& window, int N, int T) const;
  LearnedHamiltonian hamiltonian_heads(const FusedFeatures& f, const Var& window) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  nn::Linear embed_;
  nn::MultiHeadAttention spatial_, temporal_, fusion_;
  nn::Linear fuse_in_;
  nn::Linear mix_self_, mix_other_, mix_prod_;
  nn::Linear head_R_;   // d -> 4
  nn::Linear head_J_;   // d -> 16
  nn::Linear proj_K_, proj_M_;  // d -> d
  nn::Mlp head_E_, head_U_;     // (d + kStateDim) -> hidden -> 1
};

}  // namespace hcnav::enc

#endif  // HCNAV_ST_ENCODER_HPP
