#include "hcnav/st_encoder.hpp"

namespace hcnav::enc {

using namespace hcnav::ad;

Mat raw_features(const env::Observation& obs) {
  int N = 1 + static_cast<int>(obs.humans.size());
  Mat f = Mat::Zero(N, kRawDim);
  const env::AgentState& r = obs.robot;
  f.row(0) << r.p.x(), r.p.y(), r.v.x(), r.v.y(), r.rho, r.g.x(), r.g.y(), r.v_pref, 1.0;
  for (size_t i = 0; i < obs.humans.size(); ++i) {
    const env::AgentState& h = obs.humans[i];
    // private fields (goal, v_pref) stay zero
    f.row(static_cast<Eigen::Index>(i) + 1) << h.p.x(), h.p.y(), h.v.x(), h.v.y(), h.rho, 0.0,
        0.0, 0.0, 0.0;
  }
  return f;
}

void WindowBuffer::push(const env::Observation& obs) {
  frames_.push_back(raw_features(obs));
  if (static_cast<int>(frames_.size()) > T_) frames_.erase(frames_.begin());
}

ObservationWindow WindowBuffer::window() const {
  if (frames_.empty()) throw std::runtime_error("WindowBuffer: no frames pushed");
  int N = static_cast<int>(frames_.back().rows());
  ObservationWindow w;
  w.N = N;
  w.T = T_;
  w.features = Mat::Zero(static_cast<Eigen::Index>(N) * T_, kRawDim);
  int missing = T_ - static_cast<int>(frames_.size());
  for (int t = 0; t < T_; ++t) {
    const Mat& frame = frames_[static_cast<size_t>(std::max(0, t - missing))];
    if (frame.rows() != N) throw std::runtime_error("WindowBuffer: agent count changed mid-episode");
    for (int i = 0; i < N; ++i) w.features.row(w.row(i, t)) = frame.row(i);
  }
  return w;
}

STEncoder::STEncoder(nn::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg),
      embed_(store, "enc.embed", kRawDim, cfg.d, rng),
      spatial_(store, "enc.spatial", cfg.d, cfg.heads, rng),
      temporal_(store, "enc.temporal", cfg.d, cfg.heads, rng),
      fusion_(store, "enc.fusion", cfg.d, cfg.heads, rng),
      fuse_in_(store, "enc.fuse_in", 2 * cfg.d, cfg.d, rng),
      mix_self_(store, "enc.mix_self", cfg.d, cfg.d, rng),
      mix_other_(store, "enc.mix_other", cfg.d, cfg.d, rng),
      mix_prod_(store, "enc.mix_prod", cfg.d, cfg.d, rng),
      head_R_(store, "enc.head_R", cfg.d, 4, rng),
      head_J_(store, "enc.head_J", cfg.d, 16, rng),
      proj_K_(store, "enc.proj_K", cfg.d, cfg.d, rng),
      proj_M_(store, "enc.proj_M", cfg.d, cfg.d, rng),
      head_E_(store, "enc.head_E", cfg.d + kStateDim, cfg.hidden, 1, rng),
      head_U_(store, "enc.head_U", cfg.d + kStateDim, cfg.hidden, 1, rng) {}

STEncoder STEncoder::from(const nn::ParamStore& store, const EncoderConfig& cfg) {
  STEncoder e;
  e.cfg_ = cfg;
  e.embed_ = nn::Linear::from(store, "enc.embed");
  e.spatial_ = nn::MultiHeadAttention::from(store, "enc.spatial", cfg.heads);
  e.temporal_ = nn::MultiHeadAttention::from(store, "enc.temporal", cfg.heads);
  e.fusion_ = nn::MultiHeadAttention::from(store, "enc.fusion", cfg.heads);
  e.fuse_in_ = nn::Linear::from(store, "enc.fuse_in");
  e.mix_self_ = nn::Linear::from(store, "enc.mix_self");
  e.mix_other_ = nn::Linear::from(store, "enc.mix_other");
  e.mix_prod_ = nn::Linear::from(store, "enc.mix_prod");
  e.head_R_ = nn::Linear::from(store, "enc.head_R");
  e.head_J_ = nn::Linear::from(store, "enc.head_J");
  e.proj_K_ = nn::Linear::from(store, "enc.proj_K");
  e.proj_M_ = nn::Linear::from(store, "enc.proj_M");
  e.head_E_ = nn::Mlp::from(store, "enc.head_E");
  e.head_U_ = nn::Mlp::from(store, "enc.head_U");
  return e;
}

FusedFeatures STEncoder::encode(const Var& window, int N, int T) const {
  if (N < 1) throw std::invalid_argument("encode: need at least one agent");
  if (T < 1) throw std::invalid_argument("encode: need at least one frame");
  if (window->value.rows() != static_cast<Eigen::Index>(N) * T ||
      window->value.cols() != kRawDim)
    throw std::invalid_argument("encode: window shape does not match (N, T)");

  Var x = embed_(window);  // [N*T x d]

  // spatial: attention across agents, per timestep
  std::vector<Var> spatial_parts(static_cast<size_t>(N) * T);
  for (int t = 0; t < T; ++t) {
    std::vector<Eigen::Index> idx(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) idx[static_cast<size_t>(i)] = static_cast<Eigen::Index>(i) * T + t;
    Var slice = select_rows(x, idx);
    Var out = spatial_(slice);
    for (int i = 0; i < N; ++i)
      spatial_parts[static_cast<size_t>(i) * T + t] = slice_rows(out, i, 1);
  }
  Var ys = concat_rows(spatial_parts);

  // temporal: attention across timesteps, per agent, causal
  Mat causal = Mat::Zero(T, T);
  for (int a = 0; a < T; ++a)
    for (int b = 0; b <= a; ++b) causal(a, b) = 1.0;
  std::vector<Var> temporal_parts;
  temporal_parts.reserve(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    Var slice = slice_rows(x, static_cast<Eigen::Index>(i) * T, T);
    temporal_parts.push_back(temporal_(slice, &causal));
  }
  Var yt = concat_rows(temporal_parts);

  // fusion: attention over all tokens of the concatenated features
  Var fused_in = fuse_in_(concat_cols({ys, yt}));
  Var yf = fusion_(fused_in);

  // time-mean pooling to per-agent vectors
  std::vector<Var> pooled_parts;
  pooled_parts.reserve(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    Var rows = slice_rows(yf, static_cast<Eigen::Index>(i) * T, T);
    pooled_parts.push_back(scale(matmul(constant(Mat::Ones(1, T)), rows), 1.0 / T));
  }
  Var pooled = concat_rows(pooled_parts);  // [N x d]

  // pairwise mixing with an elementwise-product term: row (i*N + j)
  std::vector<Eigen::Index> left(static_cast<size_t>(N) * N), right(left.size());
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      left[static_cast<size_t>(i) * N + j] = i;
      right[static_cast<size_t>(i) * N + j] = j;
    }
  Var yi = select_rows(pooled, left);
  Var yj = select_rows(pooled, right);
  Var fr = tanh_(add(add(mix_self_(yi), mix_other_(yj)), mix_prod_(mul(yi, yj))));

  FusedFeatures f;
  f.Y_S = ys;
  f.Y_T = yt;
  f.Y_F = yf;
  f.F_R = fr;
  f.pooled = pooled;
  f.N = N;
  f.T = T;
  return f;
}

LearnedHamiltonian STEncoder::hamiltonian_heads(const FusedFeatures& f, const Var& window) const {
  const int N = f.N, T = f.T;
  const Eigen::Index NN = static_cast<Eigen::Index>(N) * N;

  // R head inputs: symmetric combination -(F^ij + F^ji)
  std::vector<Eigen::Index> swap(static_cast<size_t>(NN));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      swap[static_cast<size_t>(i) * N + j] = static_cast<Eigen::Index>(j) * N + i;
  Var f_swap = select_rows(f.F_R, swap);
  Var r_off = softplus_(head_R_(neg(add(f.F_R, f_swap))));  // [N*N x 4]

  std::vector<Eigen::Index> diag_idx(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) diag_idx[static_cast<size_t>(i)] = static_cast<Eigen::Index>(i) * N + i;
  Var r_self = softplus_(head_R_(select_rows(f.F_R, diag_idx)));  // [N x 4]

  // J head: A_ij from two learned projections, antisymmetrized blockwise
  Var fk = proj_K_(f.F_R);
  Var fm = proj_M_(f.F_R);
  Var a_vals = head_J_(sub(fk, select_rows(fm, swap)));  // [N*N x 16]

  // energy heads conditioned on the newest raw state of each agent
  std::vector<Eigen::Index> newest(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i)
    newest[static_cast<size_t>(i)] = static_cast<Eigen::Index>(i) * T + (T - 1);
  Var x_new = select_cols(select_rows(window, newest), 0, kStateDim);  // [N x 4]
  Var z = concat_cols({f.pooled, x_new});
  Var e_term = sum_all(head_E_(z));
  Var u_term = sum_all(head_U_(z));
  Var h = add(e_term, u_term);

  // true gradient field: differentiate H w.r.t. the raw window entries
  Var gw = ad::gradients(h, {window})[0];  // [N*T x kRawDim]

  LearnedHamiltonian out;
  out.N = N;
  out.H = h;
  out.E = e_term;
  out.U = u_term;
  out.gradH.reserve(static_cast<size_t>(N));
  out.J_r.reserve(static_cast<size_t>(N));
  out.R_r_diag.reserve(static_cast<size_t>(N));

  // off-diagonal row sums for the diagonally dominant self block
  for (int i = 0; i < N; ++i) {
    Var g_row = select_cols(select_rows(gw, {newest[static_cast<size_t>(i)]}), 0, kStateDim);
    out.gradH.push_back(transpose(g_row));  // [4 x 1]
  }
  for (int n = 0; n < N; ++n) {
    Var a_rn = reshape(slice_rows(a_vals, static_cast<Eigen::Index>(0) * N + n, 1), 4, 4);
    Var a_nr = reshape(slice_rows(a_vals, static_cast<Eigen::Index>(n) * N + 0, 1), 4, 4);
    out.J_r.push_back(scale(sub(a_rn, transpose(a_nr)), 0.5));
    if (n == 0) {
      std::vector<Eigen::Index> offs;
      for (int j = 1; j < N; ++j) offs.push_back(static_cast<Eigen::Index>(0) * N + j);
      Var diag = slice_rows(r_self, 0, 1);
      if (!offs.empty())
        diag = add(diag, matmul(constant(Mat::Ones(1, static_cast<Eigen::Index>(offs.size()))),
                                select_rows(r_off, offs)));
      out.R_r_diag.push_back(diag);
    } else {
      out.R_r_diag.push_back(slice_rows(r_off, static_cast<Eigen::Index>(0) * N + n, 1));
    }
  }

  // dense numeric assemblies for diagnostics
  out.J_full = Mat::Zero(4 * N, 4 * N);
  out.R_full = Mat::Zero(4 * N, 4 * N);
  const Mat& av = a_vals->value;
  const Mat& ro = r_off->value;
  const Mat& rs = r_self->value;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      Eigen::Matrix<double, 1, 16> arow_ij = av.row(static_cast<Eigen::Index>(i) * N + j);
      Eigen::Matrix<double, 1, 16> arow_ji = av.row(static_cast<Eigen::Index>(j) * N + i);
      Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>> aij(arow_ij.data());
      Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>> aji(arow_ji.data());
      out.J_full.block<4, 4>(4 * i, 4 * j) = 0.5 * (Mat(aij) - Mat(aji).transpose());
      if (i != j)
        out.R_full.block<4, 4>(4 * i, 4 * j) =
            ro.row(static_cast<Eigen::Index>(i) * N + j).asDiagonal();
    }
    Eigen::Vector4d d = rs.row(i).transpose();
    for (int j = 0; j < N; ++j)
      if (j != i) d += ro.row(static_cast<Eigen::Index>(i) * N + j).transpose();
    out.R_full.block<4, 4>(4 * i, 4 * i) = d.asDiagonal();
  }
  return out;
}

}  // namespace hcnav::enc
