// Neural-network building blocks on top of the autodiff graph: parameter
// store with Adam, linear layers, layer norm, multi-head attention, and the
// versioned binary checkpoint format.

#ifndef HCNAV_NN_HPP
#define HCNAV_NN_HPP

#include <cstring>
#include <fstream>
#include <map>
#include <random>

#include "hcnav/autodiff.hpp"

namespace hcnav::nn {

using ad::Mat;
using ad::Var;

struct AdamState {
  Mat m;
  Mat v;
};

// Named parameters with paired gradient accumulators. Single writer: gradient
// accumulation and optimizer steps are serialized by the caller; snapshot()
// hands read-only copies to rollout workers.
class ParamStore {
 public:
  Var create(const std::string& name, Mat init) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    Var p = ad::leaf(std::move(init));
    grads_[name] = Mat::Zero(p->value.rows(), p->value.cols());
    params_[name] = p;
    return p;
  }

  Var get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad() {
    for (auto& kv : grads_) kv.second.setZero();
  }

  // Run backward from a scalar loss and add the numeric gradients into the
  // accumulator slots.
  void accumulate(const Var& loss) {
    std::vector<std::string> names;
    std::vector<Var> wrt;
    for (auto& kv : params_) {
      names.push_back(kv.first);
      wrt.push_back(kv.second);
    }
    std::vector<Var> gs = ad::gradients(loss, wrt);
    for (size_t i = 0; i < names.size(); ++i) grads_[names[i]] += gs[i]->value;
  }

  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8) {
    ++step_count_;
    double c1 = 1.0 - std::pow(beta1, step_count_);
    double c2 = 1.0 - std::pow(beta2, step_count_);
    for (auto& kv : params_) {
      Mat& g = grads_[kv.first];
      AdamState& st = adam_[kv.first];
      if (st.m.size() == 0) {
        st.m = Mat::Zero(g.rows(), g.cols());
        st.v = Mat::Zero(g.rows(), g.cols());
      }
      st.m = beta1 * st.m + (1 - beta1) * g;
      st.v = beta2 * st.v + (1 - beta2) * g.cwiseProduct(g);
      Mat mhat = st.m / c1;
      Mat vhat = st.v / c2;
      kv.second->value -=
          lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + Mat::Constant(g.rows(), g.cols(), eps));
    }
    ++version_;
  }

  std::uint64_t version() const { return version_; }

  const std::map<std::string, Var>& params() const { return params_; }
  const Mat& grad(const std::string& name) const { return grads_.at(name); }
  Mat& grad_slot(const std::string& name) { return grads_.at(name); }

  // Deep copy of parameter values (fresh leaves, no optimizer state).
  ParamStore snapshot() const {
    ParamStore out;
    for (const auto& kv : params_) out.create(kv.first, kv.second->value);
    out.version_ = version_;
    return out;
  }

  void load_values(const std::map<std::string, Mat>& values) {
    for (const auto& kv : values) {
      auto it = params_.find(kv.first);
      if (it == params_.end()) throw std::out_of_range("checkpoint names unknown parameter " + kv.first);
      if (it->second->value.rows() != kv.second.rows() ||
          it->second->value.cols() != kv.second.cols())
        throw std::invalid_argument("checkpoint shape mismatch for " + kv.first);
      it->second->value = kv.second;
    }
  }

 private:
  std::map<std::string, Var> params_;
  std::map<std::string, Mat> grads_;
  std::map<std::string, AdamState> adam_;
  std::uint64_t version_ = 0;
  std::int64_t step_count_ = 0;
};

// Glorot-uniform init, biases zero.
inline Mat glorot(Eigen::Index fan_out, Eigen::Index fan_in, std::mt19937_64& rng) {
  double a = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  Mat w(fan_out, fan_in);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
  return w;
}

// y[b] = W x[b] + bias, batch in rows.
inline Var linear_forward(const Var& weights, const Var& bias, const Var& input) {
  if (weights->value.cols() != input->value.cols())
    throw std::invalid_argument(
        "linear_forward: weights [" + std::to_string(weights->value.rows()) + "x" +
        std::to_string(weights->value.cols()) + "] incompatible with input [" +
        std::to_string(input->value.rows()) + "x" + std::to_string(input->value.cols()) + "]");
  if (bias->value.size() != weights->value.rows())
    throw std::invalid_argument("linear_forward: bias size " +
                                std::to_string(bias->value.size()) + " != out dim " +
                                std::to_string(weights->value.rows()));
  Var y = ad::matmul(input, ad::transpose(weights));
  Var brow = bias->value.rows() == 1 ? bias : ad::transpose(bias);
  return ad::add(y, ad::bcast_rows(brow, input->value.rows()));
}

struct Linear {
  Var W;  // [out x in]
  Var b;  // [1 x out]

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
         std::mt19937_64& rng) {
    W = store.create(name + ".W", glorot(out, in, rng));
    b = store.create(name + ".b", Mat::Zero(1, out));
  }
  static Linear from(const ParamStore& store, const std::string& name) {
    Linear l;
    l.W = store.get(name + ".W");
    l.b = store.get(name + ".b");
    return l;
  }
  Var operator()(const Var& x) const { return linear_forward(W, b, x); }
};

struct LayerNorm {
  Var gamma;  // [1 x d]
  Var beta;   // [1 x d]

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Eigen::Index d) {
    gamma = store.create(name + ".gamma", Mat::Ones(1, d));
    beta = store.create(name + ".beta", Mat::Zero(1, d));
  }
  static LayerNorm from(const ParamStore& store, const std::string& name) {
    LayerNorm l;
    l.gamma = store.get(name + ".gamma");
    l.beta = store.get(name + ".beta");
    return l;
  }

  Var operator()(const Var& x) const {
    Eigen::Index m = x->value.rows(), n = x->value.cols();
    Var mean = ad::scale(ad::rowsum(x), 1.0 / double(n));
    Var c = ad::sub(x, ad::bcast_cols(mean, n));
    Var var = ad::scale(ad::rowsum(ad::mul(c, c)), 1.0 / double(n));
    Var inv = ad::recip(ad::sqrt_(ad::add(var, ad::constant(Mat::Constant(m, 1, 1e-8)))));
    Var xn = ad::mul(c, ad::bcast_cols(inv, n));
    return ad::add(ad::mul(xn, ad::bcast_rows(gamma, m)), ad::bcast_rows(beta, m));
  }
};

// Single-head scaled dot-product attention over one sequence:
// softmax(Q K^T / sqrt(d)) V, with an optional [len x len] admissibility mask
// (nonzero = attend).
inline Var attention_core(const Var& q, const Var& k, const Var& v,
                          const Mat* mask = nullptr) {
  if (q->value.cols() != k->value.cols() || k->value.rows() != v->value.rows())
    throw std::invalid_argument("attention_core: incompatible Q/K/V shapes");
  if (q->value.cols() <= 0) throw std::invalid_argument("attention_core: d must be > 0");
  double s = 1.0 / std::sqrt(double(q->value.cols()));
  Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), s);
  Var p = ad::softmax_rows(scores, mask);
  return ad::matmul(p, v);
}

// Batched convenience wrapper matching the [batch x len x d] contract.
inline std::vector<Var> attention_forward(const std::vector<Var>& queries,
                                          const std::vector<Var>& keys,
                                          const std::vector<Var>& values,
                                          const Mat* mask = nullptr) {
  if (queries.size() != keys.size() || keys.size() != values.size())
    throw std::invalid_argument("attention_forward: batch sizes differ");
  std::vector<Var> out;
  out.reserve(queries.size());
  for (size_t b = 0; b < queries.size(); ++b)
    out.push_back(attention_core(queries[b], keys[b], values[b], mask));
  return out;
}

// Multi-head self-attention block with residual + layer norm.
struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  LayerNorm norm;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, Eigen::Index d, int n_heads,
                     std::mt19937_64& rng)
      : wq(store, name + ".q", d, d, rng),
        wk(store, name + ".k", d, d, rng),
        wv(store, name + ".v", d, d, rng),
        wo(store, name + ".o", d, d, rng),
        norm(store, name + ".ln", d),
        heads(n_heads) {
    if (d % n_heads != 0) throw std::invalid_argument("d must divide by head count");
  }
  static MultiHeadAttention from(const ParamStore& store, const std::string& name, int n_heads) {
    MultiHeadAttention m;
    m.wq = Linear::from(store, name + ".q");
    m.wk = Linear::from(store, name + ".k");
    m.wv = Linear::from(store, name + ".v");
    m.wo = Linear::from(store, name + ".o");
    m.norm = LayerNorm::from(store, name + ".ln");
    m.heads = n_heads;
    return m;
  }

  // x: [len x d]; queries/keys/values all derived from x (self-attention).
  Var operator()(const Var& x, const Mat* mask = nullptr) const {
    Eigen::Index d = x->value.cols();
    Eigen::Index dh = d / heads;
    Var q = wq(x), k = wk(x), v = wv(x);
    std::vector<Var> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Var qh = ad::select_cols(q, h * dh, dh);
      Var kh = ad::select_cols(k, h * dh, dh);
      Var vh = ad::select_cols(v, h * dh, dh);
      outs.push_back(attention_core(qh, kh, vh, mask));
    }
    Var o = wo(ad::concat_cols(outs));
    return norm(ad::add(x, o));
  }
};

struct Mlp {
  Linear l1, l2;

  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
      Eigen::Index out, std::mt19937_64& rng)
      : l1(store, name + ".1", in, hidden, rng), l2(store, name + ".2", hidden, out, rng) {}
  static Mlp from(const ParamStore& store, const std::string& name) {
    Mlp m;
    m.l1 = Linear::from(store, name + ".1");
    m.l2 = Linear::from(store, name + ".2");
    return m;
  }
  Var operator()(const Var& x) const { return l2(ad::tanh_(l1(x))); }
};

// ---- checkpoint format ----------------------------------------------------
//
//   magic "HCNAVCKP" | u32 version (=1) | u64 config length | config bytes |
//   u64 tensor count | per tensor: u32 name length, name bytes, u64 rows,
//   u64 cols, rows*cols f64 little-endian values.

inline constexpr char kCheckpointMagic[8] = {'H', 'C', 'N', 'A', 'V', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ParamStore& store,
                            const std::string& config_json = "") {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kCheckpointMagic, 8);
  std::uint32_t ver = kCheckpointVersion;
  f.write(reinterpret_cast<const char*>(&ver), 4);
  std::uint64_t clen = config_json.size();
  f.write(reinterpret_cast<const char*>(&clen), 8);
  f.write(config_json.data(), static_cast<std::streamsize>(clen));
  std::uint64_t count = store.params().size();
  f.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& kv : store.params()) {
    std::uint32_t nlen = static_cast<std::uint32_t>(kv.first.size());
    f.write(reinterpret_cast<const char*>(&nlen), 4);
    f.write(kv.first.data(), nlen);
    std::uint64_t r = kv.second->value.rows(), c = kv.second->value.cols();
    f.write(reinterpret_cast<const char*>(&r), 8);
    f.write(reinterpret_cast<const char*>(&c), 8);
    for (Eigen::Index i = 0; i < kv.second->value.rows(); ++i)
      for (Eigen::Index j = 0; j < kv.second->value.cols(); ++j) {
        double v = kv.second->value(i, j);
        f.write(reinterpret_cast<const char*>(&v), 8);
      }
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

struct Checkpoint {
  std::string config_json;
  std::map<std::string, Mat> tensors;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), 4);
  if (ver != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(ver));
  Checkpoint out;
  std::uint64_t clen = 0;
  f.read(reinterpret_cast<char*>(&clen), 8);
  out.config_json.resize(clen);
  f.read(out.config_json.data(), static_cast<std::streamsize>(clen));
  std::uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 8);
  for (std::uint64_t t = 0; t < count; ++t) {
    std::uint32_t nlen = 0;
    f.read(reinterpret_cast<char*>(&nlen), 4);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    std::uint64_t r = 0, c = 0;
    f.read(reinterpret_cast<char*>(&r), 8);
    f.read(reinterpret_cast<char*>(&c), 8);
    Mat m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double v;
        f.read(reinterpret_cast<char*>(&v), 8);
        m(i, j) = v;
      }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    out.tensors[name] = std::move(m);
  }
  return out;
}

}  // namespace hcnav::nn

#endif  // HCNAV_NN_HPP
