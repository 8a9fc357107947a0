// Reverse-mode automatic differentiation on dense Eigen matrices.
//
// Graphs are built eagerly: every op computes its value immediately and
// records a VJP closure. The VJP closures build graph nodes themselves, so
// gradients are differentiable again (needed to push loss gradients through
// the learned Hamiltonian gradient).

#ifndef HCNAV_AUTODIFF_HPP
#define HCNAV_AUTODIFF_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace hcnav::ad {

using Mat = Eigen::MatrixXd;

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Mat value;
  bool requires_grad = false;
  std::vector<Var> parents;
  // Maps the gradient w.r.t. this node to gradients w.r.t. each parent.
  std::function<std::vector<Var>(const Var& self, const Var& grad)> vjp;
  std::uint64_t id = 0;
};

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline void check_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string("non-finite values in ") + what);
  }
}

inline Var constant(Mat value) {
  check_finite(value, "constant");
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = false;
  n->id = next_node_id();
  return n;
}

inline Var scalar(double v) { return constant(Mat::Constant(1, 1, v)); }

inline Var leaf(Mat value) {
  check_finite(value, "leaf");
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->id = next_node_id();
  return n;
}

inline Var make_op(Mat value, std::vector<Var> parents,
                   std::function<std::vector<Var>(const Var&, const Var&)> vjp) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  if (n->requires_grad) n->vjp = std::move(vjp);
  n->id = next_node_id();
  return n;
}

[[noreturn]] inline void shape_error(const char* op, const Mat& a, const Mat& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch [" +
                              std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                              "] vs [" + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()) + "]");
}

// ---- arithmetic -----------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    shape_error("add", a->value, b->value);
  return make_op(a->value + b->value, {a, b},
                 [](const Var&, const Var& g) { return std::vector<Var>{g, g}; });
}

inline Var sub(const Var& a, const Var& b);
inline Var neg(const Var& a);
inline Var mul(const Var& a, const Var& b);
inline Var scale(const Var& a, double c);

inline Var neg(const Var& a) {
  return make_op(-a->value, {a},
                 [](const Var&, const Var& g) { return std::vector<Var>{neg(g)}; });
}

inline Var sub(const Var& a, const Var& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    shape_error("sub", a->value, b->value);
  return make_op(a->value - b->value, {a, b}, [](const Var&, const Var& g) {
    return std::vector<Var>{g, neg(g)};
  });
}

inline Var mul(const Var& a, const Var& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    shape_error("mul", a->value, b->value);
  return make_op(a->value.cwiseProduct(b->value), {a, b},
                 [](const Var& self, const Var& g) {
                   return std::vector<Var>{mul(g, self->parents[1]),
                                           mul(g, self->parents[0])};
                 });
}

inline Var scale(const Var& a, double c) {
  return make_op(a->value * c, {a}, [c](const Var&, const Var& g) {
    return std::vector<Var>{scale(g, c)};
  });
}

inline Var matmul(const Var& a, const Var& b);
inline Var transpose(const Var& a);

inline Var transpose(const Var& a) {
  return make_op(a->value.transpose(), {a}, [](const Var&, const Var& g) {
    return std::vector<Var>{transpose(g)};
  });
}

inline Var matmul(const Var& a, const Var& b) {
  if (a->value.cols() != b->value.rows()) shape_error("matmul", a->value, b->value);
  return make_op(a->value * b->value, {a, b}, [](const Var& self, const Var& g) {
    return std::vector<Var>{matmul(g, transpose(self->parents[1])),
                            matmul(transpose(self->parents[0]), g)};
  });
}

// ---- reductions / broadcasts ---------------------------------------------

inline Var rowsum(const Var& a);
inline Var colsum(const Var& a);
inline Var bcast_cols(const Var& v, Eigen::Index n);
inline Var bcast_rows(const Var& v, Eigen::Index m);

inline Var rowsum(const Var& a) {
  Mat out = a->value.rowwise().sum();
  Eigen::Index n = a->value.cols();
  return make_op(std::move(out), {a}, [n](const Var&, const Var& g) {
    return std::vector<Var>{bcast_cols(g, n)};
  });
}

inline Var colsum(const Var& a) {
  Mat out = a->value.colwise().sum();
  Eigen::Index m = a->value.rows();
  return make_op(std::move(out), {a}, [m](const Var&, const Var& g) {
    return std::vector<Var>{bcast_rows(g, m)};
  });
}

// replicate a column vector [m x 1] across n columns
inline Var bcast_cols(const Var& v, Eigen::Index n) {
  if (v->value.cols() != 1) throw std::invalid_argument("bcast_cols: expects column vector");
  return make_op(v->value.replicate(1, n), {v}, [](const Var&, const Var& g) {
    return std::vector<Var>{rowsum(g)};
  });
}

// replicate a row vector [1 x n] across m rows
inline Var bcast_rows(const Var& v, Eigen::Index m) {
  if (v->value.rows() != 1) throw std::invalid_argument("bcast_rows: expects row vector");
  return make_op(v->value.replicate(m, 1), {v}, [](const Var&, const Var& g) {
    return std::vector<Var>{colsum(g)};
  });
}

inline Var sum_all(const Var& a);
inline Var bcast_scalar(const Var& s, Eigen::Index m, Eigen::Index n);

inline Var sum_all(const Var& a) {
  Mat out = Mat::Constant(1, 1, a->value.sum());
  Eigen::Index m = a->value.rows(), n = a->value.cols();
  return make_op(std::move(out), {a}, [m, n](const Var&, const Var& g) {
    return std::vector<Var>{bcast_scalar(g, m, n)};
  });
}

inline Var bcast_scalar(const Var& s, Eigen::Index m, Eigen::Index n) {
  if (s->value.size() != 1) throw std::invalid_argument("bcast_scalar: expects 1x1");
  return make_op(Mat::Constant(m, n, s->value(0, 0)), {s},
                 [](const Var&, const Var& g) { return std::vector<Var>{sum_all(g)}; });
}

// ---- elementwise nonlinearities ------------------------------------------

inline Var tanh_(const Var& a) {
  return make_op(a->value.array().tanh().matrix(), {a}, [](const Var& self, const Var& g) {
    Var ones = constant(Mat::Ones(self->value.rows(), self->value.cols()));
    Var y = self;  // reuse computed output
    return std::vector<Var>{mul(g, sub(ones, mul(y, y)))};
  });
}

inline Var sigmoid_(const Var& a) {
  Mat y = (1.0 / (1.0 + (-a->value.array()).exp())).matrix();
  return make_op(std::move(y), {a}, [](const Var& self, const Var& g) {
    Var ones = constant(Mat::Ones(self->value.rows(), self->value.cols()));
    return std::vector<Var>{mul(g, mul(self, sub(ones, self)))};
  });
}

inline Var softplus_(const Var& a) {
  // log1p(exp(-|x|)) + max(x, 0), stable for large |x|
  Mat y = a->value.unaryExpr([](double x) {
    return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
  });
  return make_op(std::move(y), {a}, [](const Var& self, const Var& g) {
    return std::vector<Var>{mul(g, sigmoid_(self->parents[0]))};
  });
}

inline Var exp_(const Var& a) {
  return make_op(a->value.array().exp().matrix(), {a}, [](const Var& self, const Var& g) {
    return std::vector<Var>{mul(g, self)};
  });
}

inline Var recip(const Var& a);

inline Var log_(const Var& a) {
  return make_op(a->value.array().log().matrix(), {a}, [](const Var& self, const Var& g) {
    return std::vector<Var>{mul(g, recip(self->parents[0]))};
  });
}

inline Var recip(const Var& a) {
  return make_op(a->value.cwiseInverse(), {a}, [](const Var& self, const Var& g) {
    return std::vector<Var>{neg(mul(g, mul(self, self)))};
  });
}

inline Var sqrt_(const Var& a) {
  return make_op(a->value.cwiseSqrt(), {a}, [](const Var& self, const Var& g) {
    return std::vector<Var>{mul(g, scale(recip(self), 0.5))};
  });
}

// ---- structural ops -------------------------------------------------------

inline Var select_rows(const Var& a, std::vector<Eigen::Index> idx);
inline Var scatter_rows(const Var& a, std::vector<Eigen::Index> idx, Eigen::Index total);

inline Var select_rows(const Var& a, std::vector<Eigen::Index> idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), a->value.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a->value.rows())
      throw std::out_of_range("select_rows: index " + std::to_string(idx[i]));
    out.row(static_cast<Eigen::Index>(i)) = a->value.row(idx[i]);
  }
  Eigen::Index total = a->value.rows();
  return make_op(std::move(out), {a}, [idx, total](const Var&, const Var& g) {
    return std::vector<Var>{scatter_rows(g, idx, total)};
  });
}

inline Var scatter_rows(const Var& a, std::vector<Eigen::Index> idx, Eigen::Index total) {
  Mat out = Mat::Zero(total, a->value.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    out.row(idx[i]) += a->value.row(static_cast<Eigen::Index>(i));
  }
  return make_op(std::move(out), {a}, [idx](const Var&, const Var& g) {
    return std::vector<Var>{select_rows(g, idx)};
  });
}

inline Var slice_rows(const Var& a, Eigen::Index r0, Eigen::Index len) {
  std::vector<Eigen::Index> idx(static_cast<size_t>(len));
  for (Eigen::Index i = 0; i < len; ++i) idx[static_cast<size_t>(i)] = r0 + i;
  return select_rows(a, std::move(idx));
}

inline Var select_cols(const Var& a, Eigen::Index c0, Eigen::Index len);
inline Var scatter_cols(const Var& a, Eigen::Index c0, Eigen::Index total);

inline Var select_cols(const Var& a, Eigen::Index c0, Eigen::Index len) {
  if (c0 < 0 || c0 + len > a->value.cols())
    throw std::out_of_range("select_cols: range out of bounds");
  Mat out = a->value.middleCols(c0, len);
  Eigen::Index total = a->value.cols();
  return make_op(std::move(out), {a}, [c0, total](const Var&, const Var& g) {
    return std::vector<Var>{scatter_cols(g, c0, total)};
  });
}

inline Var scatter_cols(const Var& a, Eigen::Index c0, Eigen::Index total) {
  Mat out = Mat::Zero(a->value.rows(), total);
  out.middleCols(c0, a->value.cols()) = a->value;
  Eigen::Index len = a->value.cols();
  return make_op(std::move(out), {a}, [c0, len](const Var&, const Var& g) {
    return std::vector<Var>{select_cols(g, c0, len)};
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Eigen::Index rows = 0, cols = parts[0]->value.cols();
  for (const auto& p : parts) {
    if (p->value.cols() != cols) shape_error("concat_rows", parts[0]->value, p->value);
    rows += p->value.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  std::vector<Eigen::Index> offsets;
  std::vector<Eigen::Index> lens;
  for (const auto& p : parts) {
    out.middleRows(r, p->value.rows()) = p->value;
    offsets.push_back(r);
    lens.push_back(p->value.rows());
    r += p->value.rows();
  }
  return make_op(std::move(out), parts, [offsets, lens](const Var&, const Var& g) {
    std::vector<Var> grads;
    for (size_t i = 0; i < offsets.size(); ++i)
      grads.push_back(slice_rows(g, offsets[i], lens[i]));
    return grads;
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Eigen::Index cols = 0, rows = parts[0]->value.rows();
  for (const auto& p : parts) {
    if (p->value.rows() != rows) shape_error("concat_cols", parts[0]->value, p->value);
    cols += p->value.cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  std::vector<Eigen::Index> offsets, lens;
  for (const auto& p : parts) {
    out.middleCols(c, p->value.cols()) = p->value;
    offsets.push_back(c);
    lens.push_back(p->value.cols());
    c += p->value.cols();
  }
  return make_op(std::move(out), parts, [offsets, lens](const Var&, const Var& g) {
    std::vector<Var> grads;
    for (size_t i = 0; i < offsets.size(); ++i)
      grads.push_back(select_cols(g, offsets[i], lens[i]));
    return grads;
  });
}

// row-major reshape
inline Var reshape(const Var& a, Eigen::Index r, Eigen::Index c) {
  if (a->value.size() != r * c)
    throw std::invalid_argument("reshape: size mismatch");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMat rm = a->value;
  Eigen::Map<RowMat> view(rm.data(), r, c);
  Mat out = view;
  Eigen::Index ar = a->value.rows(), ac = a->value.cols();
  return make_op(std::move(out), {a}, [ar, ac](const Var&, const Var& g) {
    return std::vector<Var>{reshape(g, ar, ac)};
  });
}

// ---- softmax --------------------------------------------------------------

// Rowwise softmax; entries where mask(r,c) == 0 get zero probability. A row
// with no admissible entry is an error (undefined softmax).
inline Var softmax_rows(const Var& a, const Mat* mask = nullptr) {
  const Mat& x = a->value;
  if (mask && (mask->rows() != x.rows() || mask->cols() != x.cols()))
    shape_error("softmax_rows mask", x, *mask);
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (!mask || (*mask)(r, c) != 0.0) mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx))
      throw std::invalid_argument("softmax_rows: fully masked row " + std::to_string(r));
    double z = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double e = (!mask || (*mask)(r, c) != 0.0) ? std::exp(x(r, c) - mx) : 0.0;
      y(r, c) = e;
      z += e;
    }
    y.row(r) /= z;
  }
  return make_op(std::move(y), {a}, [](const Var& self, const Var& g) {
    // dL/dx = y * (g - rowsum(g*y))
    Var gy = mul(g, self);
    Var corr = bcast_cols(rowsum(gy), self->value.cols());
    return std::vector<Var>{mul(self, sub(g, corr))};
  });
}

// ---- backward -------------------------------------------------------------

// Gradient of a scalar output w.r.t. each of `wrt`. The returned gradients
// are graph nodes themselves, so they can be differentiated again.
inline std::vector<Var> gradients(const Var& output, const std::vector<Var>& wrt) {
  if (output->value.size() != 1)
    throw std::invalid_argument("gradients: output must be scalar, got [" +
                                std::to_string(output->value.rows()) + "x" +
                                std::to_string(output->value.cols()) + "]");
  // collect reachable grad-requiring subgraph
  std::unordered_map<Node*, Var> reach;
  std::vector<Var> stack{output};
  while (!stack.empty()) {
    Var n = stack.back();
    stack.pop_back();
    if (!n->requires_grad) continue;
    if (reach.count(n.get())) continue;
    reach.emplace(n.get(), n);
    for (const auto& p : n->parents) stack.push_back(p);
  }
  std::vector<Var> order;
  order.reserve(reach.size());
  for (auto& kv : reach) order.push_back(kv.second);
  std::sort(order.begin(), order.end(),
            [](const Var& a, const Var& b) { return a->id > b->id; });

  std::unordered_map<Node*, Var> gmap;
  if (reach.count(output.get())) gmap[output.get()] = constant(Mat::Ones(1, 1));
  for (const auto& n : order) {
    auto it = gmap.find(n.get());
    if (it == gmap.end() || !n->vjp) continue;
    std::vector<Var> pgrads = n->vjp(n, it->second);
    for (size_t i = 0; i < n->parents.size(); ++i) {
      const Var& p = n->parents[i];
      if (!p->requires_grad) continue;
      auto pit = gmap.find(p.get());
      if (pit == gmap.end())
        gmap[p.get()] = pgrads[i];
      else
        pit->second = add(pit->second, pgrads[i]);
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = gmap.find(w.get());
    if (it != gmap.end())
      out.push_back(it->second);
    else
      out.push_back(constant(Mat::Zero(w->value.rows(), w->value.cols())));
  }
  return out;
}

}  // namespace hcnav::ad

#endif  // HCNAV_AUTODIFF_HPP
