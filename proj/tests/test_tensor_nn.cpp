#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "hcnav/nn.hpp"

using namespace hcnav;
using ad::Mat;
using ad::Var;

TEST_CASE("linear_forward identity weights pass input through") {
  nn::ParamStore store;
  Var W = store.create("W", Mat::Identity(2, 2));
  Var b = store.create("b", Mat::Zero(1, 2));
  Mat x(1, 2);
  x << 1, 2;
  Var y = nn::linear_forward(W, b, ad::constant(x));
  CHECK(y->value(0, 0) == doctest::Approx(1.0));
  CHECK(y->value(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("linear_forward zero input yields bias rows") {
  std::mt19937_64 rng(1);
  nn::ParamStore store;
  Var W = store.create("W", nn::glorot(3, 2, rng));
  Mat bv(1, 3);
  bv << 0.5, -1.0, 2.0;
  Var b = store.create("b", bv);
  Var y = nn::linear_forward(W, b, ad::constant(Mat::Zero(4, 2)));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) CHECK(y->value(r, c) == doctest::Approx(bv(0, c)));
}

TEST_CASE("linear_forward matches triple-loop matrix multiply") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  Mat W(3, 2), x(4, 2), b(1, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) W(i, j) = u(rng);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) x(i, j) = u(rng);
  for (int j = 0; j < 3; ++j) b(0, j) = u(rng);
  nn::ParamStore store;
  Var y = nn::linear_forward(store.create("W", W), store.create("b", b), ad::constant(x));
  for (int r = 0; r < 4; ++r)
    for (int o = 0; o < 3; ++o) {
      double acc = b(0, o);
      for (int i = 0; i < 2; ++i) acc += W(o, i) * x(r, i);
      CHECK(y->value(r, o) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("linear_forward names both shapes on mismatch") {
  nn::ParamStore store;
  Var W = store.create("W", Mat::Identity(3, 3));
  Var b = store.create("b", Mat::Zero(1, 3));
  try {
    nn::linear_forward(W, b, ad::constant(Mat::Zero(2, 4)));
    FAIL("expected shape error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("3x3") != std::string::npos);
    CHECK(msg.find("2x4") != std::string::npos);
  }
}

TEST_CASE("attention with a single key returns the value row") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  Mat q(1, 4), k(1, 4), v(1, 4);
  for (int j = 0; j < 4; ++j) {
    q(0, j) = u(rng);
    k(0, j) = u(rng);
    v(0, j) = u(rng);
  }
  Var out = nn::attention_core(ad::constant(q), ad::constant(k), ad::constant(v));
  for (int j = 0; j < 4; ++j) CHECK(out->value(0, j) == doctest::Approx(v(0, j)));
}

TEST_CASE("identical keys give uniform attention: output is the value mean") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  Mat q(2, 3), k(3, 3), v(3, 3);
  Eigen::RowVector3d krow;
  krow << u(rng), u(rng), u(rng);
  for (int i = 0; i < 3; ++i) k.row(i) = krow;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) q(i, j) = u(rng);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v(i, j) = u(rng);
  Var out = nn::attention_core(ad::constant(q), ad::constant(k), ad::constant(v));
  Eigen::RowVector3d mean = v.colwise().mean();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(out->value(i, j) == doctest::Approx(mean(j)).epsilon(1e-12));
}

TEST_CASE("attention matches brute-force scalar-loop softmax(QK^T/sqrt(d))V") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  int len = 3, d = 4;
  Mat q(len, d), k(len, d), v(len, d);
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < d; ++j) {
      q(i, j) = u(rng);
      k(i, j) = u(rng);
      v(i, j) = u(rng);
    }
  Var out = nn::attention_core(ad::constant(q), ad::constant(k), ad::constant(v));
  for (int i = 0; i < len; ++i) {
    std::vector<double> scores(static_cast<size_t>(len));
    double z = 0;
    for (int j = 0; j < len; ++j) {
      double s = 0;
      for (int c = 0; c < d; ++c) s += q(i, c) * k(j, c);
      scores[static_cast<size_t>(j)] = std::exp(s / std::sqrt(double(d)));
      z += scores[static_cast<size_t>(j)];
    }
    for (int c = 0; c < d; ++c) {
      double acc = 0;
      for (int j = 0; j < len; ++j) acc += scores[static_cast<size_t>(j)] / z * v(j, c);
      CHECK(out->value(i, c) == doctest::Approx(acc).epsilon(1e-10));
    }
  }
}

TEST_CASE("attention rows are probability vectors") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-2, 2);
  Mat s(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) s(i, j) = u(rng);
  Var p = ad::softmax_rows(ad::constant(s));
  for (int i = 0; i < 5; ++i) {
    double row = 0;
    for (int j = 0; j < 5; ++j) {
      CHECK(p->value(i, j) >= 0.0);
      row += p->value(i, j);
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("fully-masked query row is rejected") {
  Mat s = Mat::Zero(2, 2);
  Mat mask = Mat::Zero(2, 2);
  mask(0, 0) = 1;
  mask(0, 1) = 1;
  CHECK_THROWS_AS((void)ad::softmax_rows(ad::constant(s), &mask), std::invalid_argument);
}

TEST_CASE("backward on non-scalar output is rejected") {
  Var p = ad::leaf(Mat::Ones(2, 2));
  CHECK_THROWS_AS((void)ad::gradients(p, {p}), std::invalid_argument);
}

TEST_CASE("gradient of sum(p) is all ones") {
  Var p = ad::leaf(Mat::Random(3, 2));
  Var loss = ad::sum_all(p);
  std::vector<Var> g = ad::gradients(loss, {p});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) CHECK(g[0]->value(i, j) == doctest::Approx(1.0));
}

TEST_CASE("gradient of half squared norm equals p") {
  Var p = ad::leaf(Mat::Random(2, 3));
  Var loss = ad::scale(ad::sum_all(ad::mul(p, p)), 0.5);
  std::vector<Var> g = ad::gradients(loss, {p});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(g[0]->value(i, j) == doctest::Approx(p->value(i, j)));
}

TEST_CASE("non-participating parameters get zero gradient") {
  Var p = ad::leaf(Mat::Ones(1, 2));
  Var q = ad::leaf(Mat::Ones(1, 2));
  std::vector<Var> g = ad::gradients(ad::sum_all(p), {p, q});
  CHECK(g[1]->value.isZero(0.0));
}

namespace {

// Central finite differences against the analytic gradient of an arbitrary
// scalar-valued builder, max relative error.
double fd_check(const std::vector<Var>& leaves, const std::function<Var()>& build,
                double h = 1e-5) {
  Var loss = build();
  std::vector<Var> grads = ad::gradients(loss, leaves);
  double max_rel = 0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Mat& val = leaves[li]->value;
    for (Eigen::Index i = 0; i < val.rows(); ++i)
      for (Eigen::Index j = 0; j < val.cols(); ++j) {
        double orig = val(i, j);
        val(i, j) = orig + h;
        double up = build()->value(0, 0);
        val(i, j) = orig - h;
        double dn = build()->value(0, 0);
        val(i, j) = orig;
        double fd = (up - dn) / (2 * h);
        double an = grads[li]->value(i, j);
        double rel = std::abs(fd - an) / std::max(1.0, std::max(std::abs(fd), std::abs(an)));
        max_rel = std::max(max_rel, rel);
      }
  }
  return max_rel;
}

}  // namespace

TEST_CASE("two-layer network gradient matches central finite differences") {
  std::mt19937_64 rng(11);
  nn::ParamStore store;
  nn::Linear l1(store, "l1", 3, 4, rng);
  nn::Linear l2(store, "l2", 4, 1, rng);
  Mat x = Mat::Random(2, 3);
  Mat target = Mat::Random(2, 1);
  auto build = [&]() {
    Var y = l2(ad::tanh_(l1(ad::constant(x))));
    Var err = ad::sub(y, ad::constant(target));
    return ad::sum_all(ad::mul(err, err));
  };
  double rel = fd_check({l1.W, l1.b, l2.W, l2.b}, build);
  CHECK(rel < 1e-4);
}

TEST_CASE("attention + layer norm composition passes the gradient check") {
  std::mt19937_64 rng(13);
  nn::ParamStore store;
  nn::MultiHeadAttention mha(store, "mha", 4, 2, rng);
  Var x = store.create("x", Mat::Random(3, 4));
  auto build = [&]() { return ad::sum_all(ad::mul(mha(x), mha(x))); };
  std::vector<Var> leaves = {x, mha.wq.W, mha.wk.W, mha.wv.W, mha.wo.W, mha.norm.gamma,
                             mha.norm.beta};
  CHECK(fd_check(leaves, build) < 1e-4);
}

TEST_CASE("second-order: gradient of a norm of a gradient is differentiable") {
  std::mt19937_64 rng(17);
  nn::ParamStore store;
  nn::Mlp mlp(store, "m", 2, 5, 1, rng);
  Var x = store.create("x", Mat::Random(1, 2));
  auto build = [&]() {
    Var h = mlp(x);
    std::vector<Var> g = ad::gradients(h, {x});
    return ad::sum_all(ad::mul(g[0], g[0]));
  };
  CHECK(fd_check({x, mlp.l1.W, mlp.l1.b, mlp.l2.W, mlp.l2.b}, build) < 1e-4);
}

TEST_CASE("softplus is stable and matches log(1 + exp(x))") {
  Mat x(1, 4);
  x << -40.0, -1.0, 1.0, 40.0;
  Var y = ad::softplus_(ad::constant(x));
  CHECK(y->value(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y->value(0, 1) == doctest::Approx(std::log1p(std::exp(-1.0))));
  CHECK(y->value(0, 2) == doctest::Approx(std::log1p(std::exp(-1.0)) + 1.0));
  CHECK(y->value(0, 3) == doctest::Approx(40.0));
}

TEST_CASE("reshape is row-major and round-trips") {
  Mat x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  Var r = ad::reshape(ad::constant(x), 3, 2);
  CHECK(r->value(0, 0) == 1);
  CHECK(r->value(0, 1) == 2);
  CHECK(r->value(1, 0) == 3);
  CHECK(r->value(2, 1) == 6);
  Var back = ad::reshape(r, 2, 3);
  CHECK((back->value - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam with bias correction takes the expected first step") {
  nn::ParamStore store;
  Var p = store.create("p", Mat::Constant(1, 1, 2.0));
  Var loss = ad::scale(ad::sum_all(ad::mul(p, p)), 0.5);
  store.zero_grad();
  store.accumulate(loss);
  CHECK(store.grad("p")(0, 0) == doctest::Approx(2.0));
  store.adam_step(0.1);
  // bias-corrected mhat = g, vhat = g^2, step = lr * g / (|g| + eps)
  CHECK(p->value(0, 0) == doctest::Approx(2.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("checkpoint round-trips values and config") {
  std::mt19937_64 rng(23);
  nn::ParamStore store;
  nn::Linear l(store, "lin", 3, 2, rng);
  std::string path = "ckpt_roundtrip.bin";
  nn::save_checkpoint(path, store, "{\"k\":1}");
  nn::Checkpoint ck = nn::load_checkpoint(path);
  CHECK(ck.config_json == "{\"k\":1}");
  CHECK(ck.tensors.count("lin.W") == 1);
  CHECK((ck.tensors.at("lin.W") - l.W->value).cwiseAbs().maxCoeff() == 0.0);

  nn::ParamStore other;
  nn::Linear l2(other, "lin", 3, 2, rng);
  other.load_values(ck.tensors);
  CHECK((l2.W->value - l.W->value).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("loader rejects unknown versions and bad magic") {
  std::string path = "ckpt_bad.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f.write(nn::kCheckpointMagic, 8);
    std::uint32_t ver = 99;
    f.write(reinterpret_cast<const char*>(&ver), 4);
  }
  CHECK_THROWS_AS((void)nn::load_checkpoint(path), std::runtime_error);
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTACKPT garbage";
  }
  CHECK_THROWS_AS((void)nn::load_checkpoint(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("seeded init and forward are bit-identical across runs") {
  auto run = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    nn::ParamStore store;
    nn::Mlp mlp(store, "m", 4, 8, 2, rng);
    Mat x = Mat::Constant(3, 4, 0.25);
    return mlp(ad::constant(x))->value;
  };
  Mat a = run(42), b = run(42), c = run(43);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}
