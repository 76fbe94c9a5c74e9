#include <doctest.h>

#include <cmath>
#include <limits>

#include "handa/errors.hpp"
#include "handa/mlp.hpp"
#include "handa/numerics.hpp"
#include "handa/rng.hpp"
#include "oracles.hpp"

using namespace handa;

TEST_CASE("matmul checks inner dimensions") {
  Rng rng(1);
  const Matrix a = oracle::random_matrix(3, 4, rng);
  const Matrix b = oracle::random_matrix(4, 2, rng);
  CHECK((matmul(a, b) - a * b).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("orthogonalize yields orthonormal rows spanning the same space") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix w = oracle::random_matrix(3, 7, rng);
    const Matrix q = orthogonalize(w);
    CHECK(oracle::orth_residual(q) < 1e-12);
    // Nearest orthonormal matrix: q = (w w^T)^{-1/2} w, so q w^T is symmetric positive definite.
    const Matrix s = q * w.transpose();
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((orthogonalize(q) - q).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("orthogonalize rejects tall and rank-deficient input") {
  CHECK_THROWS_AS(orthogonalize(Matrix::Ones(4, 2)), ShapeError);
  Matrix w = Matrix::Zero(2, 4);
  w(0, 0) = 1.0;
  w(1, 0) = 2.0;
  CHECK_THROWS_AS(orthogonalize(w), DegeneracyError);
}

TEST_CASE("unit_clip_columns rescales only long columns") {
  Matrix w(2, 3);
  w << 3, 0.1, 0,
       4, 0.2, 0;
  const Matrix c = unit_clip_columns(w);
  CHECK(c.col(0).norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c(0, 0) == doctest::Approx(0.6));
  CHECK(c.col(1) == w.col(1));
  CHECK(c.col(2).norm() == 0.0);
}

TEST_CASE("sgd_step semantics") {
  Matrix p = Matrix::Ones(2, 2);
  const Matrix g = Matrix::Constant(2, 2, 2.0);
  SUBCASE("plain update") {
    sgd_step(p, g, 0.25);
    CHECK(p(1, 1) == 0.5);
  }
  SUBCASE("zero learning rate is a no-op") {
    sgd_step(p, g, 0.0);
    CHECK(p == Matrix::Ones(2, 2));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(sgd_step(p, g, -1.0), ContractError);
    CHECK_THROWS_AS(sgd_step(p, Matrix::Ones(3, 2), 0.1), ShapeError);
    Matrix bad = g;
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sgd_step(p, bad, 0.1, "weights"), NumericError);
    CHECK(p == Matrix::Ones(2, 2));
  }
}

TEST_CASE("hconcat and select_columns") {
  Matrix a(2, 1), b(2, 2);
  a << 1, 2;
  b << 3, 4, 5, 6;
  const Matrix c = hconcat(a, b);
  CHECK(c.cols() == 3);
  CHECK(c(1, 2) == 6);
  const Matrix s = select_columns(c, {2, 0});
  CHECK(s(0, 0) == 4);
  CHECK(s(1, 1) == 2);
  CHECK_THROWS_AS(select_columns(c, {3}), ContractError);
  CHECK_THROWS_AS(hconcat(a, Matrix::Ones(3, 1)), ShapeError);
}

TEST_CASE("Rng is deterministic and streams are independent") {
  Rng a(42), b(42), c(42, 1);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  const Rng base(7);
  Rng s1 = base.split(3), s2 = base.split(3);
  CHECK(s1.next_u64() == s2.next_u64());
}

TEST_CASE("Rng distributions") {
  Rng rng(5);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum2 / n - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(rng.below(7) < 7);
  }
  CHECK_THROWS_AS(rng.below(0), ContractError);
  auto pick = rng.sample_without_replacement(10, 10);
  std::sort(pick.begin(), pick.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(pick[i] == i);
  CHECK_THROWS_AS(rng.sample_without_replacement(3, 4), ContractError);
}

TEST_CASE("mlp gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed, 9);
    MlpParams net = make_mlp({4, 7, 5, 3}, rng);
    const Matrix x = oracle::random_matrix(4, 6, rng);
    const Matrix w = oracle::random_matrix(3, 6, rng);
    if (oracle::min_abs_preact(net, x) < 1e-3) continue;
    const auto loss = [&] { return mlp_apply(net, x).cwiseProduct(w).sum(); };
    const MlpForward fwd = mlp_forward(net, x);
    const MlpBackward back = mlp_backward(net, fwd.cache, w);
    CHECK(oracle::mlp_fd_error(net, back.grads, loss) < 1e-6);
    Matrix xin = x;
    const auto loss_x = [&] { return mlp_apply(net, xin).cwiseProduct(w).sum(); };
    CHECK(oracle::rel_error(back.grad_input, oracle::fd_grad(xin, loss_x)) < 1e-6);
  }
}

TEST_CASE("mlp structure and contracts") {
  Rng rng(3);
  MlpParams net = make_mlp({5, 8, 2}, rng);
  CHECK(net.depth() == 2);
  CHECK(net.input_dim() == 5);
  CHECK(net.output_dim() == 2);
  CHECK(net.layers[0].activation == Activation::LeakyReLU);
  CHECK(net.layers[1].activation == Activation::Identity);
  const double bound = glorot_bound(5, 8);
  CHECK(net.layers[0].weight.cwiseAbs().maxCoeff() <= bound);
  CHECK(net.layers[0].bias.isZero());

  MlpParams copy = net.zeros_like();
  unflatten(copy, flatten(net));
  CHECK(copy == net);
  auto flat = flatten(net);
  flat.push_back(0.0);
  CHECK_THROWS_AS(unflatten(copy, flat), ShapeError);

  CHECK_THROWS_AS(mlp_apply(net, Matrix::Ones(4, 1)), ShapeError);
  const MlpForward fwd = mlp_forward(net, Matrix::Ones(5, 3));
  CHECK_THROWS_AS(mlp_backward(net, fwd.cache, Matrix::Ones(2, 4)), ContractError);
  const MlpParams other = make_mlp({5, 9, 2}, rng);
  CHECK_THROWS_AS(mlp_backward(other, fwd.cache, Matrix::Ones(2, 3)), ContractError);
  CHECK_THROWS_AS(make_mlp({5}, rng), ContractError);
}

TEST_CASE("mlp sgd_step refuses non-finite gradients without touching parameters") {
  Rng rng(4);
  MlpParams net = make_mlp({3, 4, 2}, rng);
  const MlpParams before = net;
  MlpParams g = net.zeros_like();
  g.layers[1].bias(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(sgd_step(net, g, 0.1), NumericError);
  CHECK(net == before);
}
