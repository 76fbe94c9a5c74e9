#include <doctest.h>

#include <vector>

#include "gradient_checks.hpp"
#include "handa/classifier.hpp"
#include "handa/errors.hpp"
#include "oracles.hpp"

using namespace handa;

TEST_CASE("hinge loss worked values") {
  Matrix s(3, 1);
  s << 2.5, 0.5, 1.0;
  const std::vector<int> y0{0};
  CHECK(hinge_loss(s, y0) == 0.0);
  const std::vector<int> y1{1};
  CHECK(hinge_loss(s, y1) == doctest::Approx(3.0));
  Matrix tie = Matrix::Zero(2, 1);
  CHECK(hinge_loss(tie, y0) == 1.0);
}

TEST_CASE("hinge loss matches the loop oracle and ignores per-sample offsets") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Matrix s = oracle::random_matrix(4, 9, rng);
    const auto y = oracle::random_labels(9, 4, rng);
    const double base = hinge_loss(s, y);
    CHECK(base == doctest::Approx(oracle::hinge(s, y)).epsilon(1e-14));
    CHECK(base >= 0.0);
    for (Eigen::Index c = 0; c < s.cols(); ++c) s.col(c).array() += 10.0 * rng.normal();
    CHECK(std::abs(hinge_loss(s, y) - base) <= 1e-12);
  }
}

TEST_CASE("hinge subgradient conventions") {
  SUBCASE("satisfied margins give zero gradient") {
    Matrix s(3, 2);
    s << 5, 0,
         0, 5,
         0, 0;
    CHECK(hinge_loss_grad(s, std::vector<int>{0, 1}).isZero());
  }
  SUBCASE("exactly at the kink the zero branch is used") {
    Matrix s(2, 1);
    s << 1.0, 0.0;
    CHECK(hinge_loss_grad(s, std::vector<int>{0}).isZero());
  }
  SUBCASE("ties among wrong classes go to the smallest index") {
    Matrix s(3, 1);
    s << 0.0, 0.0, 0.0;
    const Matrix g = hinge_loss_grad(s, std::vector<int>{2});
    CHECK(g(0, 0) == 1.0);
    CHECK(g(1, 0) == 0.0);
    CHECK(g(2, 0) == -1.0);
  }
}

TEST_CASE("hinge loss contracts") {
  const Matrix s = Matrix::Zero(3, 2);
  CHECK_THROWS_AS(hinge_loss(s, std::vector<int>{0}), ShapeError);
  CHECK_THROWS_AS(hinge_loss(s, std::vector<int>{0, 3}), ContractError);
  CHECK_THROWS_AS(hinge_loss(Matrix::Zero(3, 0), std::vector<int>{}), ContractError);
}

TEST_CASE("classifier loss is the weighted average of the two hinge terms") {
  const gradcheck::ClsInstance in = gradcheck::cls_instance(3);
  const auto r = sdl_represent(in.sdl, in.xs, in.xt);
  const Matrix ss = mlp_apply(in.head.net, mlp_apply(in.feature_net, r.source));
  const Matrix st = mlp_apply(in.head.net, mlp_apply(in.feature_net, r.target));
  const double expected = 0.5 * oracle::hinge(ss, in.ys) + 0.5 * oracle::hinge(st, in.yt);
  CHECK(classifier_loss(in.head, in.feature_net, r.source, in.ys, r.target, in.yt) ==
        doctest::Approx(expected).epsilon(1e-14));
  CHECK(classifier_loss(in.head, in.feature_net, r.source, in.ys, r.target, in.yt, 0.0) ==
        doctest::Approx(oracle::hinge(st, in.yt)).epsilon(1e-14));
  CHECK_THROWS_AS(classifier_loss(in.head, in.feature_net, r.source, in.ys, r.target, in.yt, 1.5), ContractError);
  CHECK_THROWS_AS(
      classifier_loss(in.head, in.feature_net, r.source, in.ys, Matrix::Zero(r.target.rows(), 0), std::vector<int>{}),
      ContractError);
}

TEST_CASE("classifier gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(gradcheck::check_cls(seed) < 1e-6);
    CHECK(gradcheck::check_cls(seed, 0.2) < 1e-6);
  }
}

TEST_CASE("classifier gradients never touch projections or the dictionary") {
  const gradcheck::ClsInstance in = gradcheck::cls_instance(0);
  const ClassifierGrads g = classifier_grads(in.head, in.feature_net, in.sdl, in.xs, in.ys, in.xt, in.yt);
  CHECK(g.sdl.projection_s.isZero());
  CHECK(g.sdl.projection_t.isZero());
  CHECK(g.sdl.dictionary.isZero());
}

TEST_CASE("predict, argmax and softmax") {
  Matrix s(3, 3);
  s << 1, 0, 2,
       3, 0, 2,
       0, 0, 1;
  const Labels a = argmax_columns(s);
  CHECK(a == Labels{1, 0, 0});
  const Matrix p = softmax_columns(s);
  for (Eigen::Index c = 0; c < 3; ++c) CHECK(p.col(c).sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p(0, 1) == doctest::Approx(1.0 / 3.0));
  Matrix big(2, 1);
  big << 1000.0, 999.0;
  CHECK(all_finite(softmax_columns(big)));
}
