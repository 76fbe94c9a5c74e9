#include <doctest.h>

#include "gradient_checks.hpp"
#include "handa/errors.hpp"
#include "handa/sdl.hpp"
#include "oracles.hpp"

using namespace handa;

TEST_CASE("sdl_loss matches the per-sample oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const SdlParams p = gradcheck::random_sdl(3, 6, 4, rng);
    const Matrix xs = oracle::random_matrix(6, 9, rng);
    const Matrix xt = oracle::random_matrix(4, 5, rng);
    CHECK(sdl_loss(p, xs, xt) == doctest::Approx(oracle::sdl_loss(p, xs, xt)).epsilon(1e-12));
  }
}

TEST_CASE("sdl gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) CHECK(gradcheck::check_sdl(seed) < 1e-6);
}

TEST_CASE("sdl_represent is A B x") {
  Rng rng(1);
  const SdlParams p = init_sdl(3, 5, 4, rng);
  const Matrix xs = oracle::random_matrix(5, 2, rng);
  const Matrix xt = oracle::random_matrix(4, 3, rng);
  const Representations r = sdl_represent(p, xs, xt);
  CHECK((r.source - p.shared_map * p.encoder_s * xs).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((r.target - p.shared_map * p.encoder_t * xt).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(sdl_represent(p, xt, xt), ShapeError);
}

TEST_CASE("init_sdl satisfies the constraints and rejects bad k") {
  Rng rng(2);
  const SdlParams p = init_sdl(4, 6, 5, rng);
  const SdlResiduals r = sdl_residuals(p);
  CHECK(r.orthogonality < 1e-12);
  CHECK(r.max_column_norm <= 1.0 + 1e-12);
  CHECK_THROWS_AS(init_sdl(6, 6, 5, rng), ContractError);
  CHECK_THROWS_AS(init_sdl(0, 6, 5, rng), ContractError);
}

TEST_CASE("sdl_project enforces constraints and is idempotent") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed, 5);
    const SdlParams p = gradcheck::random_sdl(4, 7, 5, rng).scaled(3.0);
    const SdlParams q = sdl_project(p);
    const SdlResiduals r = sdl_residuals(q);
    CHECK(r.orthogonality <= 1e-8);
    CHECK(r.max_column_norm <= 1.0 + 1e-12);
    const SdlParams qq = sdl_project(q);
    auto a = blocks(q);
    auto b = blocks(qq);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((*a[i].second - *b[i].second).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("sdl_project names the degenerate block") {
  Rng rng(3);
  SdlParams p = init_sdl(2, 4, 3, rng);
  p.encoder_t.setZero();
  try {
    (void)sdl_project(p);
    FAIL("expected DegeneracyError");
  } catch (const DegeneracyError& e) {
    CHECK(std::string(e.what()).find("encoder_t") != std::string::npos);
  }
}

TEST_CASE("projected gradient descent on the reconstruction loss is essentially monotone") {
  Rng rng(11);
  SdlParams p = init_sdl(3, 8, 6, rng);
  const Matrix xs = oracle::random_matrix(8, 40, rng);
  const Matrix xt = oracle::random_matrix(6, 30, rng);
  double prev = sdl_loss(p, xs, xt);
  const double first = prev;
  int upticks = 0;
  for (int step = 0; step < 200; ++step) {
    sgd_step(p, sdl_grads(p, xs, xt), 1e-3);
    p = sdl_project(p);
    const double cur = sdl_loss(p, xs, xt);
    if (cur > prev) ++upticks;
    prev = cur;
  }
  CHECK(upticks <= 10);
  CHECK(prev < first);
}

TEST_CASE("SdlParams arithmetic") {
  Rng rng(4);
  const SdlParams p = init_sdl(2, 3, 3, rng);
  SdlParams z = p.zeros_like();
  z += p;
  CHECK(z == p);
  const SdlParams h = p.scaled(0.5);
  CHECK(h.dictionary(0, 0) == 0.5 * p.dictionary(0, 0));
  SdlParams bad = init_sdl(2, 4, 3, rng);
  CHECK_THROWS_AS(bad += p, ShapeError);
  SdlParams g = p.zeros_like();
  g.shared_map(0, 0) = std::numeric_limits<double>::quiet_NaN();
  SdlParams q = p;
  CHECK_THROWS_AS(sgd_step(q, g, 0.1), NumericError);
}
