#include <doctest.h>

#include <cmath>

#include "handa/data.hpp"
#include "handa/errors.hpp"
#include "handa/trainer.hpp"
#include "oracles.hpp"

using namespace handa;

namespace {

TaskData small_task(std::uint64_t seed, int classes = 3, int per_class = 30) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.per_class = per_class;
  spec.seed = seed;
  const SyntheticPair pair = make_synthetic(spec);
  const TargetSplit s = split_target(pair.target, SplitSpec{5, seed, 0.5});
  return standardize(TaskData{pair.source, s.labeled, s.unlabeled, s.test});
}

TrainConfig small_config() {
  TrainConfig c;
  c.arch.hidden_width = 12;
  c.arch.feature_dim = 8;
  c.arch.kernel_dim = 6;
  c.arch.feature_hidden_layers = 1;
  c.batch_source = 16;
  c.batch_labeled = 8;
  c.batch_unlabeled = 16;
  c.max_outer_iters = 60;
  c.stop.reset();
  c.lr_sdl = c.lr_adv_min = c.lr_adv_max = c.lr_cls = 1e-2;
  return c;
}

ModelState run(const TaskData& t, const TrainConfig& c) {
  return train(t.source, t.target_labeled, t.target_unlabeled, c);
}

}  // namespace

TEST_CASE("training is bitwise deterministic") {
  const TaskData t = small_task(1);
  const TrainConfig c = small_config();
  CHECK(run(t, c) == run(t, c));
  TrainConfig other = c;
  other.seed = 99;
  CHECK_FALSE(run(t, other) == run(t, c));
}

TEST_CASE("traces record one row per iteration and constraints hold at the end") {
  const TaskData t = small_task(2);
  const ModelState s = run(t, small_config());
  REQUIRE(s.traces.size() == 60);
  CHECK(s.traces.iter.front() == 1);
  CHECK(s.traces.iter.back() == 60);
  CHECK_FALSE(s.converged_at.has_value());
  const SdlResiduals r = sdl_residuals(s.sdl);
  CHECK(r.orthogonality <= 1e-8);
  CHECK(r.max_column_norm <= 1.0 + 1e-12);
  for (std::size_t i = 0; i < s.traces.size(); ++i) {
    CHECK(std::isfinite(s.traces.sdl[i]));
    CHECK(s.traces.adv[i] >= -1e-12);
    CHECK(s.traces.cls[i] >= 0.0);
  }
}

TEST_CASE("each block is only updated in its own phase") {
  const TaskData t = small_task(3);
  TrainConfig c = small_config();
  const ModelState init = init_model(c, t.source.dim(), t.target_labeled.dim(), 3);

  SUBCASE("without the adversarial phase the kernel net never moves") {
    c.n_a = 0;
    CHECK(run(t, c).nets.kernel_net == init.nets.kernel_net);
  }
  SUBCASE("without the dictionary phase projections and dictionary never move") {
    c.n_d = 0;
    c.enforce_constraints = false;
    const ModelState s = run(t, c);
    CHECK(s.sdl.projection_s == init.sdl.projection_s);
    CHECK(s.sdl.projection_t == init.sdl.projection_t);
    CHECK(s.sdl.dictionary == init.sdl.dictionary);
    CHECK_FALSE(s.sdl.encoder_t == init.sdl.encoder_t);
  }
}

TEST_CASE("supervised-only training lowers the classifier loss window by window") {
  const TaskData t = small_task(4);
  TrainConfig c = small_config();
  c.beta = c.gamma = 0.0;
  c.n_d = c.n_a = 0;
  c.max_outer_iters = 1000;
  c.lr_cls = 1e-3;
  const ModelState s = run(t, c);
  double prev = INFINITY;
  for (std::size_t start = 0; start + 200 <= s.traces.size(); start += 200) {
    double mean = 0.0;
    for (std::size_t i = start; i < start + 200; ++i) mean += s.traces.cls[i];
    mean /= 200.0;
    CHECK(mean <= prev);
    prev = mean;
  }
}

TEST_CASE("stop rule") {
  LossTraces flat;
  for (std::size_t i = 1; i <= 300; ++i) flat.push(i, 1.0, 2.0, 3.0);
  CHECK(check_converged(flat, StopRule{}));

  LossTraces ramp;
  for (std::size_t i = 1; i <= 300; ++i) ramp.push(i, 1.0, 1.0, static_cast<double>(i));
  CHECK_FALSE(check_converged(ramp, StopRule{}));

  LossTraces settled;
  for (std::size_t i = 1; i <= 1000; ++i) {
    const double v = i < 500 ? 1000.0 / static_cast<double>(i) : 2.0 + 0.01 * std::sin(static_cast<double>(i));
    settled.push(i, v, v, v);
  }
  CHECK(check_converged(settled, StopRule{}));
  CHECK_THROWS_AS(check_converged(LossTraces{}, StopRule{}), ContractError);
  CHECK_THROWS_AS(check_converged(flat, StopRule{1, 0.1}), ContractError);
}

TEST_CASE("trailing stddev and range match direct formulas") {
  const std::vector<double> v{4, 1, 7, 3, 5};
  // Last three values 7, 3, 5: mean 5, population variance 8/3.
  CHECK(trailing_stddev(v, 3) == doctest::Approx(std::sqrt(8.0 / 3.0)).epsilon(1e-15));
  CHECK(series_range(v) == 6.0);
  CHECK(trailing_stddev(v, 100) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("training stops once the traces settle") {
  const TaskData t = small_task(5);
  TrainConfig c = small_config();
  c.max_outer_iters = 3000;
  c.stop = StopRule{50, 0.5};
  const ModelState s = run(t, c);
  REQUIRE(s.converged_at.has_value());
  CHECK(*s.converged_at == s.traces.size());
  CHECK(s.traces.size() >= 50);
  CHECK(check_converged(s.traces, *c.stop));
}

TEST_CASE("train_from continues the iteration count") {
  const TaskData t = small_task(6);
  TrainConfig c = small_config();
  c.max_outer_iters = 10;
  const ModelState a = run(t, c);
  const ModelState b = train_from(a, t.source, t.target_labeled, t.target_unlabeled, c);
  CHECK(b.traces.size() == 20);
  CHECK(b.traces.iter[10] == 11);
}

TEST_CASE("training contracts") {
  const TaskData t = small_task(7);
  TrainConfig c = small_config();
  SUBCASE("batch larger than the pool") {
    c.batch_labeled = 100;
    CHECK_THROWS_AS(run(t, c), ContractError);
  }
  SUBCASE("class sets differ") {
    DomainDataset tl = t.target_labeled;
    for (auto& y : *tl.labels) y = y == 2 ? 1 : y;
    CHECK_THROWS_AS(train(t.source, tl, t.target_unlabeled, c), ContractError);
  }
  SUBCASE("bad config") {
    c.lr_cls = 0.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = small_config();
    c.n_d = c.n_a = c.n_c = 0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = small_config();
    c.arch.latent_dim = 50;
    CHECK_THROWS_AS(run(t, c), ContractError);
  }
  SUBCASE("divergence is reported with the iteration") {
    c.lr_cls = 1e300;
    try {
      (void)run(t, c);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
  }
}

TEST_CASE("latent dimension default") {
  CHECK(resolve_latent_dim(Architecture{}, 20, 12) == 12);
  CHECK(resolve_latent_dim(Architecture{}, 400, 300) == 128);
  Architecture a;
  a.latent_dim = 5;
  CHECK(resolve_latent_dim(a, 20, 12) == 5);
}

TEST_CASE("evaluation") {
  const TaskData t = small_task(8, 2);
  const ModelState s = run(t, small_config());
  const EvalMetrics m = evaluate(s, t.target_test);
  CHECK(m.predictions.size() == t.target_test.size());
  CHECK(m.accuracy == doctest::Approx(oracle::accuracy(m.predictions, *t.target_test.labels)));
  REQUIRE(m.auc.has_value());
  CHECK((*m.auc >= 0.0 && *m.auc <= 1.0));
  CHECK(target_embedding(s, t.target_test.features).rows() == 8);
  CHECK_FALSE(evaluate(run(small_task(8), small_config()), small_task(8).target_test).auc.has_value());
  CHECK_THROWS_AS(evaluate(s, t.target_unlabeled), ContractError);
}

TEST_CASE("ablation modes") {
  CHECK(AblationMode::parse("depth3").kind == AblationKind::Depth);
  CHECK(AblationMode::parse("depth3").depth == 3);
  CHECK(AblationMode::parse("nosdl").name() == "nosdl");
  CHECK_THROWS_AS(AblationMode::parse("depth9"), ContractError);
  CHECK_THROWS_AS(AblationMode::parse("bogus"), ContractError);

  const TrainConfig c = small_config();
  const TrainConfig nosdl = ablation_config({AblationKind::NoSdl}, c);
  CHECK(nosdl.n_d == 0);
  CHECK(nosdl.beta == 0.0);
  const TrainConfig noadv = ablation_config({AblationKind::NoAdv}, c);
  CHECK(noadv.n_a == 0);
  CHECK(noadv.gamma == 0.0);
  CHECK(ablation_config({AblationKind::Depth, 4}, c).arch.feature_hidden_layers == 4);
  const TrainConfig only = ablation_config({AblationKind::TargetOnly}, c);
  CHECK(only.source_weight == 0.0);
  CHECK(only.n_a == 0);
  CHECK(Architecture{}.feature_hidden_layers == 2);
}

TEST_CASE("full ablation is plain training; sequential runs both stages") {
  const TaskData t = small_task(9);
  const TrainConfig c = small_config();
  const AblationResult full = ablate({AblationKind::Full}, t, c);
  CHECK(full.state == run(t, c));
  TrainConfig sc = c;
  sc.stop = StopRule{20, 0.5};
  const AblationResult seq = ablate({AblationKind::Sequential}, t, sc);
  CHECK(seq.state.traces.size() > 20);
  CHECK((seq.metrics.accuracy >= 0.0 && seq.metrics.accuracy <= 1.0));
}

TEST_CASE("grid search") {
  const TaskData t = small_task(10);
  TrainConfig c = small_config();
  c.max_outer_iters = 20;

  SUBCASE("singleton grid") {
    const GridSearchResult r = grid_search(t, {1e-4}, {1.0}, c, Scorer::TargetHoldout);
    REQUIRE(r.cells.size() == 1);
    CHECK(r.best.beta == 1e-4);
    CHECK(r.best.gamma == 1.0);
  }
  SUBCASE("thread count does not change the table") {
    const auto a = grid_search(t, {1e-2, 1e-3}, {0.1, 1.0}, c, Scorer::ReverseValidation, 1);
    const auto b = grid_search(t, {1e-2, 1e-3}, {0.1, 1.0}, c, Scorer::ReverseValidation, 3);
    REQUIRE(a.cells.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a.cells[i].score == b.cells[i].score);
      CHECK((a.cells[i].score >= 0.0 && a.cells[i].score <= 1.0));
    }
    CHECK(a.cells[1].beta == 1e-2);
    CHECK(a.cells[1].gamma == 1.0);
  }
  SUBCASE("cell errors carry the cell") {
    c.batch_source = 100000;
    try {
      (void)grid_search(t, {1e-3}, {1.0}, c, Scorer::TargetHoldout);
      FAIL("expected an error");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("beta=0.001 gamma=1") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(grid_search(t, {}, {1.0}, c), ContractError);
}

TEST_CASE("grid ranking tie-break") {
  const std::vector<GridCell> cells{{1e-2, 1.0, 0.8}, {1e-3, 10.0, 0.9}, {1e-3, 0.1, 0.9}, {1e-4, 0.1, 0.9}};
  const GridCell best = select_best(cells);
  CHECK(best.beta == 1e-4);
  CHECK(best.gamma == 0.1);
  const auto r = ranked(cells);
  CHECK(r[1].beta == 1e-3);
  CHECK(r[1].gamma == 0.1);
  CHECK(r[3].score == 0.8);
  CHECK(kDefaultBetaGrid.size() * kDefaultGammaGrid.size() == 16);
}

TEST_CASE("full-size synthetic run: classifier loss halves and every trace settles") {
  SyntheticSpec spec;
  spec.seed = 2;
  const SyntheticPair pair = make_synthetic(spec);
  const TargetSplit split = split_target(pair.target, SplitSpec{10, 2, 0.5});
  const TaskData t = standardize(TaskData{pair.source, split.labeled, split.unlabeled, split.test});
  TrainConfig c;
  c.seed = 2;
  c.lr_sdl = 0.1;
  c.max_outer_iters = 1500;
  c.stop.reset();
  const ModelState s = run(t, c);
  REQUIRE(s.traces.size() == 1500);
  CHECK(s.traces.cls.back() <= 0.5 * s.traces.cls[9]);
  for (const auto* series : {&s.traces.sdl, &s.traces.adv, &s.traces.cls}) {
    CHECK(trailing_stddev(*series, 200) <= 0.1 * series_range(*series));
  }
}
