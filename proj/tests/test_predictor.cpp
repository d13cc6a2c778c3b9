#include <doctest.h>

#include <chrono>
#include <memory>

#include "helpers.hpp"
#include "pspred/experiment.hpp"
#include "pspred/predictor.hpp"

using namespace pspred;

namespace {

struct Fixture {
  ExperimentConfig cfg;
  SeedContext ctx;
  std::vector<TrainingExample> train;
  PathLossFit fit;
  std::shared_ptr<const SlfEstimate> slf;

  Fixture() {
    ctx = prepare_seed(cfg, 3);
    std::vector<int> ids(ctx.split.train.begin(), ctx.split.train.begin() + 40);
    train = training_examples(ctx.observed, ids, cfg.k, ctx.valid);
    fit = fit_plm(link_observations(train));
    slf = std::make_shared<const SlfEstimate>(reconstruct_slf(train, fit, ctx.env.grid, cfg.rti));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("PLM predictor") {
  const PathLossFit fit{2.5, -30.0, 10.0};
  const PlmPredictor p(fit);
  const std::vector<Point> q{{15, 5}, {105, 5}, {1005, 5}};
  const auto out = p.predict({5, 5}, q);
  CHECK(out[0] == doctest::Approx(-30.0).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(-55.0).epsilon(1e-12));
  CHECK(out[2] == doctest::Approx(-80.0).epsilon(1e-12));
}

TEST_CASE("PLM+RTI with a zero field equals PLM") {
  const auto& f = fixture();
  auto zero = std::make_shared<SlfEstimate>(*f.slf);
  std::fill(zero->p_hat.begin(), zero->p_hat.end(), 0.0);
  const PlmRtiPredictor with_rti(f.fit, zero);
  const PlmPredictor plain(f.fit);
  const Point tx = f.ctx.tx_locs[static_cast<std::size_t>(f.ctx.split.test.front())];
  const auto q = nearest_valid_points(tx, 200, f.ctx.valid);
  CHECK(with_rti.predict(tx, q) == plain.predict(tx, q));

  // With the real field, the PLM+RTI prediction sits below PLM by the link shadow.
  const PlmRtiPredictor real(f.fit, f.slf);
  const auto a = real.predict(tx, q);
  const auto b = plain.predict(tx, q);
  for (std::size_t i = 0; i < q.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i] - link_shadow_db(*f.slf, tx, q[i])).epsilon(1e-12));
  }
}

TEST_CASE("predictors are pure and reject bad queries") {
  const auto& f = fixture();
  Rng rng = feature_rng(1, 1);
  OptimizerConfig opt = f.cfg.opt;
  opt.epochs = 3;
  const FeaturePredictor feat("feature_asym", train_feature_predictor(f.train, f.slf.get(), f.cfg.loss_asym, opt, rng),
                              f.slf);
  const PlmPredictor plm(f.fit);
  const Point tx = f.ctx.tx_locs[static_cast<std::size_t>(f.ctx.split.test.front())];
  const auto q = nearest_valid_points(tx, 200, f.ctx.valid);
  for (const Predictor* p : {static_cast<const Predictor*>(&feat), static_cast<const Predictor*>(&plm)}) {
    CHECK(p->predict(tx, q) == p->predict(tx, q));
    CHECK_THROWS_AS(p->predict(tx, std::vector<Point>{}), PipelineError);
    CHECK_THROWS_AS(p->predict(tx, std::vector<Point>{tx}), PipelineError);
  }
  CHECK_THROWS_AS(FeaturePredictor("x", feat.model(), nullptr), PipelineError);
}

TEST_CASE("feature predictor latency for K = 200") {
  const auto& f = fixture();
  Rng rng = feature_rng(2, 1);
  OptimizerConfig opt = f.cfg.opt;
  opt.epochs = 2;
  const FeaturePredictor feat("feature_asym", train_feature_predictor(f.train, f.slf.get(), f.cfg.loss_asym, opt, rng),
                              f.slf);
  double worst_ms = 0.0;
  for (int id : f.ctx.split.test) {
    const Point tx = f.ctx.tx_locs[static_cast<std::size_t>(id)];
    const auto q = nearest_valid_points(tx, 200, f.ctx.valid);
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = feat.predict(tx, q);
    const auto t1 = std::chrono::steady_clock::now();
    CHECK(out.size() == 200);
    worst_ms = std::max(worst_ms, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  CHECK(worst_ms <= 100.0);
}
