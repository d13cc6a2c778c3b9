#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "pspred/dataset.hpp"
#include "pspred/experiment.hpp"
#include "pspred/plm.hpp"

using namespace pspred;

TEST_CASE("noiseless synthetic links invert exactly") {
  std::vector<LinkObservation> links;
  for (double d = 5.0; d < 400.0; d *= 1.17) links.push_back({d, -20.0 - 27.0 * std::log10(d / 5.0)});
  const PathLossFit fit = fit_plm(links);
  CHECK(std::abs(fit.eta - 2.7) <= 1e-9);
  CHECK(fit.d0_m == 5.0);
  CHECK(fit.z0_dbm == -20.0);
  for (const auto& l : links) CHECK(std::abs(plm_predict(fit, l.distance_m) - l.rss_dbm) <= 1e-9);

  std::mt19937_64 rng(1);
  std::shuffle(links.begin(), links.end(), rng);
  CHECK(fit_plm(links) == fit);
}

TEST_CASE("two-point slope and anchoring") {
  const std::vector<LinkObservation> two{{10.0, -20.0}, {100.0, -50.0}};
  CHECK(fit_plm(two).eta == 3.0);

  const std::vector<LinkObservation> ties{{10.0, -20.0}, {10.0, -23.0}, {100.0, -50.0}};
  CHECK(fit_plm(ties).z0_dbm == -23.0);

  const std::vector<LinkObservation> flat{{10.0, -20.0}, {10.0, -30.0}};
  CHECK_THROWS_AS(fit_plm(flat), PipelineError);
  CHECK_THROWS_AS(fit_plm(std::vector<LinkObservation>{{10.0, -20.0}}), PipelineError);
}

TEST_CASE("residuals equal the regression residuals") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 3.0);
  std::vector<LinkObservation> links{{10.0, -30.0}};
  for (double d = 11.0; d < 300.0; d += 3.7) links.push_back({d, -30.0 - 31.0 * std::log10(d / 10.0) + noise(rng)});
  const PathLossFit fit = fit_plm(links);
  // Slope oracle: least squares through the origin in (x, y) = (-10 log10(d/d0), rss - z0).
  double sxy = 0.0, sxx = 0.0;
  for (const auto& l : links) {
    const double x = -10.0 * std::log10(l.distance_m / 10.0);
    sxy += x * (l.rss_dbm + 30.0);
    sxx += x * x;
  }
  CHECK(fit.eta == doctest::Approx(sxy / sxx).epsilon(1e-12));
  for (const auto& l : links) {
    const double x = -10.0 * std::log10(l.distance_m / 10.0);
    CHECK(l.rss_dbm - plm_predict(fit, l.distance_m) == doctest::Approx(l.rss_dbm + 30.0 - fit.eta * x));
  }
}

TEST_CASE("plm_predict") {
  const PathLossFit fit{2.0, -25.0, 10.0};
  CHECK(plm_predict(fit, 10.0) == -25.0);
  CHECK(plm_predict(fit, 1000.0) == doctest::Approx(-65.0));
  CHECK(plm_predict(fit, {0, 0}, {30, 40}) == plm_predict(fit, {30, 40}, {0, 0}));
  CHECK_THROWS_AS(plm_predict(fit, 0.0), PipelineError);
}

TEST_CASE("recovers eta_true on a noiseless obstacle-free 123-transmitter dataset") {
  const auto start = std::chrono::steady_clock::now();
  const TrueEnvironment env = test::quiet_env(50, 50, {}, 3.0);
  Rng rng(1);
  const VoxelMask valid = valid_grid_points(env);
  const auto txs = place_transmitters(valid, 123, rng);
  const Dataset ds = collect_dataset(env, txs, rng);
  std::vector<int> ids(123);
  for (int i = 0; i < 123; ++i) ids[static_cast<std::size_t>(i)] = i;
  const auto train = training_examples(ds, ids, 200, valid);
  const PathLossFit fit = fit_plm(link_observations(train));
  CHECK(std::abs(fit.eta - env.eta_true) <= 1e-6);
  double err = 0.0;
  std::size_t n = 0;
  for (const auto& ex : train) {
    for (const auto& c : ex.chosen) {
      err += std::abs(plm_predict(fit, ex.tx_loc, c.rx_loc) - c.rss_dbm);
      ++n;
    }
  }
  CHECK(err / n < 1e-6);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 5.0);
}
