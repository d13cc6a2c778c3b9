// Acceptance run: one PASS/FAIL line per criterion. Exits 0 once every criterion has been
// evaluated; with --strict, exits 1 if any failed.
#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>

#include <Eigen/Dense>

#include "helpers.hpp"
#include "pspred/boundary.hpp"
#include "pspred/experiment.hpp"
#include "pspred/grid_model.hpp"
#include "pspred/loss.hpp"
#include "pspred/tensor.hpp"

using namespace pspred;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("[%s] %2d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void plm_recovery() {
  const auto t0 = Clock::now();
  const TrueEnvironment env = test::quiet_env(50, 50, {}, 3.0);
  Rng rng(1);
  const VoxelMask valid = valid_grid_points(env);
  const auto txs = place_transmitters(valid, 123, rng);
  const Dataset ds = collect_dataset(env, txs, rng);
  std::vector<int> ids(123);
  for (int i = 0; i < 123; ++i) ids[static_cast<std::size_t>(i)] = i;
  const auto train = training_examples(ds, ids, 200, valid);
  const PathLossFit fit = fit_plm(link_observations(train));
  double err = 0.0;
  std::size_t n = 0;
  for (const auto& ex : train) {
    for (const auto& c : ex.chosen) {
      err += std::abs(plm_predict(fit, ex.tx_loc, c.rx_loc) - c.rss_dbm);
      ++n;
    }
  }
  const double eta_err = std::abs(fit.eta - env.eta_true);
  const double mae = err / static_cast<double>(n);
  const double secs = seconds_since(t0);
  report(1, "PLM recovery", eta_err <= 1e-6 && mae < 1e-6 && secs < 5.0,
         fmt("|eta - eta_true| %.2e, MAE %.2e dB, %.2f s", eta_err, mae, secs));
}

void rti_oracle() {
  const auto t0 = Clock::now();
  const GridSpec g{10, 10, 10.0};
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> ui(0, g.pixel_count() - 1);
  std::vector<Link> links;
  while (links.size() < 500) {
    const Point a = g.center(ui(rng));
    const Point b = g.center(ui(rng));
    if (a != b) links.push_back({a, b});
  }
  const WeightMatrix w = weight_matrix(links, g, 5.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd p_true(g.pixel_count());
  for (int i = 0; i < p_true.size(); ++i) p_true(i) = u(rng);
  const Eigen::VectorXd v = w * p_true;
  const std::vector<double> vv(v.data(), v.data() + v.size());
  const SlfEstimate slf = solve_slf(w, vv, 1e-9, covariance_matrix(g, 0.5, 1.0), g, 5.0);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(w), Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  int rank = 0;
  while (rank < s.size() && s(rank) > 1e-10 * s(0)) ++rank;
  const Eigen::MatrixXd vr = svd.matrixV().leftCols(rank);
  const Eigen::Map<const Eigen::VectorXd> p_hat(slf.p_hat.data(), static_cast<Eigen::Index>(slf.p_hat.size()));
  const double proj = (vr.transpose() * (p_hat - p_true)).lpNorm<Eigen::Infinity>();
  const double secs = seconds_since(t0);
  report(2, "RTI oracle equivalence", slf.relative_residual <= 1e-8 && proj <= 1e-6 && secs < 5.0,
         fmt("residual %.2e, row-space gap %.2e, %.2f s", slf.relative_residual, proj, secs));
}

void rti_ordering() {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg;
  int better = 0;
  std::string errs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SeedContext ctx = prepare_seed(cfg, seed);
    const auto truth = true_loss_field(ctx.env);
    auto error_at = [&](int tpn) {
      const std::vector<int> ids(ctx.split.train.begin(), ctx.split.train.begin() + tpn);
      const auto train = training_examples(ctx.observed, ids, cfg.k, ctx.valid);
      const SlfEstimate slf = reconstruct_slf(train, fit_plm(link_observations(train)), ctx.env.grid, cfg.rti);
      return normalized_field_error(slf.p_hat, truth);
    };
    const double e50 = error_at(50);
    const double e10 = error_at(10);
    if (e50 <= e10) ++better;
    errs += fmt(" %.3f/%.3f", e50, e10);
  }
  const double secs = seconds_since(t0);
  report(3, "RTI map quality ordering", better >= 4 && secs < 120.0,
         fmt("T_PN 50 <= 10 on %d/5 seeds (error 50/10:%s), %.1f s", better, errs.c_str(), secs));
}

void loss_correctness() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(-60.0, 15.0);
  std::bernoulli_distribution keep(0.6);
  double worst_mae_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pred(64), target(64);
    std::vector<std::uint8_t> mask(64);
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      pred[i] = n(rng);
      target[i] = n(rng);
      mask[i] = keep(rng) || i == 0;
      if (mask[i]) {
        sum += std::abs(pred[i] - target[i]);
        ++count;
      }
    }
    worst_mae_gap = std::max(worst_mae_gap, std::abs(asymmetric_loss(pred, target, mask, {1.0, 1.0}) - sum / count));
  }
  bool ratio_ok = true;
  for (double lu : {2.0, 4.0, 14.0, 3.7}) {
    const LossParams p{1.3, lu};
    const std::vector<double> t{-60.0}, over{-58.0}, under{-62.0};
    const std::vector<std::uint8_t> m{1};
    ratio_ok = ratio_ok && asymmetric_loss_terms(under, t, m, p).numerator /
                                   asymmetric_loss_terms(over, t, m, p).numerator ==
                               p.lambda_u / p.lambda_o;
  }

  double feature_worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Mlp<double> net({5, 64, 64, 32, 1});
    std::mt19937_64 r(seed);
    net.init(r);
    GradientBatch b;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    b.x.resize(5, 24);
    b.y.resize(24);
    for (int i = 0; i < 24; ++i) {
      for (int f = 0; f < 5; ++f) b.x(f, i) = u(r);
      b.y(i) = u(r);
    }
    b.group_sizes = {5, 11, 8};
    for (LossMode mode : {LossMode::kNormalized, LossMode::kNumeratorOnly}) {
      feature_worst = std::max(feature_worst, gradient_check(net, b, {1.0, 4.0}, mode));
    }
  }

  const TrueEnvironment env = test::quiet_env(12, 12, {test::building(40, 40, 60, 60)});
  const VoxelMask valid = valid_grid_points(env);
  Rng rng2(5);
  const auto txs = place_transmitters(valid, 3, rng2);
  const Dataset ds = collect_dataset(env, txs, rng2);
  const std::vector<int> ids{0, 1, 2};
  const auto train = training_examples(ds, ids, 30, valid);
  const SlfEstimate slf = reconstruct_slf(train, fit_plm(link_observations(train)), env.grid, RtiConfig{});
  const Image x3 = slf_to_map_image(slf);
  std::vector<GridSample> samples;
  for (const auto& ex : train) {
    GridSample s;
    std::vector<Point> rx;
    s.target.assign(static_cast<std::size_t>(env.grid.pixel_count()), 0.0);
    for (const auto& c : ex.chosen) {
      rx.push_back(c.rx_loc);
      s.target[static_cast<std::size_t>(*env.grid.pixel_of(c.rx_loc))] = c.rss_dbm;
    }
    s.input = assemble_input_tensor(ex.tx_loc, rx, x3, slf, valid);
    samples.push_back(std::move(s));
  }
  double grid_worst = 0.0;
  for (bool skip : {true, false}) {
    GridModel m({4, skip, 64});
    Rng r(3);
    m.init(r);
    m.target_lo = -60.0;
    m.target_hi = -20.0;
    grid_worst = std::max(grid_worst, grid_gradient_check(m, std::span(samples).first(2), {1.0, 4.0}));
  }
  report(4, "loss correctness", worst_mae_gap <= 1e-12 && ratio_ok && feature_worst < 1e-4 && grid_worst < 1e-4,
         fmt("MAE reduction gap %.1e, exact ratio %s, gradient check feature %.1e / grid %.1e", worst_mae_gap,
             ratio_ok ? "yes" : "no", feature_worst, grid_worst));
}

void experiment_criteria() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.tpn_sweep = {70};
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.methods.feature_asym_noaug = true;
  const ExperimentReport rep = run_experiment(cfg, &std::cerr);
  const double secs = seconds_since(t0);
  const int tpn = 70;
  if (!rep.failures.empty()) {
    for (int id : {5, 6, 7, 8}) report(id, "experiment", false, fmt("%zu seed(s) failed", rep.failures.size()));
    return;
  }

  // 5: p_d
  bool strict = true;
  std::string per_seed;
  for (std::uint64_t seed : cfg.seeds) {
    const double a = rep.find(seed, tpn, "feature_asym")->p_d.value_or(0.0);
    double best_other = 0.0;
    for (const char* m : {"feature_sym", "plm", "plm_rti"}) {
      best_other = std::max(best_other, rep.find(seed, tpn, m)->p_d.value_or(0.0));
    }
    if (!(a > best_other)) strict = false;
    per_seed += fmt(" %.3f>%.3f", a, best_other);
  }
  const double pd_mean = rep.seed_mean(tpn, "feature_asym", &MethodMetrics::p_d).value_or(0.0);
  report(5, "asymmetry effect", pd_mean >= 0.9 && strict && secs < 900.0,
         fmt("mean p_d %.3f; per seed asym>best baseline:%s; %.0f s", pd_mean, per_seed.c_str(), secs));

  // 6: MAE
  const double mae_asym = rep.seed_mean_mae(tpn, "feature_asym").value_or(1e9);
  const double mae_sym = rep.seed_mean_mae(tpn, "feature_sym").value_or(1e9);
  report(6, "MAE ballpark", mae_asym <= 8.0 && mae_sym <= mae_asym,
         fmt("asymmetric %.2f dB, symmetric %.2f dB", mae_asym, mae_sym));

  // 7: z_ooz
  const double z_asym = rep.seed_mean(tpn, "feature_asym", &MethodMetrics::z_ooz_bar_dbm).value_or(-1e9);
  bool ordered = true;
  bool schedule = true;
  std::string zs;
  for (const char* m : {"feature_sym", "plm", "plm_rti"}) {
    const double z = rep.seed_mean(tpn, m, &MethodMetrics::z_ooz_bar_dbm).value_or(1e9);
    ordered = ordered && z_asym >= z;
    zs += fmt(" %s %.1f", m, z);
  }
  for (const auto& run : rep.runs) {
    for (const auto& m : run.methods) schedule = schedule && m.ooz_on_schedule;
  }
  report(7, "leakage ordering", ordered && schedule,
         fmt("asymmetric %.1f dBm vs%s; on schedule %s", z_asym, zs.c_str(), schedule ? "yes" : "no"));

  // 8: augmentation
  int worse = 0;
  std::string pairs;
  for (std::uint64_t seed : cfg.seeds) {
    const double with = rep.find(seed, tpn, "feature_asym")->mae_db;
    const double without = rep.find(seed, tpn, "feature_asym_noaug")->mae_db;
    if (without > with) ++worse;
    pairs += fmt(" %.2f/%.2f", without, with);
  }
  report(8, "augmentation benefit", worse >= 4,
         fmt("no-aug MAE higher on %d/5 seeds (no-aug/aug:%s)", worse, pairs.c_str()));
}

void boundary_suite() {
  const Point tx{0, 0};
  const std::array<Point, 12> locs{{{10, 0}, {0, 10}, {-10, 0}, {0, -10}, {10, 10}, {-10, 10}, {-10, -10},
                                    {10, -10}, {20, 0}, {0, 20}, {-20, 0}, {0, -20}}};
  const std::array<double, 3> levels{-105.0, -95.0, -75.0};
  constexpr int kN = 3;
  constexpr int kCount = 531441;
  constexpr int kDenied = 1 << 30;
  long checked = 0;
  long mismatches = 0;
  long denials = 0;
  for (double cap : {-72.0, -60.0}) {
    BoundaryConfig cfg;
    cfg.n_points = kN;
    cfg.step_g_db = 10.0;
    cfg.noise_floor_dbm = -100.0;
    cfg.z0_cap_dbm = cap;
    std::vector<int> m_of(kCount);
    for (int code = 0; code < kCount; ++code) {
      std::array<PointPrediction, 12> preds;
      for (int i = 0, c = code; i < 12; ++i, c /= 3) preds[static_cast<std::size_t>(i)] = {locs[static_cast<std::size_t>(i)], levels[static_cast<std::size_t>(c % 3)]};
      // Brute force: first threshold on the schedule with N predictions below it, and the
      // lexicographically smallest N-subset by (distance, x, y).
      int m_star = 0;
      for (int m = 1;; ++m) {
        const double z = cfg.noise_floor_dbm + (m - 1) * cfg.step_g_db;
        if (z >= cap) break;
        int below = 0;
        for (const auto& p : preds) below += p.rss_dbm < z;
        if (below >= kN) {
          m_star = m;
          break;
        }
      }
      ++checked;
      try {
        const auto prop = propose_boundary(tx, preds, cfg);
        m_of[static_cast<std::size_t>(code)] = prop.iterations_m;
        const double z = cfg.noise_floor_dbm + (m_star - 1) * cfg.step_g_db;
        std::vector<std::tuple<double, double, double>> keys;
        for (const auto& p : preds) {
          if (p.rss_dbm < z) keys.emplace_back(distance(tx, p.loc), p.loc.x, p.loc.y);
        }
        std::sort(keys.begin(), keys.end());
        bool ok = m_star > 0 && prop.iterations_m == m_star && prop.z_ooz_dbm == z && prop.points.size() == kN;
        for (std::size_t i = 0; ok && i < kN; ++i) {
          ok = std::get<1>(keys[i]) == prop.points[i].loc.x && std::get<2>(keys[i]) == prop.points[i].loc.y;
        }
        mismatches += !ok;
      } catch (const DenialError&) {
        m_of[static_cast<std::size_t>(code)] = kDenied;
        mismatches += m_star != 0;
        ++denials;
      }
    }
    int pow3 = 1;
    for (int i = 0; i < 12; ++i, pow3 *= 3) {
      for (int code = 0; code < kCount; ++code) {
        if ((code / pow3) % 3 == 0) continue;
        mismatches += m_of[static_cast<std::size_t>(code - pow3)] > m_of[static_cast<std::size_t>(code)];
      }
    }
  }
  report(9, "boundary algorithm suite", mismatches == 0 && denials > 0,
         fmt("%ld instances, %ld denials, %ld mismatches (schedule, selection, monotonicity)", checked, denials,
             mismatches));
}

void latency() {
  const ExperimentConfig cfg;
  const SeedContext ctx = prepare_seed(cfg, 1);
  const std::vector<int> ids(ctx.split.train.begin(), ctx.split.train.begin() + 70);
  const auto train = training_examples(ctx.observed, ids, cfg.k, ctx.valid);
  const PathLossFit fit = fit_plm(link_observations(train));
  auto slf = std::make_shared<const SlfEstimate>(reconstruct_slf(train, fit, ctx.env.grid, cfg.rti));
  OptimizerConfig opt = cfg.opt;
  opt.epochs = 2;
  Rng rng = feature_rng(1, 70);
  const FeaturePredictor pred("feature_asym", train_feature_predictor(train, slf.get(), cfg.loss_asym, opt, rng), slf);
  double worst = 0.0;
  double total = 0.0;
  for (int id : ctx.split.test) {
    const Point tx = ctx.tx_locs[static_cast<std::size_t>(id)];
    const auto q = nearest_valid_points(tx, cfg.k, ctx.valid);
    const auto t0 = Clock::now();
    const auto out = pred.predict(tx, q);
    const double ms = seconds_since(t0) * 1e3;
    worst = std::max(worst, ms);
    total += ms;
  }
  report(10, "inference latency", worst <= 100.0,
         fmt("K = %d, worst %.2f ms, mean %.2f ms over %zu secondaries", cfg.k, worst,
             total / static_cast<double>(ctx.split.test.size()), ctx.split.test.size()));
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(PSPRED_CLI) + " " + args).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / "pspred_acceptance";
  fs::remove_all(root);
  const auto t0 = Clock::now();
  const int a = run_cli("--seed 7 --out " + (root / "a").string() + " eval --quiet");
  const int b = run_cli("--seed 7 --out " + (root / "b").string() + " eval --quiet");
  bool same = a == 0 && b == 0;
  std::size_t bytes = 0;
  for (const char* f : {"report.csv", "histogram.csv", "summary.txt"}) {
    const std::string x = slurp(root / "a" / f);
    same = same && !x.empty() && x == slurp(root / "b" / f);
    bytes += x.size();
  }
  report(11, "determinism", same,
         fmt("exit codes %d/%d, %zu report bytes compared, %.0f s", a, b, bytes, seconds_since(t0)));
  fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict_mode = argc > 1 && std::string(argv[1]) == "--strict";
  plm_recovery();
  rti_oracle();
  rti_ordering();
  loss_correctness();
  experiment_criteria();
  boundary_suite();
  latency();
  determinism();
  std::printf("%d of 11 criteria passed\n", 11 - failures);
  return strict_mode && failures > 0 ? 1 : 0;
}
