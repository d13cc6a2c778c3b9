#include "pspred/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

namespace pspred {

namespace {

enum Stage : std::uint64_t {
  kPlacement = 1,
  kCollect = 2,
  kSplit = 3,
  kErrors = 4,
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

void ExperimentConfig::validate() const {
  env.grid.validate();
  if (n_transmitters < 1) throw ConfigError("n_transmitters must be positive");
  if (n_test < 1) throw ConfigError("n_test must be positive");
  if (tpn_sweep.empty()) throw ConfigError("tpn_sweep must not be empty");
  for (int t : tpn_sweep) {
    if (t < 1) throw ConfigError("every T_PN must be positive");
  }
  const int max_tpn = *std::max_element(tpn_sweep.begin(), tpn_sweep.end());
  if (max_tpn + n_test > n_transmitters) {
    throw ConfigError("T_PN " + std::to_string(max_tpn) + " plus " + std::to_string(n_test) +
                      " test transmitters exceeds " + std::to_string(n_transmitters));
  }
  if (k < 2) throw ConfigError("k must be at least 2");
  if (augmentation) {
    if (m < 1 || s < 1) throw ConfigError("augmentation needs m >= 1 and s >= 1");
    if (k / s <= 1) throw ConfigError("augmentation subsets floor(k/s) must exceed 1");
  }
  loss_asym.validate();
  loss_sym.validate();
  opt.validate();
  if (grid_epochs < 1) throw ConfigError("grid_epochs must be positive");
  if (!(rti.ellipse_width_m > 0.0) || !(rti.sigma_n2 > 0.0) || !(rti.sigma2 > 0.0) || !(rti.delta > 0.0)) {
    throw ConfigError("RTI parameters must be positive");
  }
  if (boundary_points < 3) throw ConfigError("boundary_points must be at least 3");
  if (boundary_points > k) throw ConfigError("boundary_points cannot exceed k");
  if (!(step_g_db > 0.0)) throw ConfigError("step_g_db must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (loc_err_mean_m < 0.0 || rss_err_mean_db < 0.0) throw ConfigError("error means must be non-negative");
  if (histogram_edges.size() < 2) throw ConfigError("histogram needs at least two edges");
  for (std::size_t i = 1; i < histogram_edges.size(); ++i) {
    if (!(histogram_edges[i] > histogram_edges[i - 1])) throw ConfigError("histogram edges must increase");
  }
  for (const auto& p : protections) p.validate();
}

Rng stage_rng(std::uint64_t seed, std::uint64_t stage) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(stage >> 32)};
  return Rng(seq);
}

SeedContext prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  return prepare_seed(cfg, build_environment(cfg.env, seed), seed);
}

SeedContext prepare_seed(const ExperimentConfig& cfg, TrueEnvironment env, std::uint64_t seed) {
  SeedContext ctx;
  ctx.seed = seed;
  ctx.env = std::move(env);
  ctx.valid = valid_grid_points(ctx.env);
  Rng place = stage_rng(seed, kPlacement);
  ctx.tx_locs = place_transmitters(ctx.valid, cfg.n_transmitters, place);
  Rng collect = stage_rng(seed, kCollect);
  ctx.clean = collect_dataset(ctx.env, ctx.tx_locs, collect);
  std::vector<int> ids(ctx.tx_locs.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  Rng split = stage_rng(seed, kSplit);
  const int max_tpn = *std::max_element(cfg.tpn_sweep.begin(), cfg.tpn_sweep.end());
  ctx.split = split_transmitters(ids, max_tpn, cfg.n_test, split);
  Rng errors = stage_rng(seed, kErrors);
  ctx.observed = inject_errors(ctx.clean, ctx.env.grid, cfg.loc_err_mean_m, cfg.rss_err_mean_db, errors);
  return ctx;
}

std::vector<TrainingExample> training_examples(const Dataset& ds, std::span<const int> ids, int k,
                                               const VoxelMask& valid) {
  std::vector<TrainingExample> out;
  out.reserve(ids.size());
  for (int id : ids) {
    const auto it = ds.entries.find(id);
    if (it == ds.entries.end()) throw PipelineError("unknown transmitter id " + std::to_string(id));
    out.push_back(select_k_nearest(id, it->second, k, valid));
  }
  return out;
}

namespace {

std::vector<GridSample> grid_samples(std::span<const TrainingExample> train, const SlfEstimate& slf,
                                     const VoxelMask& valid) {
  const Image x3 = slf_to_map_image(slf);
  std::vector<GridSample> out;
  for (const auto& ex : train) {
    std::vector<Point> rx;
    GridSample s;
    s.target.assign(static_cast<std::size_t>(slf.grid.pixel_count()), 0.0);
    for (const auto& c : ex.chosen) {
      rx.push_back(c.rx_loc);
      s.target[static_cast<std::size_t>(*slf.grid.pixel_of(c.rx_loc))] = c.rss_dbm;
    }
    s.input = assemble_input_tensor(ex.tx_loc, rx, x3, slf, valid);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<TrainingExample> augmented_examples(const ExperimentConfig& cfg, std::uint64_t seed, std::uint64_t stage,
                                                std::span<const TrainingExample> train) {
  if (!cfg.augmentation) return {train.begin(), train.end()};
  Rng aug = stage_rng(seed, stage * 16 + 1);
  std::vector<TrainingExample> out;
  out.reserve(train.size() * static_cast<std::size_t>(cfg.m));
  for (const auto& ex : train) {
    auto more = augment(ex, cfg.m, cfg.s, aug);
    out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  return out;
}

Rng feature_rng(std::uint64_t seed, std::uint64_t stage) { return stage_rng(seed, stage * 16 + 2); }

TrainedMethods train_methods(const ExperimentConfig& cfg, const SeedContext& ctx,
                             std::span<const TrainingExample> train, std::uint64_t stage) {
  if (train.empty()) throw PipelineError("no training transmitters");
  TrainedMethods out;
  const auto links = link_observations(train);
  out.fit = fit_plm(links);
  auto t0 = Clock::now();
  out.slf = std::make_shared<const SlfEstimate>(reconstruct_slf(train, out.fit, ctx.env.grid, cfg.rti));
  out.train_seconds["rti"] = seconds_since(t0);

  if (cfg.methods.plm) out.predictors.push_back(std::make_unique<PlmPredictor>(out.fit));
  if (cfg.methods.plm_rti) out.predictors.push_back(std::make_unique<PlmRtiPredictor>(out.fit, out.slf));

  std::vector<TrainingExample> augmented;
  if (cfg.methods.feature_asym || cfg.methods.feature_sym) augmented = augmented_examples(cfg, ctx.seed, stage, train);

  auto train_feature = [&](const std::string& name, std::span<const TrainingExample> data, const LossParams& loss) {
    Rng rng = feature_rng(ctx.seed, stage);
    const auto start = Clock::now();
    FeatureModel model = train_feature_predictor(data, out.slf.get(), loss, cfg.opt, rng);
    out.train_seconds[name] = seconds_since(start);
    out.predictors.push_back(std::make_unique<FeaturePredictor>(name, std::move(model), out.slf));
  };
  if (cfg.methods.feature_asym) train_feature("feature_asym", augmented, cfg.loss_asym);
  if (cfg.methods.feature_sym) train_feature("feature_sym", augmented, cfg.loss_sym);
  if (cfg.methods.feature_asym_noaug) train_feature("feature_asym_noaug", train, cfg.loss_asym);
  if (cfg.methods.grid) {
    Rng rng = stage_rng(ctx.seed, stage * 16 + 3);
    OptimizerConfig opt = cfg.opt;
    opt.epochs = cfg.grid_epochs;
    const auto start = Clock::now();
    const auto samples = grid_samples(train, *out.slf, ctx.valid);
    GridModel model = train_grid_predictor(samples, cfg.loss_asym, opt, cfg.grid_model, rng);
    out.train_seconds["grid"] = seconds_since(start);
    out.predictors.push_back(std::make_unique<GridPredictor>(std::move(model), out.slf, ctx.valid));
  }
  return out;
}

MethodMetrics evaluate_method(const Predictor& predictor, const ExperimentConfig& cfg, const SeedContext& ctx,
                              const PathLossFit& fit) {
  MethodMetrics mm;
  mm.method = predictor.name();
  BoundaryConfig bcfg;
  bcfg.n_points = cfg.boundary_points;
  bcfg.step_g_db = cfg.step_g_db;
  bcfg.noise_floor_dbm = ctx.env.noise_floor_dbm;
  bcfg.z0_cap_dbm = fit.z0_dbm;

  std::vector<double> all_pred;
  std::vector<double> all_truth;
  double pd_sum = 0.0;
  double ooz_sum = 0.0;
  double predict_s = 0.0;
  for (int id : ctx.split.test) {
    const DatasetEntry& entry = ctx.clean.entries.at(id);
    const auto queries = nearest_valid_points(entry.tx_loc, cfg.k, ctx.valid);
    // Measurement noise is not part of the true RSS.
    std::map<Point, double> truth_at;
    std::vector<double> truths;
    truths.reserve(queries.size());
    for (Point q : queries) {
      truths.push_back(ground_truth_rss_mean(ctx.env, entry.tx_loc, q));
      truth_at.emplace(q, truths.back());
    }

    const auto t0 = Clock::now();
    const auto preds = predictor.predict(entry.tx_loc, queries);
    predict_s += seconds_since(t0);
    all_pred.insert(all_pred.end(), preds.begin(), preds.end());
    all_truth.insert(all_truth.end(), truths.begin(), truths.end());

    std::vector<PointPrediction> pp;
    for (std::size_t i = 0; i < queries.size(); ++i) pp.push_back({queries[i], preds[i]});
    try {
      const auto proposal = propose_boundary(entry.tx_loc, pp, bcfg);
      std::vector<double> t;
      for (const auto& p : proposal.points) t.push_back(truth_at.at(p.loc));
      pd_sum += proposal_accuracy(proposal, t);
      ooz_sum += proposal.z_ooz_dbm;
      ++mm.proposals;
      if (!proposal.encloses_transmitter) ++mm.not_enclosing;
      const double steps = (proposal.z_ooz_dbm - bcfg.noise_floor_dbm) / bcfg.step_g_db;
      if (steps < 0.0 || std::abs(steps - std::round(steps)) > 1e-9) mm.ooz_on_schedule = false;
    } catch (const DenialError&) {
      ++mm.denials;
    }
  }
  mm.mae_db = mae_db(all_pred, all_truth);
  try {
    mm.mae_db_thresholded = mae_db_thresholded(all_pred, all_truth, cfg.mae_floor_dbm);
  } catch (const PipelineError&) {
  }
  if (mm.proposals > 0) {
    mm.p_d = pd_sum / mm.proposals;
    mm.z_ooz_bar_dbm = ooz_sum / mm.proposals;
  }
  mm.histogram = rss_range_histogram(all_pred, all_truth, cfg.histogram_edges);
  mm.predict_ms = 1000.0 * predict_s / static_cast<double>(ctx.split.test.size());
  return mm;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  ExperimentReport report;
  for (std::uint64_t seed : cfg.seeds) {
    try {
      if (log) *log << "seed " << seed << ": preparing environment and dataset\n" << std::flush;
      const SeedContext ctx = prepare_seed(cfg, seed);
      const auto truth_field = true_loss_field(ctx.env);
      std::vector<RunResult> runs;
      for (int tpn : cfg.tpn_sweep) {
        if (log) *log << "seed " << seed << ": T_PN " << tpn << "\n" << std::flush;
        const std::span<const int> ids(ctx.split.train.data(), static_cast<std::size_t>(tpn));
        const auto train = training_examples(ctx.observed, ids, cfg.k, ctx.valid);
        const TrainedMethods trained = train_methods(cfg, ctx, train, static_cast<std::uint64_t>(tpn));
        RunResult run;
        run.seed = seed;
        run.tpn = tpn;
        run.fit = trained.fit;
        run.rti_error = normalized_field_error(trained.slf->p_hat, truth_field);
        for (const auto& p : trained.predictors) {
          MethodMetrics mm = evaluate_method(*p, cfg, ctx, trained.fit);
          if (auto it = trained.train_seconds.find(mm.method); it != trained.train_seconds.end()) mm.train_s = it->second;
          if (log) {
            if (auto* fp = dynamic_cast<const FeaturePredictor*>(p.get())) {
              *log << "  " << mm.method << " best epoch " << fp->model().best_epoch << " of "
                   << fp->model().train_loss_db.size() << "\n";
            }
            *log << "  " << mm.method << ": mae " << mm.mae_db << " dB";
            if (mm.p_d) *log << ", p_d " << *mm.p_d;
            if (mm.z_ooz_bar_dbm) *log << ", z_ooz " << *mm.z_ooz_bar_dbm << " dBm";
            *log << ", train " << mm.train_s << " s\n" << std::flush;
          }
          run.methods.push_back(std::move(mm));
        }
        runs.push_back(std::move(run));
      }
      report.runs.insert(report.runs.end(), runs.begin(), runs.end());
    } catch (const Error& e) {
      if (log) *log << "seed " << seed << " failed: " << e.what() << "\n";
      report.failures.push_back({seed, e.what()});
    }
  }
  return report;
}

const MethodMetrics* ExperimentReport::find(std::uint64_t seed, int tpn, const std::string& method) const {
  for (const auto& r : runs) {
    if (r.seed != seed || r.tpn != tpn) continue;
    for (const auto& m : r.methods) {
      if (m.method == method) return &m;
    }
  }
  return nullptr;
}

std::optional<double> ExperimentReport::seed_mean(int tpn, const std::string& method,
                                                  std::optional<double> MethodMetrics::*field) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : runs) {
    if (r.tpn != tpn) continue;
    for (const auto& m : r.methods) {
      if (m.method == method && (m.*field)) {
        sum += *(m.*field);
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::optional<double> ExperimentReport::seed_mean_mae(int tpn, const std::string& method) const {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : runs) {
    if (r.tpn != tpn) continue;
    for (const auto& m : r.methods) {
      if (m.method == method) {
        sum += m.mae_db;
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : ""; }

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw PipelineError("cannot write " + p.string());
  return out;
}

}  // namespace

void write_report(const ExperimentReport& report, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto csv = open_out(dir / "report.csv");
  csv << "seed,tpn,method,eta,z0_dbm,d0_m,rti_error,mae_db,mae_db_thresholded,p_d,z_ooz_bar_dbm,proposals,denials,"
         "not_enclosing\n";
  std::vector<std::pair<int, std::string>> keys;
  for (const auto& r : report.runs) {
    for (const auto& m : r.methods) {
      csv << r.seed << ',' << r.tpn << ',' << m.method << ',' << num(r.fit.eta) << ',' << num(r.fit.z0_dbm) << ','
          << num(r.fit.d0_m) << ',' << num(r.rti_error) << ',' << num(m.mae_db) << ',' << num(m.mae_db_thresholded)
          << ',' << num(m.p_d) << ',' << num(m.z_ooz_bar_dbm) << ',' << m.proposals << ',' << m.denials << ','
          << m.not_enclosing << '\n';
      if (std::find(keys.begin(), keys.end(), std::make_pair(r.tpn, m.method)) == keys.end()) {
        keys.emplace_back(r.tpn, m.method);
      }
    }
  }
  for (const auto& [tpn, method] : keys) {
    csv << "mean," << tpn << ',' << method << ",,,,," << num(report.seed_mean_mae(tpn, method)) << ','
        << num(report.seed_mean(tpn, method, &MethodMetrics::mae_db_thresholded)) << ','
        << num(report.seed_mean(tpn, method, &MethodMetrics::p_d)) << ','
        << num(report.seed_mean(tpn, method, &MethodMetrics::z_ooz_bar_dbm)) << ",,,\n";
  }

  auto hist = open_out(dir / "histogram.csv");
  hist << "seed,tpn,method,bin_lo_dbm,bin_hi_dbm,count,population_pct,mae_db\n";
  for (const auto& r : report.runs) {
    for (const auto& m : r.methods) {
      for (std::size_t b = 0; b < m.histogram.size(); ++b) {
        const auto& bin = m.histogram[b];
        const double lo = b == 0 ? -INFINITY : bin.lo;
        const double hi = b + 1 == m.histogram.size() ? INFINITY : bin.hi;
        hist << r.seed << ',' << r.tpn << ',' << m.method << ',' << num(lo) << ',' << num(hi) << ',' << bin.count
             << ',' << num(bin.population_pct) << ',' << num(bin.mae_db) << '\n';
      }
    }
  }

  auto timing = open_out(dir / "timing.csv");
  timing << "seed,tpn,method,train_s,predict_ms_per_secondary\n";
  for (const auto& r : report.runs) {
    for (const auto& m : r.methods) {
      timing << r.seed << ',' << r.tpn << ',' << m.method << ',' << num(m.train_s) << ',' << num(m.predict_ms) << '\n';
    }
  }

  auto sum = open_out(dir / "summary.txt");
  sum << "seeds:";
  for (auto s : cfg.seeds) sum << ' ' << s;
  sum << "\nT_PN sweep:";
  for (int t : cfg.tpn_sweep) sum << ' ' << t;
  sum << "\nK " << cfg.k << ", S " << cfg.s << ", M " << cfg.m << ", augmentation " << (cfg.augmentation ? "on" : "off")
      << "\n\nseed-averaged metrics\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %-20s %10s %10s %8s %12s\n", "T_PN", "method", "mae_db", "mae_thr_db", "p_d",
                "z_ooz_dbm");
  sum << line;
  for (const auto& [tpn, method] : keys) {
    auto fmt = [](const std::optional<double>& v, const char* f) {
      char b[32];
      if (!v) return std::string("-");
      std::snprintf(b, sizeof b, f, *v);
      return std::string(b);
    };
    std::snprintf(line, sizeof line, "%-6d %-20s %10s %10s %8s %12s\n", tpn, method.c_str(),
                  fmt(report.seed_mean_mae(tpn, method), "%.3f").c_str(),
                  fmt(report.seed_mean(tpn, method, &MethodMetrics::mae_db_thresholded), "%.3f").c_str(),
                  fmt(report.seed_mean(tpn, method, &MethodMetrics::p_d), "%.3f").c_str(),
                  fmt(report.seed_mean(tpn, method, &MethodMetrics::z_ooz_bar_dbm), "%.2f").c_str());
    sum << line;
  }
  if (!report.failures.empty()) {
    sum << "\nfailed seeds\n";
    for (const auto& f : report.failures) sum << "  seed " << f.seed << ": " << f.message << '\n';
  }
}

}  // namespace pspred
