#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pspred/boundary.hpp"
#include "pspred/experiment.hpp"
#include "pspred/io.hpp"
#include "pspred/predictor.hpp"
#include "pspred/sa.hpp"

namespace fs = std::filesystem;
using namespace pspred;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitPipeline = 2;
constexpr int kExitDenial = 3;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = load_experiment_config(g.config_path);
  cfg.validate();
  return cfg;
}

std::uint64_t seed_of(const Globals& g, const ExperimentConfig& cfg) {
  return g.seed ? *g.seed : cfg.seeds.front();
}

fs::path out_file(const Globals& g, const std::string& name) { return fs::path(g.out) / name; }

fs::path require(const Globals& g, const std::string& name, const std::string& producer) {
  fs::path p = out_file(g, name);
  if (!fs::exists(p)) throw PipelineError(p.string() + " not found; run `" + producer + "` first");
  return p;
}

std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  std::ofstream f(p);
  if (!f) throw PipelineError("cannot write " + p.string());
  return f;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw PipelineError("cannot read " + p.string());
  return f;
}

TrueEnvironment load_environment(const Globals& g) {
  return environment_from_json(read_json_file(require(g, "environment.json", "gen")));
}

Dataset load_dataset(const Globals& g) {
  auto f = open_in(require(g, "dataset.csv", "collect"));
  return read_dataset_csv(f);
}

TransmitterSplit load_split(const Globals& g) {
  const Json j = read_json_file(require(g, "split.json", "collect"));
  TransmitterSplit s;
  try {
    s.train = j.at("train").get<std::vector<int>>();
    s.test = j.at("test").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(std::string("split.json: ") + e.what());
  }
  return s;
}

int resolve_tpn(std::optional<int> tpn, const ExperimentConfig& cfg, const TransmitterSplit& split) {
  const int n = tpn ? *tpn : *std::max_element(cfg.tpn_sweep.begin(), cfg.tpn_sweep.end());
  if (n < 1) throw ConfigError("--tpn must be positive");
  if (n > static_cast<int>(split.train.size())) {
    throw ConfigError("--tpn " + std::to_string(n) + " exceeds the " + std::to_string(split.train.size()) +
                      " training transmitters");
  }
  return n;
}

std::vector<TrainingExample> load_training(const Globals& g, const ExperimentConfig& cfg, std::optional<int> tpn,
                                           const TrueEnvironment& env) {
  const Dataset ds = load_dataset(g);
  const TransmitterSplit split = load_split(g);
  const int n = resolve_tpn(tpn, cfg, split);
  const std::vector<int> ids(split.train.begin(), split.train.begin() + n);
  return training_examples(ds, ids, cfg.k, valid_grid_points(env));
}

PathLossFit load_fit(const Globals& g) { return plm_fit_from_json(read_json_file(require(g, "plm.json", "fit-plm"))); }

std::shared_ptr<const SlfEstimate> load_slf(const Globals& g) {
  return std::make_shared<const SlfEstimate>(slf_from_json(read_json_file(require(g, "slf.json", "rti"))));
}

std::shared_ptr<const Predictor> load_predictor(const Globals& g, const std::string& method) {
  if (method == "plm") return std::make_shared<PlmPredictor>(load_fit(g));
  if (method == "plm_rti") return std::make_shared<PlmRtiPredictor>(load_fit(g), load_slf(g));
  if (method == "feature") {
    auto f = open_in(require(g, "model.txt", "train"));
    FeatureModel model = load_feature_model(f);
    std::shared_ptr<const SlfEstimate> slf = model.use_rti ? load_slf(g) : nullptr;
    return std::make_shared<FeaturePredictor>("feature", std::move(model), std::move(slf));
  }
  throw ConfigError("unknown method '" + method + "' (plm, plm_rti, feature)");
}

BoundaryConfig boundary_config(const ExperimentConfig& cfg, const TrueEnvironment& env, const PathLossFit& fit) {
  BoundaryConfig b;
  b.n_points = cfg.boundary_points;
  b.step_g_db = cfg.step_g_db;
  b.noise_floor_dbm = env.noise_floor_dbm;
  b.z0_cap_dbm = fit.z0_dbm;
  b.validate();
  return b;
}

Point parse_point(const std::vector<double>& v) {
  if (v.size() != 2) throw ConfigError("--tx expects two values: x y");
  return {v[0], v[1]};
}

void cmd_gen(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const TrueEnvironment env = build_environment(cfg.env, seed_of(g, cfg));
  write_json_file(to_json(env), out_file(g, "environment.json"));
  auto f = open_out(out_file(g, "obstacles.csv"));
  write_obstacles_csv(env, f);
  std::cout << "environment: " << env.obstacles.size() << " obstacles, "
            << valid_grid_points(env).count() << " valid grid points\n";
}

void cmd_collect(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const SeedContext ctx = prepare_seed(cfg, load_environment(g), seed_of(g, cfg));
  auto f = open_out(out_file(g, "dataset.csv"));
  write_dataset_csv(ctx.observed, f);
  write_json_file({{"train", ctx.split.train}, {"test", ctx.split.test}}, out_file(g, "split.json"));
  std::cout << "dataset: " << ctx.observed.entries.size() << " transmitters, " << ctx.split.train.size()
            << " train / " << ctx.split.test.size() << " test\n";
}

void cmd_fit_plm(const Globals& g, std::optional<int> tpn) {
  const ExperimentConfig cfg = load_config(g);
  const TrueEnvironment env = load_environment(g);
  const auto train = load_training(g, cfg, tpn, env);
  const PathLossFit fit = fit_plm(link_observations(train));
  write_json_file(to_json(fit), out_file(g, "plm.json"));
  std::printf("plm: eta %.4f, d0 %.2f m, z0 %.2f dBm\n", fit.eta, fit.d0_m, fit.z0_dbm);
}

void cmd_rti(const Globals& g, std::optional<int> tpn) {
  const ExperimentConfig cfg = load_config(g);
  const TrueEnvironment env = load_environment(g);
  const auto train = load_training(g, cfg, tpn, env);
  const SlfEstimate slf = reconstruct_slf(train, load_fit(g), env.grid, cfg.rti);
  write_json_file(to_json(slf), out_file(g, "slf.json"));
  auto f = open_out(out_file(g, "slf_map.txt"));
  write_image(slf_to_map_image(slf), env.grid.voxel_len_m, f);
  std::printf("rti: relative residual %.4f, field error %.4f\n", slf.relative_residual,
              normalized_field_error(slf.p_hat, true_loss_field(env)));
}

void cmd_train(const Globals& g, std::optional<int> tpn, const std::string& variant) {
  const ExperimentConfig cfg = load_config(g);
  const TrueEnvironment env = load_environment(g);
  const auto train = load_training(g, cfg, tpn, env);
  const auto slf = load_slf(g);
  const std::uint64_t seed = seed_of(g, cfg);
  const auto stage = static_cast<std::uint64_t>(resolve_tpn(tpn, cfg, load_split(g)));

  LossParams loss;
  bool augment_data = true;
  if (variant == "asym") {
    loss = cfg.loss_asym;
  } else if (variant == "sym") {
    loss = cfg.loss_sym;
  } else if (variant == "asym-noaug") {
    loss = cfg.loss_asym;
    augment_data = false;
  } else {
    throw ConfigError("unknown variant '" + variant + "' (asym, sym, asym-noaug)");
  }
  const auto data = augment_data ? augmented_examples(cfg, seed, stage, train) : train;
  Rng rng = feature_rng(seed, stage);
  const FeatureModel model = train_feature_predictor(data, slf.get(), loss, cfg.opt, rng);
  auto f = open_out(out_file(g, "model.txt"));
  save_feature_model(model, f);
  std::printf("train: %zu examples, best epoch %d of %zu, validation loss %.4f dB\n", data.size(),
              model.best_epoch, model.train_loss_db.size(),
              model.val_loss_db.empty() ? model.train_loss_db.at(model.best_epoch)
                                        : model.val_loss_db.at(model.best_epoch));
}

void cmd_predict(const Globals& g, const std::string& method, const std::vector<double>& tx_arg) {
  const ExperimentConfig cfg = load_config(g);
  const TrueEnvironment env = load_environment(g);
  const VoxelMask valid = valid_grid_points(env);
  const auto predictor = load_predictor(g, method);

  std::vector<Point> txs;
  if (!tx_arg.empty()) {
    txs.push_back(parse_point(tx_arg));
  } else {
    const Dataset ds = load_dataset(g);
    for (int id : load_split(g).test) txs.push_back(ds.entries.at(id).tx_loc);
  }
  auto f = open_out(out_file(g, "predictions.csv"));
  bool header = true;
  for (Point tx : txs) {
    const auto queries = nearest_valid_points(tx, cfg.k, valid);
    const auto preds = predictor->predict(tx, queries);
    std::vector<double> truths;
    for (Point q : queries) truths.push_back(ground_truth_rss_mean(env, tx, q));
    std::ostringstream block;
    write_predictions_csv(tx, queries, preds, truths, block);
    std::string text = block.str();
    if (!header) text.erase(0, text.find('\n') + 1);
    f << text;
    header = false;
  }
  std::cout << "predictions: " << txs.size() << " transmitters with " << cfg.k << " points each\n";
}

void cmd_boundary(const Globals& g, const std::string& method, const std::vector<double>& tx_arg) {
  const ExperimentConfig cfg = load_config(g);
  const TrueEnvironment env = load_environment(g);
  const PathLossFit fit = load_fit(g);
  const Point tx = parse_point(tx_arg);
  const VoxelMask valid = valid_grid_points(env);
  const auto q = env.grid.grid_point_index(tx);
  if (!q) throw ConfigError("--tx is not a grid point inside the area");
  if (!valid.valid(*q)) throw ConfigError("--tx lies under an obstacle");

  const auto predictor = load_predictor(g, method);
  const auto queries = nearest_valid_points(tx, cfg.k, valid);
  const auto preds = predictor->predict(tx, queries);
  std::vector<PointPrediction> pp;
  for (std::size_t i = 0; i < queries.size(); ++i) pp.push_back({queries[i], preds[i]});
  const BoundaryProposal proposal = propose_boundary(tx, pp, boundary_config(cfg, env, fit));
  const double p_sn = adapt_power(proposal, cfg.protections, env.p_tx_dbm, fit);
  auto f = open_out(out_file(g, "boundary.csv"));
  write_proposal_csv(proposal, p_sn, f);
  std::printf("boundary: m %d, z_ooz %.1f dBm, granted %.2f dBm%s\n", proposal.iterations_m, proposal.z_ooz_dbm,
              p_sn, proposal.encloses_transmitter ? "" : " (points do not enclose the transmitter)");
}

void write_sweep_row(std::ostream& out, double lambda_u, const ExperimentReport& report,
                     const ExperimentConfig& cfg) {
  for (int tpn : cfg.tpn_sweep) {
    auto fmt = [](std::optional<double> v) {
      if (!v) return std::string();
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *v);
      return std::string(buf);
    };
    out << lambda_u << ',' << tpn << ',' << fmt(report.seed_mean_mae(tpn, "feature_asym")) << ','
        << fmt(report.seed_mean(tpn, "feature_asym", &MethodMetrics::p_d)) << ','
        << fmt(report.seed_mean(tpn, "feature_asym", &MethodMetrics::z_ooz_bar_dbm)) << '\n';
  }
}

int cmd_eval(const Globals& g, const std::vector<std::uint64_t>& seeds, const std::vector<double>& sweep,
             bool quiet) {
  ExperimentConfig cfg = load_config(g);
  if (!seeds.empty()) cfg.seeds = seeds;
  else if (g.seed) cfg.seeds = {*g.seed};
  cfg.validate();
  std::ostream* log = quiet ? nullptr : &std::cerr;

  if (sweep.empty()) {
    const ExperimentReport report = run_experiment(cfg, log);
    write_report(report, cfg, g.out);
    std::ifstream summary(fs::path(g.out) / "summary.txt");
    std::cout << summary.rdbuf();
    if (report.runs.empty()) throw PipelineError("every seed failed");
    return 0;
  }

  // Only the asymmetric feature model depends on lambda_u.
  cfg.methods = MethodToggles{false, false, true, false, false, false};
  auto table = open_out(out_file(g, "lambda_sweep.csv"));
  table << "lambda_u,tpn,mae_db,p_d,z_ooz_bar_dbm\n";
  for (double lu : sweep) {
    ExperimentConfig c = cfg;
    c.loss_asym.lambda_u = lu;
    c.validate();
    if (log) *log << "lambda_u = " << lu << "\n";
    const ExperimentReport report = run_experiment(c, log);
    std::ostringstream dir;
    dir << "lambda_u_" << lu;
    write_report(report, c, fs::path(g.out) / dir.str());
    write_sweep_row(table, lu, report, c);
  }
  table.close();
  std::ifstream in(out_file(g, "lambda_sweep.csv"));
  std::cout << in.rdbuf();
  return 0;
}

int cmd_serve(const Globals& g, const std::string& method, int port, const std::string& replay_path) {
  const ExperimentConfig cfg = load_config(g);
  const TrueEnvironment env = load_environment(g);
  SaState state;
  state.grid = env.grid;
  state.valid = valid_grid_points(env);
  state.fit = load_fit(g);
  state.predictor = load_predictor(g, method);
  state.k = cfg.k;
  state.boundary = boundary_config(cfg, env, state.fit);
  state.p_pn_dbm = env.p_tx_dbm;
  state.protections = cfg.protections;

  if (!replay_path.empty()) {
    auto in = open_in(replay_path);
    const auto records = read_grant_log(in);
    const auto mismatches = replay_grant_log(state, records);
    std::cout << "replayed " << records.size() << " records, " << mismatches.size() << " mismatches\n";
    for (auto seq : mismatches) std::cout << "  seq " << seq << "\n";
    return mismatches.empty() ? 0 : kExitPipeline;
  }

  auto log = open_out(out_file(g, "grants.jsonl"));
  state.log_sink = &log;
  serve_sa(state, port, [](int bound) { std::cout << "listening on 127.0.0.1:" << bound << "\n" << std::flush; });
  std::cout << "served " << state.log.size() << " requests\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectrum-sharing RSS prediction and boundary proposal pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed (default: first seed in the config)");
  app.add_option("--out", g.out, "working directory for artifacts")->capture_default_str();

  std::optional<int> tpn;
  std::string variant = "asym";
  std::string method = "feature";
  std::vector<double> tx;
  std::vector<std::uint64_t> seeds;
  std::vector<double> sweep;
  bool quiet = false;
  int port = 0;
  std::string replay;

  auto* gen = app.add_subcommand("gen", "generate the environment");
  auto* collect = app.add_subcommand("collect", "place transmitters and collect measurements");
  auto* fit = app.add_subcommand("fit-plm", "fit the path loss model");
  auto* rti = app.add_subcommand("rti", "reconstruct the spatial loss field");
  auto* train = app.add_subcommand("train", "train a feature-based predictor");
  auto* predict = app.add_subcommand("predict", "predict RSS around transmitters");
  auto* boundary = app.add_subcommand("boundary", "propose a boundary and grant power");
  auto* eval = app.add_subcommand("eval", "run the full experiment over seeds");
  auto* serve = app.add_subcommand("serve", "run the spectrum administrator");

  for (auto* sc : {fit, rti, train}) sc->add_option("--tpn", tpn, "number of training transmitters");
  train->add_option("--variant", variant, "asym, sym or asym-noaug")->capture_default_str();
  for (auto* sc : {predict, boundary, serve}) {
    sc->add_option("--method", method, "plm, plm_rti or feature")->capture_default_str();
  }
  predict->add_option("--tx", tx, "transmitter x y (default: every test transmitter)")->expected(2);
  boundary->add_option("--tx", tx, "transmitter x y")->expected(2)->required();
  eval->add_option("--seeds", seeds, "seed list (overrides the config and --seed)");
  eval->add_option("--lambda-u-sweep", sweep, "evaluate the asymmetric model for each lambda_u");
  eval->add_flag("--quiet", quiet, "no progress output");
  serve->add_option("--port", port, "TCP port on 127.0.0.1 (0 picks one)")->capture_default_str();
  serve->add_option("--replay", replay, "re-decide a grant log instead of serving")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) cmd_gen(g);
    else if (*collect) cmd_collect(g);
    else if (*fit) cmd_fit_plm(g, tpn);
    else if (*rti) cmd_rti(g, tpn);
    else if (*train) cmd_train(g, tpn, variant);
    else if (*predict) cmd_predict(g, method, tx);
    else if (*boundary) cmd_boundary(g, method, tx);
    else if (*eval) return cmd_eval(g, seeds, sweep, quiet);
    else if (*serve) return cmd_serve(g, method, port, replay);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DenialError& e) {
    std::cerr << "denied: " << e.what() << "\n";
    return kExitDenial;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPipeline;
  }
}
