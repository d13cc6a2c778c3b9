#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pspred/boundary.hpp"
#include "pspred/dataset.hpp"
#include "pspred/envgen.hpp"
#include "pspred/feature_model.hpp"
#include "pspred/grid_model.hpp"
#include "pspred/metrics.hpp"
#include "pspred/plm.hpp"
#include "pspred/predictor.hpp"
#include "pspred/rti.hpp"

namespace pspred {

struct MethodToggles {
  bool plm = true;
  bool plm_rti = true;
  bool feature_asym = true;
  bool feature_sym = true;
  bool feature_asym_noaug = false;  // asymmetric feature model trained without augmentation
  bool grid = false;
};

struct ExperimentConfig {
  EnvironmentConfig env;
  int n_transmitters = 123;
  int n_test = 30;
  std::vector<int> tpn_sweep{70};
  int k = 200;
  int s = 5;
  int m = 200;
  bool augmentation = true;
  LossParams loss_asym{1.0, 14.0};  // lambda_u from a sweep on seeds disjoint from the default ones
  LossParams loss_sym{1.0, 1.0};
  OptimizerConfig opt;
  GridModelConfig grid_model;
  int grid_epochs = 30;
  RtiConfig rti;
  int boundary_points = 20;
  double step_g_db = 10.0;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double loc_err_mean_m = 0.0;
  double rss_err_mean_db = 0.0;
  MethodToggles methods;
  double mae_floor_dbm = -50.0;
  std::vector<double> histogram_edges{-70.0, -60.0, -50.0, -40.0, -30.0};
  std::vector<ProtectionBoundary> protections;  // used by the spectrum administrator

  void validate() const;
};

/// Independent random stream for one stage of one seed.
Rng stage_rng(std::uint64_t seed, std::uint64_t stage);

/// Environment, measurements and transmitter split shared by every T_PN of one seed.
struct SeedContext {
  std::uint64_t seed = 0;
  TrueEnvironment env;
  VoxelMask valid;
  std::vector<Point> tx_locs;
  Dataset clean;     // measurements before error injection
  Dataset observed;  // what the SA trains on (errors injected)
  TransmitterSplit split;  // train holds max(T_PN) ids; each T_PN uses a prefix
};

SeedContext prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed);
/// Same as prepare_seed for an already built environment.
SeedContext prepare_seed(const ExperimentConfig& cfg, TrueEnvironment env, std::uint64_t seed);

std::vector<TrainingExample> training_examples(const Dataset& ds, std::span<const int> ids, int k,
                                               const VoxelMask& valid);

struct TrainedMethods {
  PathLossFit fit;
  std::shared_ptr<const SlfEstimate> slf;
  std::vector<std::unique_ptr<Predictor>> predictors;
  std::map<std::string, double> train_seconds;
};

/// The training set the feature models see: M subsets per example, or `train` itself when
/// augmentation is off.
std::vector<TrainingExample> augmented_examples(const ExperimentConfig& cfg, std::uint64_t seed, std::uint64_t stage,
                                                std::span<const TrainingExample> train);

/// Initialisation stream shared by all feature-model variants of one run.
Rng feature_rng(std::uint64_t seed, std::uint64_t stage);

/// Fits the PLM, reconstructs the SLF and trains every enabled method on `train`.
/// `stage` identifies the run within the seed (the T_PN).
TrainedMethods train_methods(const ExperimentConfig& cfg, const SeedContext& ctx,
                             std::span<const TrainingExample> train, std::uint64_t stage);

struct MethodMetrics {
  std::string method;
  double mae_db = 0.0;
  std::optional<double> mae_db_thresholded;
  std::optional<double> p_d;
  std::optional<double> z_ooz_bar_dbm;
  int proposals = 0;
  int denials = 0;
  int not_enclosing = 0;
  bool ooz_on_schedule = true;  // every z_ooz is N_f plus a multiple of g
  std::vector<HistogramBin> histogram;
  double predict_ms = 0.0;  // mean wall-clock per secondary
  double train_s = 0.0;
};

struct RunResult {
  std::uint64_t seed = 0;
  int tpn = 0;
  PathLossFit fit;
  double rti_error = 0.0;
  std::vector<MethodMetrics> methods;
};

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string message;
};

struct ExperimentReport {
  std::vector<RunResult> runs;
  std::vector<SeedFailure> failures;

  /// Mean of one metric across seeds for a (T_PN, method) pair, over runs that have it.
  std::optional<double> seed_mean(int tpn, const std::string& method,
                                  std::optional<double> MethodMetrics::*field) const;
  std::optional<double> seed_mean_mae(int tpn, const std::string& method) const;
  const MethodMetrics* find(std::uint64_t seed, int tpn, const std::string& method) const;
};

/// Scores a predictor on the test transmitters of a seed.
MethodMetrics evaluate_method(const Predictor& predictor, const ExperimentConfig& cfg, const SeedContext& ctx,
                              const PathLossFit& fit);

/// Every seed and T_PN; a failing seed is recorded and skipped. Progress lines go to `log`.
ExperimentReport run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// report.csv, histogram.csv and summary.txt hold only reproducible values; timing.csv holds
/// wall-clock figures.
void write_report(const ExperimentReport& report, const ExperimentConfig& cfg, const std::filesystem::path& dir);

}  // namespace pspred
