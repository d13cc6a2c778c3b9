#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "pspred/dataset.hpp"
#include "pspred/loss.hpp"
#include "pspred/mlp.hpp"
#include "pspred/rti.hpp"

namespace pspred {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 200;
  int patience = 20;               // epochs without validation improvement before stopping
  int lr_patience = 5;             // epochs without improvement before halving the learning rate
  double lr_decay = 0.5;
  double validation_fraction = 0.1;  // share of transmitters held out for early stopping
  std::vector<int> hidden{64, 64, 32};

  void validate() const;
};

/// Per-feature min-max scaling fitted on training data; out-of-range values clamp to [0, 1].
struct MinMaxScaler {
  std::vector<double> lo;
  std::vector<double> hi;

  double apply(std::size_t i, double v) const;
};

/// Link-wise RSS regressor over [tx_x, tx_y, rx_x, rx_y, v_hat] (v_hat dropped without RTI).
struct FeatureModel {
  Mlp<double> net;
  bool use_rti = true;
  MinMaxScaler features;
  double target_lo = 0.0;
  double target_hi = 1.0;
  LossParams loss;
  OptimizerConfig opt;
  std::vector<double> train_loss_db;  // per epoch, mean per-example loss in dB
  std::vector<double> val_loss_db;
  int best_epoch = 0;
};

/// Raw (unscaled) features of one link.
std::vector<double> link_features(Point tx, Point rx, const SlfEstimate* slf);

/// Trains on mini-batches of examples with the per-example normalised asymmetric loss summed
/// over the batch, holding the over/under counts fixed when differentiating. Transmitters are
/// split off for validation. Early stopping and best-epoch selection use the validation
/// weighted error sum(lambda |err|) / count, whose minimiser is the lambda_u / (lambda_o +
/// lambda_u) quantile that the gradient steps towards; without a validation split the
/// training loss is used.
FeatureModel train_feature_predictor(std::span<const TrainingExample> train, const SlfEstimate* slf,
                                     const LossParams& params, const OptimizerConfig& opt, Rng& rng);

std::vector<double> predict_feature(const FeatureModel& model, const SlfEstimate* slf, Point tx,
                                    std::span<const Point> queries);

/// A batch for gradient checks: scaled features (in x n), scaled targets, and the number of
/// consecutive samples in each example.
struct GradientBatch {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<int> group_sizes;
};

enum class LossMode { kNormalized, kNumeratorOnly };

/// Batch loss: sum over groups of numerator / denominator (or numerator alone).
/// Samples with |pred - target| <= kink are excluded from the mask.
double batch_loss(const Mlp<double>& net, const GradientBatch& batch, const LossParams& params,
                  LossMode mode, double kink = 0.0);

/// Analytic gradient of batch_loss, flattened like Mlp::flatten.
std::vector<double> batch_gradient(const Mlp<double>& net, const GradientBatch& batch,
                                   const LossParams& params, LossMode mode, double kink = 0.0);

/// Max over parameters of |analytic - numeric| / max(|analytic| + |numeric|, 1e-7), numeric
/// by central differences (extended precision, step 1e-5); samples within 1e-3 of the loss kink are excluded.
double gradient_check(const Mlp<double>& net, const GradientBatch& batch, const LossParams& params,
                      LossMode mode = LossMode::kNormalized);

/// Feature model variant: the batch is built from the examples with the model's own scaling.
GradientBatch make_gradient_batch(const FeatureModel& model, const SlfEstimate* slf,
                                  std::span<const TrainingExample> examples);

void save_feature_model(const FeatureModel& model, std::ostream& out);
FeatureModel load_feature_model(std::istream& in);

}  // namespace pspred
