#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "pspred/envgen.hpp"
#include "pspred/feature_model.hpp"
#include "pspred/loss.hpp"
#include "pspred/tensor.hpp"

namespace pspred {

/// Channel-major feature map: value (c, y, x) at data[(c * h + y) * w + x].
struct FeatureMap {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int channels, int height, int width)
      : c(channels), h(height), w(width), data(static_cast<std::size_t>(channels) * height * width, 0.0) {}
  double& at(int ch, int y, int x) { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  double at(int ch, int y, int x) const { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
};

/// Square same-padded convolution.
struct Conv {
  int in = 0;
  int out = 0;
  int k = 3;
  std::vector<double> w;  // [out][in][k][k]
  std::vector<double> b;  // [out]
};

struct GridModelConfig {
  int base_channels = 8;
  bool skip = true;  // concatenate the full-resolution encoder features into the decoder
  int max_grid = 64;
};

/// Encoder-decoder over the 4-channel input tensor:
/// conv-conv -> avg-pool -> conv -> upsample -> [concat skip] -> conv -> 1x1 conv.
struct GridModel {
  GridModelConfig cfg;
  std::vector<Conv> layers;  // enc1, enc2, mid, dec, head
  double target_lo = 0.0;
  double target_hi = 1.0;
  std::vector<double> train_loss_db;

  struct Cache {
    FeatureMap input, e1, e2, pooled, mid, up, cat, dec;
  };

  GridModel() = default;
  explicit GridModel(const GridModelConfig& cfg);
  void init(Rng& rng);

  FeatureMap forward(const FeatureMap& input, Cache* cache = nullptr) const;
  /// Parameter gradient (flattened like flatten()) from dLoss/dOutput.
  std::vector<double> backward(const Cache& cache, const FeatureMap& d_out) const;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> params);
};

FeatureMap tensor_to_map(const InputTensor& t);

/// One training pair: the input tensor and target RSS (dBm) at every pixel where x2 = 1.
struct GridSample {
  InputTensor input;
  std::vector<double> target;  // per pixel; only masked entries are read
};

GridModel train_grid_predictor(std::span<const GridSample> train, const LossParams& params,
                               const OptimizerConfig& opt, const GridModelConfig& cfg, Rng& rng);

/// Predicted RSS (dBm) at the pixels of the queries in `input.x2`, in query order.
std::vector<double> predict_grid(const GridModel& model, const InputTensor& input,
                                 std::span<const Point> queries, const GridSpec& grid);

/// Scaled-space masked loss summed over samples; mask pixels within `kink` of the target
/// (at the current parameters) are dropped.
double grid_batch_loss(const GridModel& model, std::span<const GridSample> batch,
                       const LossParams& params, LossMode mode, double kink = 0.0);

/// Same contract as the feature-model gradient_check.
double grid_gradient_check(const GridModel& model, std::span<const GridSample> batch,
                           const LossParams& params, LossMode mode = LossMode::kNormalized);

}  // namespace pspred
