#include "pspred/predictor.hpp"

#include <cmath>

#include "pspred/tensor.hpp"

namespace pspred {

std::vector<double> Predictor::predict(Point tx, std::span<const Point> queries) const {
  if (queries.empty()) throw PipelineError(name() + ": no query points");
  for (Point q : queries) {
    if (q == tx) throw PipelineError(name() + ": query at the transmitter location");
  }
  auto out = predict_impl(tx, queries);
  for (double v : out) {
    if (!std::isfinite(v)) throw PipelineError(name() + ": non-finite prediction");
  }
  return out;
}

std::vector<double> PlmPredictor::predict_impl(Point tx, std::span<const Point> queries) const {
  std::vector<double> out;
  out.reserve(queries.size());
  for (Point q : queries) out.push_back(plm_predict(fit_, tx, q));
  return out;
}

std::vector<double> PlmRtiPredictor::predict_impl(Point tx, std::span<const Point> queries) const {
  std::vector<double> out;
  out.reserve(queries.size());
  for (Point q : queries) out.push_back(plm_predict(fit_, tx, q) - link_shadow_db(*slf_, tx, q));
  return out;
}

FeaturePredictor::FeaturePredictor(std::string name, FeatureModel model, std::shared_ptr<const SlfEstimate> slf)
    : name_(std::move(name)), model_(std::move(model)), slf_(std::move(slf)) {
  if (model_.use_rti && !slf_) throw PipelineError(name_ + ": model expects an SLF estimate");
}

std::vector<double> FeaturePredictor::predict_impl(Point tx, std::span<const Point> queries) const {
  return predict_feature(model_, slf_.get(), tx, queries);
}

GridPredictor::GridPredictor(GridModel model, std::shared_ptr<const SlfEstimate> slf, VoxelMask valid)
    : model_(std::move(model)), slf_(std::move(slf)), x3_(slf_to_map_image(*slf_)), valid_(std::move(valid)) {}

std::vector<double> GridPredictor::predict_impl(Point tx, std::span<const Point> queries) const {
  const InputTensor input = assemble_input_tensor(tx, queries, x3_, *slf_, valid_);
  return predict_grid(model_, input, queries, slf_->grid);
}

}  // namespace pspred
