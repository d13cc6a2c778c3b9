#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pspred/feature_model.hpp"
#include "pspred/grid_model.hpp"
#include "pspred/plm.hpp"
#include "pspred/rti.hpp"

namespace pspred {

/// Maps a transmitter location and query points to predicted RSS (dBm).
/// Implementations are immutable after construction; predict is pure.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  std::vector<double> predict(Point tx, std::span<const Point> queries) const;

 protected:
  virtual std::vector<double> predict_impl(Point tx, std::span<const Point> queries) const = 0;
};

class PlmPredictor : public Predictor {
 public:
  explicit PlmPredictor(PathLossFit fit) : fit_(fit) {}
  std::string name() const override { return "plm"; }
  const PathLossFit& fit() const { return fit_; }

 protected:
  std::vector<double> predict_impl(Point tx, std::span<const Point> queries) const override;

 private:
  PathLossFit fit_;
};

/// PLM minus the RTI-estimated shadowing of each link.
class PlmRtiPredictor : public Predictor {
 public:
  PlmRtiPredictor(PathLossFit fit, std::shared_ptr<const SlfEstimate> slf)
      : fit_(fit), slf_(std::move(slf)) {}
  std::string name() const override { return "plm_rti"; }

 protected:
  std::vector<double> predict_impl(Point tx, std::span<const Point> queries) const override;

 private:
  PathLossFit fit_;
  std::shared_ptr<const SlfEstimate> slf_;
};

class FeaturePredictor : public Predictor {
 public:
  FeaturePredictor(std::string name, FeatureModel model, std::shared_ptr<const SlfEstimate> slf);
  std::string name() const override { return name_; }
  const FeatureModel& model() const { return model_; }

 protected:
  std::vector<double> predict_impl(Point tx, std::span<const Point> queries) const override;

 private:
  std::string name_;
  FeatureModel model_;
  std::shared_ptr<const SlfEstimate> slf_;
};

class GridPredictor : public Predictor {
 public:
  GridPredictor(GridModel model, std::shared_ptr<const SlfEstimate> slf, VoxelMask valid);
  std::string name() const override { return "grid"; }

 protected:
  std::vector<double> predict_impl(Point tx, std::span<const Point> queries) const override;

 private:
  GridModel model_;
  std::shared_ptr<const SlfEstimate> slf_;
  Image x3_;
  VoxelMask valid_;
};

}  // namespace pspred
