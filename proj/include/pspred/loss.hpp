#pragma once

#include <cstdint>
#include <span>

namespace pspred {

/// Weights of the asymmetric absolute error. lambda_u scales underestimation
/// (target > prediction), lambda_o overestimation (target <= prediction).
struct LossParams {
  double lambda_o = 1.0;
  double lambda_u = 4.0;

  void validate() const;
  friend bool operator==(const LossParams&, const LossParams&) = default;
};

/// Numerator and denominator of the masked asymmetric loss for one example.
struct LossTerms {
  double numerator = 0.0;    // sum of lambda * |err| over masked entries
  double denominator = 0.0;  // lambda_o * #over + lambda_u * #under over masked entries
  int over = 0;
  int under = 0;

  double value() const { return numerator / denominator; }
};

/// Only entries with mask != 0 contribute, to the numerator and to both indicator counts.
/// Throws when the mask selects nothing.
LossTerms asymmetric_loss_terms(std::span<const double> pred, std::span<const double> target,
                                std::span<const std::uint8_t> mask, const LossParams& params);

double asymmetric_loss(std::span<const double> pred, std::span<const double> target,
                       std::span<const std::uint8_t> mask, const LossParams& params);

/// Derivative of loss = numerator / denominator with respect to one masked prediction; the
/// denominator is piecewise constant, so this is +lambda_o / D or -lambda_u / D.
inline double asymmetric_loss_slope(double pred, double target, double denominator,
                                    const LossParams& params) {
  return target <= pred ? params.lambda_o / denominator : -params.lambda_u / denominator;
}

}  // namespace pspred
