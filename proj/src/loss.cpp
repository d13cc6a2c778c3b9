#include "pspred/loss.hpp"

#include <cmath>

#include "pspred/geometry.hpp"

namespace pspred {

void LossParams::validate() const {
  if (!(lambda_o > 0.0) || !(lambda_u > 0.0)) {
    throw ConfigError("loss weights lambda_o and lambda_u must be positive");
  }
}

LossTerms asymmetric_loss_terms(std::span<const double> pred, std::span<const double> target,
                                std::span<const std::uint8_t> mask, const LossParams& params) {
  if (pred.size() != target.size() || pred.size() != mask.size()) {
    throw PipelineError("asymmetric loss: length mismatch");
  }
  LossTerms t;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    const double err = std::abs(target[i] - pred[i]);
    if (target[i] <= pred[i]) {
      t.numerator += params.lambda_o * err;
      ++t.over;
    } else {
      t.numerator += params.lambda_u * err;
      ++t.under;
    }
  }
  if (t.over + t.under == 0) throw PipelineError("asymmetric loss: mask selects no entries");
  t.denominator = params.lambda_o * t.over + params.lambda_u * t.under;
  return t;
}

double asymmetric_loss(std::span<const double> pred, std::span<const double> target,
                       std::span<const std::uint8_t> mask, const LossParams& params) {
  return asymmetric_loss_terms(pred, target, mask, params).value();
}

}  // namespace pspred
