#pragma once

#include <optional>
#include <span>
#include <vector>

namespace pspred {

/// Mean |pred - truth|.
double mae_db(std::span<const double> preds, std::span<const double> truths);

/// Mean |pred - truth| over pairs whose truth is strictly above floor_dbm.
double mae_db_thresholded(std::span<const double> preds, std::span<const double> truths, double floor_dbm);

struct HistogramBin {
  double lo = 0.0;  // the first bin extends to -inf and the last to +inf
  double hi = 0.0;
  std::size_t count = 0;
  double population_pct = 0.0;
  std::optional<double> mae_db;  // absent for empty bins
};

/// Bins [e_i, e_{i+1}) over the true RSS with open-ended outer bins; needs >= 2 increasing edges.
std::vector<HistogramBin> rss_range_histogram(std::span<const double> preds, std::span<const double> truths,
                                              std::span<const double> bin_edges);

}  // namespace pspred
