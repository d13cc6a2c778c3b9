#include "pspred/metrics.hpp"

#include <cmath>

#include "pspred/geometry.hpp"

namespace pspred {

namespace {

void check_pairs(std::span<const double> preds, std::span<const double> truths) {
  if (preds.size() != truths.size()) throw PipelineError("predictions and truths differ in length");
}

}  // namespace

double mae_db(std::span<const double> preds, std::span<const double> truths) {
  check_pairs(preds, truths);
  if (preds.empty()) throw PipelineError("mean absolute error of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - truths[i]);
  return s / static_cast<double>(preds.size());
}

double mae_db_thresholded(std::span<const double> preds, std::span<const double> truths, double floor_dbm) {
  check_pairs(preds, truths);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (truths[i] > floor_dbm) {
      s += std::abs(preds[i] - truths[i]);
      ++n;
    }
  }
  if (n == 0) throw PipelineError("no true RSS above the threshold");
  return s / static_cast<double>(n);
}

std::vector<HistogramBin> rss_range_histogram(std::span<const double> preds, std::span<const double> truths,
                                              std::span<const double> bin_edges) {
  check_pairs(preds, truths);
  if (bin_edges.size() < 2) throw ConfigError("histogram needs at least two bin edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) throw ConfigError("histogram bin edges must be strictly increasing");
  }
  const std::size_t nbins = bin_edges.size() - 1;
  std::vector<HistogramBin> bins(nbins);
  std::vector<double> sums(nbins, 0.0);
  for (std::size_t b = 0; b < nbins; ++b) {
    bins[b].lo = bin_edges[b];
    bins[b].hi = bin_edges[b + 1];
  }
  for (std::size_t i = 0; i < truths.size(); ++i) {
    std::size_t b = 0;
    while (b + 1 < nbins && truths[i] >= bin_edges[b + 1]) ++b;
    ++bins[b].count;
    sums[b] += std::abs(preds[i] - truths[i]);
  }
  for (std::size_t b = 0; b < nbins; ++b) {
    if (bins[b].count > 0) {
      bins[b].mae_db = sums[b] / static_cast<double>(bins[b].count);
      bins[b].population_pct = 100.0 * static_cast<double>(bins[b].count) / static_cast<double>(truths.size());
    }
  }
  return bins;
}

}  // namespace pspred
