#include "pspred/plm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pspred {

PathLossFit fit_plm(std::span<const LinkObservation> links) {
  if (links.size() < 2) throw PipelineError("path-loss fit needs at least two links");
  PathLossFit fit;
  fit.d0_m = std::numeric_limits<double>::infinity();
  double d_max = 0.0;
  for (const auto& l : links) {
    if (!(l.distance_m > 0.0)) throw PipelineError("path-loss fit needs positive link distances");
    if (l.distance_m < fit.d0_m || (l.distance_m == fit.d0_m && l.rss_dbm < fit.z0_dbm)) {
      fit.d0_m = l.distance_m;
      fit.z0_dbm = l.rss_dbm;
    }
    d_max = std::max(d_max, l.distance_m);
  }
  if (d_max == fit.d0_m) throw PipelineError("path-loss fit is degenerate: all link distances equal");

  // rss - z0 = eta * x with x = -10 log10(d / d0); least squares through the origin.
  // Summing in sorted order makes the result independent of the input permutation.
  std::vector<LinkObservation> sorted(links.begin(), links.end());
  std::sort(sorted.begin(), sorted.end(), [](const LinkObservation& a, const LinkObservation& b) {
    return a.distance_m != b.distance_m ? a.distance_m < b.distance_m : a.rss_dbm < b.rss_dbm;
  });
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& l : sorted) {
    const double x = -10.0 * std::log10(l.distance_m / fit.d0_m);
    sxx += x * x;
    sxy += x * (l.rss_dbm - fit.z0_dbm);
  }
  fit.eta = sxy / sxx;
  return fit;
}

double plm_predict(const PathLossFit& fit, double distance_m) {
  if (!(distance_m > 0.0)) throw PipelineError("path-loss prediction at zero distance");
  return fit.z0_dbm - 10.0 * fit.eta * std::log10(distance_m / fit.d0_m);
}

double plm_predict(const PathLossFit& fit, Point tx, Point rx) {
  return plm_predict(fit, distance(tx, rx));
}

std::vector<LinkObservation> link_observations(std::span<const TrainingExample> examples) {
  std::vector<LinkObservation> out;
  for (const auto& ex : examples) {
    for (const auto& c : ex.chosen) out.push_back({distance(ex.tx_loc, c.rx_loc), c.rss_dbm});
  }
  return out;
}

}  // namespace pspred
