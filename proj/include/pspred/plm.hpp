#pragma once

#include <span>
#include <vector>

#include "pspred/dataset.hpp"
#include "pspred/geometry.hpp"

namespace pspred {

/// Log-distance path-loss model anchored at the shortest training link:
/// rss(d) = z0 - 10 * eta * log10(d / d0).
struct PathLossFit {
  double eta = 2.0;
  double z0_dbm = 0.0;
  double d0_m = 1.0;

  friend bool operator==(const PathLossFit&, const PathLossFit&) = default;
};

struct LinkObservation {
  double distance_m = 0.0;
  double rss_dbm = 0.0;
};

/// d0 is the minimum distance and z0 the RSS measured on it (the smallest RSS when several
/// links share d0). eta is the least-squares slope of (rss - z0) against -10 log10(d / d0),
/// with the intercept pinned at the anchor.
PathLossFit fit_plm(std::span<const LinkObservation> links);

double plm_predict(const PathLossFit& fit, double distance_m);
double plm_predict(const PathLossFit& fit, Point tx, Point rx);

/// Every (distance, rss) pair of the examples' chosen links.
std::vector<LinkObservation> link_observations(std::span<const TrainingExample> examples);

}  // namespace pspred
