#pragma once

#include <span>
#include <vector>

#include "pspred/geometry.hpp"
#include "pspred/plm.hpp"

namespace pspred {

struct PointPrediction {
  Point loc;
  double rss_dbm = 0.0;

  friend bool operator==(const PointPrediction&, const PointPrediction&) = default;
};

struct BoundaryConfig {
  int n_points = 20;
  double step_g_db = 10.0;
  double noise_floor_dbm = -100.0;
  double z0_cap_dbm = 0.0;  // search stops (denial) once the threshold reaches this

  void validate() const;
};

struct BoundaryProposal {
  Point tx;
  std::vector<PointPrediction> points;
  double z_ooz_dbm = 0.0;
  int iterations_m = 0;
  double z_th_final_dbm = 0.0;
  /// Whether the transmitter lies strictly inside the convex hull of the points.
  bool encloses_transmitter = false;
};

/// Threshold search z_th = N_f + (m - 1) g for m = 1, 2, ...; the first m with at least N
/// predictions strictly below z_th wins and the N of those nearest the transmitter are kept
/// (ties by x, then y). Throws DenialError when z_th reaches z0_cap first.
BoundaryProposal propose_boundary(Point tx, std::span<const PointPrediction> predictions,
                                  const BoundaryConfig& cfg);

/// Fraction of proposal points whose prediction is >= the true RSS (aligned with points).
double proposal_accuracy(const BoundaryProposal& proposal, std::span<const double> truth_dbm);

/// True when `p` is strictly inside the convex hull of `points`.
bool strictly_inside_hull(Point p, std::span<const Point> points);

/// A primary network's protected zone.
struct ProtectionBoundary {
  Point center;
  std::vector<Point> points;  // polygon vertices in order
  double margin_db = 0.0;

  void validate() const;
};

/// Triangles (tx, p_i, p_{i+1}) over the proposal points sorted by angle around tx, scaled
/// about tx by `scale`; angular gaps of pi or more are left open.
std::vector<std::vector<Point>> boundary_fan(const BoundaryProposal& proposal, double scale);

/// Radius factor of the PLM for a power reduction of `reduction_db`: 10^(-reduction / (10 eta)).
double plm_radius_factor(double reduction_db, double eta);

/// Largest P_SN <= P_PN for which the boundary fan, shrunk by the PLM radius factor of
/// P_PN - P_SN, meets no protection polygon. Throws DenialError when the transmitter is
/// inside a protection polygon.
double adapt_power(const BoundaryProposal& proposal, std::span<const ProtectionBoundary> protections,
                   double p_pn_dbm, const PathLossFit& fit);

}  // namespace pspred
