#include "pspred/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace pspred {

void BoundaryConfig::validate() const {
  if (n_points < 3) throw ConfigError("boundary needs at least 3 points");
  if (!(step_g_db > 0.0)) throw ConfigError("boundary threshold step must be positive");
  if (!std::isfinite(noise_floor_dbm) || !std::isfinite(z0_cap_dbm)) {
    throw ConfigError("boundary thresholds must be finite");
  }
}

BoundaryProposal propose_boundary(Point tx, std::span<const PointPrediction> predictions,
                                  const BoundaryConfig& cfg) {
  cfg.validate();
  if (predictions.size() < static_cast<std::size_t>(cfg.n_points)) {
    throw PipelineError("boundary needs at least " + std::to_string(cfg.n_points) + " predictions, got " +
                        std::to_string(predictions.size()));
  }
  for (int m = 1;; ++m) {
    const double z_th = cfg.noise_floor_dbm + (m - 1) * cfg.step_g_db;
    if (z_th >= cfg.z0_cap_dbm) {
      std::ostringstream msg;
      msg << "threshold " << z_th << " dBm reached z0 = " << cfg.z0_cap_dbm
          << " dBm before " << cfg.n_points << " points qualified";
      throw DenialError(msg.str());
    }
    std::vector<PointPrediction> below;
    for (const auto& p : predictions) {
      if (p.rss_dbm < z_th) below.push_back(p);
    }
    if (below.size() < static_cast<std::size_t>(cfg.n_points)) continue;
    std::sort(below.begin(), below.end(), [&](const PointPrediction& a, const PointPrediction& b) {
      const double da = distance(tx, a.loc);
      const double db = distance(tx, b.loc);
      if (da != db) return da < db;
      return a.loc < b.loc;
    });
    below.resize(static_cast<std::size_t>(cfg.n_points));
    BoundaryProposal out;
    out.tx = tx;
    out.points = std::move(below);
    out.iterations_m = m;
    out.z_th_final_dbm = z_th;
    out.z_ooz_dbm = z_th;
    std::vector<Point> locs;
    for (const auto& p : out.points) locs.push_back(p.loc);
    out.encloses_transmitter = strictly_inside_hull(tx, locs);
    return out;
  }
}

double proposal_accuracy(const BoundaryProposal& proposal, std::span<const double> truth_dbm) {
  if (truth_dbm.size() != proposal.points.size()) throw PipelineError("truth does not match the proposal points");
  if (proposal.points.empty()) throw PipelineError("empty proposal");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth_dbm.size(); ++i) {
    if (proposal.points[i].rss_dbm >= truth_dbm[i]) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(truth_dbm.size());
}

namespace {

// Angles of the points around p, sorted; points equal to p are skipped.
std::vector<std::pair<double, Point>> sorted_angles(Point p, std::span<const Point> points) {
  std::vector<std::pair<double, Point>> a;
  for (Point q : points) {
    if (q == p) continue;
    a.emplace_back(std::atan2(q.y - p.y, q.x - p.x), q);
  }
  std::sort(a.begin(), a.end());
  return a;
}

}  // namespace

bool strictly_inside_hull(Point p, std::span<const Point> points) {
  const auto a = sorted_angles(p, points);
  if (a.size() < 3) return false;
  double max_gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double next = i + 1 < a.size() ? a[i + 1].first : a[0].first + 2.0 * std::numbers::pi;
    max_gap = std::max(max_gap, next - a[i].first);
  }
  return max_gap < std::numbers::pi - 1e-12;
}

void ProtectionBoundary::validate() const {
  if (points.size() < 3) throw ConfigError("protection polygon needs at least 3 vertices");
  if (!point_in_polygon(center, points)) throw ConfigError("protection polygon does not enclose its center");
}

std::vector<std::vector<Point>> boundary_fan(const BoundaryProposal& proposal, double scale) {
  std::vector<Point> locs;
  for (const auto& p : proposal.points) locs.push_back(p.loc);
  const auto a = sorted_angles(proposal.tx, locs);
  std::vector<std::vector<Point>> fan;
  const Point c = proposal.tx;
  auto shrink = [&](Point q) { return Point{c.x + scale * (q.x - c.x), c.y + scale * (q.y - c.y)}; };
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t j = (i + 1) % a.size();
    double gap = a[j].first - a[i].first;
    if (j == 0) gap += 2.0 * std::numbers::pi;
    if (a.size() == 1 || gap >= std::numbers::pi) continue;
    fan.push_back({c, shrink(a[i].second), shrink(a[j].second)});
  }
  if (fan.empty()) {
    // Degenerate layouts: fall back to the segments from tx to each point.
    for (const auto& [angle, q] : a) fan.push_back({c, shrink(q)});
  }
  return fan;
}

double plm_radius_factor(double reduction_db, double eta) {
  if (!(eta > 0.0)) throw PipelineError("power adaptation needs a positive path-loss exponent");
  return std::pow(10.0, -reduction_db / (10.0 * eta));
}

namespace {

bool fan_hits(const std::vector<std::vector<Point>>& fan, std::span<const ProtectionBoundary> protections) {
  for (const auto& piece : fan) {
    for (const auto& prot : protections) {
      if (piece.size() == 2) {
        if (point_in_polygon(piece[1], prot.points)) return true;
        for (std::size_t e = 0; e < prot.points.size(); ++e) {
          if (segments_intersect(piece[0], piece[1], prot.points[e], prot.points[(e + 1) % prot.points.size()])) {
            return true;
          }
        }
      } else if (polygons_intersect(piece, prot.points)) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

double adapt_power(const BoundaryProposal& proposal, std::span<const ProtectionBoundary> protections,
                   double p_pn_dbm, const PathLossFit& fit) {
  if (proposal.points.empty()) throw PipelineError("empty proposal");
  for (const auto& prot : protections) {
    prot.validate();
    if (point_in_polygon(proposal.tx, prot.points)) {
      throw DenialError("transmitter lies inside a protection boundary");
    }
  }
  if (!fan_hits(boundary_fan(proposal, 1.0), protections)) return p_pn_dbm;
  if (!(fit.eta > 0.0)) throw PipelineError("power adaptation needs a positive path-loss exponent");
  // Scaling about tx nests the fan, so overlap is monotone in the radius factor.
  double safe = 0.0;
  double hit = 1.0;
  for (int it = 0; it < 100 && hit - safe > 1e-12; ++it) {
    const double mid = 0.5 * (safe + hit);
    (fan_hits(boundary_fan(proposal, mid), protections) ? hit : safe) = mid;
  }
  if (!(safe > 0.0)) throw DenialError("no transmit power keeps the boundary clear of protections");
  return p_pn_dbm + 10.0 * fit.eta * std::log10(safe);
}

}  // namespace pspred
