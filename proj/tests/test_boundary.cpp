#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <tuple>

#include "pspred/boundary.hpp"

using namespace pspred;

namespace {

BoundaryConfig cfg_with(int n, double cap) {
  BoundaryConfig c;
  c.n_points = n;
  c.step_g_db = 10.0;
  c.noise_floor_dbm = -100.0;
  c.z0_cap_dbm = cap;
  return c;
}

std::tuple<double, double, double> key(Point tx, Point p) { return {distance(tx, p), p.x, p.y}; }

// Monotone-chain hull; true when p is strictly inside every hull edge.
bool hull_oracle(Point p, std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return false;
  auto cross = [](Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); };
  std::vector<Point> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  if (h.size() < 3) return false;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (cross(h[i], h[(i + 1) % h.size()], p) <= 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("threshold schedule arithmetic") {
  const Point tx{0, 0};
  std::vector<PointPrediction> preds;
  for (int i = 0; i < 30; ++i) preds.push_back({{10.0 * (i + 1), 0.0}, -120.0});
  const auto first = propose_boundary(tx, preds, cfg_with(20, -20));
  CHECK(first.iterations_m == 1);
  CHECK(first.z_ooz_dbm == -100.0);
  CHECK(first.points.size() == 20);

  for (auto& p : preds) p.rss_dbm = -95.0;
  for (int i = 0; i < 19; ++i) preds[static_cast<std::size_t>(i)].rss_dbm = -101.0;
  const auto second = propose_boundary(tx, preds, cfg_with(20, -20));
  CHECK(second.iterations_m == 2);
  CHECK(second.z_ooz_dbm == -90.0);

  for (auto& p : preds) p.rss_dbm = -30.0;
  CHECK_THROWS_AS(propose_boundary(tx, preds, cfg_with(20, -30)), DenialError);
  CHECK_THROWS_AS(propose_boundary(tx, std::span(preds).first(5), cfg_with(20, -20)), PipelineError);
  CHECK_THROWS_AS(propose_boundary(tx, preds, cfg_with(2, -20)), ConfigError);
}

TEST_CASE("exhaustive K = 12, N = 3 enumeration against a brute-force oracle") {
  const Point tx{0, 0};
  // Three rings of four points, so distance ties are common.
  const std::array<Point, 12> locs{{{10, 0}, {0, 10}, {-10, 0}, {0, -10},
                                    {10, 10}, {-10, 10}, {-10, -10}, {10, -10},
                                    {20, 0}, {0, 20}, {-20, 0}, {0, -20}}};
  const std::array<double, 3> levels{-105.0, -95.0, -75.0};
  constexpr int kN = 3;
  constexpr int kCount = 531441;  // 3^12
  constexpr int kDenied = std::numeric_limits<int>::max();

  for (double cap : {-72.0, -60.0}) {
    const BoundaryConfig cfg = cfg_with(kN, cap);
    const int m_bound = static_cast<int>(std::ceil((cap - cfg.noise_floor_dbm) / cfg.step_g_db)) + 1;
    std::vector<int> m_of(kCount);
    int denials = 0;
    for (int code = 0; code < kCount; ++code) {
      std::array<PointPrediction, 12> preds;
      std::array<double, 12> sorted;
      for (int i = 0, c = code; i < 12; ++i, c /= 3) {
        preds[static_cast<std::size_t>(i)] = {locs[static_cast<std::size_t>(i)], levels[static_cast<std::size_t>(c % 3)]};
        sorted[static_cast<std::size_t>(i)] = preds[static_cast<std::size_t>(i)].rss_dbm;
      }
      std::sort(sorted.begin(), sorted.end());
      // Oracle: the first threshold strictly above the N-th smallest prediction.
      const double nth = sorted[kN - 1];
      int m_star = 1;
      while (cfg.noise_floor_dbm + (m_star - 1) * cfg.step_g_db <= nth) ++m_star;
      const double z_star = cfg.noise_floor_dbm + (m_star - 1) * cfg.step_g_db;
      const bool deny = z_star >= cap;

      try {
        const auto prop = propose_boundary(tx, preds, cfg);
        m_of[static_cast<std::size_t>(code)] = prop.iterations_m;
        REQUIRE_FALSE(deny);
        REQUIRE(prop.iterations_m == m_star);
        REQUIRE(prop.z_ooz_dbm == z_star);
        REQUIRE(prop.iterations_m <= m_bound);
        const double steps = (prop.z_ooz_dbm - cfg.noise_floor_dbm) / cfg.step_g_db;
        REQUIRE(steps == std::floor(steps));
        REQUIRE(prop.points.size() == kN);
        for (const auto& p : prop.points) REQUIRE(p.rss_dbm < prop.z_th_final_dbm);
        // Every qualifying point left out is no nearer than every point kept.
        for (const auto& q : preds) {
          if (!(q.rss_dbm < z_star)) continue;
          const bool kept = std::any_of(prop.points.begin(), prop.points.end(), [&](const PointPrediction& p) { return p.loc == q.loc; });
          if (kept) continue;
          for (const auto& p : prop.points) REQUIRE(key(tx, p.loc) < key(tx, q.loc));
        }
        std::vector<Point> kept_locs;
        for (const auto& p : prop.points) kept_locs.push_back(p.loc);
        REQUIRE(prop.encloses_transmitter == hull_oracle(tx, kept_locs));
      } catch (const DenialError&) {
        REQUIRE(deny);
        m_of[static_cast<std::size_t>(code)] = kDenied;
        ++denials;
      }
    }
    if (cap == -72.0) {
      CHECK(denials > 0);
    } else {
      CHECK(denials == 0);
    }

    // Lowering any single prediction by one level never increases m.
    int pow3 = 1;
    for (int i = 0; i < 12; ++i, pow3 *= 3) {
      for (int code = 0; code < kCount; ++code) {
        if ((code / pow3) % 3 == 0) continue;
        REQUIRE(m_of[static_cast<std::size_t>(code - pow3)] <= m_of[static_cast<std::size_t>(code)]);
      }
    }
  }
}

TEST_CASE("proposal accuracy") {
  BoundaryProposal p;
  for (int i = 0; i < 4; ++i) p.points.push_back({{10.0 * i, 0}, -80.0 + i});
  const std::vector<double> above{-85, -84, -83, -82};
  const std::vector<double> below{-75, -74, -73, -72};
  const std::vector<double> mixed{-80, -70, -90, -77};
  CHECK(proposal_accuracy(p, above) == 1.0);
  CHECK(proposal_accuracy(p, below) == 0.0);
  CHECK(proposal_accuracy(p, mixed) == 0.75);
  CHECK_THROWS_AS(proposal_accuracy(p, std::span(above).first(2)), PipelineError);
}

TEST_CASE("strict hull test against monotone chain") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(-4, 4);
  for (int trial = 0; trial < 3000; ++trial) {
    std::vector<Point> pts;
    const int n = 3 + trial % 6;
    for (int i = 0; i < n; ++i) pts.push_back({10.0 * u(rng), 10.0 * u(rng)});
    const Point p{0, 0};
    if (std::find(pts.begin(), pts.end(), p) != pts.end()) continue;
    CHECK(strictly_inside_hull(p, pts) == hull_oracle(p, pts));
  }
}

TEST_CASE("power adaptation") {
  BoundaryProposal prop;
  prop.tx = {0, 0};
  for (int i = 0; i < 8; ++i) {
    const double a = i * std::acos(-1.0) / 4.0;
    prop.points.push_back({{100.0 * std::cos(a), 100.0 * std::sin(a)}, -60.0});
  }
  const PathLossFit fit{2.0, -25.0, 10.0};
  CHECK(adapt_power(prop, {}, 30.0, fit) == 30.0);

  ProtectionBoundary far;
  far.center = {500, 500};
  far.points = {{450, 450}, {550, 450}, {550, 550}, {450, 550}};
  const std::vector<ProtectionBoundary> far_only{far};
  CHECK(adapt_power(prop, far_only, 30.0, fit) == 30.0);

  ProtectionBoundary around;
  around.center = {0, 0};
  around.points = {{-5, -5}, {5, -5}, {5, 5}, {-5, 5}};
  const std::vector<ProtectionBoundary> covering{around};
  CHECK_THROWS_AS(adapt_power(prop, covering, 30.0, fit), DenialError);

  // The fan first touches the block at its vertex (100 s, 0): s = 10^(-0.5), a 10 dB cut at eta 2.
  const double s_touch = std::pow(10.0, -0.5);
  ProtectionBoundary block;
  block.center = {45, 0};
  block.points = {{100 * s_touch, -5}, {60, -5}, {60, 5}, {100 * s_touch, 5}};
  const std::vector<ProtectionBoundary> blocking{block};
  const double p_sn = adapt_power(prop, blocking, 30.0, fit);
  CHECK(p_sn == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(plm_radius_factor(30.0 - p_sn, 2.0) == doctest::Approx(s_touch).epsilon(1e-9));

  // Intersection oracle after scaling.
  auto hits = [&](double scale) {
    for (const auto& tri : boundary_fan(prop, scale)) {
      if (polygons_intersect(tri, block.points)) return true;
    }
    return false;
  };
  const double f = plm_radius_factor(30.0 - p_sn, fit.eta);
  CHECK_FALSE(hits(f * (1.0 - 1e-9)));
  CHECK(hits(f * (1.0 + 1e-6)));
  CHECK(hits(1.0));
}

TEST_CASE("protection validation") {
  ProtectionBoundary p;
  p.center = {100, 100};
  p.points = {{0, 0}, {10, 0}, {10, 10}};
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.points = {{0, 0}, {10, 0}};
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
