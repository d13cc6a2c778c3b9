#pragma once

#include <cmath>
#include <vector>

#include "pspred/envgen.hpp"
#include "pspred/geometry.hpp"

namespace pspred::test {

/// Noise-free environment with explicit obstacles only.
inline TrueEnvironment quiet_env(int l, int w, std::vector<Obstacle> obstacles = {}, double eta = 3.0,
                                 double voxel = 10.0) {
  EnvironmentConfig cfg;
  cfg.grid = {l, w, voxel};
  cfg.buildings.count = 0;
  cfg.foliage.count = 0;
  cfg.explicit_obstacles = std::move(obstacles);
  cfg.eta_true = eta;
  cfg.shadow_noise_db = 0.0;
  return build_environment(cfg, 1);
}

inline Obstacle building(double x0, double y0, double x1, double y1, double density = 0.5) {
  return {{x0, y0, x1, y1}, ObstacleKind::kBuilding, density, 30.0};
}

/// Loss along a segment by midpoint stepping at `step` meters.
inline double stepped_shadow(const TrueEnvironment& env, Point a, Point b, double step = 0.01) {
  const double d = distance(a, b);
  const int n = static_cast<int>(std::ceil(d / step));
  const double ds = d / n;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) / n;
    const Point p{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
    for (const auto& o : env.obstacles) {
      if (o.footprint.contains(p)) total += o.loss_density_db_per_m * ds;
    }
  }
  return total;
}

}  // namespace pspred::test
