#include "pspred/envgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pspred {

void GridSpec::validate() const {
  if (grid_l < 2 || grid_w < 2) throw ConfigError("grid must be at least 2x2 voxels");
  if (!(voxel_len_m > 0.0)) throw ConfigError("voxel length must be positive");
}

std::optional<int> GridSpec::pixel_of(Point p) const {
  if (!inside(p)) return std::nullopt;
  const int i = std::min(static_cast<int>(p.x / voxel_len_m), grid_l - 1);
  const int j = std::min(static_cast<int>(p.y / voxel_len_m), grid_w - 1);
  return i + j * grid_l;
}

std::optional<int> GridSpec::grid_point_index(Point p) const {
  const auto q = pixel_of(p);
  if (!q) return std::nullopt;
  if (distance(center(*q), p) > 1e-6) return std::nullopt;
  return q;
}

std::string to_string(ObstacleKind kind) {
  return kind == ObstacleKind::kBuilding ? "building" : "foliage";
}

ObstacleKind obstacle_kind_from_string(const std::string& s) {
  if (s == "building") return ObstacleKind::kBuilding;
  if (s == "foliage") return ObstacleKind::kFoliage;
  throw ConfigError("unknown obstacle kind '" + s + "'");
}

void TrueEnvironment::validate() const {
  grid.validate();
  if (!(eta_true >= 1.0)) throw ConfigError("eta_true must be >= 1");
  if (!(noise_floor_dbm < ref_rss_dbm)) throw ConfigError("noise floor must be below ref_rss_dbm");
  if (!(shadow_noise_db >= 0.0)) throw ConfigError("shadow_noise_db must be >= 0");
  if (!(ref_dist_m > 0.0)) throw ConfigError("ref_dist_m must be positive");
  const Rect area = grid.area();
  for (const auto& o : obstacles) {
    const Rect& f = o.footprint;
    if (!(f.x1 > f.x0 && f.y1 > f.y0)) throw ConfigError("obstacle footprint is empty");
    if (f.x0 < area.x0 || f.y0 < area.y0 || f.x1 > area.x1 || f.y1 > area.y1) {
      throw ConfigError("obstacle footprint lies outside the area");
    }
    if (!(o.loss_density_db_per_m >= 0.0)) throw ConfigError("obstacle loss density must be >= 0");
  }
}

double free_space_rss_dbm(double p_tx_dbm, double distance_m, double carrier_mhz) {
  const double fspl = 20.0 * std::log10(distance_m) + 20.0 * std::log10(carrier_mhz) - 27.55;
  return p_tx_dbm - fspl;
}

namespace {

void place_random(const ObstacleSpec& spec, ObstacleKind kind, const GridSpec& grid,
                  std::vector<Obstacle>& placed, Rng& rng) {
  if (spec.count <= 0) return;
  const int side = std::max(1, static_cast<int>(std::lround(spec.side_m / grid.voxel_len_m)));
  if (side > grid.grid_l || side > grid.grid_w) throw ConfigError("obstacle larger than the area");
  std::uniform_int_distribution<int> pick_i(0, grid.grid_l - side);
  std::uniform_int_distribution<int> pick_j(0, grid.grid_w - side);
  constexpr int kMaxAttempts = 100000;
  int remaining = spec.count;
  for (int attempt = 0; remaining > 0; ++attempt) {
    if (attempt == kMaxAttempts) {
      throw ConfigError("could not place " + std::to_string(spec.count) + " non-overlapping " +
                        to_string(kind) + " obstacles");
    }
    const int i = pick_i(rng);
    const int j = pick_j(rng);
    const Rect r{i * grid.voxel_len_m, j * grid.voxel_len_m, (i + side) * grid.voxel_len_m,
                 (j + side) * grid.voxel_len_m};
    const bool clash = std::any_of(placed.begin(), placed.end(), [&](const Obstacle& o) {
      return interiors_overlap(o.footprint, r);
    });
    if (clash) continue;
    placed.push_back({r, kind, spec.loss_density_db_per_m, spec.height_m});
    --remaining;
  }
}

}  // namespace

TrueEnvironment build_environment(const EnvironmentConfig& config, std::uint64_t seed) {
  config.grid.validate();
  TrueEnvironment env;
  env.grid = config.grid;
  env.eta_true = config.eta_true;
  env.p_tx_dbm = config.p_tx_dbm;
  env.ref_dist_m = config.ref_dist_m.value_or(config.grid.voxel_len_m);
  env.ref_rss_dbm = config.ref_rss_dbm.value_or(
      free_space_rss_dbm(config.p_tx_dbm, env.ref_dist_m, config.carrier_mhz));
  env.noise_floor_dbm = config.noise_floor_dbm;
  env.shadow_noise_db = config.shadow_noise_db;
  env.bandwidth_mhz = config.bandwidth_mhz;

  env.obstacles = config.explicit_obstacles;
  for (std::size_t a = 0; a < env.obstacles.size(); ++a) {
    for (std::size_t b = a + 1; b < env.obstacles.size(); ++b) {
      if (interiors_overlap(env.obstacles[a].footprint, env.obstacles[b].footprint)) {
        throw ConfigError("explicit obstacles " + std::to_string(a) + " and " + std::to_string(b) +
                          " overlap");
      }
    }
  }
  env.validate();

  Rng rng(seed);
  place_random(config.buildings, ObstacleKind::kBuilding, env.grid, env.obstacles, rng);
  place_random(config.foliage, ObstacleKind::kFoliage, env.grid, env.obstacles, rng);
  env.validate();
  return env;
}

double true_shadow_db(const TrueEnvironment& env, Point tx, Point rx) {
  if (tx == rx) throw PipelineError("true_shadow_db: tx and rx coincide");
  double total = 0.0;
  for (const auto& o : env.obstacles) {
    total += o.loss_density_db_per_m * clipped_length(tx, rx, o.footprint);
  }
  return total;
}

double ground_truth_rss_mean(const TrueEnvironment& env, Point tx, Point rx) {
  const double d = distance(tx, rx);
  if (d < env.ref_dist_m) {
    throw PipelineError("link of " + std::to_string(d) + " m is below the reference distance");
  }
  return env.ref_rss_dbm - 10.0 * env.eta_true * std::log10(d / env.ref_dist_m) -
         true_shadow_db(env, tx, rx);
}

double ground_truth_rss(const TrueEnvironment& env, Point tx, Point rx, Rng& rng) {
  const double mean = ground_truth_rss_mean(env, tx, rx);
  if (env.shadow_noise_db == 0.0) return mean;
  std::normal_distribution<double> noise(0.0, env.shadow_noise_db);
  return mean + noise(rng);
}

VoxelMask::VoxelMask(GridSpec grid, std::vector<std::uint8_t> valid)
    : grid_(grid), valid_(std::move(valid)) {
  if (valid_.size() != static_cast<std::size_t>(grid_.pixel_count())) {
    throw ConfigError("voxel mask size does not match grid");
  }
}

bool VoxelMask::contains(Point p) const {
  const auto q = grid_.pixel_of(p);
  return q && valid(*q);
}

std::size_t VoxelMask::count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

std::vector<Point> VoxelMask::points() const {
  std::vector<Point> out;
  out.reserve(count());
  for (int q = 0; q < grid_.pixel_count(); ++q) {
    if (valid(q)) out.push_back(grid_.center(q));
  }
  return out;
}

VoxelMask valid_grid_points(const TrueEnvironment& env) {
  const GridSpec& g = env.grid;
  std::vector<std::uint8_t> valid(static_cast<std::size_t>(g.pixel_count()), 1);
  for (int j = 0; j < g.grid_w; ++j) {
    for (int i = 0; i < g.grid_l; ++i) {
      const Rect v = g.voxel(i, j);
      for (const auto& o : env.obstacles) {
        if (interiors_overlap(v, o.footprint)) {
          valid[static_cast<std::size_t>(i + j * g.grid_l)] = 0;
          break;
        }
      }
    }
  }
  return VoxelMask(g, std::move(valid));
}

std::vector<double> true_loss_field(const TrueEnvironment& env) {
  const GridSpec& g = env.grid;
  const double cell = g.voxel_len_m * g.voxel_len_m;
  std::vector<double> field(static_cast<std::size_t>(g.pixel_count()), 0.0);
  for (int j = 0; j < g.grid_w; ++j) {
    for (int i = 0; i < g.grid_l; ++i) {
      double& f = field[static_cast<std::size_t>(i + j * g.grid_l)];
      for (const auto& o : env.obstacles) {
        f += o.loss_density_db_per_m * overlap_area(g.voxel(i, j), o.footprint) / cell;
      }
    }
  }
  return field;
}

std::vector<Point> place_transmitters(const VoxelMask& valid, int count, Rng& rng) {
  std::vector<Point> candidates = valid.points();
  if (count < 0 || static_cast<std::size_t>(count) > candidates.size()) {
    throw ConfigError("cannot place " + std::to_string(count) + " transmitters on " +
                      std::to_string(candidates.size()) + " valid grid points");
  }
  // Partial Fisher-Yates shuffle.
  for (int k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k),
                                                    candidates.size() - 1);
    std::swap(candidates[static_cast<std::size_t>(k)], candidates[pick(rng)]);
  }
  candidates.resize(static_cast<std::size_t>(count));
  return candidates;
}

}  // namespace pspred
