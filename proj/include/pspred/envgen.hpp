#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pspred/geometry.hpp"

namespace pspred {

using Rng = std::mt19937_64;

/// Regular grid of square voxels covering a (grid_l * l) x (grid_w * l) area.
/// Pixel q of an image over the grid is q = i + j * grid_l, with i along x.
struct GridSpec {
  int grid_l = 50;
  int grid_w = 50;
  double voxel_len_m = 10.0;

  void validate() const;

  int pixel_count() const { return grid_l * grid_w; }
  double width_m() const { return grid_l * voxel_len_m; }
  double height_m() const { return grid_w * voxel_len_m; }
  Rect area() const { return {0.0, 0.0, width_m(), height_m()}; }
  bool inside(Point p) const { return area().contains(p); }

  Point center(int i, int j) const {
    return {(i + 0.5) * voxel_len_m, (j + 0.5) * voxel_len_m};
  }
  Point center(int q) const { return center(q % grid_l, q / grid_l); }
  Rect voxel(int i, int j) const {
    return {i * voxel_len_m, j * voxel_len_m, (i + 1) * voxel_len_m, (j + 1) * voxel_len_m};
  }
  /// Index of the voxel containing p; points on the far area edge map to the last voxel.
  std::optional<int> pixel_of(Point p) const;
  /// Pixel index when p is (within 1e-6 m of) a voxel center.
  std::optional<int> grid_point_index(Point p) const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

enum class ObstacleKind { kBuilding, kFoliage };

std::string to_string(ObstacleKind kind);
ObstacleKind obstacle_kind_from_string(const std::string& s);

struct Obstacle {
  Rect footprint;
  ObstacleKind kind = ObstacleKind::kBuilding;
  double loss_density_db_per_m = 0.5;
  double height_m = 30.0;

  friend bool operator==(const Obstacle&, const Obstacle&) = default;
};

/// Randomly placed obstacles of one kind, snapped to the voxel grid.
struct ObstacleSpec {
  int count = 0;
  double side_m = 20.0;
  double height_m = 30.0;
  double loss_density_db_per_m = 0.5;
};

/// Everything needed to build a TrueEnvironment.
///
/// Densities default to 0.5 dB/m for buildings and 0.15 dB/m for foliage, so a
/// 20 m building shadows a link crossing it by about 10 dB. When `ref_rss_dbm`
/// is unset it is the free-space RSS at `ref_dist_m` for the configured carrier.
struct EnvironmentConfig {
  GridSpec grid;
  std::vector<Obstacle> explicit_obstacles;
  ObstacleSpec buildings{15, 20.0, 30.0, 0.5};
  ObstacleSpec foliage{0, 30.0, 8.0, 0.15};
  double eta_true = 3.0;
  double p_tx_dbm = 30.0;
  std::optional<double> ref_dist_m;
  std::optional<double> ref_rss_dbm;
  double noise_floor_dbm = -100.0;
  double shadow_noise_db = 2.0;
  double bandwidth_mhz = 1.0;
  double carrier_mhz = 1000.0;
};

/// Ground-truth area. Immutable after construction.
struct TrueEnvironment {
  GridSpec grid;
  std::vector<Obstacle> obstacles;
  double eta_true = 3.0;
  double p_tx_dbm = 30.0;
  double ref_dist_m = 10.0;
  double ref_rss_dbm = -22.45;
  double noise_floor_dbm = -100.0;
  double shadow_noise_db = 2.0;
  double bandwidth_mhz = 1.0;

  void validate() const;
  friend bool operator==(const TrueEnvironment&, const TrueEnvironment&) = default;
};

double free_space_rss_dbm(double p_tx_dbm, double distance_m, double carrier_mhz);

TrueEnvironment build_environment(const EnvironmentConfig& config, std::uint64_t seed);

/// Sum over obstacles of density times the length of the tx-rx segment inside the footprint.
double true_shadow_db(const TrueEnvironment& env, Point tx, Point rx);

/// Log-distance RSS with true parameters, minus true shadowing, plus N(0, shadow_noise_db^2).
double ground_truth_rss(const TrueEnvironment& env, Point tx, Point rx, Rng& rng);

/// Noise-free variant of ground_truth_rss.
double ground_truth_rss_mean(const TrueEnvironment& env, Point tx, Point rx);

/// Per-voxel validity: a voxel is valid when it does not intersect any obstacle footprint.
class VoxelMask {
 public:
  VoxelMask() = default;
  VoxelMask(GridSpec grid, std::vector<std::uint8_t> valid);

  const GridSpec& grid() const { return grid_; }
  bool valid(int q) const { return valid_[static_cast<std::size_t>(q)] != 0; }
  /// True when p lies in a valid voxel.
  bool contains(Point p) const;
  std::size_t count() const;
  /// Centers of valid voxels in pixel order.
  std::vector<Point> points() const;

 private:
  GridSpec grid_;
  std::vector<std::uint8_t> valid_;
};

VoxelMask valid_grid_points(const TrueEnvironment& env);

/// Per-voxel true loss field: density times covered fraction, summed over obstacles.
std::vector<double> true_loss_field(const TrueEnvironment& env);

/// Picks `count` distinct valid grid points uniformly at random.
std::vector<Point> place_transmitters(const VoxelMask& valid, int count, Rng& rng);

}  // namespace pspred
