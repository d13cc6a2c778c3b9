#include "pspred/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

namespace pspred {

std::size_t Dataset::measurement_count() const {
  std::size_t n = 0;
  for (const auto& [id, e] : entries) n += e.measurements.size();
  return n;
}

Dataset collect_dataset(const TrueEnvironment& env, std::span<const Point> tx_locs, Rng& rng) {
  std::set<Point> seen;
  for (const Point& tx : tx_locs) {
    if (!env.grid.inside(tx)) throw ConfigError("transmitter lies outside the area");
    if (!seen.insert(tx).second) throw ConfigError("duplicate transmitter location");
  }
  const VoxelMask valid = valid_grid_points(env);
  const std::vector<Point> receivers = valid.points();

  Dataset ds;
  std::int64_t tick = 0;
  for (std::size_t t = 0; t < tx_locs.size(); ++t) {
    const Point tx = tx_locs[t];
    const int own = *env.grid.pixel_of(tx);
    DatasetEntry entry{tx, {}};
    entry.measurements.reserve(receivers.size());
    for (const Point& rx : receivers) {
      if (*env.grid.pixel_of(rx) == own) continue;
      entry.measurements.push_back({rx, ground_truth_rss(env, tx, rx, rng), static_cast<int>(t), tick++});
    }
    ds.entries.emplace(static_cast<int>(t), std::move(entry));
  }
  return ds;
}

namespace {

// Ascending distance, then x, then y.
template <typename T, typename LocOf>
void sort_by_distance(std::vector<T>& items, Point tx, LocOf loc_of) {
  std::sort(items.begin(), items.end(), [&](const T& a, const T& b) {
    const double da = distance(tx, loc_of(a));
    const double db = distance(tx, loc_of(b));
    if (da != db) return da < db;
    return loc_of(a) < loc_of(b);
  });
}

}  // namespace

TrainingExample select_k_nearest(int tx_id, const DatasetEntry& entry, int k,
                                 const VoxelMask& valid) {
  if (k < 1) throw ConfigError("k must be positive");
  std::vector<const Measurement*> usable;
  usable.reserve(entry.measurements.size());
  for (const auto& m : entry.measurements) {
    if (valid.contains(m.rx_loc)) usable.push_back(&m);
  }
  if (usable.size() < static_cast<std::size_t>(k)) {
    throw PipelineError("transmitter " + std::to_string(tx_id) + " has " +
                        std::to_string(usable.size()) + " valid measurements, " +
                        std::to_string(static_cast<std::size_t>(k) - usable.size()) +
                        " short of k=" + std::to_string(k));
  }
  sort_by_distance(usable, entry.tx_loc, [](const Measurement* m) { return m->rx_loc; });
  TrainingExample ex{tx_id, entry.tx_loc, {}};
  ex.chosen.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) ex.chosen.push_back({usable[i]->rx_loc, usable[i]->rss_dbm});
  return ex;
}

std::vector<Point> nearest_valid_points(Point tx, int k, const VoxelMask& valid) {
  if (k < 1) throw ConfigError("k must be positive");
  const auto own = valid.grid().pixel_of(tx);
  std::vector<Point> pts;
  for (const Point& p : valid.points()) {
    if (own && valid.grid().pixel_of(p) == own) continue;
    pts.push_back(p);
  }
  if (pts.size() < static_cast<std::size_t>(k)) {
    throw PipelineError("only " + std::to_string(pts.size()) + " valid grid points for k=" +
                        std::to_string(k));
  }
  // Only the first k need to be ordered.
  std::partial_sort(pts.begin(), pts.begin() + k, pts.end(), [&](Point a, Point b) {
    const double da = distance(tx, a);
    const double db = distance(tx, b);
    if (da != db) return da < db;
    return a < b;
  });
  pts.resize(static_cast<std::size_t>(k));
  return pts;
}

std::vector<TrainingExample> augment(const TrainingExample& example, int m, int s, Rng& rng) {
  const int k = static_cast<int>(example.chosen.size());
  if (m < 1) throw ConfigError("augmentation factor M must be >= 1");
  if (s < 1) throw ConfigError("augmentation divisor S must be >= 1");
  const int subset = k / s;
  if (subset <= 1) {
    throw ConfigError("augmentation subset size floor(K/S) = " + std::to_string(subset) +
                      " must exceed 1");
  }
  std::vector<TrainingExample> out;
  out.reserve(static_cast<std::size_t>(m));
  std::vector<int> idx(static_cast<std::size_t>(k));
  for (int r = 0; r < m; ++r) {
    std::iota(idx.begin(), idx.end(), 0);
    for (int a = 0; a < subset; ++a) {
      std::uniform_int_distribution<int> pick(a, k - 1);
      std::swap(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    std::sort(idx.begin(), idx.begin() + subset);
    TrainingExample sub{example.tx_id, example.tx_loc, {}};
    sub.chosen.reserve(static_cast<std::size_t>(subset));
    for (int a = 0; a < subset; ++a) sub.chosen.push_back(example.chosen[static_cast<std::size_t>(idx[a])]);
    out.push_back(std::move(sub));
  }
  return out;
}

Dataset inject_errors(const Dataset& ds, const GridSpec& grid, double loc_err_mean_m,
                      double rss_err_mean_db, Rng& rng) {
  if (!(loc_err_mean_m >= 0.0) || !(rss_err_mean_db >= 0.0)) {
    throw ConfigError("error means must be non-negative");
  }
  Dataset out = ds;
  if (loc_err_mean_m == 0.0 && rss_err_mean_db == 0.0) return out;
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  // Half-normal scaling: E|N(0, s^2)| = s * sqrt(2 / pi).
  const double rss_sigma = rss_err_mean_db * std::sqrt(std::numbers::pi / 2.0);
  const Rect area = grid.area();
  for (auto& [id, entry] : out.entries) {
    for (auto& m : entry.measurements) {
      if (loc_err_mean_m > 0.0) {
        std::exponential_distribution<double> magnitude(1.0 / loc_err_mean_m);
        const double r = magnitude(rng);
        const double th = angle(rng);
        m.rx_loc.x = std::clamp(m.rx_loc.x + r * std::cos(th), area.x0, area.x1);
        m.rx_loc.y = std::clamp(m.rx_loc.y + r * std::sin(th), area.y0, area.y1);
      }
      if (rss_err_mean_db > 0.0) {
        std::normal_distribution<double> noise(0.0, rss_sigma);
        m.rss_dbm += noise(rng);
      }
    }
  }
  return out;
}

TransmitterSplit split_transmitters(std::span<const int> tx_ids, int n_train, int n_test, Rng& rng) {
  if (n_train < 0 || n_test < 0) throw ConfigError("split sizes must be non-negative");
  if (static_cast<std::size_t>(n_train) + static_cast<std::size_t>(n_test) > tx_ids.size()) {
    throw ConfigError("requested " + std::to_string(n_train) + " train + " +
                      std::to_string(n_test) + " test transmitters but only " +
                      std::to_string(tx_ids.size()) + " exist");
  }
  std::vector<int> ids(tx_ids.begin(), tx_ids.end());
  std::shuffle(ids.begin(), ids.end(), rng);
  TransmitterSplit split;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.test.assign(ids.begin() + n_train, ids.begin() + n_train + n_test);
  return split;
}

}  // namespace pspred
