#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "pspred/envgen.hpp"

namespace pspred {

struct Measurement {
  Point rx_loc;
  double rss_dbm = 0.0;
  int tx_id = 0;
  std::int64_t timestamp = 0;  // metadata only; ignored by equality
};

inline bool operator==(const Measurement& a, const Measurement& b) {
  return a.rx_loc == b.rx_loc && a.rss_dbm == b.rss_dbm && a.tx_id == b.tx_id;
}

struct DatasetEntry {
  Point tx_loc;
  std::vector<Measurement> measurements;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

/// Crowdsourced measurements keyed by transmitter id.
struct Dataset {
  std::map<int, DatasetEntry> entries;

  std::size_t measurement_count() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// One receiver kept for a training example.
struct LinkSample {
  Point rx_loc;
  double rss_dbm = 0.0;

  friend bool operator==(const LinkSample&, const LinkSample&) = default;
};

struct TrainingExample {
  int tx_id = 0;
  Point tx_loc;
  std::vector<LinkSample> chosen;
};

/// One measurement per valid grid point except the transmitter's own voxel.
/// Transmitter ids are the positions in `tx_locs`.
Dataset collect_dataset(const TrueEnvironment& env, std::span<const Point> tx_locs, Rng& rng);

/// The k measurements nearest the transmitter among those lying in valid voxels.
/// Ties in distance are broken by rx x, then y.
TrainingExample select_k_nearest(int tx_id, const DatasetEntry& entry, int k,
                                 const VoxelMask& valid);

/// The k valid grid points nearest `tx`, excluding the transmitter's own voxel, same ordering.
std::vector<Point> nearest_valid_points(Point tx, int k, const VoxelMask& valid);

/// M random floor(K/S)-subsets of the example (no repeats within one subset).
std::vector<TrainingExample> augment(const TrainingExample& example, int m, int s, Rng& rng);

/// Displaces every rx location (uniform direction, exponential magnitude with the given mean,
/// clamped to the area) and adds Gaussian RSS noise whose mean absolute value is rss_err_mean_db.
Dataset inject_errors(const Dataset& ds, const GridSpec& grid, double loc_err_mean_m,
                      double rss_err_mean_db, Rng& rng);

struct TransmitterSplit {
  std::vector<int> train;
  std::vector<int> test;
};

/// Disjoint random train/test subsets of transmitter ids.
TransmitterSplit split_transmitters(std::span<const int> tx_ids, int n_train, int n_test, Rng& rng);

}  // namespace pspred
