#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pspred/boundary.hpp"
#include "pspred/dataset.hpp"
#include "pspred/envgen.hpp"
#include "pspred/experiment.hpp"
#include "pspred/plm.hpp"
#include "pspred/rti.hpp"

namespace pspred {

using Json = nlohmann::json;

/// Config objects from JSON. Missing keys keep their defaults; unknown keys and wrong types
/// raise ConfigError naming the key.
EnvironmentConfig environment_config_from_json(const Json& j);
Json to_json(const EnvironmentConfig& c);
ExperimentConfig experiment_config_from_json(const Json& j);
Json to_json(const ExperimentConfig& c);

/// Reads an experiment config file; the environment may be given inline under "environment".
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

Json to_json(const TrueEnvironment& env);
TrueEnvironment environment_from_json(const Json& j);

/// One obstacle per row: kind, x0, y0, x1, y1, density, height.
void write_obstacles_csv(const TrueEnvironment& env, std::ostream& out);

/// Header tx_id,tx_x,tx_y,rx_x,rx_y,rss_dbm; values printed with round-trip precision.
void write_dataset_csv(const Dataset& ds, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);

Json to_json(const PathLossFit& fit);
PathLossFit plm_fit_from_json(const Json& j);

Json to_json(const SlfEstimate& slf);
SlfEstimate slf_from_json(const Json& j);

/// Three header lines (width, height, voxel length) then one row of pixel values per image row.
void write_image(const Image& img, double voxel_len_m, std::ostream& out);
Image read_image(std::istream& in);

/// Header tx_x,tx_y,rx_x,rx_y,pred_dbm,true_dbm; true_dbm may be empty.
void write_predictions_csv(Point tx, std::span<const Point> queries, std::span<const double> preds,
                           std::span<const double> truths, std::ostream& out);

/// Boundary points (x, y, pred_dbm) followed by a summary record.
void write_proposal_csv(const BoundaryProposal& proposal, double granted_power_dbm, std::ostream& out);

Json to_json(const BoundaryProposal& p);
Json to_json(const ProtectionBoundary& p);
ProtectionBoundary protection_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const Json& j, const std::filesystem::path& path);

}  // namespace pspred
