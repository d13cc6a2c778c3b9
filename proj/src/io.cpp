#include "pspred/io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace pspred {

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Reads known keys from a JSON object and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_integer()) throw ConfigError(path(key) + " must be an integer");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError(path(key) + " must be a number");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(path(key) + " must be true or false");
    }
    try {
      out = it->template get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    T v{};
    get(key, v);
    out = v;
  }

  const Json* child(const std::string& key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key " + path(item.key()));
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json obstacle_to_json(const Obstacle& o) {
  return {{"kind", to_string(o.kind)},
          {"x0", o.footprint.x0},
          {"y0", o.footprint.y0},
          {"x1", o.footprint.x1},
          {"y1", o.footprint.y1},
          {"density_db_per_m", o.loss_density_db_per_m},
          {"height_m", o.height_m}};
}

Obstacle obstacle_from_json(const Json& j, const std::string& where) {
  ObjectReader r(j, where);
  Obstacle o;
  std::string kind = "building";
  r.get("kind", kind);
  try {
    o.kind = obstacle_kind_from_string(kind);
  } catch (const Error& e) {
    throw ConfigError(r.path("kind") + ": " + e.what());
  }
  r.get("x0", o.footprint.x0);
  r.get("y0", o.footprint.y0);
  r.get("x1", o.footprint.x1);
  r.get("y1", o.footprint.y1);
  r.get("density_db_per_m", o.loss_density_db_per_m);
  r.get("height_m", o.height_m);
  r.finish();
  return o;
}

void read_obstacle_spec(const Json& j, const std::string& where, ObstacleSpec& s) {
  ObjectReader r(j, where);
  r.get("count", s.count);
  r.get("side_m", s.side_m);
  r.get("height_m", s.height_m);
  r.get("density_db_per_m", s.loss_density_db_per_m);
  r.finish();
}

Json obstacle_spec_to_json(const ObstacleSpec& s) {
  return {{"count", s.count}, {"side_m", s.side_m}, {"height_m", s.height_m}, {"density_db_per_m", s.loss_density_db_per_m}};
}

void read_grid(const Json& j, const std::string& where, GridSpec& g) {
  ObjectReader r(j, where);
  r.get("grid_l", g.grid_l);
  r.get("grid_w", g.grid_w);
  r.get("voxel_len_m", g.voxel_len_m);
  r.finish();
}

Json grid_to_json(const GridSpec& g) {
  return {{"grid_l", g.grid_l}, {"grid_w", g.grid_w}, {"voxel_len_m", g.voxel_len_m}};
}

void read_loss(const Json& j, const std::string& where, LossParams& p) {
  ObjectReader r(j, where);
  r.get("lambda_o", p.lambda_o);
  r.get("lambda_u", p.lambda_u);
  r.finish();
}

Json loss_to_json(const LossParams& p) { return {{"lambda_o", p.lambda_o}, {"lambda_u", p.lambda_u}}; }

Json point_to_json(Point p) { return Json::array({p.x, p.y}); }

Point point_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(where + " must be an [x, y] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

EnvironmentConfig environment_config_from_json(const Json& j) {
  EnvironmentConfig c;
  ObjectReader r(j, "environment");
  if (const Json* g = r.child("grid")) read_grid(*g, "environment.grid", c.grid);
  if (const Json* obs = r.child("obstacles")) {
    if (!obs->is_array()) throw ConfigError("environment.obstacles must be an array");
    for (std::size_t i = 0; i < obs->size(); ++i) {
      c.explicit_obstacles.push_back(obstacle_from_json((*obs)[i], "environment.obstacles[" + std::to_string(i) + "]"));
    }
  }
  if (const Json* b = r.child("buildings")) read_obstacle_spec(*b, "environment.buildings", c.buildings);
  if (const Json* f = r.child("foliage")) read_obstacle_spec(*f, "environment.foliage", c.foliage);
  r.get("eta_true", c.eta_true);
  r.get("p_tx_dbm", c.p_tx_dbm);
  r.get("ref_dist_m", c.ref_dist_m);
  r.get("ref_rss_dbm", c.ref_rss_dbm);
  r.get("noise_floor_dbm", c.noise_floor_dbm);
  r.get("shadow_noise_db", c.shadow_noise_db);
  r.get("bandwidth_mhz", c.bandwidth_mhz);
  r.get("carrier_mhz", c.carrier_mhz);
  r.finish();
  return c;
}

Json to_json(const EnvironmentConfig& c) {
  Json obs = Json::array();
  for (const auto& o : c.explicit_obstacles) obs.push_back(obstacle_to_json(o));
  Json j = {{"grid", grid_to_json(c.grid)},
            {"obstacles", obs},
            {"buildings", obstacle_spec_to_json(c.buildings)},
            {"foliage", obstacle_spec_to_json(c.foliage)},
            {"eta_true", c.eta_true},
            {"p_tx_dbm", c.p_tx_dbm},
            {"noise_floor_dbm", c.noise_floor_dbm},
            {"shadow_noise_db", c.shadow_noise_db},
            {"bandwidth_mhz", c.bandwidth_mhz},
            {"carrier_mhz", c.carrier_mhz}};
  if (c.ref_dist_m) j["ref_dist_m"] = *c.ref_dist_m;
  if (c.ref_rss_dbm) j["ref_rss_dbm"] = *c.ref_rss_dbm;
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c;
  ObjectReader r(j, "config");
  if (const Json* e = r.child("environment")) c.env = environment_config_from_json(*e);
  r.get("n_transmitters", c.n_transmitters);
  r.get("n_test", c.n_test);
  r.get("tpn_sweep", c.tpn_sweep);
  r.get("k", c.k);
  r.get("s", c.s);
  r.get("m", c.m);
  r.get("augmentation", c.augmentation);
  if (const Json* l = r.child("loss_asym")) read_loss(*l, "config.loss_asym", c.loss_asym);
  if (const Json* l = r.child("loss_sym")) read_loss(*l, "config.loss_sym", c.loss_sym);
  if (const Json* o = r.child("optimizer")) {
    ObjectReader ro(*o, "config.optimizer");
    ro.get("learning_rate", c.opt.learning_rate);
    ro.get("batch_size", c.opt.batch_size);
    ro.get("epochs", c.opt.epochs);
    ro.get("patience", c.opt.patience);
    ro.get("lr_patience", c.opt.lr_patience);
    ro.get("lr_decay", c.opt.lr_decay);
    ro.get("validation_fraction", c.opt.validation_fraction);
    ro.get("hidden", c.opt.hidden);
    ro.finish();
  }
  if (const Json* g = r.child("grid_model")) {
    ObjectReader rg(*g, "config.grid_model");
    rg.get("base_channels", c.grid_model.base_channels);
    rg.get("skip", c.grid_model.skip);
    rg.get("epochs", c.grid_epochs);
    rg.finish();
  }
  if (const Json* t = r.child("rti")) {
    ObjectReader rt(*t, "config.rti");
    rt.get("ellipse_width_m", c.rti.ellipse_width_m);
    rt.get("sigma_n2", c.rti.sigma_n2);
    rt.get("sigma2", c.rti.sigma2);
    rt.get("delta", c.rti.delta);
    rt.finish();
  }
  if (const Json* b = r.child("boundary")) {
    ObjectReader rb(*b, "config.boundary");
    rb.get("n_points", c.boundary_points);
    rb.get("step_g_db", c.step_g_db);
    rb.finish();
  }
  r.get("seeds", c.seeds);
  if (const Json* e = r.child("errors")) {
    ObjectReader re(*e, "config.errors");
    re.get("loc_err_mean_m", c.loc_err_mean_m);
    re.get("rss_err_mean_db", c.rss_err_mean_db);
    re.finish();
  }
  if (const Json* m = r.child("methods")) {
    ObjectReader rm(*m, "config.methods");
    rm.get("plm", c.methods.plm);
    rm.get("plm_rti", c.methods.plm_rti);
    rm.get("feature_asym", c.methods.feature_asym);
    rm.get("feature_sym", c.methods.feature_sym);
    rm.get("feature_asym_noaug", c.methods.feature_asym_noaug);
    rm.get("grid", c.methods.grid);
    rm.finish();
  }
  r.get("mae_floor_dbm", c.mae_floor_dbm);
  r.get("histogram_edges", c.histogram_edges);
  if (const Json* p = r.child("protections")) {
    if (!p->is_array()) throw ConfigError("config.protections must be an array");
    for (const auto& item : *p) c.protections.push_back(protection_from_json(item));
  }
  r.finish();
  c.validate();
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json prot = Json::array();
  for (const auto& p : c.protections) prot.push_back(to_json(p));
  return {{"environment", to_json(c.env)},
          {"n_transmitters", c.n_transmitters},
          {"n_test", c.n_test},
          {"tpn_sweep", c.tpn_sweep},
          {"k", c.k},
          {"s", c.s},
          {"m", c.m},
          {"augmentation", c.augmentation},
          {"loss_asym", loss_to_json(c.loss_asym)},
          {"loss_sym", loss_to_json(c.loss_sym)},
          {"optimizer",
           {{"learning_rate", c.opt.learning_rate},
            {"batch_size", c.opt.batch_size},
            {"epochs", c.opt.epochs},
            {"patience", c.opt.patience},
            {"lr_patience", c.opt.lr_patience},
            {"lr_decay", c.opt.lr_decay},
            {"validation_fraction", c.opt.validation_fraction},
            {"hidden", c.opt.hidden}}},
          {"grid_model", {{"base_channels", c.grid_model.base_channels}, {"skip", c.grid_model.skip}, {"epochs", c.grid_epochs}}},
          {"rti",
           {{"ellipse_width_m", c.rti.ellipse_width_m},
            {"sigma_n2", c.rti.sigma_n2},
            {"sigma2", c.rti.sigma2},
            {"delta", c.rti.delta}}},
          {"boundary", {{"n_points", c.boundary_points}, {"step_g_db", c.step_g_db}}},
          {"seeds", c.seeds},
          {"errors", {{"loc_err_mean_m", c.loc_err_mean_m}, {"rss_err_mean_db", c.rss_err_mean_db}}},
          {"methods",
           {{"plm", c.methods.plm},
            {"plm_rti", c.methods.plm_rti},
            {"feature_asym", c.methods.feature_asym},
            {"feature_sym", c.methods.feature_sym},
            {"feature_asym_noaug", c.methods.feature_asym_noaug},
            {"grid", c.methods.grid}}},
          {"mae_floor_dbm", c.mae_floor_dbm},
          {"histogram_edges", c.histogram_edges},
          {"protections", prot}};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const Json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw PipelineError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return experiment_config_from_json(read_json_file(path));
}

Json to_json(const TrueEnvironment& env) {
  Json obs = Json::array();
  for (const auto& o : env.obstacles) obs.push_back(obstacle_to_json(o));
  return {{"grid", grid_to_json(env.grid)},
          {"obstacles", obs},
          {"eta_true", env.eta_true},
          {"p_tx_dbm", env.p_tx_dbm},
          {"ref_dist_m", env.ref_dist_m},
          {"ref_rss_dbm", env.ref_rss_dbm},
          {"noise_floor_dbm", env.noise_floor_dbm},
          {"shadow_noise_db", env.shadow_noise_db},
          {"bandwidth_mhz", env.bandwidth_mhz}};
}

TrueEnvironment environment_from_json(const Json& j) {
  TrueEnvironment env;
  ObjectReader r(j, "environment");
  if (const Json* g = r.child("grid")) read_grid(*g, "environment.grid", env.grid);
  if (const Json* obs = r.child("obstacles")) {
    if (!obs->is_array()) throw ConfigError("environment.obstacles must be an array");
    for (std::size_t i = 0; i < obs->size(); ++i) {
      env.obstacles.push_back(obstacle_from_json((*obs)[i], "environment.obstacles[" + std::to_string(i) + "]"));
    }
  }
  r.get("eta_true", env.eta_true);
  r.get("p_tx_dbm", env.p_tx_dbm);
  r.get("ref_dist_m", env.ref_dist_m);
  r.get("ref_rss_dbm", env.ref_rss_dbm);
  r.get("noise_floor_dbm", env.noise_floor_dbm);
  r.get("shadow_noise_db", env.shadow_noise_db);
  r.get("bandwidth_mhz", env.bandwidth_mhz);
  r.finish();
  env.validate();
  return env;
}

void write_obstacles_csv(const TrueEnvironment& env, std::ostream& out) {
  out << "kind,x0,y0,x1,y1,density_db_per_m,height_m\n";
  for (const auto& o : env.obstacles) {
    out << to_string(o.kind) << ',' << exact(o.footprint.x0) << ',' << exact(o.footprint.y0) << ','
        << exact(o.footprint.x1) << ',' << exact(o.footprint.y1) << ',' << exact(o.loss_density_db_per_m) << ','
        << exact(o.height_m) << '\n';
  }
}

void write_dataset_csv(const Dataset& ds, std::ostream& out) {
  out << "tx_id,tx_x,tx_y,rx_x,rx_y,rss_dbm\n";
  for (const auto& [id, e] : ds.entries) {
    for (const auto& m : e.measurements) {
      out << id << ',' << exact(e.tx_loc.x) << ',' << exact(e.tx_loc.y) << ',' << exact(m.rx_loc.x) << ','
          << exact(m.rx_loc.y) << ',' << exact(m.rss_dbm) << '\n';
    }
  }
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw PipelineError("dataset file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "tx_id,tx_x,tx_y,rx_x,rx_y,rss_dbm") throw PipelineError("dataset header is missing or wrong: " + line);
  Dataset ds;
  std::int64_t tick = 0;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw PipelineError("dataset row " + std::to_string(row) + " needs 6 fields");
    try {
      std::size_t used = 0;
      const int id = std::stoi(f[0], &used);
      if (used != f[0].size()) throw std::invalid_argument("tx_id");
      std::array<double, 5> v{};
      for (int i = 0; i < 5; ++i) {
        v[static_cast<std::size_t>(i)] = std::stod(f[static_cast<std::size_t>(i) + 1], &used);
        if (used != f[static_cast<std::size_t>(i) + 1].size()) throw std::invalid_argument("number");
      }
      const Point tx{v[0], v[1]};
      auto [it, fresh] = ds.entries.try_emplace(id, DatasetEntry{tx, {}});
      if (!fresh && it->second.tx_loc != tx) {
        throw PipelineError("dataset row " + std::to_string(row) + ": transmitter " + std::to_string(id) +
                            " changes location");
      }
      it->second.measurements.push_back({{v[2], v[3]}, v[4], id, tick++});
    } catch (const std::invalid_argument&) {
      throw PipelineError("dataset row " + std::to_string(row) + " has a malformed number");
    } catch (const std::out_of_range&) {
      throw PipelineError("dataset row " + std::to_string(row) + " has an out-of-range number");
    }
  }
  std::set<Point> locs;
  for (const auto& [id, e] : ds.entries) {
    if (!locs.insert(e.tx_loc).second) throw PipelineError("two transmitters share a location");
  }
  return ds;
}

Json to_json(const PathLossFit& fit) { return {{"eta", fit.eta}, {"z0_dbm", fit.z0_dbm}, {"d0_m", fit.d0_m}}; }

PathLossFit plm_fit_from_json(const Json& j) {
  PathLossFit fit;
  ObjectReader r(j, "plm");
  r.get("eta", fit.eta);
  r.get("z0_dbm", fit.z0_dbm);
  r.get("d0_m", fit.d0_m);
  r.finish();
  if (!(fit.d0_m > 0.0) || !std::isfinite(fit.eta)) throw ConfigError("invalid path-loss fit");
  return fit;
}

Json to_json(const SlfEstimate& slf) {
  return {{"grid", grid_to_json(slf.grid)},
          {"ellipse_width_m", slf.ellipse_width_m},
          {"p_hat", slf.p_hat},
          {"scale_min", slf.scale_min},
          {"scale_max", slf.scale_max},
          {"v_min", slf.v_min},
          {"v_max", slf.v_max},
          {"relative_residual", slf.relative_residual}};
}

SlfEstimate slf_from_json(const Json& j) {
  SlfEstimate slf;
  ObjectReader r(j, "slf");
  if (const Json* g = r.child("grid")) read_grid(*g, "slf.grid", slf.grid);
  r.get("ellipse_width_m", slf.ellipse_width_m);
  r.get("p_hat", slf.p_hat);
  r.get("scale_min", slf.scale_min);
  r.get("scale_max", slf.scale_max);
  r.get("v_min", slf.v_min);
  r.get("v_max", slf.v_max);
  r.get("relative_residual", slf.relative_residual);
  r.finish();
  slf.grid.validate();
  if (slf.p_hat.size() != static_cast<std::size_t>(slf.grid.pixel_count())) {
    throw ConfigError("slf.p_hat length does not match the grid");
  }
  return slf;
}

void write_image(const Image& img, double voxel_len_m, std::ostream& out) {
  out << img.width << '\n' << img.height << '\n' << exact(voxel_len_m) << '\n';
  for (int j = 0; j < img.height; ++j) {
    for (int i = 0; i < img.width; ++i) out << (i ? " " : "") << exact(img.at(i, j));
    out << '\n';
  }
}

Image read_image(std::istream& in) {
  int w = 0;
  int h = 0;
  double voxel = 0.0;
  if (!(in >> w >> h >> voxel) || w < 1 || h < 1) throw PipelineError("bad image header");
  Image img(w, h);
  for (auto& p : img.pixels) {
    if (!(in >> p)) throw PipelineError("image is truncated");
  }
  return img;
}

void write_predictions_csv(Point tx, std::span<const Point> queries, std::span<const double> preds,
                           std::span<const double> truths, std::ostream& out) {
  if (preds.size() != queries.size() || (!truths.empty() && truths.size() != queries.size())) {
    throw PipelineError("prediction dump: length mismatch");
  }
  out << "tx_x,tx_y,rx_x,rx_y,pred_dbm,true_dbm\n";
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out << exact(tx.x) << ',' << exact(tx.y) << ',' << exact(queries[i].x) << ',' << exact(queries[i].y) << ','
        << exact(preds[i]) << ',' << (truths.empty() ? std::string() : exact(truths[i])) << '\n';
  }
}

void write_proposal_csv(const BoundaryProposal& proposal, double granted_power_dbm, std::ostream& out) {
  out << "record,x,y,pred_dbm,m,z_ooz_dbm,granted_power_dbm,denied,encloses_tx\n";
  for (const auto& p : proposal.points) {
    out << "point," << exact(p.loc.x) << ',' << exact(p.loc.y) << ',' << exact(p.rss_dbm) << ",,,,,\n";
  }
  out << "summary,,,," << proposal.iterations_m << ',' << exact(proposal.z_ooz_dbm) << ','
      << exact(granted_power_dbm) << ",0," << (proposal.encloses_transmitter ? 1 : 0) << '\n';
}

Json to_json(const BoundaryProposal& p) {
  Json pts = Json::array();
  for (const auto& q : p.points) pts.push_back({{"x", q.loc.x}, {"y", q.loc.y}, {"pred_dbm", q.rss_dbm}});
  return {{"tx", point_to_json(p.tx)},
          {"points", pts},
          {"m", p.iterations_m},
          {"z_ooz_dbm", p.z_ooz_dbm},
          {"encloses_tx", p.encloses_transmitter}};
}

Json to_json(const ProtectionBoundary& p) {
  Json pts = Json::array();
  for (Point q : p.points) pts.push_back(point_to_json(q));
  return {{"center", point_to_json(p.center)}, {"points", pts}, {"margin_db", p.margin_db}};
}

ProtectionBoundary protection_from_json(const Json& j) {
  ProtectionBoundary p;
  ObjectReader r(j, "protection");
  if (const Json* c = r.child("center")) p.center = point_from_json(*c, "protection.center");
  if (const Json* pts = r.child("points")) {
    if (!pts->is_array()) throw ConfigError("protection.points must be an array");
    for (const auto& q : *pts) p.points.push_back(point_from_json(q, "protection.points"));
  }
  r.get("margin_db", p.margin_db);
  r.finish();
  p.validate();
  return p;
}

}  // namespace pspred
