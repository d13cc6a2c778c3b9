#include "pspred/rti.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pspred {

ShadowVector shadow_vector(std::span<const TrainingExample> examples, const PathLossFit& fit) {
  ShadowVector sv;
  for (const auto& ex : examples) {
    for (const auto& c : ex.chosen) {
      sv.values.push_back(plm_predict(fit, ex.tx_loc, c.rx_loc) - c.rss_dbm);
      sv.links.push_back({ex.tx_loc, c.rx_loc});
    }
  }
  if (sv.values.empty()) throw PipelineError("shadow vector needs at least one link");
  return sv;
}

std::vector<int> ellipse_pixels(const Link& link, const GridSpec& grid, double ellipse_width_m) {
  if (!(ellipse_width_m > 0.0)) throw ConfigError("ellipse width must be positive");
  const double d = distance(link.tx, link.rx);
  if (!(d > 0.0)) throw PipelineError("weight matrix: zero-length link");
  const double bound = d + ellipse_width_m;
  // The ellipse fits inside the disc of radius bound / 2 around the link midpoint.
  const double cx = 0.5 * (link.tx.x + link.rx.x);
  const double cy = 0.5 * (link.tx.y + link.rx.y);
  const double r = 0.5 * bound + grid.voxel_len_m;
  const auto to_idx = [&](double v, int n) {
    return std::clamp(static_cast<int>(std::floor(v / grid.voxel_len_m)), 0, n - 1);
  };
  const int i0 = to_idx(cx - r, grid.grid_l);
  const int i1 = to_idx(cx + r, grid.grid_l);
  const int j0 = to_idx(cy - r, grid.grid_w);
  const int j1 = to_idx(cy + r, grid.grid_w);
  std::vector<int> out;
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const Point q = grid.center(i, j);
      if (distance(link.tx, q) + distance(link.rx, q) <= bound) out.push_back(i + j * grid.grid_l);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

WeightMatrix weight_matrix(std::span<const Link> links, const GridSpec& grid, double ellipse_width_m) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t k = 0; k < links.size(); ++k) {
    const double wk = 1.0 / std::sqrt(distance(links[k].tx, links[k].rx));
    for (int q : ellipse_pixels(links[k], grid, ellipse_width_m)) {
      triplets.emplace_back(static_cast<int>(k), q, wk);
    }
  }
  WeightMatrix w(static_cast<Eigen::Index>(links.size()), grid.pixel_count());
  w.setFromTriplets(triplets.begin(), triplets.end());
  return w;
}

Eigen::MatrixXd covariance_matrix(const GridSpec& grid, double sigma2, double delta) {
  if (!(sigma2 > 0.0) || !(delta > 0.0)) throw ConfigError("covariance needs sigma2 > 0 and delta > 0");
  const int n = grid.pixel_count();
  Eigen::MatrixXd c(n, n);
  const double scale = sigma2 / delta;
  for (int a = 0; a < n; ++a) {
    c(a, a) = scale;
    const Point pa = grid.center(a);
    for (int b = a + 1; b < n; ++b) {
      const double v = scale * std::exp(-distance(pa, grid.center(b)) / delta);
      c(a, b) = v;
      c(b, a) = v;
    }
  }
  return c;
}

SlfEstimate solve_slf(const WeightMatrix& w, std::span<const double> v, double sigma_n2,
                      const Eigen::MatrixXd& c, const GridSpec& grid, double ellipse_width_m) {
  const Eigen::Index n = grid.pixel_count();
  if (w.cols() != n || c.rows() != n || c.cols() != n) {
    throw PipelineError("solve_slf: matrix dimensions do not match the grid");
  }
  if (w.rows() != static_cast<Eigen::Index>(v.size())) {
    throw PipelineError("solve_slf: shadow vector length does not match weight rows");
  }
  if (v.empty()) throw PipelineError("solve_slf: no links");
  if (!(sigma_n2 >= 0.0)) throw ConfigError("noise variance must be non-negative");

  const Eigen::LLT<Eigen::MatrixXd> c_llt(c);
  if (c_llt.info() != Eigen::Success) {
    throw PipelineError("solve_slf: covariance matrix is not positive definite");
  }
  const Eigen::MatrixXd c_inv = c_llt.solve(Eigen::MatrixXd::Identity(n, n));

  const Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(v.size()));
  const Eigen::SparseMatrix<double> wc = w;  // column-major for W^T W
  Eigen::MatrixXd a = Eigen::MatrixXd(Eigen::SparseMatrix<double>(wc.transpose() * wc));
  a += sigma_n2 * c_inv;
  const Eigen::VectorXd b = wc.transpose() * vv;

  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw PipelineError("solve_slf: normal matrix W^T W + sigma_n^2 C^-1 is singular "
                        "(conditioning failure)");
  }
  Eigen::VectorXd p = llt.solve(b);
  const double b_norm = b.norm();
  double rel = 0.0;
  if (b_norm > 0.0) {
    rel = (a * p - b).norm() / b_norm;
    for (int it = 0; it < 3 && rel > 1e-12; ++it) {
      p += llt.solve(b - a * p);
      rel = (a * p - b).norm() / b_norm;
    }
  }
  if (!(rel <= 1e-8) || !p.allFinite()) {
    throw PipelineError("solve_slf: normal-equation residual " + std::to_string(rel) +
                        " exceeds 1e-8 (conditioning failure)");
  }

  SlfEstimate slf;
  slf.grid = grid;
  slf.ellipse_width_m = ellipse_width_m;
  slf.p_hat.assign(p.data(), p.data() + p.size());
  slf.scale_min = p.minCoeff();
  slf.scale_max = p.maxCoeff();
  slf.v_min = vv.minCoeff();
  slf.v_max = vv.maxCoeff();
  slf.relative_residual = rel;
  return slf;
}

SlfEstimate reconstruct_slf(std::span<const TrainingExample> examples, const PathLossFit& fit,
                            const GridSpec& grid, const RtiConfig& cfg) {
  const ShadowVector sv = shadow_vector(examples, fit);
  const WeightMatrix w = weight_matrix(sv.links, grid, cfg.ellipse_width_m);
  const Eigen::MatrixXd c = covariance_matrix(grid, cfg.sigma2, cfg.delta);
  return solve_slf(w, sv.values, cfg.sigma_n2, c, grid, cfg.ellipse_width_m);
}

double link_shadow_db(const SlfEstimate& slf, Point tx, Point rx) {
  const Link link{tx, rx};
  const double wk = 1.0 / std::sqrt(distance(tx, rx));
  double sum = 0.0;
  for (int q : ellipse_pixels(link, slf.grid, slf.ellipse_width_m)) sum += slf.p_hat[static_cast<std::size_t>(q)];
  return wk * sum;
}

Image slf_to_map_image(const SlfEstimate& slf) {
  Image img(slf.grid.grid_l, slf.grid.grid_w, 1.0);
  const double span = slf.scale_max - slf.scale_min;
  if (!(span > 0.0)) return img;
  for (int q = 0; q < slf.grid.pixel_count(); ++q) {
    img[q] = std::clamp(1.0 - (slf.p_hat[static_cast<std::size_t>(q)] - slf.scale_min) / span, 0.0, 1.0);
  }
  return img;
}

Image link_shading_image(const SlfEstimate& slf, Point tx, std::span<const Point> rx_set,
                         const GridSpec& grid, double ellipse_width_m) {
  if (rx_set.empty()) throw PipelineError("link shading image needs at least one receiver");
  SlfEstimate local = slf;
  local.ellipse_width_m = ellipse_width_m;
  local.grid = grid;
  Image img(grid.grid_l, grid.grid_w, 0.0);
  const double span = slf.v_max - slf.v_min;
  for (const Point& rx : rx_set) {
    const auto q = grid.pixel_of(rx);
    if (!q) throw PipelineError("receiver outside the grid");
    const double v_hat = link_shadow_db(local, tx, rx);
    const double scaled = span > 0.0 ? (v_hat - slf.v_min) / span : 0.0;
    img[*q] = std::clamp(1.0 - scaled, 0.0, 1.0);
  }
  return img;
}

double normalized_field_error(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size() || truth.empty()) {
    throw PipelineError("field sizes differ");
  }
  double ee = 0.0;
  double et = 0.0;
  double tt = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ee += estimate[i] * estimate[i];
    et += estimate[i] * truth[i];
    tt += truth[i] * truth[i];
  }
  if (!(tt > 0.0)) throw PipelineError("true field is identically zero");
  if (!(ee > 0.0) || !(et > 0.0)) return 1.0;
  const double cos2 = (et * et) / (ee * tt);
  return std::sqrt(std::max(0.0, 1.0 - cos2));
}

}  // namespace pspred
