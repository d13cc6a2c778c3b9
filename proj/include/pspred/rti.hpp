#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "pspred/dataset.hpp"
#include "pspred/envgen.hpp"
#include "pspred/plm.hpp"

namespace pspred {

struct Link {
  Point tx;
  Point rx;
};

/// Grayscale image over a grid; pixel q = i + j * width.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}
  double& operator[](int q) { return pixels[static_cast<std::size_t>(q)]; }
  double operator[](int q) const { return pixels[static_cast<std::size_t>(q)]; }
  double at(int i, int j) const { return (*this)[i + j * width]; }
};

/// Per-link shadow fading: PLM prediction minus measured RSS.
struct ShadowVector {
  std::vector<double> values;
  std::vector<Link> links;
};

ShadowVector shadow_vector(std::span<const TrainingExample> examples, const PathLossFit& fit);

/// Rows are links, columns are pixels. W[k, q] = 1/sqrt(d_k) when the center of pixel q lies
/// in the ellipse with foci at the link ends and major axis d_k + ellipse_width_m.
using WeightMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Column indices of the pixels inside the ellipse of one link, ascending.
std::vector<int> ellipse_pixels(const Link& link, const GridSpec& grid, double ellipse_width_m);

WeightMatrix weight_matrix(std::span<const Link> links, const GridSpec& grid, double ellipse_width_m);

/// C[i, j] = (sigma2 / delta) * exp(-d_ij / delta) over pixel centers.
Eigen::MatrixXd covariance_matrix(const GridSpec& grid, double sigma2, double delta);

/// Reconstructed spatial loss field plus the constants needed to render map and link images.
struct SlfEstimate {
  GridSpec grid;
  double ellipse_width_m = 5.0;
  std::vector<double> p_hat;
  double scale_min = 0.0;
  double scale_max = 0.0;
  double v_min = 0.0;
  double v_max = 0.0;
  double relative_residual = 0.0;
};

/// Solves (W^T W + sigma_n2 C^-1) p = W^T v by Cholesky factorisations and checks the
/// normal-equation residual (relative, <= 1e-8).
SlfEstimate solve_slf(const WeightMatrix& w, std::span<const double> v, double sigma_n2,
                      const Eigen::MatrixXd& c, const GridSpec& grid, double ellipse_width_m);

struct RtiConfig {
  double ellipse_width_m = 5.0;
  double sigma_n2 = 1.0;
  double sigma2 = 0.5;
  double delta = 1.0;
};

/// shadow_vector + weight_matrix + covariance_matrix + solve_slf.
SlfEstimate reconstruct_slf(std::span<const TrainingExample> examples, const PathLossFit& fit,
                            const GridSpec& grid, const RtiConfig& cfg);

/// Estimated shadowing of one link, W_k p_hat.
double link_shadow_db(const SlfEstimate& slf, Point tx, Point rx);

/// 1 - (p_hat - min) / (max - min); all ones for a constant field.
Image slf_to_map_image(const SlfEstimate& slf);

/// 1 - (v_hat - v_min) / (v_max - v_min) at each rx pixel, clamped to [0, 1]; zero elsewhere.
Image link_shading_image(const SlfEstimate& slf, Point tx, std::span<const Point> rx_set,
                         const GridSpec& grid, double ellipse_width_m);

/// Scale-free distance between an estimated and a true field: the relative residual of the best
/// non-negative scalar fit, sqrt(1 - cos^2) when the fields are positively correlated, 1 otherwise.
double normalized_field_error(std::span<const double> estimate, std::span<const double> truth);

}  // namespace pspred
