#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace pspred {

/// Fully connected network with ReLU hidden layers and a linear output.
/// Samples are columns: forward maps (in x n) to (out x n).
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix w;  // out x in
    Vector b;  // out
  };

  /// Activations of every layer; acts[0] is the input.
  struct Cache {
    std::vector<Matrix> acts;
  };

  Mlp() = default;

  explicit Mlp(const std::vector<int>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("network needs input and output sizes");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      layers_.push_back({Matrix::Zero(dims[l + 1], dims[l]), Vector::Zero(dims[l + 1])});
    }
  }

  /// He-normal weights, zero biases.
  template <typename Rng>
  void init(Rng& rng) {
    for (auto& layer : layers_) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer.w.cols())));
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
        for (Eigen::Index r = 0; r < layer.w.rows(); ++r) layer.w(r, c) = static_cast<Scalar>(dist(rng));
      }
      layer.b.setZero();
    }
  }

  int input_dim() const { return static_cast<int>(layers_.front().w.cols()); }
  int output_dim() const { return static_cast<int>(layers_.back().w.rows()); }
  std::vector<int> dims() const {
    std::vector<int> d{input_dim()};
    for (const auto& l : layers_) d.push_back(static_cast<int>(l.w.rows()));
    return d;
  }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const {
    Matrix a = x;
    if (cache) {
      cache->acts.clear();
      cache->acts.push_back(x);
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].w * a;
      z.colwise() += layers_[l].b;
      if (l + 1 < layers_.size()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
      if (cache) cache->acts.push_back(a);
    }
    return a;
  }

  /// Parameter gradients given dLoss/dOutput (out x n) and the cache of the forward pass.
  std::vector<Layer> backward(const Cache& cache, const Matrix& d_out) const {
    std::vector<Layer> grads(layers_.size());
    Matrix delta = d_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Matrix& a_in = cache.acts[l];
      grads[l].w = delta * a_in.transpose();
      grads[l].b = delta.rowwise().sum();
      if (l > 0) {
        Matrix back = layers_[l].w.transpose() * delta;
        // ReLU derivative from the post-activation (zero where the unit was clipped).
        delta = (cache.acts[l].array() > Scalar(0)).select(back, Matrix::Zero(back.rows(), back.cols()));
      }
    }
    return grads;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    return n;
  }

  /// Parameters flattened layer by layer: w (column-major) then b.
  std::vector<double> flatten() const { return flatten(layers_); }

  static std::vector<double> flatten(const std::vector<Layer>& layers) {
    std::vector<double> out;
    for (const auto& l : layers) {
      for (Eigen::Index i = 0; i < l.w.size(); ++i) out.push_back(static_cast<double>(l.w.data()[i]));
      for (Eigen::Index i = 0; i < l.b.size(); ++i) out.push_back(static_cast<double>(l.b.data()[i]));
    }
    return out;
  }

  void unflatten(const std::vector<double>& params) {
    std::size_t k = 0;
    for (auto& l : layers_) {
      for (Eigen::Index i = 0; i < l.w.size(); ++i) l.w.data()[i] = static_cast<Scalar>(params.at(k++));
      for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b.data()[i] = static_cast<Scalar>(params.at(k++));
    }
    if (k != params.size()) throw std::invalid_argument("parameter vector has the wrong length");
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out(dims());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      out.layers()[l].w = layers_[l].w.template cast<Other>();
      out.layers()[l].b = layers_[l].b.template cast<Other>();
    }
    return out;
  }

 private:
  std::vector<Layer> layers_;
};

/// Adaptive-moment optimizer state for one network.
template <typename Scalar>
class Adam {
 public:
  using Layer = typename Mlp<Scalar>::Layer;

  explicit Adam(const Mlp<Scalar>& net, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& l : net.layers()) {
      m_.push_back({Mlp<Scalar>::Matrix::Zero(l.w.rows(), l.w.cols()), Mlp<Scalar>::Vector::Zero(l.b.size())});
      v_.push_back(m_.back());
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  void step(Mlp<Scalar>& net, const std::vector<Layer>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    const Scalar step = static_cast<Scalar>(lr_ * std::sqrt(c2) / c1);
    const Scalar b1 = static_cast<Scalar>(beta1_);
    const Scalar b2 = static_cast<Scalar>(beta2_);
    const Scalar eps = static_cast<Scalar>(eps_ * std::sqrt(c2));
    for (std::size_t l = 0; l < grads.size(); ++l) {
      update(net.layers()[l].w, m_[l].w, v_[l].w, grads[l].w, step, b1, b2, eps);
      update(net.layers()[l].b, m_[l].b, v_[l].b, grads[l].b, step, b1, b2, eps);
    }
  }

 private:
  template <typename M>
  static void update(M& param, M& m, M& v, const M& g, Scalar step, Scalar b1, Scalar b2, Scalar eps) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    param.array() -= step * m.array() / (v.array().sqrt() + eps);
  }

  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  int t_ = 0;
  std::vector<Layer> m_;
  std::vector<Layer> v_;
};

}  // namespace pspred
