#include "pspred/feature_model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace pspred {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (lr_patience < 1) throw ConfigError("lr_patience must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0, 1)");
  }
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
}

double MinMaxScaler::apply(std::size_t i, double v) const {
  const double span = hi[i] - lo[i];
  if (!(span > 0.0)) return 0.0;
  return std::clamp((v - lo[i]) / span, 0.0, 1.0);
}

std::vector<double> link_features(Point tx, Point rx, const SlfEstimate* slf) {
  std::vector<double> f{tx.x, tx.y, rx.x, rx.y};
  if (slf) f.push_back(link_shadow_db(*slf, tx, rx));
  return f;
}

namespace {

using MatrixF = Mlp<float>::Matrix;

struct PreparedExample {
  std::vector<int> links;      // column indices into the feature matrix
  std::vector<float> targets;  // scaled
};

struct PreparedData {
  MatrixF features;  // in x distinct links, scaled
  std::vector<PreparedExample> examples;
};

double target_span(const FeatureModel& m) {
  const double s = m.target_hi - m.target_lo;
  return s > 0.0 ? s : 1.0;
}

struct ValidationScore {
  double loss = 0.0;            // mean per-example normalised asymmetric loss
  double weighted_error = 0.0;  // mean per-example sum(lambda |err|) / count
};

// Scaled units.
ValidationScore validation_score(const Mlp<float>& net, const PreparedData& data,
                                 const std::vector<int>& ids, const LossParams& params) {
  ValidationScore score;
  if (ids.empty()) return score;
  for (int id : ids) {
    const PreparedExample& ex = data.examples[static_cast<std::size_t>(id)];
    MatrixF x(data.features.rows(), static_cast<Eigen::Index>(ex.links.size()));
    for (std::size_t c = 0; c < ex.links.size(); ++c) x.col(static_cast<Eigen::Index>(c)) = data.features.col(ex.links[c]);
    const MatrixF out = net.forward(x);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t c = 0; c < ex.links.size(); ++c) {
      const double pred = out(0, static_cast<Eigen::Index>(c));
      const double t = ex.targets[c];
      const double lam = t <= pred ? params.lambda_o : params.lambda_u;
      num += lam * std::abs(t - pred);
      den += lam;
    }
    score.loss += num / den;
    score.weighted_error += num / static_cast<double>(ex.links.size());
  }
  score.loss /= static_cast<double>(ids.size());
  score.weighted_error /= static_cast<double>(ids.size());
  return score;
}

}  // namespace

FeatureModel train_feature_predictor(std::span<const TrainingExample> train, const SlfEstimate* slf,
                                     const LossParams& params, const OptimizerConfig& opt, Rng& rng) {
  if (train.empty()) throw PipelineError("feature predictor needs at least one training example");
  params.validate();
  opt.validate();

  FeatureModel model;
  model.use_rti = slf != nullptr;
  model.loss = params;
  model.opt = opt;
  const int in_dim = model.use_rti ? 5 : 4;

  // Distinct links; augmented examples share them.
  std::map<std::pair<Point, Point>, int> link_index;
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<int>> example_links(train.size());
  std::vector<std::vector<double>> example_targets(train.size());
  for (std::size_t e = 0; e < train.size(); ++e) {
    if (train[e].chosen.empty()) throw PipelineError("training example without measurements");
    for (const auto& c : train[e].chosen) {
      const auto key = std::make_pair(train[e].tx_loc, c.rx_loc);
      auto it = link_index.find(key);
      if (it == link_index.end()) {
        it = link_index.emplace(key, static_cast<int>(raw.size())).first;
        raw.push_back(link_features(train[e].tx_loc, c.rx_loc, slf));
      }
      example_links[e].push_back(it->second);
      example_targets[e].push_back(c.rss_dbm);
    }
  }

  model.features.lo.assign(static_cast<std::size_t>(in_dim), std::numeric_limits<double>::infinity());
  model.features.hi.assign(static_cast<std::size_t>(in_dim), -std::numeric_limits<double>::infinity());
  for (const auto& f : raw) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      model.features.lo[i] = std::min(model.features.lo[i], f[i]);
      model.features.hi[i] = std::max(model.features.hi[i], f[i]);
    }
  }
  model.target_lo = std::numeric_limits<double>::infinity();
  model.target_hi = -std::numeric_limits<double>::infinity();
  for (const auto& ts : example_targets) {
    for (double t : ts) {
      model.target_lo = std::min(model.target_lo, t);
      model.target_hi = std::max(model.target_hi, t);
    }
  }
  const double span = target_span(model);

  PreparedData data;
  data.features.resize(in_dim, static_cast<Eigen::Index>(raw.size()));
  for (std::size_t c = 0; c < raw.size(); ++c) {
    for (int i = 0; i < in_dim; ++i) {
      data.features(i, static_cast<Eigen::Index>(c)) = static_cast<float>(model.features.apply(static_cast<std::size_t>(i), raw[c][static_cast<std::size_t>(i)]));
    }
  }
  data.examples.resize(train.size());
  for (std::size_t e = 0; e < train.size(); ++e) {
    data.examples[e].links = std::move(example_links[e]);
    for (double t : example_targets[e]) {
      data.examples[e].targets.push_back(static_cast<float>((t - model.target_lo) / span));
    }
  }

  // Hold out whole transmitters for validation.
  std::set<int> tx_ids;
  for (const auto& ex : train) tx_ids.insert(ex.tx_id);
  std::vector<int> ids(tx_ids.begin(), tx_ids.end());
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(opt.validation_fraction * static_cast<double>(ids.size())));
  const std::set<int> val_tx(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(n_val, ids.size() - 1)));
  std::vector<int> train_ids;
  std::vector<int> val_ids;
  for (std::size_t e = 0; e < train.size(); ++e) {
    (val_tx.count(train[e].tx_id) ? val_ids : train_ids).push_back(static_cast<int>(e));
  }

  std::vector<int> dims{in_dim};
  dims.insert(dims.end(), opt.hidden.begin(), opt.hidden.end());
  dims.push_back(1);
  Mlp<float> net(dims);
  net.init(rng);
  Adam<float> adam(net, opt.learning_rate);
  Mlp<float> best = net;
  double best_score = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int since_decay = 0;

  Mlp<float>::Cache cache;
  std::vector<int> order = train_ids;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      Eigen::Index cols = 0;
      for (std::size_t b = start; b < stop; ++b) cols += static_cast<Eigen::Index>(data.examples[static_cast<std::size_t>(order[b])].links.size());
      MatrixF x(in_dim, cols);
      Eigen::Index col = 0;
      for (std::size_t b = start; b < stop; ++b) {
        for (int l : data.examples[static_cast<std::size_t>(order[b])].links) x.col(col++) = data.features.col(l);
      }
      const MatrixF out = net.forward(x, &cache);
      MatrixF d_out(1, cols);
      col = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const PreparedExample& ex = data.examples[static_cast<std::size_t>(order[b])];
        double num = 0.0;
        double den = 0.0;
        for (std::size_t c = 0; c < ex.targets.size(); ++c) {
          const double pred = out(0, col + static_cast<Eigen::Index>(c));
          const double t = ex.targets[c];
          const double lam = t <= pred ? params.lambda_o : params.lambda_u;
          num += lam * std::abs(t - pred);
          den += lam;
        }
        for (std::size_t c = 0; c < ex.targets.size(); ++c) {
          const double pred = out(0, col + static_cast<Eigen::Index>(c));
          d_out(0, col + static_cast<Eigen::Index>(c)) = static_cast<float>(asymmetric_loss_slope(pred, ex.targets[c], den, params));
        }
        epoch_loss += num / den;
        col += static_cast<Eigen::Index>(ex.targets.size());
      }
      adam.step(net, net.backward(cache, d_out));
    }
    const double train_loss = epoch_loss / static_cast<double>(order.size());
    if (!std::isfinite(train_loss)) {
      throw PipelineError("feature predictor training diverged at epoch " + std::to_string(epoch));
    }
    model.train_loss_db.push_back(train_loss * span);
    double score = train_loss;
    if (!val_ids.empty()) {
      const ValidationScore val = validation_score(net, data, val_ids, params);
      model.val_loss_db.push_back(val.loss * span);
      score = val.weighted_error;
    }
    if (score < best_score) {
      best_score = score;
      best = net;
      model.best_epoch = epoch;
      since_best = 0;
      since_decay = 0;
    } else {
      if (++since_best >= opt.patience) break;
      if (++since_decay >= opt.lr_patience) {
        adam.set_learning_rate(adam.learning_rate() * opt.lr_decay);
        since_decay = 0;
      }
    }
  }
  model.net = best.cast<double>();
  return model;
}

std::vector<double> predict_feature(const FeatureModel& model, const SlfEstimate* slf, Point tx,
                                    std::span<const Point> queries) {
  if (model.use_rti && !slf) throw PipelineError("feature model was trained with RTI input but no SLF given");
  const int in_dim = model.net.input_dim();
  Eigen::MatrixXd x(in_dim, static_cast<Eigen::Index>(queries.size()));
  for (std::size_t c = 0; c < queries.size(); ++c) {
    const auto f = link_features(tx, queries[c], model.use_rti ? slf : nullptr);
    for (int i = 0; i < in_dim; ++i) {
      x(i, static_cast<Eigen::Index>(c)) = model.features.apply(static_cast<std::size_t>(i), f[static_cast<std::size_t>(i)]);
    }
  }
  const Eigen::MatrixXd out = model.net.forward(x);
  const double span = target_span(model);
  std::vector<double> pred(queries.size());
  for (std::size_t c = 0; c < queries.size(); ++c) pred[c] = model.target_lo + span * out(0, static_cast<Eigen::Index>(c));
  return pred;
}

namespace {

std::vector<std::uint8_t> kink_mask(const Mlp<double>& net, const GradientBatch& batch, double kink) {
  const Eigen::MatrixXd out = net.forward(batch.x);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(batch.y.size()));
  for (Eigen::Index i = 0; i < batch.y.size(); ++i) mask[static_cast<std::size_t>(i)] = std::abs(out(0, i) - batch.y(i)) > kink;
  return mask;
}

// Loss and dLoss/dOutput with a fixed mask. Groups with no masked sample contribute nothing.
double masked_loss(const Eigen::MatrixXd& out, const GradientBatch& batch, const std::vector<std::uint8_t>& mask,
                   const LossParams& params, LossMode mode, Eigen::MatrixXd* d_out) {
  if (d_out) *d_out = Eigen::MatrixXd::Zero(1, out.cols());
  double total = 0.0;
  Eigen::Index start = 0;
  for (int size : batch.group_sizes) {
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = start; i < start + size; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const double lam = batch.y(i) <= out(0, i) ? params.lambda_o : params.lambda_u;
      num += lam * std::abs(batch.y(i) - out(0, i));
      den += lam;
    }
    if (den > 0.0) {
      const double norm = mode == LossMode::kNormalized ? den : 1.0;
      total += num / norm;
      if (d_out) {
        for (Eigen::Index i = start; i < start + size; ++i) {
          if (mask[static_cast<std::size_t>(i)]) (*d_out)(0, i) = asymmetric_loss_slope(out(0, i), batch.y(i), norm, params);
        }
      }
    }
    start += size;
  }
  return total;
}

// Loss of the finite-difference probes, evaluated in extended precision.
long double probe_loss(const Mlp<long double>::Matrix& out, const GradientBatch& batch,
                       const std::vector<std::uint8_t>& mask, const LossParams& params, LossMode mode) {
  long double total = 0.0L;
  Eigen::Index start = 0;
  for (int size : batch.group_sizes) {
    long double num = 0.0L;
    long double den = 0.0L;
    for (Eigen::Index i = start; i < start + size; ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      const long double y = batch.y(i);
      const long double lam = y <= out(0, i) ? params.lambda_o : params.lambda_u;
      num += lam * std::abs(y - out(0, i));
      den += lam;
    }
    if (den > 0.0L) total += num / (mode == LossMode::kNormalized ? den : 1.0L);
    start += size;
  }
  return total;
}

void check_batch(const Mlp<double>& net, const GradientBatch& batch) {
  if (batch.x.rows() != net.input_dim() || batch.x.cols() != batch.y.size()) {
    throw PipelineError("gradient batch dimensions do not match the network");
  }
  if (std::accumulate(batch.group_sizes.begin(), batch.group_sizes.end(), Eigen::Index{0}) != batch.y.size()) {
    throw PipelineError("gradient batch group sizes do not cover the samples");
  }
}

}  // namespace

double batch_loss(const Mlp<double>& net, const GradientBatch& batch, const LossParams& params,
                  LossMode mode, double kink) {
  check_batch(net, batch);
  return masked_loss(net.forward(batch.x), batch, kink_mask(net, batch, kink), params, mode, nullptr);
}

std::vector<double> batch_gradient(const Mlp<double>& net, const GradientBatch& batch,
                                   const LossParams& params, LossMode mode, double kink) {
  check_batch(net, batch);
  const auto mask = kink_mask(net, batch, kink);
  Mlp<double>::Cache cache;
  const Eigen::MatrixXd out = net.forward(batch.x, &cache);
  Eigen::MatrixXd d_out;
  masked_loss(out, batch, mask, params, mode, &d_out);
  return Mlp<double>::flatten(net.backward(cache, d_out));
}

double gradient_check(const Mlp<double>& net, const GradientBatch& batch, const LossParams& params,
                      LossMode mode) {
  using Matrix = Mlp<long double>::Matrix;
  constexpr double kKink = 1e-3;
  constexpr long double kStep = 1e-5L;
  check_batch(net, batch);
  const auto mask = kink_mask(net, batch, kKink);
  const std::vector<double> analytic = batch_gradient(net, batch, params, mode, kKink);

  // A single parameter of layer l only moves one row of that layer's pre-activation, so each
  // probe restarts from the cached pre-activations.
  const Mlp<long double> probe = net.cast<long double>();
  const auto& layers = probe.layers();
  const std::size_t n_layers = layers.size();
  std::vector<Matrix> acts{batch.x.cast<long double>()};
  std::vector<Matrix> pre;
  for (std::size_t l = 0; l < n_layers; ++l) {
    Matrix z = layers[l].w * acts.back();
    z.colwise() += layers[l].b;
    pre.push_back(z);
    acts.push_back(l + 1 < n_layers ? Matrix(z.cwiseMax(0.0L)) : z);
  }
  auto loss_from = [&](std::size_t l, const Matrix& z) {
    Matrix a = l + 1 < n_layers ? Matrix(z.cwiseMax(0.0L)) : z;
    for (std::size_t m = l + 1; m < n_layers; ++m) {
      Matrix next = layers[m].w * a;
      next.colwise() += layers[m].b;
      a = m + 1 < n_layers ? Matrix(next.cwiseMax(0.0L)) : next;
    }
    return probe_loss(a, batch, mask, params, mode);
  };

  double worst = 0.0;
  std::size_t k = 0;
  auto compare = [&](std::size_t l, Eigen::Index row, const Matrix& delta) {
    Matrix z = pre[l];
    z.row(row) += delta;
    const long double up = loss_from(l, z);
    z.row(row) = pre[l].row(row) - delta;
    const long double down = loss_from(l, z);
    const double numeric = static_cast<double>((up - down) / (2.0L * kStep));
    const double denom = std::max(std::abs(analytic[k]) + std::abs(numeric), 1e-7);
    worst = std::max(worst, std::abs(analytic[k] - numeric) / denom);
    ++k;
  };
  // Same order as Mlp::flatten: weights column-major, then biases.
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Eigen::Index rows = layers[l].w.rows();
    for (Eigen::Index i = 0; i < layers[l].w.size(); ++i) compare(l, i % rows, kStep * acts[l].row(i / rows));
    const Matrix ones = Matrix::Constant(1, acts[l].cols(), kStep);
    for (Eigen::Index r = 0; r < rows; ++r) compare(l, r, ones);
  }
  return worst;
}

GradientBatch make_gradient_batch(const FeatureModel& model, const SlfEstimate* slf,
                                  std::span<const TrainingExample> examples) {
  GradientBatch batch;
  std::size_t n = 0;
  for (const auto& ex : examples) n += ex.chosen.size();
  const int in_dim = model.net.input_dim();
  batch.x.resize(in_dim, static_cast<Eigen::Index>(n));
  batch.y.resize(static_cast<Eigen::Index>(n));
  const double span = target_span(model);
  Eigen::Index col = 0;
  for (const auto& ex : examples) {
    for (const auto& c : ex.chosen) {
      const auto f = link_features(ex.tx_loc, c.rx_loc, model.use_rti ? slf : nullptr);
      for (int i = 0; i < in_dim; ++i) batch.x(i, col) = model.features.apply(static_cast<std::size_t>(i), f[static_cast<std::size_t>(i)]);
      batch.y(col) = (c.rss_dbm - model.target_lo) / span;
      ++col;
    }
    batch.group_sizes.push_back(static_cast<int>(ex.chosen.size()));
  }
  return batch;
}

namespace {

constexpr const char* kFeatureMagic = "pspred-feature-model";
constexpr int kFeatureVersion = 1;

template <typename T>
void write_list(std::ostream& out, const char* tag, const std::vector<T>& values) {
  out << tag << ' ' << values.size();
  for (const auto& v : values) out << ' ' << v;
  out << '\n';
}

template <typename T>
std::vector<T> read_list(std::istream& in, const char* tag) {
  std::string got;
  std::size_t n = 0;
  if (!(in >> got >> n) || got != tag) throw PipelineError(std::string("model file: expected '") + tag + "'");
  std::vector<T> values(n);
  for (auto& v : values) {
    if (!(in >> v)) throw PipelineError(std::string("model file: truncated '") + tag + "'");
  }
  return values;
}

void expect(std::istream& in, const char* tag) {
  std::string got;
  if (!(in >> got) || got != tag) throw PipelineError(std::string("model file: expected '") + tag + "'");
}

}  // namespace

void save_feature_model(const FeatureModel& model, std::ostream& out) {
  out << std::setprecision(17);
  out << kFeatureMagic << ' ' << kFeatureVersion << '\n';
  out << "use_rti " << (model.use_rti ? 1 : 0) << '\n';
  out << "loss " << model.loss.lambda_o << ' ' << model.loss.lambda_u << '\n';
  out << "optimizer " << model.opt.learning_rate << ' ' << model.opt.batch_size << ' ' << model.opt.epochs
      << ' ' << model.opt.patience << ' ' << model.opt.validation_fraction << ' ' << model.opt.lr_patience << ' '
      << model.opt.lr_decay << '\n';
  out << "best_epoch " << model.best_epoch << '\n';
  write_list(out, "dims", model.net.dims());
  write_list(out, "feature_lo", model.features.lo);
  write_list(out, "feature_hi", model.features.hi);
  out << "target " << model.target_lo << ' ' << model.target_hi << '\n';
  write_list(out, "params", model.net.flatten());
}

FeatureModel load_feature_model(std::istream& in) {
  FeatureModel model;
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kFeatureMagic) throw PipelineError("not a feature model file");
  if (version != kFeatureVersion) throw PipelineError("unsupported feature model version " + std::to_string(version));
  int use_rti = 0;
  expect(in, "use_rti");
  in >> use_rti;
  model.use_rti = use_rti != 0;
  expect(in, "loss");
  in >> model.loss.lambda_o >> model.loss.lambda_u;
  expect(in, "optimizer");
  in >> model.opt.learning_rate >> model.opt.batch_size >> model.opt.epochs >> model.opt.patience >>
      model.opt.validation_fraction >> model.opt.lr_patience >> model.opt.lr_decay;
  expect(in, "best_epoch");
  in >> model.best_epoch;
  const auto dims = read_list<int>(in, "dims");
  model.net = Mlp<double>(dims);
  model.opt.hidden.assign(dims.begin() + 1, dims.end() - 1);
  model.features.lo = read_list<double>(in, "feature_lo");
  model.features.hi = read_list<double>(in, "feature_hi");
  expect(in, "target");
  in >> model.target_lo >> model.target_hi;
  model.net.unflatten(read_list<double>(in, "params"));
  if (!in) throw PipelineError("model file is truncated");
  return model;
}

}  // namespace pspred
