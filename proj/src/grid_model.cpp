#include "pspred/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pspred {

namespace {

Conv make_conv(int in, int out, int k) {
  Conv c;
  c.in = in;
  c.out = out;
  c.k = k;
  c.w.assign(static_cast<std::size_t>(out) * in * k * k, 0.0);
  c.b.assign(static_cast<std::size_t>(out), 0.0);
  return c;
}

FeatureMap conv_forward(const Conv& conv, const FeatureMap& in, bool relu) {
  FeatureMap out(conv.out, in.h, in.w);
  const int p = conv.k / 2;
  for (int o = 0; o < conv.out; ++o) {
    for (int y = 0; y < in.h; ++y) {
      for (int x = 0; x < in.w; ++x) out.at(o, y, x) = conv.b[static_cast<std::size_t>(o)];
    }
    for (int i = 0; i < conv.in; ++i) {
      for (int ky = 0; ky < conv.k; ++ky) {
        for (int kx = 0; kx < conv.k; ++kx) {
          const double wt = conv.w[((static_cast<std::size_t>(o) * conv.in + i) * conv.k + ky) * conv.k + kx];
          if (wt == 0.0) continue;
          const int dy = ky - p;
          const int dx = kx - p;
          for (int y = std::max(0, -dy); y < std::min(in.h, in.h - dy); ++y) {
            for (int x = std::max(0, -dx); x < std::min(in.w, in.w - dx); ++x) {
              out.at(o, y, x) += wt * in.at(i, y + dy, x + dx);
            }
          }
        }
      }
    }
  }
  if (relu) {
    for (double& v : out.data) v = std::max(v, 0.0);
  }
  return out;
}

// Accumulates weight/bias gradients into g (offset at the layer) and returns dLoss/dInput.
FeatureMap conv_backward(const Conv& conv, const FeatureMap& in, const FeatureMap& d_out, double* g_w,
                         double* g_b) {
  FeatureMap d_in(conv.in, in.h, in.w);
  const int p = conv.k / 2;
  for (int o = 0; o < conv.out; ++o) {
    double sb = 0.0;
    for (int y = 0; y < in.h; ++y) {
      for (int x = 0; x < in.w; ++x) sb += d_out.at(o, y, x);
    }
    g_b[o] += sb;
    for (int i = 0; i < conv.in; ++i) {
      for (int ky = 0; ky < conv.k; ++ky) {
        for (int kx = 0; kx < conv.k; ++kx) {
          const std::size_t widx = ((static_cast<std::size_t>(o) * conv.in + i) * conv.k + ky) * conv.k + kx;
          const double wt = conv.w[widx];
          const int dy = ky - p;
          const int dx = kx - p;
          double sw = 0.0;
          for (int y = std::max(0, -dy); y < std::min(in.h, in.h - dy); ++y) {
            for (int x = std::max(0, -dx); x < std::min(in.w, in.w - dx); ++x) {
              const double d = d_out.at(o, y, x);
              sw += d * in.at(i, y + dy, x + dx);
              d_in.at(i, y + dy, x + dx) += wt * d;
            }
          }
          g_w[widx] += sw;
        }
      }
    }
  }
  return d_in;
}

// Zeroes gradient entries where the post-activation was clipped.
void relu_backward(const FeatureMap& act, FeatureMap& d) {
  for (std::size_t i = 0; i < d.data.size(); ++i) {
    if (!(act.data[i] > 0.0)) d.data[i] = 0.0;
  }
}

FeatureMap avg_pool(const FeatureMap& in) {
  FeatureMap out(in.c, (in.h + 1) / 2, (in.w + 1) / 2);
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        double s = 0.0;
        int n = 0;
        for (int yy = 2 * y; yy < std::min(in.h, 2 * y + 2); ++yy) {
          for (int xx = 2 * x; xx < std::min(in.w, 2 * x + 2); ++xx) {
            s += in.at(c, yy, xx);
            ++n;
          }
        }
        out.at(c, y, x) = s / n;
      }
    }
  }
  return out;
}

FeatureMap avg_pool_backward(const FeatureMap& d_out, int h, int w) {
  FeatureMap d_in(d_out.c, h, w);
  for (int c = 0; c < d_out.c; ++c) {
    for (int y = 0; y < d_out.h; ++y) {
      for (int x = 0; x < d_out.w; ++x) {
        const int y1 = std::min(h, 2 * y + 2);
        const int x1 = std::min(w, 2 * x + 2);
        const double share = d_out.at(c, y, x) / ((y1 - 2 * y) * (x1 - 2 * x));
        for (int yy = 2 * y; yy < y1; ++yy) {
          for (int xx = 2 * x; xx < x1; ++xx) d_in.at(c, yy, xx) += share;
        }
      }
    }
  }
  return d_in;
}

FeatureMap upsample(const FeatureMap& in, int h, int w) {
  FeatureMap out(in.c, h, w);
  for (int c = 0; c < in.c; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
    }
  }
  return out;
}

FeatureMap upsample_backward(const FeatureMap& d_out, int h, int w) {
  FeatureMap d_in(d_out.c, h, w);
  for (int c = 0; c < d_out.c; ++c) {
    for (int y = 0; y < d_out.h; ++y) {
      for (int x = 0; x < d_out.w; ++x) d_in.at(c, y / 2, x / 2) += d_out.at(c, y, x);
    }
  }
  return d_in;
}

FeatureMap concat(const FeatureMap& a, const FeatureMap& b) {
  FeatureMap out(a.c + b.c, a.h, a.w);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

FeatureMap channel_slice(const FeatureMap& m, int c0, int c1) {
  FeatureMap out(c1 - c0, m.h, m.w);
  const std::size_t plane = static_cast<std::size_t>(m.h) * m.w;
  std::copy(m.data.begin() + static_cast<std::ptrdiff_t>(c0 * plane),
            m.data.begin() + static_cast<std::ptrdiff_t>(c1 * plane), out.data.begin());
  return out;
}

void add_into(FeatureMap& dst, const FeatureMap& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

GridModel::GridModel(const GridModelConfig& config) : cfg(config) {
  if (cfg.base_channels < 1) throw ConfigError("grid model needs at least one base channel");
  const int c = cfg.base_channels;
  layers.push_back(make_conv(4, c, 3));
  layers.push_back(make_conv(c, c, 3));
  layers.push_back(make_conv(c, 2 * c, 3));
  layers.push_back(make_conv(cfg.skip ? 3 * c : 2 * c, c, 3));
  layers.push_back(make_conv(c, 1, 1));
}

void GridModel::init(Rng& rng) {
  for (auto& l : layers) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (l.in * l.k * l.k)));
    for (double& w : l.w) w = dist(rng);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

FeatureMap GridModel::forward(const FeatureMap& input, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.input = input;
  c.e1 = conv_forward(layers[0], input, true);
  c.e2 = conv_forward(layers[1], c.e1, true);
  c.pooled = avg_pool(c.e2);
  c.mid = conv_forward(layers[2], c.pooled, true);
  c.up = upsample(c.mid, input.h, input.w);
  c.cat = cfg.skip ? concat(c.up, c.e2) : c.up;
  c.dec = conv_forward(layers[3], c.cat, true);
  return conv_forward(layers[4], c.dec, false);
}

std::vector<double> GridModel::backward(const Cache& c, const FeatureMap& d_out) const {
  std::vector<double> grad(parameter_count(), 0.0);
  std::vector<std::size_t> offset;
  std::size_t off = 0;
  for (const auto& l : layers) {
    offset.push_back(off);
    off += l.w.size() + l.b.size();
  }
  auto gw = [&](int l) { return grad.data() + offset[static_cast<std::size_t>(l)]; };
  auto gb = [&](int l) { return grad.data() + offset[static_cast<std::size_t>(l)] + layers[static_cast<std::size_t>(l)].w.size(); };

  FeatureMap d_dec = conv_backward(layers[4], c.dec, d_out, gw(4), gb(4));
  relu_backward(c.dec, d_dec);
  FeatureMap d_cat = conv_backward(layers[3], c.cat, d_dec, gw(3), gb(3));
  FeatureMap d_up = cfg.skip ? channel_slice(d_cat, 0, c.up.c) : d_cat;
  FeatureMap d_e2(c.e2.c, c.e2.h, c.e2.w);
  if (cfg.skip) d_e2 = channel_slice(d_cat, c.up.c, d_cat.c);
  FeatureMap d_mid = upsample_backward(d_up, c.mid.h, c.mid.w);
  relu_backward(c.mid, d_mid);
  FeatureMap d_pooled = conv_backward(layers[2], c.pooled, d_mid, gw(2), gb(2));
  add_into(d_e2, avg_pool_backward(d_pooled, c.e2.h, c.e2.w));
  relu_backward(c.e2, d_e2);
  FeatureMap d_e1 = conv_backward(layers[1], c.e1, d_e2, gw(1), gb(1));
  relu_backward(c.e1, d_e1);
  conv_backward(layers[0], c.input, d_e1, gw(0), gb(0));
  return grad;
}

std::size_t GridModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size();
  return n;
}

std::vector<double> GridModel::flatten() const {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.w.begin(), l.w.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

void GridModel::unflatten(std::span<const double> params) {
  if (params.size() != parameter_count()) throw PipelineError("grid model parameter vector has the wrong length");
  std::size_t k = 0;
  for (auto& l : layers) {
    for (double& w : l.w) w = params[k++];
    for (double& b : l.b) b = params[k++];
  }
}

FeatureMap tensor_to_map(const InputTensor& t) {
  FeatureMap m(4, t.height(), t.width());
  for (int c = 0; c < 4; ++c) {
    const Image& img = t.channel(c);
    for (int y = 0; y < m.h; ++y) {
      for (int x = 0; x < m.w; ++x) m.at(c, y, x) = img.at(x, y);
    }
  }
  return m;
}

namespace {

double span_of(const GridModel& m) {
  const double s = m.target_hi - m.target_lo;
  return s > 0.0 ? s : 1.0;
}

struct PreparedSample {
  FeatureMap input;
  std::vector<int> pixels;       // masked pixel offsets y * w + x
  std::vector<double> targets;   // scaled, aligned with pixels
};

PreparedSample prepare(const GridModel& model, const GridSample& s) {
  PreparedSample p;
  p.input = tensor_to_map(s.input);
  const Image& mask = s.input.x2;
  if (s.target.size() != mask.pixels.size()) throw PipelineError("grid sample target does not match the grid");
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y) == 0.0) continue;
      const int q = x + y * mask.width;
      p.pixels.push_back(y * mask.width + x);
      p.targets.push_back((s.target[static_cast<std::size_t>(q)] - model.target_lo) / span_of(model));
    }
  }
  if (p.pixels.empty()) throw PipelineError("grid sample has an empty mask");
  return p;
}

// Loss of one sample over the pixels with keep != 0 and its output gradient.
double sample_loss(const FeatureMap& out, const PreparedSample& s, const std::vector<std::uint8_t>& keep,
                   const LossParams& params, LossMode mode, FeatureMap* d_out) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < s.pixels.size(); ++i) {
    if (!keep[i]) continue;
    const double pred = out.data[static_cast<std::size_t>(s.pixels[i])];
    const double lam = s.targets[i] <= pred ? params.lambda_o : params.lambda_u;
    num += lam * std::abs(s.targets[i] - pred);
    den += lam;
  }
  if (d_out) *d_out = FeatureMap(1, out.h, out.w);
  if (!(den > 0.0)) return 0.0;
  const double norm = mode == LossMode::kNormalized ? den : 1.0;
  if (d_out) {
    for (std::size_t i = 0; i < s.pixels.size(); ++i) {
      if (!keep[i]) continue;
      const auto q = static_cast<std::size_t>(s.pixels[i]);
      d_out->data[q] = asymmetric_loss_slope(out.data[q], s.targets[i], norm, params);
    }
  }
  return num / norm;
}

std::vector<std::uint8_t> keep_mask(const FeatureMap& out, const PreparedSample& s, double kink) {
  std::vector<std::uint8_t> keep(s.pixels.size());
  for (std::size_t i = 0; i < s.pixels.size(); ++i) {
    keep[i] = std::abs(out.data[static_cast<std::size_t>(s.pixels[i])] - s.targets[i]) > kink;
  }
  return keep;
}

void check_grid(const GridModel& model, const FeatureMap& input) {
  if (input.h > model.cfg.max_grid || input.w > model.cfg.max_grid) {
    throw PipelineError("grid model supports grids up to " + std::to_string(model.cfg.max_grid) + " voxels per side");
  }
}

}  // namespace

GridModel train_grid_predictor(std::span<const GridSample> train, const LossParams& params,
                               const OptimizerConfig& opt, const GridModelConfig& cfg, Rng& rng) {
  if (train.empty()) throw PipelineError("grid predictor needs at least one training example");
  params.validate();
  opt.validate();
  GridModel model(cfg);
  model.init(rng);
  model.target_lo = std::numeric_limits<double>::infinity();
  model.target_hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : train) {
    for (std::size_t q = 0; q < s.target.size(); ++q) {
      if (s.input.x2.pixels.at(q) == 0.0) continue;
      model.target_lo = std::min(model.target_lo, s.target[q]);
      model.target_hi = std::max(model.target_hi, s.target[q]);
    }
  }
  std::vector<PreparedSample> data;
  for (const auto& s : train) {
    data.push_back(prepare(model, s));
    check_grid(model, data.back().input);
  }

  std::vector<double> theta = model.flatten();
  std::vector<double> m(theta.size(), 0.0);
  std::vector<double> v(theta.size(), 0.0);
  constexpr double kB1 = 0.9;
  constexpr double kB2 = 0.999;
  constexpr double kEps = 1e-8;
  int t = 0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double span = span_of(model);
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      std::vector<double> grad(theta.size(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const PreparedSample& s = data[order[b]];
        GridModel::Cache cache;
        const FeatureMap out = model.forward(s.input, &cache);
        FeatureMap d_out;
        const std::vector<std::uint8_t> keep(s.pixels.size(), 1);
        epoch_loss += sample_loss(out, s, keep, params, LossMode::kNormalized, &d_out);
        const auto g = model.backward(cache, d_out);
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += g[k];
      }
      ++t;
      const double c1 = 1.0 - std::pow(kB1, t);
      const double c2 = 1.0 - std::pow(kB2, t);
      for (std::size_t k = 0; k < theta.size(); ++k) {
        m[k] = kB1 * m[k] + (1.0 - kB1) * grad[k];
        v[k] = kB2 * v[k] + (1.0 - kB2) * grad[k] * grad[k];
        theta[k] -= opt.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + kEps);
      }
      model.unflatten(theta);
    }
    const double loss = epoch_loss / static_cast<double>(data.size());
    if (!std::isfinite(loss)) throw PipelineError("grid predictor training diverged at epoch " + std::to_string(epoch));
    model.train_loss_db.push_back(loss * span);
  }
  return model;
}

std::vector<double> predict_grid(const GridModel& model, const InputTensor& input,
                                 std::span<const Point> queries, const GridSpec& grid) {
  const FeatureMap x = tensor_to_map(input);
  check_grid(model, x);
  const FeatureMap out = model.forward(x);
  std::vector<double> pred;
  pred.reserve(queries.size());
  for (Point q : queries) {
    const auto idx = grid.grid_point_index(q);
    if (!idx || input.x2[*idx] == 0.0) throw PipelineError("query is not marked in the input mask");
    const int i = *idx % grid.grid_l;
    const int j = *idx / grid.grid_l;
    pred.push_back(model.target_lo + span_of(model) * out.at(0, j, i));
  }
  return pred;
}

double grid_batch_loss(const GridModel& model, std::span<const GridSample> batch,
                       const LossParams& params, LossMode mode, double kink) {
  double total = 0.0;
  for (const auto& s : batch) {
    const PreparedSample p = prepare(model, s);
    const FeatureMap out = model.forward(p.input);
    total += sample_loss(out, p, keep_mask(out, p, kink), params, mode, nullptr);
  }
  return total;
}

double grid_gradient_check(const GridModel& model, std::span<const GridSample> batch,
                           const LossParams& params, LossMode mode) {
  constexpr double kKink = 1e-3;
  constexpr double kStep = 1e-5;
  std::vector<PreparedSample> data;
  std::vector<std::vector<std::uint8_t>> keeps;
  std::vector<double> analytic(model.parameter_count(), 0.0);
  for (const auto& s : batch) {
    data.push_back(prepare(model, s));
    GridModel::Cache cache;
    const FeatureMap out = model.forward(data.back().input, &cache);
    keeps.push_back(keep_mask(out, data.back(), kKink));
    FeatureMap d_out;
    sample_loss(out, data.back(), keeps.back(), params, mode, &d_out);
    const auto g = model.backward(cache, d_out);
    for (std::size_t k = 0; k < g.size(); ++k) analytic[k] += g[k];
  }
  auto loss_at = [&](const GridModel& probe) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      total += sample_loss(probe.forward(data[i].input), data[i], keeps[i], params, mode, nullptr);
    }
    return total;
  };
  std::vector<double> theta = model.flatten();
  GridModel probe = model;
  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double orig = theta[k];
    theta[k] = orig + kStep;
    probe.unflatten(theta);
    const double up = loss_at(probe);
    theta[k] = orig - kStep;
    probe.unflatten(theta);
    const double down = loss_at(probe);
    theta[k] = orig;
    const double numeric = (up - down) / (2.0 * kStep);
    worst = std::max(worst, std::abs(analytic[k] - numeric) / std::max(std::abs(analytic[k]) + std::abs(numeric), 1e-7));
  }
  return worst;
}

}  // namespace pspred
