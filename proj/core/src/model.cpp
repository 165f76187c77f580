#include "gazeid/model.hpp"

#include <cmath>

namespace gazeid {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Output columns [out_begin, out_begin + len) read input columns shifted by
// `shift`; zero padding outside [0, T).
struct TapRange {
  Index out_begin = 0;
  Index in_begin = 0;
  Index len = 0;
};

TapRange tap_range(Index steps, int tap, int kernel, int dilation) {
  const Index shift = static_cast<Index>(tap - (kernel - 1) / 2) * dilation;
  TapRange r;
  if (shift >= steps || -shift >= steps) return r;
  r.len = steps - (shift >= 0 ? shift : -shift);
  r.out_begin = shift >= 0 ? 0 : -shift;
  r.in_begin = shift >= 0 ? shift : 0;
  return r;
}

template <typename In, typename Out>
void conv_forward(const NetworkParams& p, int layer, const In& x, Out&& y) {
  const auto& cfg = p.config;
  const auto& spec = p.layout.conv[static_cast<std::size_t>(layer)];
  const Index steps = x.cols();
  y.colwise() = p.conv_bias(layer);
  for (int k = 0; k < cfg.kernel_size; ++k) {
    const TapRange r = tap_range(steps, k, cfg.kernel_size, spec.dilation);
    if (r.len == 0) continue;
    y.middleCols(r.out_begin, r.len).noalias() +=
        p.conv_weight(layer, k) * x.middleCols(r.in_begin, r.len);
  }
}

// Accumulates dW (flat, layer layout) and db; writes dX when requested.
template <typename In, typename GradOut>
void conv_backward(const NetworkParams& p, int layer, const In& x, const GradOut& dy,
                   double* dweight, double* dbias, MatrixXd* dx) {
  const auto& cfg = p.config;
  const auto& spec = p.layout.conv[static_cast<std::size_t>(layer)];
  const Index steps = x.cols();
  const Index g = cfg.growth;
  Eigen::Map<VectorXd>(dbias, g) += dy.rowwise().sum();
  if (dx) dx->setZero(x.rows(), steps);
  for (int k = 0; k < cfg.kernel_size; ++k) {
    const TapRange r = tap_range(steps, k, cfg.kernel_size, spec.dilation);
    if (r.len == 0) continue;
    Eigen::Map<MatrixXd> dw(dweight + static_cast<std::size_t>(k) * g * spec.in, g, spec.in);
    dw.noalias() += dy.middleCols(r.out_begin, r.len) * x.middleCols(r.in_begin, r.len).transpose();
    if (dx) {
      dx->middleCols(r.in_begin, r.len).noalias() +=
          p.conv_weight(layer, k).transpose() * dy.middleCols(r.out_begin, r.len);
    }
  }
}

// x_hat = (x - mean) * inv_std, per row.
MatrixXd normalize_rows(const Eigen::Ref<const MatrixXd>& x, const VectorXd& mean,
                        const VectorXd& inv_std) {
  return (x.colwise() - mean).array().colwise() * inv_std.array();
}

MatrixXd affine_relu(const MatrixXd& x_hat, const Eigen::Ref<const VectorXd>& scale,
                     const Eigen::Ref<const VectorXd>& shift) {
  return ((x_hat.array().colwise() * scale.array()).colwise() + shift.array()).max(0.0).matrix();
}

struct BatchStats {
  VectorXd mean;
  VectorXd var;  // biased
};

BatchStats batch_stats(const std::vector<MatrixXd>& features, Index rows) {
  const Index n_samples = static_cast<Index>(features.size());
  const Index steps = features.front().cols();
  const double count = static_cast<double>(n_samples * steps);
  std::vector<VectorXd> partial(features.size());
  parallel_for(features.size(), [&](std::size_t n) {
    partial[n] = features[n].topRows(rows).rowwise().sum();
  });
  BatchStats s;
  s.mean = VectorXd::Zero(rows);
  for (const auto& v : partial) s.mean += v;
  s.mean /= count;
  parallel_for(features.size(), [&](std::size_t n) {
    partial[n] = (features[n].topRows(rows).colwise() - s.mean).array().square().rowwise().sum();
  });
  s.var = VectorXd::Zero(rows);
  for (const auto& v : partial) s.var += v;
  s.var /= count;
  return s;
}

ForwardResult run_forward(const NetworkParams& params, NetworkParams* mutable_params,
                          std::span<const MatrixXd> windows, Mode mode) {
  const auto& cfg = params.config;
  const auto& layout = params.layout;
  if (windows.empty()) throw ConfigError("forward: empty batch");
  for (const auto& w : windows) {
    if (w.rows() != cfg.input_channels || w.cols() != cfg.time_steps) {
      throw DataError("forward: window is " + std::to_string(w.rows()) + "x" +
                      std::to_string(w.cols()) + ", network expects " +
                      std::to_string(cfg.input_channels) + "x" + std::to_string(cfg.time_steps));
    }
  }
  const std::size_t batch = windows.size();
  const Index steps = cfg.time_steps;
  const Index c_in = cfg.input_channels;
  const Index g = cfg.growth;
  const Index pooled_dim = cfg.pooled_dim();
  const int layers = cfg.num_conv_layers;

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.mode = mode;
  cache.features.resize(batch);
  cache.norm_mean.resize(static_cast<std::size_t>(layers));
  cache.norm_inv_std.resize(static_cast<std::size_t>(layers));

  parallel_for(batch, [&](std::size_t n) {
    auto& f = cache.features[n];
    f.resize(pooled_dim, steps);
    f.topRows(c_in) = windows[n];
    conv_forward(params, 0, windows[n], f.middleRows(c_in, g));
  });

  auto norm_stats = [&](int j, Index rows) {
    const auto& nl = layout.norm[static_cast<std::size_t>(j)];
    VectorXd mean;
    VectorXd var;
    if (mode == Mode::train) {
      BatchStats s = batch_stats(cache.features, rows);
      mean = s.mean;
      var = s.var;
      if (mutable_params) {
        const double m = cfg.bn_momentum;
        const double count = static_cast<double>(batch) * static_cast<double>(steps);
        const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
        for (Index c = 0; c < rows; ++c) {
          const auto b = nl.buffer + static_cast<std::size_t>(c);
          mutable_params->running_mean[b] = (1.0 - m) * mutable_params->running_mean[b] + m * mean(c);
          mutable_params->running_var[b] =
              (1.0 - m) * mutable_params->running_var[b] + m * var(c) * unbias;
        }
      }
    } else {
      mean = Eigen::Map<const VectorXd>(params.running_mean.data() + nl.buffer, rows);
      var = Eigen::Map<const VectorXd>(params.running_var.data() + nl.buffer, rows);
    }
    cache.norm_mean[static_cast<std::size_t>(j)] = mean;
    cache.norm_inv_std[static_cast<std::size_t>(j)] =
        (var.array() + cfg.bn_epsilon).rsqrt().matrix();
  };

  for (int layer = 1; layer < layers; ++layer) {
    const Index in = cfg.layer_input_channels(layer);
    const int j = layer - 1;
    norm_stats(j, in);
    const auto& mean = cache.norm_mean[static_cast<std::size_t>(j)];
    const auto& inv_std = cache.norm_inv_std[static_cast<std::size_t>(j)];
    parallel_for(batch, [&](std::size_t n) {
      auto& f = cache.features[n];
      const MatrixXd z = affine_relu(normalize_rows(f.topRows(in), mean, inv_std),
                                     params.norm_scale(j), params.norm_shift(j));
      conv_forward(params, layer, z, f.middleRows(in, g));
    });
  }

  const int final_norm = layers - 1;
  norm_stats(final_norm, pooled_dim);
  cache.pooled.resize(pooled_dim, static_cast<Index>(batch));
  parallel_for(batch, [&](std::size_t n) {
    const MatrixXd z = affine_relu(
        normalize_rows(cache.features[n], cache.norm_mean[static_cast<std::size_t>(final_norm)],
                       cache.norm_inv_std[static_cast<std::size_t>(final_norm)]),
        params.norm_scale(final_norm), params.norm_shift(final_norm));
    cache.pooled.col(static_cast<Index>(n)) = z.rowwise().mean();
  });

  result.embeddings = params.fc_weight() * cache.pooled;
  result.embeddings.colwise() += params.fc_bias();
  return result;
}

// Backward through BN -> ReLU for a batch. `grad_out` holds dL/d(relu output)
// per sample and is overwritten with dL/dx (pre-normalization input).
void norm_relu_backward(const NetworkParams& params, const ForwardCache& cache, int j, Index rows,
                        std::vector<MatrixXd>& grad_out, double* dscale, double* dshift) {
  const auto& mean = cache.norm_mean[static_cast<std::size_t>(j)];
  const auto& inv_std = cache.norm_inv_std[static_cast<std::size_t>(j)];
  const auto scale = params.norm_scale(j);
  const auto shift = params.norm_shift(j);
  const std::size_t batch = cache.batch();

  std::vector<VectorXd> sum_dy(batch);
  std::vector<VectorXd> sum_dy_xhat(batch);
  parallel_for(batch, [&](std::size_t n) {
    const MatrixXd x_hat = normalize_rows(cache.features[n].topRows(rows), mean, inv_std);
    const auto pre = (x_hat.array().colwise() * scale.array()).colwise() + shift.array();
    grad_out[n] = (pre > 0.0).select(grad_out[n].array(), 0.0).matrix();
    sum_dy[n] = grad_out[n].rowwise().sum();
    sum_dy_xhat[n] = (grad_out[n].array() * x_hat.array()).rowwise().sum();
  });
  VectorXd total_dy = VectorXd::Zero(rows);
  VectorXd total_dy_xhat = VectorXd::Zero(rows);
  for (std::size_t n = 0; n < batch; ++n) {
    total_dy += sum_dy[n];
    total_dy_xhat += sum_dy_xhat[n];
  }
  Eigen::Map<VectorXd>(dscale, rows) += total_dy_xhat;
  Eigen::Map<VectorXd>(dshift, rows) += total_dy;

  const VectorXd gain = scale.array() * inv_std.array();
  if (cache.mode == Mode::eval) {
    parallel_for(batch, [&](std::size_t n) {
      grad_out[n] = (grad_out[n].array().colwise() * gain.array()).matrix();
    });
    return;
  }
  const double count = static_cast<double>(batch) * static_cast<double>(cache.features.front().cols());
  parallel_for(batch, [&](std::size_t n) {
    const MatrixXd x_hat = normalize_rows(cache.features[n].topRows(rows), mean, inv_std);
    // dx = gain / M * (M * dy - sum(dy) - x_hat * sum(dy * x_hat))
    MatrixXd dx = grad_out[n] * count;
    dx.colwise() -= total_dy;
    dx.array() -= x_hat.array().colwise() * total_dy_xhat.array();
    grad_out[n] = (dx.array().colwise() * (gain.array() / count)).matrix();
  });
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_channels < 1) throw ConfigError("network: input_channels must be >= 1");
  if (time_steps < 1) throw ConfigError("network: time_steps must be >= 1");
  if (num_conv_layers < 1) throw ConfigError("network: num_conv_layers must be >= 1");
  if (growth < 1) throw ConfigError("network: growth must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("network: kernel_size must be odd so convolutions preserve length");
  }
  if (static_cast<int>(dilations.size()) != num_conv_layers) {
    throw ConfigError("network: need one dilation per conv layer");
  }
  for (int d : dilations) {
    if (d < 1) throw ConfigError("network: dilations must be strictly positive");
  }
  if (embedding_dim < 1) throw ConfigError("network: embedding_dim must be >= 1");
  if (!(bn_epsilon > 0.0)) throw ConfigError("network: bn_epsilon must be > 0");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) {
    throw ConfigError("network: bn_momentum must lie in [0, 1]");
  }
}

ParamLayout ParamLayout::from(const NetworkConfig& config) {
  config.validate();
  ParamLayout l;
  std::size_t off = 0;
  std::size_t buf = 0;
  const auto g = static_cast<std::size_t>(config.growth);
  const auto k = static_cast<std::size_t>(config.kernel_size);
  for (int layer = 0; layer < config.num_conv_layers; ++layer) {
    if (layer > 0) {
      Norm n;
      n.channels = config.layer_input_channels(layer);
      n.scale = off;
      off += static_cast<std::size_t>(n.channels);
      n.shift = off;
      off += static_cast<std::size_t>(n.channels);
      n.buffer = buf;
      buf += static_cast<std::size_t>(n.channels);
      l.norm.push_back(n);
    }
    Conv c;
    c.in = config.layer_input_channels(layer);
    c.dilation = config.dilations[static_cast<std::size_t>(layer)];
    c.weight = off;
    off += k * g * static_cast<std::size_t>(c.in);
    c.bias = off;
    off += g;
    l.conv.push_back(c);
  }
  Norm final_norm;
  final_norm.channels = config.pooled_dim();
  final_norm.scale = off;
  off += static_cast<std::size_t>(final_norm.channels);
  final_norm.shift = off;
  off += static_cast<std::size_t>(final_norm.channels);
  final_norm.buffer = buf;
  buf += static_cast<std::size_t>(final_norm.channels);
  l.norm.push_back(final_norm);
  l.fc_weight = off;
  off += static_cast<std::size_t>(config.embedding_dim) * static_cast<std::size_t>(config.pooled_dim());
  l.fc_bias = off;
  off += static_cast<std::size_t>(config.embedding_dim);
  l.total = off;
  l.buffer_total = buf;
  return l;
}

NetworkParams::ConstMap NetworkParams::conv_weight(int layer, int tap) const {
  const auto& c = layout.conv[static_cast<std::size_t>(layer)];
  const std::size_t block = static_cast<std::size_t>(config.growth) * static_cast<std::size_t>(c.in);
  return ConstMap(values.data() + c.weight + static_cast<std::size_t>(tap) * block, config.growth, c.in);
}

NetworkParams::ConstVecMap NetworkParams::conv_bias(int layer) const {
  return ConstVecMap(values.data() + layout.conv[static_cast<std::size_t>(layer)].bias, config.growth);
}

NetworkParams::ConstVecMap NetworkParams::norm_scale(int j) const {
  const auto& n = layout.norm[static_cast<std::size_t>(j)];
  return ConstVecMap(values.data() + n.scale, n.channels);
}

NetworkParams::ConstVecMap NetworkParams::norm_shift(int j) const {
  const auto& n = layout.norm[static_cast<std::size_t>(j)];
  return ConstVecMap(values.data() + n.shift, n.channels);
}

NetworkParams::ConstMap NetworkParams::fc_weight() const {
  return ConstMap(values.data() + layout.fc_weight, config.embedding_dim, config.pooled_dim());
}

NetworkParams::ConstVecMap NetworkParams::fc_bias() const {
  return ConstVecMap(values.data() + layout.fc_bias, config.embedding_dim);
}

void NetworkParams::validate() const {
  config.validate();
  const ParamLayout expected = ParamLayout::from(config);
  if (values.size() != expected.total) throw DataError("network params: parameter count mismatch");
  if (running_mean.size() != expected.buffer_total || running_var.size() != expected.buffer_total) {
    throw DataError("network params: running statistics size mismatch");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("network params: non-finite parameter");
  }
  for (double v : running_mean) {
    if (!std::isfinite(v)) throw DataError("network params: non-finite running mean");
  }
  for (double v : running_var) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("network params: running variance must be > 0");
  }
}

NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  NetworkParams p;
  p.config = config;
  p.layout = ParamLayout::from(config);
  p.values.assign(p.layout.total, 0.0);
  p.running_mean.assign(p.layout.buffer_total, 0.0);
  p.running_var.assign(p.layout.buffer_total, 1.0);
  Rng rng(seed);
  auto fill_uniform = [&](std::size_t begin, std::size_t count, double bound) {
    for (std::size_t i = 0; i < count; ++i) p.values[begin + i] = rng.uniform(-bound, bound);
  };
  const auto g = static_cast<std::size_t>(config.growth);
  const auto k = static_cast<std::size_t>(config.kernel_size);
  for (const auto& c : p.layout.conv) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c.in) * static_cast<double>(k));
    fill_uniform(c.weight, k * g * static_cast<std::size_t>(c.in), bound);
    fill_uniform(c.bias, g, bound);
  }
  for (const auto& n : p.layout.norm) {
    for (int c = 0; c < n.channels; ++c) p.values[n.scale + static_cast<std::size_t>(c)] = 1.0;
  }
  const double fc_bound = 1.0 / std::sqrt(static_cast<double>(config.pooled_dim()));
  fill_uniform(p.layout.fc_weight,
               static_cast<std::size_t>(config.embedding_dim) * static_cast<std::size_t>(config.pooled_dim()),
               fc_bound);
  fill_uniform(p.layout.fc_bias, static_cast<std::size_t>(config.embedding_dim), fc_bound);
  return p;
}

ForwardResult forward(NetworkParams& params, std::span<const Eigen::MatrixXd> windows, Mode mode) {
  return run_forward(params, mode == Mode::train ? &params : nullptr, windows, mode);
}

ForwardResult forward_eval(const NetworkParams& params, std::span<const Eigen::MatrixXd> windows) {
  return run_forward(params, nullptr, windows, Mode::eval);
}

Eigen::MatrixXd embed(const NetworkParams& params, std::span<const Eigen::MatrixXd> windows) {
  Eigen::MatrixXd out(params.config.embedding_dim, static_cast<Index>(windows.size()));
  parallel_for(windows.size(), [&](std::size_t n) {
    out.col(static_cast<Index>(n)) = run_forward(params, nullptr, windows.subspan(n, 1), Mode::eval).embeddings.col(0);
  });
  return out;
}

Gradients backward(const NetworkParams& params, const ForwardCache& cache,
                   const Eigen::MatrixXd& grad_embeddings) {
  const auto& cfg = params.config;
  const auto& layout = params.layout;
  const std::size_t batch = cache.batch();
  const Index steps = cfg.time_steps;
  const Index c_in = cfg.input_channels;
  const Index g = cfg.growth;
  const Index pooled_dim = cfg.pooled_dim();
  const int layers = cfg.num_conv_layers;
  if (batch == 0 || grad_embeddings.cols() != static_cast<Index>(batch) ||
      grad_embeddings.rows() != cfg.embedding_dim || cache.pooled.rows() != pooled_dim ||
      static_cast<int>(cache.norm_mean.size()) != layers ||
      cache.features.front().rows() != pooled_dim || cache.features.front().cols() != steps) {
    throw DataError("backward: cache does not match network parameters");
  }

  Gradients grads;
  grads.params.assign(layout.total, 0.0);
  double* const dp = grads.params.data();

  Eigen::Map<MatrixXd>(dp + layout.fc_weight, cfg.embedding_dim, pooled_dim).noalias() =
      grad_embeddings * cache.pooled.transpose();
  Eigen::Map<VectorXd>(dp + layout.fc_bias, cfg.embedding_dim) = grad_embeddings.rowwise().sum();
  const MatrixXd grad_pooled = params.fc_weight().transpose() * grad_embeddings;

  // Global average pooling spreads the gradient evenly over time.
  std::vector<MatrixXd> grad_features(batch);
  std::vector<MatrixXd> work(batch);
  parallel_for(batch, [&](std::size_t n) {
    work[n] = (grad_pooled.col(static_cast<Index>(n)) / static_cast<double>(steps)).replicate(1, steps);
  });
  const int final_norm = layers - 1;
  {
    const auto& nl = layout.norm[static_cast<std::size_t>(final_norm)];
    norm_relu_backward(params, cache, final_norm, pooled_dim, work, dp + nl.scale, dp + nl.shift);
  }
  for (std::size_t n = 0; n < batch; ++n) grad_features[n] = std::move(work[n]);

  std::vector<MatrixXd> grad_w(batch);
  std::vector<VectorXd> grad_b(batch);
  for (int layer = layers - 1; layer >= 0; --layer) {
    const auto& cl = layout.conv[static_cast<std::size_t>(layer)];
    const Index in = cfg.layer_input_channels(layer);
    const std::size_t wsize = static_cast<std::size_t>(cfg.kernel_size) * static_cast<std::size_t>(g) *
                              static_cast<std::size_t>(in);
    const int j = layer - 1;
    parallel_for(batch, [&](std::size_t n) {
      grad_w[n] = MatrixXd::Zero(static_cast<Index>(wsize), 1);
      grad_b[n] = VectorXd::Zero(g);
      const MatrixXd dy = grad_features[n].middleRows(in, g);
      if (layer == 0) {
        conv_backward(params, layer, cache.features[n].topRows(in), dy, grad_w[n].data(),
                      grad_b[n].data(), &work[n]);
      } else {
        const MatrixXd z = affine_relu(
            normalize_rows(cache.features[n].topRows(in), cache.norm_mean[static_cast<std::size_t>(j)],
                           cache.norm_inv_std[static_cast<std::size_t>(j)]),
            params.norm_scale(j), params.norm_shift(j));
        conv_backward(params, layer, z, dy, grad_w[n].data(), grad_b[n].data(), &work[n]);
      }
    });
    Eigen::Map<VectorXd> dw(dp + cl.weight, static_cast<Index>(wsize));
    Eigen::Map<VectorXd> db(dp + cl.bias, g);
    for (std::size_t n = 0; n < batch; ++n) {
      dw += grad_w[n].col(0);
      db += grad_b[n];
    }
    if (layer > 0) {
      const auto& nl = layout.norm[static_cast<std::size_t>(j)];
      norm_relu_backward(params, cache, j, in, work, dp + nl.scale, dp + nl.shift);
    }
    parallel_for(batch, [&](std::size_t n) { grad_features[n].topRows(in) += work[n]; });
  }

  grads.inputs.resize(batch);
  for (std::size_t n = 0; n < batch; ++n) grads.inputs[n] = grad_features[n].topRows(c_in);
  return grads;
}

Eigen::VectorXd centroid(const Eigen::MatrixXd& columns) {
  if (columns.cols() == 0) throw DataError("centroid: no embeddings");
  return columns.rowwise().mean();
}

Embedding centroid_embedding(std::span<const Embedding> embeddings) {
  if (embeddings.empty()) throw DataError("centroid_embedding: empty list");
  const Index dim = embeddings.front().values.size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  for (const auto& e : embeddings) {
    if (e.values.size() != dim) throw DataError("centroid_embedding: dimension mismatch");
    sum += e.values;
  }
  Embedding out;
  out.user = embeddings.front().user;
  out.source = "centroid";
  out.values = sum / static_cast<double>(embeddings.size());
  return out;
}

}  // namespace gazeid
