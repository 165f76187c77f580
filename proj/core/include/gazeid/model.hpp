#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gazeid/common.hpp"

namespace gazeid {

/// Hyper-shape of the dense dilated-convolution embedder.
struct NetworkConfig {
  int input_channels = 8;
  int time_steps = 360;
  int num_conv_layers = 8;
  int growth = 32;
  int kernel_size = 3;
  std::vector<int> dilations{1, 2, 4, 8, 16, 32, 64, 1};
  int embedding_dim = 128;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  void validate() const;

  /// Channels entering conv layer `layer` (0-based): C + g * layer.
  int layer_input_channels(int layer) const { return input_channels + growth * layer; }
  /// Width of the full dense concatenation, C + L * g.
  int pooled_dim() const { return input_channels + growth * num_conv_layers; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Offsets of every parameter group inside NetworkParams::values.
///
/// BN layer j < L-1 normalizes the input of conv layer j+1; BN layer L-1 is the
/// final normalization of the full concatenation. Conv layer 0 has no BN.
struct ParamLayout {
  struct Conv {
    std::size_t weight = 0;  // kernel_size blocks of (growth x in), column-major
    std::size_t bias = 0;
    int in = 0;
    int dilation = 1;
  };
  struct Norm {
    std::size_t scale = 0;
    std::size_t shift = 0;
    std::size_t buffer = 0;  // offset into running_mean / running_var
    int channels = 0;
  };

  std::vector<Conv> conv;
  std::vector<Norm> norm;
  std::size_t fc_weight = 0;  // embedding_dim x pooled_dim, column-major
  std::size_t fc_bias = 0;
  std::size_t total = 0;
  std::size_t buffer_total = 0;

  static ParamLayout from(const NetworkConfig& config);
};

struct NetworkParams {
  NetworkConfig config;
  ParamLayout layout;
  std::vector<double> values;  // trainable parameters, flat
  std::vector<double> running_mean;
  std::vector<double> running_var;

  using Map = Eigen::Map<Eigen::MatrixXd>;
  using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

  ConstMap conv_weight(int layer, int tap) const;
  ConstVecMap conv_bias(int layer) const;
  ConstVecMap norm_scale(int j) const;
  ConstVecMap norm_shift(int j) const;
  ConstMap fc_weight() const;
  ConstVecMap fc_bias() const;

  /// Throws when shapes disagree with config, a running variance is not
  /// positive, or any value is non-finite.
  void validate() const;
};

/// Fan-in scaled uniform init: conv and FC weights and biases ~ U(-1/sqrt(fan_in),
/// +1/sqrt(fan_in)), fan_in = in * kernel_size for convs. BN scale 1, shift 0,
/// running mean 0, running variance 1. Deterministic in seed.
NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed);

enum class Mode { train, eval };

/// Everything backward() needs. Features hold the dense concatenation of the
/// input and every conv output (pre-normalization) for each sample.
struct ForwardCache {
  Mode mode = Mode::eval;
  std::vector<Eigen::MatrixXd> features;  // per sample: pooled_dim x T
  std::vector<Eigen::VectorXd> norm_mean;  // per BN layer, statistics used
  std::vector<Eigen::VectorXd> norm_inv_std;
  Eigen::MatrixXd pooled;  // pooled_dim x batch

  std::size_t batch() const { return features.size(); }
};

struct ForwardResult {
  Eigen::MatrixXd embeddings;  // embedding_dim x batch
  ForwardCache cache;
};

/// Batched forward pass. Train mode normalizes with batch statistics (over
/// samples and time) and updates the running statistics in `params`; eval mode
/// uses running statistics and leaves `params` untouched.
ForwardResult forward(NetworkParams& params, std::span<const Eigen::MatrixXd> windows, Mode mode);

/// Eval-mode forward; pure, safe to call concurrently on shared params.
ForwardResult forward_eval(const NetworkParams& params, std::span<const Eigen::MatrixXd> windows);

/// Eval-mode embeddings only, one column per window (parallel over windows).
Eigen::MatrixXd embed(const NetworkParams& params, std::span<const Eigen::MatrixXd> windows);

struct Gradients {
  std::vector<double> params;  // same layout as NetworkParams::values
  std::vector<Eigen::MatrixXd> inputs;  // per sample, C x T
};

/// Reverse-mode gradients of sum_n <grad_embeddings[:, n], embedding_n> with
/// respect to every trainable parameter and every input window.
Gradients backward(const NetworkParams& params, const ForwardCache& cache,
                   const Eigen::MatrixXd& grad_embeddings);

struct Embedding {
  UserId user;
  std::string source;  // recording id, window, or "centroid"
  Eigen::VectorXd values;
};

/// Elementwise arithmetic mean, not re-normalized.
Embedding centroid_embedding(std::span<const Embedding> embeddings);
Eigen::VectorXd centroid(const Eigen::MatrixXd& columns);

}  // namespace gazeid
