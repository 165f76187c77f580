#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gazeid/model.hpp"
#include "gazeid/model_artifact.hpp"
#include "gazeid/signal.hpp"

namespace gazeid {

struct MsLossConfig {
  double alpha = 2.0;
  double beta = 50.0;
  double lambda = 0.5;
  double epsilon = 0.1;  // miner margin

  void validate() const;
};

struct MinibatchSpec {
  int users_per_batch = 16;
  int samples_per_user = 16;

  int size() const { return users_per_batch * samples_per_user; }
  void validate() const;
};

struct TrainPlan {
  int epochs = 100;
  /// Stop early after this many epochs; the schedule still spans `epochs`.
  std::optional<int> stop_after_epochs;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_start = 1e-4;
  double lr_peak = 1e-2;
  double lr_end = 1e-7;
  double warmup_fraction = 0.3;
  std::uint64_t seed = 0;
  int ensemble_folds = 1;

  void validate() const;
};

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;

  explicit OptimizerState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

/// One Adam update (bias-corrected) of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grad, OptimizerState& state,
               double lr, const TrainPlan& plan);

/// One-cycle cosine schedule: a cosine half-wave from lr_start up to lr_peak
/// over the first warmup_fraction of steps, then down to lr_end at the final
/// step.
double lr_at(std::int64_t step, std::int64_t total_steps, const TrainPlan& plan);

/// Cosine similarity of every pair of columns.
Eigen::MatrixXd cosine_similarity(const Eigen::MatrixXd& embeddings);

struct MinedPairs {
  std::vector<std::vector<std::size_t>> positives;  // P_i
  std::vector<std::vector<std::size_t>> negatives;  // N_i

  std::size_t pair_count() const;
};

/// Multi-similarity miner. For anchor i a positive p is kept when
/// S_ip < max_n S_in + epsilon, a negative n when S_in > min_p S_ip - epsilon.
/// Anchors lacking positives or negatives yield empty sets.
MinedPairs mine_pairs(const Eigen::MatrixXd& similarity, std::span<const std::size_t> labels,
                      const MsLossConfig& cfg);

double ms_loss(const Eigen::MatrixXd& similarity, const MinedPairs& mined, const MsLossConfig& cfg);

/// dL/dS for fixed mined sets (only mined entries are non-zero).
Eigen::MatrixXd ms_loss_grad_similarity(const Eigen::MatrixXd& similarity, const MinedPairs& mined,
                                        const MsLossConfig& cfg);

/// dL/d(embeddings) through the cosine similarity, mined sets held fixed.
Eigen::MatrixXd ms_loss_backward(const Eigen::MatrixXd& embeddings, const MinedPairs& mined,
                                 const MsLossConfig& cfg);

struct Minibatch {
  std::vector<std::size_t> windows;  // ids into the training set
  std::vector<std::size_t> labels;   // user index per slot
};

/// Users uniformly without replacement; per user, windows without replacement
/// when enough exist, otherwise every window once plus uniform draws with
/// replacement to fill the slots.
Minibatch sample_minibatch(std::span<const std::vector<std::size_t>> windows_by_user,
                           const MinibatchSpec& spec, Rng& rng);

struct EpochLog {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double lr = 0.0;  // at the last step of the epoch
};

/// Normalized training windows with dense user labels 0..num_users-1.
struct TrainingSet {
  std::vector<Eigen::MatrixXd> windows;
  std::vector<std::size_t> labels;
  std::size_t num_users = 0;

  std::vector<std::vector<std::size_t>> windows_by_user() const;
};

struct TrainResult {
  NetworkParams params;
  std::vector<EpochLog> history;
  int epochs_completed = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minibatch training with MS loss and Adam. Each epoch runs
/// ceil(windows / batch) steps. Throws NumericalError on a non-finite loss.
TrainResult train_network(const TrainingSet& data, const NetworkConfig& config,
                          const MinibatchSpec& batch, const MsLossConfig& loss,
                          const TrainPlan& plan, const EpochCallback& on_epoch = {});

struct TrainOutput {
  ModelArtifact artifact;
  std::vector<std::vector<EpochLog>> histories;  // per ensemble member
};

/// Builds the training set from recordings (differentiate, clamp, window,
/// normalize with stats from these windows) and trains one model, or one per
/// fold complement when plan.ensemble_folds > 1. The network input width is
/// taken from the channel spec.
TrainOutput train(std::span<const GazeRecording* const> recordings, const ChannelSpec& channels,
                  const NetworkConfig& network, const MinibatchSpec& batch,
                  const MsLossConfig& loss, const TrainPlan& plan,
                  const SavgolConfig& savgol = {}, const EpochCallback& on_epoch = {});

}  // namespace gazeid
