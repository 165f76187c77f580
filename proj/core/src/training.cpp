#include "gazeid/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace gazeid {

using Eigen::Index;
using Eigen::MatrixXd;

void MsLossConfig::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("ms loss: alpha and beta must be > 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("ms loss: lambda must lie in [0, 1]");
  if (!(epsilon >= 0.0)) throw ConfigError("ms loss: epsilon must be >= 0");
}

void MinibatchSpec::validate() const {
  if (users_per_batch < 2 || samples_per_user < 2) {
    throw ConfigError("minibatch: users_per_batch and samples_per_user must both be >= 2");
  }
}

void TrainPlan::validate() const {
  if (epochs < 0) throw ConfigError("train plan: epochs must be >= 0");
  if (stop_after_epochs && *stop_after_epochs < 0) {
    throw ConfigError("train plan: stop_after_epochs must be >= 0");
  }
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("train plan: warmup_fraction must lie in (0, 1)");
  }
  if (!(lr_start > 0.0 && lr_peak > 0.0 && lr_end > 0.0)) {
    throw ConfigError("train plan: learning rates must be > 0");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train plan: Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train plan: Adam eps must be > 0");
  if (ensemble_folds < 1) throw ConfigError("train plan: ensemble_folds must be >= 1");
}

void adam_step(std::span<double> params, std::span<const double> grad, OptimizerState& state,
               double lr, const TrainPlan& plan) {
  if (grad.size() != params.size() || state.first_moment.size() != params.size()) {
    throw DataError("adam: size mismatch");
  }
  ++state.step;
  const double b1 = plan.adam_beta1;
  const double b2 = plan.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * grad[i];
    v = b2 * v + (1.0 - b2) * grad[i] * grad[i];
    params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + plan.adam_eps);
  }
}

double lr_at(std::int64_t step, std::int64_t total_steps, const TrainPlan& plan) {
  if (total_steps <= 0 || step < 0 || step >= total_steps) {
    throw ConfigError("lr_at: step must lie in [0, total_steps)");
  }
  const double s = static_cast<double>(step);
  const double warm = plan.warmup_fraction * static_cast<double>(total_steps);
  const double last = static_cast<double>(total_steps - 1);
  if (s <= warm) {
    if (warm <= 0.0) return plan.lr_peak;
    const double p = s / warm;
    return plan.lr_start + (plan.lr_peak - plan.lr_start) * 0.5 * (1.0 - std::cos(std::numbers::pi * p));
  }
  if (last <= warm) return plan.lr_peak;
  const double p = (s - warm) / (last - warm);
  return plan.lr_end + (plan.lr_peak - plan.lr_end) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

MatrixXd cosine_similarity(const MatrixXd& embeddings) {
  const Eigen::VectorXd norms = embeddings.colwise().norm().transpose().cwiseMax(1e-12);
  const MatrixXd unit = embeddings * norms.cwiseInverse().asDiagonal();
  return unit.transpose() * unit;
}

std::size_t MinedPairs::pair_count() const {
  std::size_t n = 0;
  for (const auto& p : positives) n += p.size();
  for (const auto& q : negatives) n += q.size();
  return n;
}

MinedPairs mine_pairs(const MatrixXd& similarity, std::span<const std::size_t> labels,
                      const MsLossConfig& cfg) {
  const auto m = static_cast<std::size_t>(similarity.rows());
  if (similarity.cols() != similarity.rows() || labels.size() != m) {
    throw DataError("mine_pairs: similarity matrix and labels disagree in size");
  }
  std::map<std::size_t, std::size_t> counts;
  for (auto l : labels) ++counts[l];
  if (counts.size() < 2) throw DataError("mine_pairs: need at least two distinct labels");
  if (std::none_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second >= 2; })) {
    throw DataError("mine_pairs: no label occurs twice, so there are no positive pairs");
  }

  MinedPairs mined;
  mined.positives.resize(m);
  mined.negatives.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    bool has_pos = false;
    bool has_neg = false;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == i) continue;
      const double s = similarity(static_cast<Index>(i), static_cast<Index>(k));
      if (labels[k] == labels[i]) {
        has_pos = true;
        min_pos = std::min(min_pos, s);
      } else {
        has_neg = true;
        max_neg = std::max(max_neg, s);
      }
    }
    if (!has_pos || !has_neg) continue;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == i) continue;
      const double s = similarity(static_cast<Index>(i), static_cast<Index>(k));
      if (labels[k] == labels[i]) {
        if (s < max_neg + cfg.epsilon) mined.positives[i].push_back(k);
      } else if (s > min_pos - cfg.epsilon) {
        mined.negatives[i].push_back(k);
      }
    }
  }
  return mined;
}

double ms_loss(const MatrixXd& similarity, const MinedPairs& mined, const MsLossConfig& cfg) {
  const auto m = mined.positives.size();
  if (m == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = static_cast<Index>(i);
    double pos = 0.0;
    for (auto k : mined.positives[i]) {
      pos += std::exp(-cfg.alpha * (similarity(row, static_cast<Index>(k)) - cfg.lambda));
    }
    double neg = 0.0;
    for (auto k : mined.negatives[i]) {
      neg += std::exp(cfg.beta * (similarity(row, static_cast<Index>(k)) - cfg.lambda));
    }
    total += std::log1p(pos) / cfg.alpha + std::log1p(neg) / cfg.beta;
  }
  return total / static_cast<double>(m);
}

MatrixXd ms_loss_grad_similarity(const MatrixXd& similarity, const MinedPairs& mined,
                                 const MsLossConfig& cfg) {
  const auto m = mined.positives.size();
  MatrixXd grad = MatrixXd::Zero(similarity.rows(), similarity.cols());
  if (m == 0) return grad;
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = static_cast<Index>(i);
    if (!mined.positives[i].empty()) {
      double sum = 0.0;
      for (auto k : mined.positives[i]) {
        sum += std::exp(-cfg.alpha * (similarity(row, static_cast<Index>(k)) - cfg.lambda));
      }
      for (auto k : mined.positives[i]) {
        const double e = std::exp(-cfg.alpha * (similarity(row, static_cast<Index>(k)) - cfg.lambda));
        grad(row, static_cast<Index>(k)) -= inv_m * e / (1.0 + sum);
      }
    }
    if (!mined.negatives[i].empty()) {
      double sum = 0.0;
      for (auto k : mined.negatives[i]) {
        sum += std::exp(cfg.beta * (similarity(row, static_cast<Index>(k)) - cfg.lambda));
      }
      for (auto k : mined.negatives[i]) {
        const double e = std::exp(cfg.beta * (similarity(row, static_cast<Index>(k)) - cfg.lambda));
        grad(row, static_cast<Index>(k)) += inv_m * e / (1.0 + sum);
      }
    }
  }
  return grad;
}

MatrixXd ms_loss_backward(const MatrixXd& embeddings, const MinedPairs& mined,
                          const MsLossConfig& cfg) {
  const Eigen::VectorXd norms = embeddings.colwise().norm().transpose().cwiseMax(1e-12);
  const MatrixXd unit = embeddings * norms.cwiseInverse().asDiagonal();
  const MatrixXd similarity = unit.transpose() * unit;
  const MatrixXd g = ms_loss_grad_similarity(similarity, mined, cfg);
  // S = U^T U, so dL/dU = U (G + G^T); then project out the radial part.
  const MatrixXd grad_unit = unit * (g + g.transpose());
  MatrixXd out(embeddings.rows(), embeddings.cols());
  for (Index i = 0; i < embeddings.cols(); ++i) {
    const double radial = unit.col(i).dot(grad_unit.col(i));
    out.col(i) = (grad_unit.col(i) - radial * unit.col(i)) / norms(i);
  }
  return out;
}

Minibatch sample_minibatch(std::span<const std::vector<std::size_t>> windows_by_user,
                           const MinibatchSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<std::size_t> eligible;
  for (std::size_t u = 0; u < windows_by_user.size(); ++u) {
    if (!windows_by_user[u].empty()) eligible.push_back(u);
  }
  const auto users = static_cast<std::size_t>(spec.users_per_batch);
  const auto per_user = static_cast<std::size_t>(spec.samples_per_user);
  if (eligible.size() < users) {
    throw DataError("sample_minibatch: " + std::to_string(eligible.size()) +
                    " users with windows, batch needs " + std::to_string(users));
  }
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < users; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  Minibatch batch;
  batch.windows.reserve(users * per_user);
  batch.labels.reserve(users * per_user);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < users; ++i) {
    const std::size_t user = eligible[i];
    pool = windows_by_user[user];
    const std::size_t take = std::min(per_user, pool.size());
    for (std::size_t s = 0; s < take; ++s) {
      const std::size_t j = s + static_cast<std::size_t>(rng.below(pool.size() - s));
      std::swap(pool[s], pool[j]);
      batch.windows.push_back(pool[s]);
      batch.labels.push_back(user);
    }
    for (std::size_t s = take; s < per_user; ++s) {
      batch.windows.push_back(pool[static_cast<std::size_t>(rng.below(pool.size()))]);
      batch.labels.push_back(user);
    }
  }
  return batch;
}

std::vector<std::vector<std::size_t>> TrainingSet::windows_by_user() const {
  std::vector<std::vector<std::size_t>> by_user(num_users);
  for (std::size_t i = 0; i < labels.size(); ++i) by_user[labels[i]].push_back(i);
  return by_user;
}

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

TrainResult train_network(const TrainingSet& data, const NetworkConfig& config,
                          const MinibatchSpec& batch_spec, const MsLossConfig& loss_cfg,
                          const TrainPlan& plan, const EpochCallback& on_epoch) {
  config.validate();
  batch_spec.validate();
  loss_cfg.validate();
  plan.validate();
  if (data.windows.size() != data.labels.size()) throw DataError("train: labels and windows disagree");

  TrainResult result;
  result.params = init_params(config, derive_seed(plan.seed, 0x1417));
  if (plan.epochs == 0) return result;
  if (data.windows.empty()) throw DataError("train: empty training set");

  const auto by_user = data.windows_by_user();
  const auto m = static_cast<std::size_t>(batch_spec.size());
  const auto steps_per_epoch = static_cast<std::int64_t>((data.windows.size() + m - 1) / m);
  const std::int64_t total_steps = steps_per_epoch * plan.epochs;
  const int run_epochs = std::min(plan.epochs, plan.stop_after_epochs.value_or(plan.epochs));

  OptimizerState opt(result.params.values.size());
  Rng rng(derive_seed(plan.seed, 0xba7c4));
  std::vector<Eigen::MatrixXd> inputs(m);
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= run_epochs; ++epoch) {
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::int64_t s = 0; s < steps_per_epoch; ++s, ++step) {
      const Minibatch mb = sample_minibatch(by_user, batch_spec, rng);
      for (std::size_t i = 0; i < m; ++i) inputs[i] = data.windows[mb.windows[i]];
      ForwardResult fwd = forward(result.params, inputs, Mode::train);
      const MatrixXd sim = cosine_similarity(fwd.embeddings);
      const MinedPairs mined = mine_pairs(sim, mb.labels, loss_cfg);
      const double loss = ms_loss(sim, mined, loss_cfg);
      lr = lr_at(step, total_steps, plan);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at epoch " << epoch << ", step " << step
            << " (lr " << lr << ")";
        throw NumericalError(msg.str());
      }
      loss_sum += loss;
      const MatrixXd grad_emb = ms_loss_backward(fwd.embeddings, mined, loss_cfg);
      const Gradients grads = backward(result.params, fwd.cache, grad_emb);
      if (!all_finite(grads.params)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite gradient at epoch " << epoch << ", step " << step
            << " (loss " << loss << ", lr " << lr << ")";
        throw NumericalError(msg.str());
      }
      adam_step(result.params.values, grads.params, opt, lr, plan);
    }
    EpochLog log{epoch, loss_sum / static_cast<double>(steps_per_epoch), lr};
    result.history.push_back(log);
    result.epochs_completed = epoch;
    if (on_epoch) on_epoch(log);
  }
  if (!all_finite(result.params.values)) throw NumericalError("training produced non-finite parameters");
  return result;
}

TrainOutput train(std::span<const GazeRecording* const> recordings, const ChannelSpec& channels,
                  const NetworkConfig& network, const MinibatchSpec& batch,
                  const MsLossConfig& loss, const TrainPlan& plan, const SavgolConfig& savgol,
                  const EpochCallback& on_epoch) {
  channels.validate();
  plan.validate();
  NetworkConfig config = network;
  config.input_channels = static_cast<int>(channels.channel_count());
  config.time_steps = static_cast<int>(kWindowSteps);
  config.validate();

  std::vector<VelocityWindow> windows;
  for (const GazeRecording* rec : recordings) {
    auto w = partition_windows(*rec, channels, std::nullopt, savgol);
    std::move(w.begin(), w.end(), std::back_inserter(windows));
  }
  if (windows.empty()) throw DataError("train: recordings produced no 5 s windows");
  const NormalizationStats stats = compute_norm_stats(windows);

  std::set<UserId> user_set;
  for (const auto& w : windows) user_set.insert(w.user_id);
  const std::vector<UserId> users(user_set.begin(), user_set.end());
  std::map<UserId, std::size_t> user_index;
  for (std::size_t i = 0; i < users.size(); ++i) user_index[users[i]] = i;

  TrainOutput out;
  out.artifact.network = config;
  out.artifact.channels = channels;
  out.artifact.savgol = savgol;
  out.artifact.normalization = stats;
  out.artifact.epochs_planned = plan.epochs;
  out.artifact.seed = plan.seed;

  // Fold f holds users whose shuffled rank r has r % folds == f.
  const auto folds = static_cast<std::size_t>(plan.ensemble_folds);
  std::vector<std::size_t> fold_of(users.size(), 0);
  if (folds > 1) {
    if (users.size() < folds) throw DataError("train: fewer users than ensemble folds");
    std::vector<std::size_t> order(users.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(plan.seed, 0xf01d));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    }
    for (std::size_t r = 0; r < order.size(); ++r) fold_of[order[r]] = r % folds;
  }

  for (std::size_t f = 0; f < folds; ++f) {
    TrainingSet set;
    std::map<std::size_t, std::size_t> dense;
    for (const auto& w : windows) {
      const std::size_t u = user_index.at(w.user_id);
      if (folds > 1 && fold_of[u] == f) continue;
      auto [it, inserted] = dense.try_emplace(u, dense.size());
      Eigen::MatrixXd x = w.data;
      normalize(x, stats);
      set.windows.push_back(std::move(x));
      set.labels.push_back(it->second);
    }
    set.num_users = dense.size();
    TrainPlan member_plan = plan;
    member_plan.seed = folds > 1 ? derive_seed(plan.seed, 0xe75e, f) : plan.seed;
    TrainResult r = train_network(set, config, batch, loss, member_plan, on_epoch);
    out.artifact.epochs_completed = r.epochs_completed;
    out.artifact.members.push_back(std::move(r.params));
    out.histories.push_back(std::move(r.history));
  }
  return out;
}

}  // namespace gazeid
