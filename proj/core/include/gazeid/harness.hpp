#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gazeid/dataset_io.hpp"
#include "gazeid/identify.hpp"
#include "gazeid/model_artifact.hpp"
#include "gazeid/permanence.hpp"
#include "gazeid/training.hpp"
#include "gazeid/verify.hpp"

namespace gazeid {

/// Which recording a side of the comparison uses, and how many leading
/// 5 s chunks of it.
struct SideSpec {
  TaskLabel task{Task::random_saccade, 1};
  int chunks = 4;
};

struct ExperimentConfig {
  std::string id = "experiment";
  std::string manifest;  // path; resolved relative to the config file by the CLI
  std::string model;     // optional artifact path; empty = train inline
  ChannelSpec channels;
  NetworkConfig network;
  MinibatchSpec batch;
  MsLossConfig loss;
  TrainPlan plan;
  SavgolConfig savgol;
  Task train_task = Task::random_saccade;
  std::optional<std::size_t> train_size;  // N users, nested prefixes of one permutation
  std::vector<std::string> train_tiers;   // empty = all
  std::vector<std::string> test_tiers;
  std::vector<double> tier_quantiles{1.0 / 3.0, 2.0 / 3.0};
  SideSpec enroll{{Task::random_saccade, 1}, 4};
  SideSpec verify{{Task::random_saccade, 2}, 4};
  std::vector<double> far_targets{0.00002};
  // sweeps
  std::vector<std::size_t> train_sizes;
  std::vector<std::pair<int, int>> durations;  // (n_e, n_v)
  std::vector<std::size_t> gallery_sizes;
  std::size_t gallery_samples = 100;
  CurveFamily curve_family = CurveFamily::sqrt;
  PermanenceConfig permanence;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing fields keep their defaults. `plan.seed` defaults to `seed`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// FNV-1a over the canonical (sorted-key, compact) JSON dump.
std::string config_hash(const nlohmann::json& config);

/// Per-user tier labels for users holding both random-saccade recordings.
std::map<UserId, std::string> partition_by_accuracy(const Manifest& manifest,
                                                    std::span<const double> quantiles);

/// Training users: split "train", optionally restricted to tiers, holding at
/// least one recording of the training task, sorted by a seeded permutation so
/// that every N takes a prefix of the same order.
std::vector<UserId> training_users(const Dataset& data, const ExperimentConfig& config);
/// Test users (split "test", optionally restricted to tiers), sorted by id.
std::vector<UserId> test_users(const Dataset& data, const ExperimentConfig& config);

struct TrainedModel {
  ModelArtifact artifact;
  std::vector<std::vector<EpochLog>> histories;
  std::vector<UserId> users;
};

TrainedModel train_model(const Dataset& data, const ExperimentConfig& config,
                         const EpochCallback& on_epoch = {});

/// Per-window embeddings of the enrollment and verification recordings of
/// every test user that has both, in test-user order.
struct EmbeddedPool {
  std::vector<UserId> users;
  std::vector<Eigen::MatrixXd> enroll;  // embedding_dim x windows
  std::vector<Eigen::MatrixXd> verify;
  std::vector<std::string> enroll_recordings;
  std::vector<std::string> verify_recordings;
  std::size_t n_test_users = 0;
  std::vector<UserId> excluded;  // missing or too short recordings

  /// Centroids of the first `chunks` windows on each side.
  std::vector<Embedding> enroll_centroids(int chunks) const;
  std::vector<Embedding> verify_centroids(int chunks) const;
};

/// Users lacking either recording, or fewer than `min_chunks` windows in it,
/// are excluded.
EmbeddedPool embed_pool(const Dataset& data, const ModelArtifact& model, const ExperimentConfig& config,
                        int min_enroll_chunks, int min_verify_chunks);

struct EvaluationResult {
  VerificationReport verification;
  IdentificationReport identification;
  ScoreSet scores;
  RocResult roc;
  std::size_t n_enrolled = 0;
  std::size_t n_excluded = 0;
};

EvaluationResult evaluate(const EmbeddedPool& pool, int enroll_chunks, int verify_chunks,
                          std::span<const double> far_targets);

struct ExperimentResult {
  std::string id;
  std::string kind = "experiment";
  nlohmann::json config;
  std::string config_hash;
  EvaluationResult evaluation;
  std::optional<TrainedModel> trained;
  std::size_t n_train_users = 0;
  std::size_t n_test_users = 0;
  double enroll_seconds = 0.0;
  double verify_seconds = 0.0;
  std::optional<SweepResult> sweep;
  std::optional<CurveFit> fit;
  std::optional<PermanenceReport> permanence;
  nlohmann::json table;  // sweep rows (train size, duration, tiers)
};

nlohmann::json to_json(const ExperimentResult& result);

/// preprocess -> (train) -> embed -> centroid -> metrics.
ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& data,
                                const ModelArtifact* model = nullptr, const EpochCallback& on_epoch = {});

/// One trained model and evaluation per N; the test set is fixed.
ExperimentResult sweep_train_size(const ExperimentConfig& config, const Dataset& data,
                                  const EpochCallback& on_epoch = {});

/// Evaluates every (n_e, n_v) pair in config.durations with one model.
ExperimentResult sweep_duration(const ExperimentConfig& config, const Dataset& data,
                                const ModelArtifact* model = nullptr, const EpochCallback& on_epoch = {});

/// Gallery-size sweep on the test pool plus a scaling-curve fit of the
/// Rank-1 IR midline.
ExperimentResult sweep_gallery(const ExperimentConfig& config, const Dataset& data,
                               const ModelArtifact* model = nullptr, const EpochCallback& on_epoch = {});

/// Trains on config.train_tiers and evaluates each test tier in turn
/// (all tiers when config.test_tiers is empty).
ExperimentResult accuracy_tiers(const ExperimentConfig& config, const Dataset& data,
                                const ModelArtifact* model = nullptr, const EpochCallback& on_epoch = {});

/// ICC, normality and intercorrelation of centroid features across the
/// enrollment and verification recordings.
ExperimentResult permanence_experiment(const ExperimentConfig& config, const Dataset& data,
                                       const ModelArtifact* model = nullptr,
                                       const EpochCallback& on_epoch = {});

/// Writes result.json and the module CSVs under dir (created if needed).
void write_result(const ExperimentResult& result, const std::filesystem::path& dir);

/// Collects every result.json below `root` into one summary table.
nlohmann::json collect_report(const std::filesystem::path& root);
std::string report_csv(const nlohmann::json& report);

}  // namespace gazeid
