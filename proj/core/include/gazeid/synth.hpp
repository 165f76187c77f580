#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gazeid/dataset_io.hpp"
#include "gazeid/signal.hpp"

namespace gazeid {

/// Per-eye part of a user signature.
struct EyeSignature {
  Eigen::Vector2d kappa{0.0, 0.0};                        // deg (azimuth, elevation)
  Eigen::Matrix2d gain = Eigen::Matrix2d::Identity();     // visual = gain * optical + kappa
  double saccade_gain = 1.0;                              // per-eye amplitude scale
  double noise_amplitude = 0.0;                           // deg, SD of colored noise
  double noise_exponent = 1.0;                            // 1/f^exponent
};

struct UserSignature {
  UserId user_id;
  std::array<EyeSignature, 2> eyes;  // left, right
  double velocity_scale = 1.0;       // peak-velocity scale of the main sequence
  double duration_intercept = 0.021;  // s
  double duration_slope = 0.0022;     // s per deg
  double saccade_latency = 0.2;       // s, mean
  double primary_gain = 0.95;         // hypometria of the primary saccade
  double pursuit_gain = 0.9;          // (0.5, 1]
  double accuracy_bias = 0.5;         // deg, magnitude of the bias field
  Eigen::Vector2d bias_direction{1.0, 0.0};
  Eigen::Matrix2d bias_slope = Eigen::Matrix2d::Zero();  // bias change per 15 deg
  double measurement_noise = 0.0;  // deg, white noise SD on the estimate
  double session_jitter = 0.05;    // relative per-recording parameter jitter

  void validate() const;

  /// Duration (s) of a saccade of the given amplitude (deg).
  double saccade_duration(double amplitude) const;
  /// Peak velocity (deg/s) of the minimum-jerk profile for an amplitude.
  double peak_velocity(double amplitude) const;
  /// Accuracy bias (deg) at a true gaze position.
  Eigen::Vector2d bias_at(const Eigen::Vector2d& position) const;
};

/// Population distributions the signatures are drawn from.
struct PopulationConfig {
  double kappa_azimuth_mean = 5.0;
  double kappa_azimuth_sd = 1.5;
  double kappa_elevation_mean = 1.5;
  double kappa_elevation_sd = 1.0;
  double gain_diagonal_sd = 0.1;
  double gain_offdiagonal_sd = 0.05;
  double eye_saccade_gain_sd = 0.03;
  double velocity_scale_min = 0.8;
  double velocity_scale_max = 1.2;
  double duration_slope_min = 0.0018;
  double duration_slope_max = 0.0030;
  double latency_min = 0.15;
  double latency_max = 0.26;
  double primary_gain_min = 0.88;
  double primary_gain_max = 1.0;
  double pursuit_gain_min = 0.7;
  double pursuit_gain_max = 1.0;
  double noise_amplitude_min = 0.08;
  double noise_amplitude_max = 0.2;
  double noise_exponent_min = 0.6;
  double noise_exponent_max = 1.2;
  double accuracy_bias_min = 0.2;
  double accuracy_bias_max = 2.0;
  /// Relative per-recording jitter of velocity scale, latency and noise level.
  double session_jitter = 0.12;
  /// White measurement noise SD as a fraction of the accuracy bias magnitude.
  double accuracy_noise_fraction = 0.05;

  void validate() const;
};

struct TaskSpec {
  Task kind = Task::random_saccade;
  double duration = 30.0;  // s
  double sample_rate = kDefaultSampleRate;
  // random saccade
  double target_range = 15.0;  // deg, uniform in [-range, range]
  double jump_interval_min = 0.8;
  double jump_interval_max = 1.2;
  double corrective_latency = 0.15;  // s
  // smooth pursuit
  double pursuit_amplitude = 10.0;  // deg
  double pursuit_frequency = 0.3;   // Hz, horizontal; vertical uses 0.7x
  double catch_up_threshold = 1.5;  // deg
  double catch_up_latency = 0.1;    // s

  void validate() const;
  std::size_t samples() const;
};

struct SynthDatasetSpec {
  std::size_t n_users = 300;
  int random_saccade_repetitions = 2;
  int smooth_pursuit_repetitions = 2;
  double train_fraction = 2.0 / 3.0;
  double test_fraction = 1.0 / 3.0;
  std::vector<double> tier_quantiles{1.0 / 3.0, 2.0 / 3.0};
  std::uint64_t seed = 0;
  TaskSpec random_saccade{};
  TaskSpec smooth_pursuit{Task::smooth_pursuit};
  PopulationConfig population;

  void validate() const;
};

nlohmann::json to_json(const SynthDatasetSpec& spec);
SynthDatasetSpec synth_spec_from_json(const nlohmann::json& j);

std::string synth_user_id(std::size_t index);

/// Draws the signature of user `index`; deterministic in (spec.seed, index).
UserSignature generate_user(const SynthDatasetSpec& spec, std::size_t index);

/// Minimum-jerk position profile on [0, 1] and its derivative.
double min_jerk(double tau);
double min_jerk_velocity(double tau);

/// Fractional-differencing FIR coloring of unit white noise, rescaled so the
/// stationary SD equals `amplitude`.
std::vector<double> colored_noise(std::size_t n, double amplitude, double exponent, Rng& rng);

struct SynthRecording {
  GazeRecording recording;
  double accuracy_error = 0.0;  // deg, mean |estimated - true| gaze
  std::vector<double> target_x;
  std::vector<double> target_y;
};

/// Simulates one task recording. `repetition_seed` drives the target sequence,
/// latencies and noise.
SynthRecording generate_recording(const UserSignature& signature, const TaskSpec& task,
                                  int repetition, std::uint64_t repetition_seed);

/// Assigns tier labels from quantile cut points of `values`. Ties are broken
/// by id. Names: two tiers low/high, three low/mid/high, otherwise tier1..tierK.
std::vector<std::string> quantile_tiers(std::span<const double> values,
                                        std::span<const UserId> ids,
                                        std::span<const double> quantiles);

/// In-memory dataset: manifest (paths filled in, root empty) plus recordings.
Dataset generate_dataset(const SynthDatasetSpec& spec);

/// Generates and writes recordings/<user>/<task>_<rep>.csv and manifest.json
/// under `dir`. Returns the manifest path.
std::filesystem::path write_dataset(const SynthDatasetSpec& spec, const std::filesystem::path& dir);

}  // namespace gazeid
