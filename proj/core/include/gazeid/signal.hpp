#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazeid/common.hpp"

namespace gazeid {

inline constexpr double kDefaultSampleRate = 72.0;
inline constexpr std::size_t kWindowSteps = 360;  // 5 s at 72 Hz
inline constexpr double kVelocityClamp = 1000.0;  // deg/s

enum class Task { random_saccade, smooth_pursuit };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

struct TaskLabel {
  Task kind = Task::random_saccade;
  int repetition = 1;

  friend bool operator==(const TaskLabel&, const TaskLabel&) = default;
};

/// Angular position traces for one eye, in degrees.
struct EyeTrace {
  std::vector<double> optical_x;  // azimuth
  std::vector<double> optical_y;  // elevation
  std::vector<double> visual_x;
  std::vector<double> visual_y;
};

struct GazeRecording {
  UserId user_id;
  TaskLabel task;
  double sample_rate = kDefaultSampleRate;
  std::vector<double> timestamps;
  EyeTrace left;
  EyeTrace right;

  std::size_t size() const { return timestamps.size(); }
  double duration() const { return static_cast<double>(size()) / sample_rate; }
  std::string recording_id() const;

  /// Throws DataError when lengths differ, timestamps are not uniform to 1e-9 s,
  /// or any value is non-finite.
  void validate() const;
};

enum class Eye { left, right };
enum class Axis { optical, visual, visual_minus_optical };

/// Channel selection. Channels are ordered eye-major (L, R), then axis
/// (O, V, V-O), then component (azimuth, elevation).
struct ChannelSpec {
  bool left = true;
  bool right = true;
  bool optical = true;
  bool visual = true;
  bool visual_minus_optical = false;

  std::size_t eye_count() const;
  std::size_t axis_count() const;
  std::size_t channel_count() const { return 2 * eye_count() * axis_count(); }
  std::vector<std::string> channel_names() const;
  /// Short label such as "LR:O+V".
  std::string label() const;
  void validate() const;

  friend bool operator==(const ChannelSpec&, const ChannelSpec&) = default;
};

struct SavgolConfig {
  int window_length = 7;
  int poly_order = 2;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> sd;

  std::size_t channels() const { return mean.size(); }
  void validate() const;
};

struct VelocityWindow {
  UserId user_id;
  std::string recording_id;
  std::size_t index = 0;
  Eigen::MatrixXd data;  // channels x kWindowSteps, deg/s (or z-scores once normalized)
};

/// First-derivative Savitzky-Golay filter with mirror-padded edges, scaled to
/// units per second.
std::vector<double> savgol_velocity(std::span<const double> positions, double sample_rate,
                                    int window_length = 7, int poly_order = 2);

/// Derivative-at-center convolution weights for a (window_length, poly_order)
/// least-squares fit, indexed from -half to +half.
std::vector<double> savgol_derivative_weights(int window_length, int poly_order);

constexpr double clamp_velocity(double v) {
  return v > kVelocityClamp ? kVelocityClamp : (v < -kVelocityClamp ? -kVelocityClamp : v);
}

/// Selected position channels as rows (channel_count x samples), before
/// differentiation.
Eigen::MatrixXd select_channels(const GazeRecording& recording, const ChannelSpec& spec);

/// Differentiates, clamps and cuts the recording into non-overlapping
/// 360-sample windows. The trailing remainder is dropped; recordings shorter
/// than one window yield an empty list. When stats are given each channel is
/// z-scored with them.
std::vector<VelocityWindow> partition_windows(const GazeRecording& recording,
                                              const ChannelSpec& spec,
                                              const std::optional<NormalizationStats>& stats,
                                              const SavgolConfig& savgol = {});

/// Per-channel mean and population SD over every window and time step.
NormalizationStats compute_norm_stats(std::span<const VelocityWindow> windows);

void normalize(Eigen::MatrixXd& data, const NormalizationStats& stats);
void denormalize(Eigen::MatrixXd& data, const NormalizationStats& stats);

}  // namespace gazeid
