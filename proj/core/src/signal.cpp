#include "gazeid/signal.hpp"

#include <cmath>
#include <sstream>

namespace gazeid {

std::string to_string(Task task) {
  switch (task) {
    case Task::random_saccade:
      return "random_saccade";
    case Task::smooth_pursuit:
      return "smooth_pursuit";
  }
  return "unknown";
}

Task task_from_string(const std::string& name) {
  if (name == "random_saccade" || name == "RAN") return Task::random_saccade;
  if (name == "smooth_pursuit" || name == "PUR") return Task::smooth_pursuit;
  throw ConfigError("unknown task '" + name + "'");
}

std::string GazeRecording::recording_id() const {
  return user_id + "/" + to_string(task.kind) + "/" + std::to_string(task.repetition);
}

void GazeRecording::validate() const {
  const std::size_t n = timestamps.size();
  if (n == 0) throw DataError(recording_id() + ": empty recording");
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw DataError(recording_id() + ": invalid sample rate");
  }
  const std::vector<const std::vector<double>*> channels = {
      &left.optical_x,  &left.optical_y,  &left.visual_x,  &left.visual_y,
      &right.optical_x, &right.optical_y, &right.visual_x, &right.visual_y};
  for (const auto* ch : channels) {
    if (ch->size() != n) throw DataError(recording_id() + ": channel length mismatch");
    for (double v : *ch) {
      if (!std::isfinite(v)) throw DataError(recording_id() + ": non-finite gaze sample");
    }
  }
  const double dt = 1.0 / sample_rate;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(timestamps[i])) throw DataError(recording_id() + ": non-finite timestamp");
    if (i > 0 && std::abs((timestamps[i] - timestamps[i - 1]) - dt) > 1e-9) {
      std::ostringstream msg;
      msg << recording_id() << ": non-uniform timestamps at sample " << i;
      throw DataError(msg.str());
    }
  }
}

std::size_t ChannelSpec::eye_count() const {
  return static_cast<std::size_t>(left) + static_cast<std::size_t>(right);
}

std::size_t ChannelSpec::axis_count() const {
  return static_cast<std::size_t>(optical) + static_cast<std::size_t>(visual) +
         static_cast<std::size_t>(visual_minus_optical);
}

void ChannelSpec::validate() const {
  if (eye_count() == 0) throw ConfigError("channel spec selects no eye");
  if (axis_count() == 0) throw ConfigError("channel spec selects no axis");
}

std::vector<std::string> ChannelSpec::channel_names() const {
  std::vector<std::string> names;
  for (const char* eye : {"L", "R"}) {
    if ((eye[0] == 'L' && !left) || (eye[0] == 'R' && !right)) continue;
    for (int a = 0; a < 3; ++a) {
      const bool on = a == 0 ? optical : (a == 1 ? visual : visual_minus_optical);
      if (!on) continue;
      const char* axis = a == 0 ? "O" : (a == 1 ? "V" : "VminusO");
      names.push_back(std::string(eye) + "." + axis + ".x");
      names.push_back(std::string(eye) + "." + axis + ".y");
    }
  }
  return names;
}

std::string ChannelSpec::label() const {
  std::string s;
  if (left) s += "L";
  if (right) s += "R";
  s += ":";
  std::string axes;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!axes.empty()) axes += "+";
    axes += name;
  };
  add(optical, "O");
  add(visual, "V");
  add(visual_minus_optical, "V-O");
  return s + axes;
}

void NormalizationStats::validate() const {
  if (mean.size() != sd.size()) throw DataError("normalization stats: size mismatch");
  for (std::size_t c = 0; c < sd.size(); ++c) {
    if (!(sd[c] > 0.0) || !std::isfinite(sd[c]) || !std::isfinite(mean[c])) {
      throw DataError("normalization stats: channel " + std::to_string(c) +
                      " has non-positive or non-finite SD");
    }
  }
}

std::vector<double> savgol_derivative_weights(int window_length, int poly_order) {
  if (window_length < 1 || window_length % 2 == 0) {
    throw ConfigError("savgol: window_length must be odd and positive");
  }
  if (poly_order < 1 || poly_order >= window_length) {
    throw ConfigError("savgol: need 1 <= poly_order < window_length");
  }
  const int half = window_length / 2;
  Eigen::MatrixXd vander(window_length, poly_order + 1);
  for (int j = -half; j <= half; ++j) {
    double p = 1.0;
    for (int q = 0; q <= poly_order; ++q) {
      vander(j + half, q) = p;
      p *= j;
    }
  }
  // Row 1 of the pseudo-inverse maps window samples to the linear coefficient,
  // which is the derivative at the window center.
  const Eigen::MatrixXd gram = vander.transpose() * vander;
  const Eigen::MatrixXd pinv = gram.ldlt().solve(vander.transpose());
  std::vector<double> w(static_cast<std::size_t>(window_length));
  // Derivative weights are exactly antisymmetric; enforce it against round-off.
  for (int j = 0; j < window_length; ++j) {
    w[static_cast<std::size_t>(j)] = 0.5 * (pinv(1, j) - pinv(1, window_length - 1 - j));
  }
  return w;
}

std::vector<double> savgol_velocity(std::span<const double> positions, double sample_rate,
                                    int window_length, int poly_order) {
  const auto weights = savgol_derivative_weights(window_length, poly_order);
  const auto n = static_cast<std::ptrdiff_t>(positions.size());
  if (n < window_length) {
    throw DataError("savgol: sequence of length " + std::to_string(n) +
                    " is shorter than window_length " + std::to_string(window_length));
  }
  const std::ptrdiff_t half = window_length / 2;
  auto mirror = [n](std::ptrdiff_t i) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  };
  std::vector<double> out(positions.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    double acc = 0.0;
    if (t >= half && t + half < n) {
      for (std::ptrdiff_t j = -half; j <= half; ++j) {
        acc += weights[static_cast<std::size_t>(j + half)] * positions[static_cast<std::size_t>(t + j)];
      }
    } else {
      for (std::ptrdiff_t j = -half; j <= half; ++j) {
        acc += weights[static_cast<std::size_t>(j + half)] *
               positions[static_cast<std::size_t>(mirror(t + j))];
      }
    }
    out[static_cast<std::size_t>(t)] = acc * sample_rate;
  }
  return out;
}

Eigen::MatrixXd select_channels(const GazeRecording& recording, const ChannelSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(recording.size());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(spec.channel_count()), n);
  Eigen::Index row = 0;
  auto put = [&](const std::vector<double>& v) {
    out.row(row++) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), n);
  };
  auto put_diff = [&](const std::vector<double>& vis, const std::vector<double>& opt) {
    out.row(row++) = Eigen::Map<const Eigen::RowVectorXd>(vis.data(), n) -
                     Eigen::Map<const Eigen::RowVectorXd>(opt.data(), n);
  };
  for (const EyeTrace* eye : {&recording.left, &recording.right}) {
    if ((eye == &recording.left && !spec.left) || (eye == &recording.right && !spec.right)) {
      continue;
    }
    if (spec.optical) {
      put(eye->optical_x);
      put(eye->optical_y);
    }
    if (spec.visual) {
      put(eye->visual_x);
      put(eye->visual_y);
    }
    if (spec.visual_minus_optical) {
      put_diff(eye->visual_x, eye->optical_x);
      put_diff(eye->visual_y, eye->optical_y);
    }
  }
  return out;
}

std::vector<VelocityWindow> partition_windows(const GazeRecording& recording,
                                              const ChannelSpec& spec,
                                              const std::optional<NormalizationStats>& stats,
                                              const SavgolConfig& savgol) {
  spec.validate();
  const std::size_t channels = spec.channel_count();
  if (stats && stats->channels() != channels) {
    throw DataError("normalization stats have " + std::to_string(stats->channels()) +
                    " channels, channel spec " + spec.label() + " needs " +
                    std::to_string(channels));
  }
  const std::size_t count = recording.size() / kWindowSteps;
  if (count == 0) return {};

  const Eigen::MatrixXd positions = select_channels(recording, spec);
  Eigen::MatrixXd velocity(positions.rows(), positions.cols());
  std::vector<double> row(static_cast<std::size_t>(positions.cols()));
  for (Eigen::Index c = 0; c < positions.rows(); ++c) {
    Eigen::Map<Eigen::RowVectorXd>(row.data(), positions.cols()) = positions.row(c);
    const auto v = savgol_velocity(row, recording.sample_rate, savgol.window_length,
                                   savgol.poly_order);
    for (Eigen::Index t = 0; t < positions.cols(); ++t) {
      velocity(c, t) = clamp_velocity(v[static_cast<std::size_t>(t)]);
    }
  }

  std::vector<VelocityWindow> windows;
  windows.reserve(count);
  const auto steps = static_cast<Eigen::Index>(kWindowSteps);
  for (std::size_t w = 0; w < count; ++w) {
    VelocityWindow win;
    win.user_id = recording.user_id;
    win.recording_id = recording.recording_id();
    win.index = w;
    win.data = velocity.middleCols(static_cast<Eigen::Index>(w) * steps, steps);
    if (stats) normalize(win.data, *stats);
    windows.push_back(std::move(win));
  }
  return windows;
}

NormalizationStats compute_norm_stats(std::span<const VelocityWindow> windows) {
  if (windows.empty()) throw DataError("compute_norm_stats: no windows");
  const auto channels = windows.front().data.rows();
  // Chan et al. pairwise merge of per-window (count, mean, M2).
  std::vector<double> count(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> mean(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> m2(static_cast<std::size_t>(channels), 0.0);
  for (const auto& w : windows) {
    if (w.data.rows() != channels) throw DataError("compute_norm_stats: channel count mismatch");
    const double nb = static_cast<double>(w.data.cols());
    for (Eigen::Index c = 0; c < channels; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      const double mb = w.data.row(c).mean();
      const double m2b = (w.data.row(c).array() - mb).square().sum();
      const double na = count[ci];
      const double n = na + nb;
      const double delta = mb - mean[ci];
      mean[ci] += delta * nb / n;
      m2[ci] += m2b + delta * delta * na * nb / n;
      count[ci] = n;
    }
  }
  NormalizationStats stats;
  stats.mean = mean;
  stats.sd.resize(mean.size());
  for (std::size_t c = 0; c < mean.size(); ++c) {
    const double var = m2[c] / count[c];
    if (!(var > 0.0)) {
      throw DataError("compute_norm_stats: channel " + std::to_string(c) + " has zero variance");
    }
    stats.sd[c] = std::sqrt(var);
  }
  return stats;
}

void normalize(Eigen::MatrixXd& data, const NormalizationStats& stats) {
  for (Eigen::Index c = 0; c < data.rows(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    data.row(c) = (data.row(c).array() - stats.mean[ci]) / stats.sd[ci];
  }
}

void denormalize(Eigen::MatrixXd& data, const NormalizationStats& stats) {
  for (Eigen::Index c = 0; c < data.rows(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    data.row(c) = data.row(c).array() * stats.sd[ci] + stats.mean[ci];
  }
}

}  // namespace gazeid
