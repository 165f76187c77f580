#include "gazeid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>

namespace gazeid {

namespace {

constexpr double kInternalRate = 1000.0;  // Hz, oculomotor simulation step
constexpr std::size_t kNoiseTaps = 256;

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config field '") + key + "': " + e.what());
  }
}

// One saccade in flight: displacement `disp` over [start, start + duration].
struct Saccade {
  double start = 0.0;
  double duration = 0.0;
  Eigen::Vector2d disp = Eigen::Vector2d::Zero();

  Eigen::Vector2d offset(double t) const {
    if (t <= start) return Eigen::Vector2d::Zero();
    if (t >= start + duration) return disp;
    return disp * min_jerk((t - start) / duration);
  }
  double end() const { return start + duration; }
};

struct SessionParams {
  double velocity_scale;
  double latency;
  std::array<double, 2> noise_amplitude;
};

SessionParams session_params(const UserSignature& sig, double jitter, Rng& rng) {
  auto factor = [&] { return std::clamp(1.0 + jitter * rng.normal(), 0.5, 1.5); };
  SessionParams s{};
  s.velocity_scale = sig.velocity_scale * factor();
  s.latency = sig.saccade_latency * factor();
  for (int e = 0; e < 2; ++e) s.noise_amplitude[e] = sig.eyes[e].noise_amplitude * factor();
  return s;
}

double saccade_duration(const UserSignature& sig, double velocity_scale, double amplitude) {
  return (sig.duration_intercept + sig.duration_slope * amplitude) / velocity_scale;
}

// Conjugate eye command at the internal rate for the random-saccade task.
void simulate_random_saccade(const UserSignature& sig, const TaskSpec& task, const SessionParams& sp,
                             Rng& rng, std::size_t steps, std::vector<Eigen::Vector2d>& eye,
                             std::vector<Eigen::Vector2d>& target) {
  const double dt = 1.0 / kInternalRate;
  struct Jump {
    double time;
    Eigen::Vector2d position;
  };
  std::vector<Jump> jumps;
  const double end = static_cast<double>(steps) * dt;
  for (double t = rng.uniform(task.jump_interval_min, task.jump_interval_max); t < end;
       t += rng.uniform(task.jump_interval_min, task.jump_interval_max)) {
    jumps.push_back({t, {rng.uniform(-task.target_range, task.target_range),
                         rng.uniform(-task.target_range, task.target_range)}});
  }

  // Plan saccades: a primary one after the latency, then a corrective one.
  std::vector<Saccade> saccades;
  Eigen::Vector2d planned = Eigen::Vector2d::Zero();  // eye position after planned saccades
  double busy_until = 0.0;
  for (std::size_t j = 0; j < jumps.size(); ++j) {
    const double next = j + 1 < jumps.size() ? jumps[j + 1].time : end;
    const auto& goal = jumps[j].position;
    const double latency = std::max(0.08, sp.latency + 0.03 * rng.normal());
    double start = std::max(jumps[j].time + latency, busy_until);
    Eigen::Vector2d disp = sig.primary_gain * (goal - planned);
    if (disp.norm() > 0.05 && start < next) {
      Saccade s{start, saccade_duration(sig, sp.velocity_scale, disp.norm()), disp};
      saccades.push_back(s);
      planned += disp;
      busy_until = s.end();
    }
    const double corr_latency = std::max(0.05, task.corrective_latency * (1.0 + 0.2 * rng.normal()));
    start = busy_until + corr_latency;
    disp = goal - planned;
    if (disp.norm() > 0.3 && start < next) {
      Saccade s{start, saccade_duration(sig, sp.velocity_scale, disp.norm()), disp};
      saccades.push_back(s);
      planned += disp;
      busy_until = s.end();
    }
  }

  Eigen::Vector2d done = Eigen::Vector2d::Zero();
  std::size_t next_sacc = 0;
  std::size_t next_jump = 0;
  Eigen::Vector2d current_target = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    while (next_jump < jumps.size() && jumps[next_jump].time <= t) current_target = jumps[next_jump++].position;
    while (next_sacc < saccades.size() && saccades[next_sacc].end() <= t) done += saccades[next_sacc++].disp;
    Eigen::Vector2d pos = done;
    if (next_sacc < saccades.size()) pos += saccades[next_sacc].offset(t);
    eye[i] = pos;
    target[i] = current_target;
  }
}

// Predictive pursuit of a sinusoidal target with catch-up saccades.
void simulate_smooth_pursuit(const UserSignature& sig, const TaskSpec& task, const SessionParams& sp,
                             Rng& rng, std::size_t steps, std::vector<Eigen::Vector2d>& eye,
                             std::vector<Eigen::Vector2d>& target) {
  const double dt = 1.0 / kInternalRate;
  const double two_pi = 2.0 * std::numbers::pi;
  const double fx = task.pursuit_frequency * rng.uniform(0.9, 1.1);
  const double fy = 0.7 * fx;
  const double ax = task.pursuit_amplitude;
  const double ay = 0.5 * task.pursuit_amplitude;
  const double px = rng.uniform(0.0, two_pi);
  const double py = rng.uniform(0.0, two_pi);
  auto target_at = [&](double t) {
    return Eigen::Vector2d(ax * std::sin(two_pi * fx * t + px), ay * std::sin(two_pi * fy * t + py));
  };
  auto target_velocity = [&](double t) {
    return Eigen::Vector2d(ax * two_pi * fx * std::cos(two_pi * fx * t + px),
                           ay * two_pi * fy * std::cos(two_pi * fy * t + py));
  };

  const double onset = std::max(0.08, sp.latency + 0.03 * rng.normal());
  Eigen::Vector2d smooth = Eigen::Vector2d::Zero();
  Eigen::Vector2d done = Eigen::Vector2d::Zero();
  std::optional<Saccade> active;
  std::optional<double> pending;  // scheduled start of the next catch-up saccade
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    if (t >= onset) smooth += sig.pursuit_gain * target_velocity(t) * dt;
    if (active && t >= active->end()) {
      done += active->disp;
      active.reset();
    }
    Eigen::Vector2d pos = smooth + done + (active ? active->offset(t) : Eigen::Vector2d::Zero());
    const Eigen::Vector2d tgt = target_at(t);
    if (pending && t >= *pending) {
      const Eigen::Vector2d error = tgt - pos;
      const double d = saccade_duration(sig, sp.velocity_scale, error.norm());
      // Aim where the target will be, net of the pursuit's own progress.
      const Eigen::Vector2d disp = error + (1.0 - sig.pursuit_gain) * target_velocity(t) * d;
      active = Saccade{t, saccade_duration(sig, sp.velocity_scale, disp.norm()), disp};
      pending.reset();
      pos = smooth + done + active->offset(t);
    } else if (!active && !pending && (tgt - pos).norm() > task.catch_up_threshold) {
      pending = t + std::max(0.04, task.catch_up_latency * (1.0 + 0.2 * rng.normal()));
    }
    eye[i] = pos;
    target[i] = tgt;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void UserSignature::validate() const {
  require(!user_id.empty(), "user signature: empty user id");
  for (const auto& e : eyes) {
    require(e.kappa.norm() <= 10.0, "user signature: kappa magnitude above 10 deg");
    require(e.noise_amplitude >= 0.0, "user signature: negative noise amplitude");
    require(std::abs(e.gain.determinant()) > 1e-6, "user signature: singular gain");
  }
  require(pursuit_gain > 0.5 && pursuit_gain <= 1.0, "user signature: pursuit gain outside (0.5, 1]");
  require(velocity_scale > 0.0 && duration_intercept > 0.0 && duration_slope >= 0.0,
          "user signature: bad main-sequence parameters");
  require(accuracy_bias >= 0.0 && measurement_noise >= 0.0, "user signature: negative accuracy bias or noise");
  require(session_jitter >= 0.0 && session_jitter < 0.5, "user signature: session jitter in [0, 0.5)");
}

double UserSignature::saccade_duration(double amplitude) const {
  return gazeid::saccade_duration(*this, velocity_scale, amplitude);
}

double UserSignature::peak_velocity(double amplitude) const {
  return amplitude * min_jerk_velocity(0.5) / saccade_duration(amplitude);
}

Eigen::Vector2d UserSignature::bias_at(const Eigen::Vector2d& position) const {
  return accuracy_bias * (bias_direction + bias_slope * (position / 15.0));
}

void PopulationConfig::validate() const {
  require(kappa_azimuth_sd >= 0.0 && kappa_elevation_sd >= 0.0, "population: negative kappa sd");
  require(gain_diagonal_sd >= 0.0 && gain_offdiagonal_sd >= 0.0 && eye_saccade_gain_sd >= 0.0,
          "population: negative gain sd");
  require(velocity_scale_min > 0.0 && velocity_scale_min <= velocity_scale_max, "population: velocity scale range");
  require(duration_slope_min >= 0.0 && duration_slope_min <= duration_slope_max, "population: duration slope range");
  require(latency_min > 0.0 && latency_min <= latency_max, "population: latency range");
  require(primary_gain_min > 0.0 && primary_gain_min <= primary_gain_max && primary_gain_max <= 1.2,
          "population: primary gain range");
  require(pursuit_gain_min > 0.5 && pursuit_gain_min <= pursuit_gain_max && pursuit_gain_max <= 1.0,
          "population: pursuit gain range must lie in (0.5, 1]");
  require(noise_amplitude_min >= 0.0 && noise_amplitude_min <= noise_amplitude_max, "population: noise amplitude range");
  require(noise_exponent_min >= 0.0 && noise_exponent_min <= noise_exponent_max && noise_exponent_max < 2.0,
          "population: noise exponent range must lie in [0, 2)");
  require(accuracy_bias_min >= 0.0 && accuracy_bias_min <= accuracy_bias_max, "population: accuracy bias range");
  require(session_jitter >= 0.0 && session_jitter < 0.5, "population: session jitter in [0, 0.5)");
  require(accuracy_noise_fraction >= 0.0, "population: negative accuracy noise fraction");
}

void TaskSpec::validate() const {
  require(sample_rate > 0.0, "task: sample rate must be positive");
  require(duration >= 5.0, "task: duration must be at least 5 s");
  require(target_range > 0.0 && target_range <= 20.0, "task: target range outside (0, 20] deg");
  require(jump_interval_min > 0.0 && jump_interval_min <= jump_interval_max, "task: jump interval range");
  require(corrective_latency >= 0.0, "task: negative corrective latency");
  require(pursuit_amplitude > 0.0 && pursuit_amplitude <= 20.0, "task: pursuit amplitude outside (0, 20] deg");
  require(pursuit_frequency > 0.0 && pursuit_frequency <= 2.0, "task: pursuit frequency outside (0, 2] Hz");
  require(catch_up_threshold > 0.0 && catch_up_latency >= 0.0, "task: catch-up parameters");
}

std::size_t TaskSpec::samples() const {
  return static_cast<std::size_t>(std::llround(duration * sample_rate));
}

void SynthDatasetSpec::validate() const {
  require(n_users >= 2, "synth: n_users must be at least 2");
  require(random_saccade_repetitions >= 0 && smooth_pursuit_repetitions >= 0 &&
              random_saccade_repetitions + smooth_pursuit_repetitions > 0,
          "synth: need at least one recording per user");
  require(train_fraction >= 0.0 && test_fraction >= 0.0 && std::abs(train_fraction + test_fraction - 1.0) < 1e-9,
          "synth: split fractions must sum to 1");
  double prev = 0.0;
  for (double q : tier_quantiles) {
    require(q > prev && q < 1.0, "synth: tier quantiles must increase strictly within (0, 1)");
    prev = q;
  }
  require(random_saccade.kind == Task::random_saccade, "synth: random_saccade task kind");
  require(smooth_pursuit.kind == Task::smooth_pursuit, "synth: smooth_pursuit task kind");
  require(random_saccade.sample_rate == smooth_pursuit.sample_rate, "synth: tasks must share a sample rate");
  random_saccade.validate();
  smooth_pursuit.validate();
  population.validate();
}

namespace {

nlohmann::json task_json(const TaskSpec& t) {
  return {{"kind", to_string(t.kind)},
          {"duration", t.duration},
          {"sample_rate", t.sample_rate},
          {"target_range", t.target_range},
          {"jump_interval_min", t.jump_interval_min},
          {"jump_interval_max", t.jump_interval_max},
          {"corrective_latency", t.corrective_latency},
          {"pursuit_amplitude", t.pursuit_amplitude},
          {"pursuit_frequency", t.pursuit_frequency},
          {"catch_up_threshold", t.catch_up_threshold},
          {"catch_up_latency", t.catch_up_latency}};
}

void read_task(const nlohmann::json& j, TaskSpec& t) {
  if (j.contains("kind")) t.kind = task_from_string(j.at("kind").get<std::string>());
  read_field(j, "duration", t.duration);
  read_field(j, "sample_rate", t.sample_rate);
  read_field(j, "target_range", t.target_range);
  read_field(j, "jump_interval_min", t.jump_interval_min);
  read_field(j, "jump_interval_max", t.jump_interval_max);
  read_field(j, "corrective_latency", t.corrective_latency);
  read_field(j, "pursuit_amplitude", t.pursuit_amplitude);
  read_field(j, "pursuit_frequency", t.pursuit_frequency);
  read_field(j, "catch_up_threshold", t.catch_up_threshold);
  read_field(j, "catch_up_latency", t.catch_up_latency);
}

#define GAZEID_POPULATION_FIELDS(X)                                                            \
  X(kappa_azimuth_mean) X(kappa_azimuth_sd) X(kappa_elevation_mean) X(kappa_elevation_sd)      \
  X(gain_diagonal_sd) X(gain_offdiagonal_sd) X(eye_saccade_gain_sd) X(velocity_scale_min)      \
  X(velocity_scale_max) X(duration_slope_min) X(duration_slope_max) X(latency_min)             \
  X(latency_max) X(primary_gain_min) X(primary_gain_max) X(pursuit_gain_min)                   \
  X(pursuit_gain_max) X(noise_amplitude_min) X(noise_amplitude_max) X(noise_exponent_min)      \
  X(noise_exponent_max) X(accuracy_bias_min) X(accuracy_bias_max) X(session_jitter)            \
  X(accuracy_noise_fraction)

}  // namespace

nlohmann::json to_json(const SynthDatasetSpec& s) {
  nlohmann::json pop;
#define X(name) pop[#name] = s.population.name;
  GAZEID_POPULATION_FIELDS(X)
#undef X
  return {{"n_users", s.n_users},
          {"random_saccade_repetitions", s.random_saccade_repetitions},
          {"smooth_pursuit_repetitions", s.smooth_pursuit_repetitions},
          {"train_fraction", s.train_fraction},
          {"test_fraction", s.test_fraction},
          {"tier_quantiles", s.tier_quantiles},
          {"seed", s.seed},
          {"random_saccade", task_json(s.random_saccade)},
          {"smooth_pursuit", task_json(s.smooth_pursuit)},
          {"population", pop}};
}

SynthDatasetSpec synth_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  SynthDatasetSpec s;
  read_field(j, "n_users", s.n_users);
  read_field(j, "random_saccade_repetitions", s.random_saccade_repetitions);
  read_field(j, "smooth_pursuit_repetitions", s.smooth_pursuit_repetitions);
  read_field(j, "train_fraction", s.train_fraction);
  read_field(j, "test_fraction", s.test_fraction);
  read_field(j, "tier_quantiles", s.tier_quantiles);
  read_field(j, "seed", s.seed);
  if (j.contains("duration")) {
    double d = 0.0;
    read_field(j, "duration", d);
    s.random_saccade.duration = d;
    s.smooth_pursuit.duration = d;
  }
  if (j.contains("random_saccade")) read_task(j.at("random_saccade"), s.random_saccade);
  if (j.contains("smooth_pursuit")) read_task(j.at("smooth_pursuit"), s.smooth_pursuit);
  if (j.contains("population")) {
    const auto& p = j.at("population");
#define X(name) read_field(p, #name, s.population.name);
    GAZEID_POPULATION_FIELDS(X)
#undef X
  }
  s.validate();
  return s;
}

std::string synth_user_id(std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return "u" + digits;
}

UserSignature generate_user(const SynthDatasetSpec& spec, std::size_t index) {
  const PopulationConfig& p = spec.population;
  Rng rng(derive_seed(spec.seed, 0x5E7A, index));
  UserSignature s;
  s.user_id = synth_user_id(index);
  const double kappa_az = p.kappa_azimuth_mean + p.kappa_azimuth_sd * rng.normal();
  const double kappa_el = p.kappa_elevation_mean + p.kappa_elevation_sd * rng.normal();
  for (int e = 0; e < 2; ++e) {
    auto& eye = s.eyes[e];
    // Kappa is mirrored across eyes (nasal offset) with a small per-eye deviation.
    Eigen::Vector2d k((e == 0 ? -1.0 : 1.0) * kappa_az + 0.3 * rng.normal(), kappa_el + 0.3 * rng.normal());
    if (k.norm() > 9.5) k *= 9.5 / k.norm();
    eye.kappa = k;
    eye.gain << 1.0 + p.gain_diagonal_sd * rng.normal(), p.gain_offdiagonal_sd * rng.normal(),
        p.gain_offdiagonal_sd * rng.normal(), 1.0 + p.gain_diagonal_sd * rng.normal();
    eye.saccade_gain = 1.0 + p.eye_saccade_gain_sd * rng.normal();
    eye.noise_amplitude = rng.uniform(p.noise_amplitude_min, p.noise_amplitude_max);
    eye.noise_exponent = rng.uniform(p.noise_exponent_min, p.noise_exponent_max);
  }
  s.velocity_scale = rng.uniform(p.velocity_scale_min, p.velocity_scale_max);
  s.duration_slope = rng.uniform(p.duration_slope_min, p.duration_slope_max);
  s.saccade_latency = rng.uniform(p.latency_min, p.latency_max);
  s.primary_gain = rng.uniform(p.primary_gain_min, p.primary_gain_max);
  s.pursuit_gain = p.pursuit_gain_min == p.pursuit_gain_max
                       ? p.pursuit_gain_max
                       : std::max(std::nextafter(0.5, 1.0), rng.uniform(p.pursuit_gain_min, p.pursuit_gain_max));
  s.accuracy_bias = rng.uniform(p.accuracy_bias_min, p.accuracy_bias_max);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  s.bias_direction = {std::cos(angle), std::sin(angle)};
  s.bias_slope << 0.5 * rng.normal(), 0.5 * rng.normal(), 0.5 * rng.normal(), 0.5 * rng.normal();
  s.measurement_noise = p.accuracy_noise_fraction * s.accuracy_bias;
  s.session_jitter = p.session_jitter;
  return s;
}

double min_jerk(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double t3 = tau * tau * tau;
  return t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

double min_jerk_velocity(double tau) {
  if (tau <= 0.0 || tau >= 1.0) return 0.0;
  const double t2 = tau * tau;
  return 30.0 * t2 * (1.0 - 2.0 * tau + t2);
}

std::vector<double> colored_noise(std::size_t n, double amplitude, double exponent, Rng& rng) {
  std::vector<double> out(n, 0.0);
  if (n == 0 || amplitude == 0.0) return out;
  // (1 - B)^(-d) with d = exponent / 2 gives a 1/f^exponent spectrum.
  const double d = 0.5 * exponent;
  std::vector<double> h(kNoiseTaps);
  h[0] = 1.0;
  for (std::size_t k = 1; k < kNoiseTaps; ++k) {
    h[k] = h[k - 1] * (static_cast<double>(k) - 1.0 + d) / static_cast<double>(k);
  }
  const double norm = std::sqrt(std::inner_product(h.begin(), h.end(), h.begin(), 0.0));
  std::vector<double> white(n + kNoiseTaps - 1);
  for (auto& w : white) w = rng.normal();
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < kNoiseTaps; ++k) acc += h[k] * white[t + kNoiseTaps - 1 - k];
    out[t] = amplitude * acc / norm;
  }
  return out;
}

SynthRecording generate_recording(const UserSignature& sig, const TaskSpec& task, int repetition,
                                  std::uint64_t repetition_seed) {
  sig.validate();
  task.validate();
  Rng rng(repetition_seed);
  // Session jitter is drawn from a fixed sub-stream so it does not depend on
  // how many draws the task simulation consumed.
  Rng session_rng(derive_seed(repetition_seed, 0xA11));
  const SessionParams sp = session_params(sig, sig.session_jitter, session_rng);

  const std::size_t n = task.samples();
  const double duration = static_cast<double>(n) / task.sample_rate;
  const auto steps = static_cast<std::size_t>(std::ceil(duration * kInternalRate)) + 2;
  std::vector<Eigen::Vector2d> eye(steps);
  std::vector<Eigen::Vector2d> target(steps);
  if (task.kind == Task::random_saccade) {
    simulate_random_saccade(sig, task, sp, rng, steps, eye, target);
  } else {
    simulate_smooth_pursuit(sig, task, sp, rng, steps, eye, target);
  }

  SynthRecording out;
  GazeRecording& rec = out.recording;
  rec.user_id = sig.user_id;
  rec.task = {task.kind, repetition};
  rec.sample_rate = task.sample_rate;
  rec.timestamps.resize(n);
  out.target_x.resize(n);
  out.target_y.resize(n);
  std::vector<Eigen::Vector2d> command(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / task.sample_rate;
    rec.timestamps[k] = t;
    const double x = t * kInternalRate;
    const auto i = static_cast<std::size_t>(x);
    const double frac = x - static_cast<double>(i);
    command[k] = (1.0 - frac) * eye[i] + frac * eye[i + 1];
    out.target_x[k] = target[i].x();
    out.target_y[k] = target[i].y();
  }

  double accuracy_sum = 0.0;
  for (int e = 0; e < 2; ++e) {
    const EyeSignature& es = sig.eyes[e];
    Rng noise_rng(derive_seed(repetition_seed, 0xC0, static_cast<std::uint64_t>(e)));
    const auto noise_x = colored_noise(n, sp.noise_amplitude[e], es.noise_exponent, noise_rng);
    const auto noise_y = colored_noise(n, sp.noise_amplitude[e], es.noise_exponent, noise_rng);
    EyeTrace& tr = e == 0 ? rec.left : rec.right;
    tr.optical_x.resize(n);
    tr.optical_y.resize(n);
    tr.visual_x.resize(n);
    tr.visual_y.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::Vector2d truth =
          es.saccade_gain * command[k] + Eigen::Vector2d(noise_x[k], noise_y[k]);
      const Eigen::Vector2d error = sig.bias_at(truth) + sig.measurement_noise * Eigen::Vector2d(rng.normal(), rng.normal());
      accuracy_sum += error.norm();
      const Eigen::Vector2d optical = truth + error;
      const Eigen::Vector2d visual = es.gain * optical + es.kappa;
      tr.optical_x[k] = optical.x();
      tr.optical_y[k] = optical.y();
      tr.visual_x[k] = visual.x();
      tr.visual_y[k] = visual.y();
    }
  }
  out.accuracy_error = accuracy_sum / (2.0 * static_cast<double>(n));
  rec.validate();
  return out;
}

std::vector<std::string> quantile_tiers(std::span<const double> values, std::span<const UserId> ids,
                                        std::span<const double> quantiles) {
  if (values.size() != ids.size()) throw DataError("quantile tiers: values and ids differ in length");
  double prev = 0.0;
  for (double q : quantiles) {
    if (!(q > prev && q < 1.0)) throw ConfigError("tier quantiles must increase strictly within (0, 1)");
    prev = q;
  }
  const std::size_t n = values.size();
  const std::size_t k = quantiles.size() + 1;
  std::vector<std::string> names;
  if (k == 2) {
    names = {"low", "high"};
  } else if (k == 3) {
    names = {"low", "mid", "high"};
  } else {
    for (std::size_t i = 0; i < k; ++i) names.push_back("tier" + std::to_string(i + 1));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("quantile tiers: non-finite accuracy value");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] != values[b] ? values[a] < values[b] : ids[a] < ids[b];
  });
  std::vector<std::size_t> cuts;
  for (double q : quantiles) cuts.push_back(static_cast<std::size_t>(std::llround(q * static_cast<double>(n))));
  std::vector<std::string> out(n);
  for (std::size_t rank = 0; rank < n; ++rank) {
    std::size_t tier = 0;
    while (tier < cuts.size() && rank >= cuts[tier]) ++tier;
    out[order[rank]] = names[tier];
  }
  return out;
}

namespace {

std::string recording_path(const UserId& user, TaskLabel task) {
  return "recordings/" + user + "/" + to_string(task.kind) + "_" + std::to_string(task.repetition) + ".csv";
}

struct UserOutput {
  std::vector<SynthRecording> recordings;
  double accuracy = 0.0;
};

}  // namespace

Dataset generate_dataset(const SynthDatasetSpec& spec) {
  spec.validate();
  std::vector<UserOutput> users(spec.n_users);
  parallel_for(spec.n_users, [&](std::size_t u) {
    const UserSignature sig = generate_user(spec, u);
    auto& out = users[u];
    double acc = 0.0;
    auto emit = [&](const TaskSpec& task, int reps, std::uint64_t code) {
      for (int r = 1; r <= reps; ++r) {
        out.recordings.push_back(
            generate_recording(sig, task, r, derive_seed(spec.seed, u, code, static_cast<std::uint64_t>(r))));
        acc += out.recordings.back().accuracy_error;
      }
    };
    emit(spec.random_saccade, spec.random_saccade_repetitions, 1);
    emit(spec.smooth_pursuit, spec.smooth_pursuit_repetitions, 2);
    out.accuracy = acc / static_cast<double>(out.recordings.size());
  });

  // Split by a seeded permutation of user indices.
  std::vector<std::size_t> perm(spec.n_users);
  std::iota(perm.begin(), perm.end(), 0);
  Rng split_rng(derive_seed(spec.seed, 0x5B17));
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[split_rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(spec.n_users)));
  std::vector<std::string> split(spec.n_users, "test");
  for (std::size_t i = 0; i < n_train; ++i) split[perm[i]] = "train";

  std::vector<double> accuracy(spec.n_users);
  std::vector<UserId> ids(spec.n_users);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    accuracy[u] = users[u].accuracy;
    ids[u] = synth_user_id(u);
  }
  const auto tiers = quantile_tiers(accuracy, ids, spec.tier_quantiles);

  Manifest m;
  m.sample_rate = spec.random_saccade.sample_rate;
  m.generator = {{"name", "gazeid-synth"}, {"spec", to_json(spec)}};
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    ManifestUser mu;
    mu.id = ids[u];
    mu.split = split[u];
    mu.accuracy_error_deg = accuracy[u];
    mu.tier = tiers[u];
    for (const auto& r : users[u].recordings) {
      mu.recordings.push_back({recording_path(mu.id, r.recording.task), r.recording.task});
    }
    m.users.push_back(std::move(mu));
  }
  Dataset ds(std::move(m));
  for (auto& u : users) {
    for (auto& r : u.recordings) ds.add(std::move(r.recording));
  }
  return ds;
}

std::filesystem::path write_dataset(const SynthDatasetSpec& spec, const std::filesystem::path& dir) {
  Dataset ds = generate_dataset(spec);
  Manifest m = ds.manifest();
  m.root = dir;
  for (const auto& u : m.users) {
    for (const auto& r : u.recordings) {
      const GazeRecording* rec = ds.find(u.id, r.task);
      write_recording_csv(*rec, dir / r.path);
    }
  }
  const auto path = dir / "manifest.json";
  write_manifest(m, path);
  return path;
}

}  // namespace gazeid
