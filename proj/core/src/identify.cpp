#include "gazeid/identify.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "gazeid/verify.hpp"

namespace gazeid {

using Eigen::Index;

IdentificationReport rank1(std::span<const Embedding> gallery, std::span<const Embedding> probes) {
  if (gallery.empty()) throw DataError("rank1: empty gallery");
  if (probes.empty()) throw DataError("rank1: empty probe set");
  std::map<UserId, std::size_t> enrolled;
  for (std::size_t i = 0; i < gallery.size(); ++i) enrolled.emplace(gallery[i].user, i);
  std::vector<Embedding> kept;
  IdentificationReport rep;
  rep.n_gallery = gallery.size();
  for (const auto& p : probes) {
    if (enrolled.contains(p.user)) {
      kept.push_back(p);
    } else {
      ++rep.n_excluded_probes;
    }
  }
  if (kept.empty()) throw DataError("rank1: no probe belongs to an enrolled user");
  const Eigen::MatrixXd s = similarity_matrix(gallery, kept);
  for (std::size_t j = 0; j < kept.size(); ++j) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < gallery.size(); ++i) {
      const double v = s(static_cast<Index>(j), static_cast<Index>(i));
      if (v > best_score || (v == best_score && gallery[i].user < gallery[best].user)) {
        best = i;
        best_score = v;
      }
    }
    if (gallery[best].user == kept[j].user) ++rep.n_correct;
  }
  rep.n_probes = kept.size();
  rep.rank1_ir = 100.0 * static_cast<double>(rep.n_correct) / static_cast<double>(rep.n_probes);
  return rep;
}

double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw DataError("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

const SweepPoint* SweepResult::find(std::size_t size, const std::string& metric) const {
  for (const auto& p : points) {
    if (p.gallery_size == size && p.metric == metric) return &p;
  }
  return nullptr;
}

namespace {

std::string frr_metric_name(double target) { return "frr@" + format_double(100.0 * target) + "%"; }

}  // namespace

SweepResult gallery_sweep(std::span<const Embedding> enroll, std::span<const Embedding> verify,
                          const GallerySweepConfig& config) {
  if (config.samples == 0) throw ConfigError("gallery sweep: samples must be >= 1");
  std::map<UserId, std::pair<const Embedding*, const Embedding*>> both;
  for (const auto& e : enroll) both[e.user].first = &e;
  for (const auto& v : verify) both[v.user].second = &v;
  std::vector<Embedding> pool_e;
  std::vector<Embedding> pool_v;
  for (const auto& [user, pair] : both) {
    if (pair.first && pair.second) {
      pool_e.push_back(*pair.first);
      pool_v.push_back(*pair.second);
    }
  }
  for (std::size_t i = 1; i < config.sizes.size(); ++i) {
    if (config.sizes[i] <= config.sizes[i - 1]) throw ConfigError("gallery sweep: sizes must be strictly increasing");
  }
  for (auto n : config.sizes) {
    if (n < 2) throw ConfigError("gallery sweep: gallery size must be >= 2");
    if (n > pool_e.size()) {
      throw DataError("gallery sweep: size " + std::to_string(n) + " exceeds the " +
                      std::to_string(pool_e.size()) + " users with both recordings");
    }
  }
  // Rows = verify, cols = enroll; pool is sorted by user id so index order is
  // user-id order.
  const Eigen::MatrixXd sim = similarity_matrix(pool_e, pool_v);

  SweepResult result;
  result.sizes = config.sizes;
  std::vector<std::string> metrics = {"eer"};
  for (double t : config.far_targets) metrics.push_back(frr_metric_name(t));
  metrics.push_back("rank1_ir");

  for (std::size_t n : config.sizes) {
    std::vector<std::vector<double>> values(config.samples);
    parallel_for(config.samples, [&](std::size_t k) {
      Rng rng(derive_seed(config.seed, n, k));
      std::vector<std::size_t> idx(pool_e.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < n; ++i) {
        std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.below(idx.size() - i))]);
      }
      idx.resize(n);
      std::sort(idx.begin(), idx.end());
      std::vector<double> gen;
      std::vector<double> imp;
      gen.reserve(n);
      imp.reserve(n * (n - 1));
      std::size_t correct = 0;
      for (std::size_t a = 0; a < n; ++a) {
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < n; ++b) {
          const double s = sim(static_cast<Index>(idx[a]), static_cast<Index>(idx[b]));
          (a == b ? gen : imp).push_back(s);
          if (s > best_score) {  // strict: ties keep the smaller user id
            best = b;
            best_score = s;
          }
        }
        if (best == a) ++correct;
      }
      const RocResult roc = roc_and_eer(gen, imp);
      auto& row = values[k];
      row.push_back(100.0 * roc.eer);
      for (double t : config.far_targets) row.push_back(100.0 * frr_at_far(roc.curve, imp.size(), t).frr);
      row.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(n));
    });
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      SweepPoint p;
      p.gallery_size = n;
      p.metric = metrics[m];
      for (const auto& row : values) p.samples.push_back(row[m]);
      p.p5 = percentile_nearest_rank(p.samples, 5.0);
      p.p95 = percentile_nearest_rank(p.samples, 95.0);
      p.mid = 0.5 * (p.p5 + p.p95);
      result.points.push_back(std::move(p));
    }
  }
  return result;
}

std::string sweep_csv(const SweepResult& sweep) {
  std::string out = "N,metric,p5,p95,mid\n";
  for (const auto& p : sweep.points) {
    out += std::to_string(p.gallery_size) + "," + p.metric + "," + format_double(p.p5) + "," +
           format_double(p.p95) + "," + format_double(p.mid) + "\n";
  }
  return out;
}

std::string to_string(CurveFamily family) {
  switch (family) {
    case CurveFamily::sqrt:
      return "sqrt";
    case CurveFamily::power:
      return "power";
    case CurveFamily::log:
      return "log";
    case CurveFamily::linear:
      return "linear";
  }
  return "unknown";
}

CurveFamily curve_family_from_string(const std::string& name) {
  if (name == "sqrt") return CurveFamily::sqrt;
  if (name == "power") return CurveFamily::power;
  if (name == "log") return CurveFamily::log;
  if (name == "linear") return CurveFamily::linear;
  throw ConfigError("unknown curve family '" + name + "'");
}

double CurveFit::evaluate(double x) const {
  const double a = coefficients.at(0);
  const double b = coefficients.at(1);
  switch (family) {
    case CurveFamily::sqrt:
      return a * std::sqrt(x) + b;
    case CurveFamily::log:
      return a * std::log(x) + b;
    case CurveFamily::linear:
      return a * x + b;
    case CurveFamily::power:
      return a * std::pow(x, b) + coefficients.at(2);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

namespace {

constexpr double kRootSearchMax = 1e9;

// Bisection in log(x) for the first crossing of f from > 0 to <= 0 on [lo, hi].
std::optional<double> bisect_crossing(const std::function<double(double)>& f, double lo, double hi) {
  if (!(lo > 0.0) || !(f(lo) > 0.0) || !(f(hi) <= 0.0)) return std::nullopt;
  double a = std::log(lo);
  double b = std::log(hi);
  for (int i = 0; i < 200 && b - a > 1e-13; ++i) {
    const double m = 0.5 * (a + b);
    if (f(std::exp(m)) > 0.0) {
      a = m;
    } else {
      b = m;
    }
  }
  return std::exp(b);
}

double sse_of(const CurveFit& fit, std::span<const std::pair<double, double>> obs) {
  double s = 0.0;
  for (const auto& [x, y] : obs) {
    const double r = y - fit.evaluate(x);
    s += r * r;
  }
  return s;
}

// Linear least squares y ~ a * g(x) + b via column-pivoting QR.
std::pair<double, double> linear_fit(std::span<const std::pair<double, double>> obs,
                                     const std::function<double(double)>& g) {
  const auto n = static_cast<Index>(obs.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    design(i, 0) = g(obs[static_cast<std::size_t>(i)].first);
    design(i, 1) = 1.0;
    y(i) = obs[static_cast<std::size_t>(i)].second;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-12);
  if (qr.rank() < 2 || !design.allFinite()) throw NumericalError("curve fit: degenerate design matrix");
  const Eigen::VectorXd coef = qr.solve(y);
  return {coef(0), coef(1)};
}

void fit_power(std::span<const std::pair<double, double>> obs, CurveFit& best) {
  double best_sse = std::numeric_limits<double>::infinity();
  const auto n = static_cast<Index>(obs.size());
  for (double b0 : {-1.0, -0.5, -0.25, 0.25, 0.5, 1.0}) {
    CurveFit cand;
    cand.family = CurveFamily::power;
    try {
      const auto [a, c] = linear_fit(obs, [b0](double x) { return std::pow(x, b0); });
      cand.coefficients = {a, b0, c};
    } catch (const NumericalError&) {
      continue;
    }
    double sse = sse_of(cand, obs);
    double mu = 1e-3;
    for (int iter = 0; iter < 500; ++iter) {
      const double a = cand.coefficients[0];
      const double b = cand.coefficients[1];
      Eigen::MatrixXd jac(n, 3);
      Eigen::VectorXd r(n);
      for (Index i = 0; i < n; ++i) {
        const auto [x, y] = obs[static_cast<std::size_t>(i)];
        const double xb = std::pow(x, b);
        jac(i, 0) = xb;
        jac(i, 1) = a * xb * std::log(x);
        jac(i, 2) = 1.0;
        r(i) = y - cand.evaluate(x);
      }
      const Eigen::MatrixXd jtj = jac.transpose() * jac;
      const Eigen::VectorXd jtr = jac.transpose() * r;
      bool improved = false;
      for (int attempt = 0; attempt < 30 && !improved; ++attempt) {
        Eigen::MatrixXd damped = jtj;
        damped.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
        const Eigen::VectorXd step = damped.ldlt().solve(jtr);
        CurveFit trial = cand;
        for (int k = 0; k < 3; ++k) trial.coefficients[static_cast<std::size_t>(k)] += step(k);
        const double trial_sse = sse_of(trial, obs);
        if (std::isfinite(trial_sse) && trial_sse < sse) {
          const double gain = sse - trial_sse;
          cand = trial;
          sse = trial_sse;
          mu = std::max(mu / 3.0, 1e-12);
          improved = true;
          if (gain <= 1e-15 * (1.0 + sse)) iter = 500;
        } else {
          mu *= 4.0;
        }
      }
      if (!improved) break;
    }
    if (sse < best_sse) {
      best_sse = sse;
      best = cand;
    }
  }
  if (!std::isfinite(best_sse)) throw NumericalError("curve fit: power family did not converge");
}

}  // namespace

CurveFit fit_scaling_curve(std::span<const std::pair<double, double>> observations,
                           CurveFamily family) {
  const std::size_t params = family == CurveFamily::power ? 3 : 2;
  if (observations.size() < params + 1) {
    throw DataError("curve fit: need at least " + std::to_string(params + 1) + " observations");
  }
  double x_min = std::numeric_limits<double>::infinity();
  double x_max = 0.0;
  for (const auto& [x, y] : observations) {
    if (!(x > 0.0) || !std::isfinite(y)) throw DataError("curve fit: observations need x > 0 and finite y");
    x_min = std::min(x_min, x);
    x_max = std::max(x_max, x);
  }

  CurveFit fit;
  fit.family = family;
  switch (family) {
    case CurveFamily::sqrt: {
      const auto [a, b] = linear_fit(observations, [](double x) { return std::sqrt(x); });
      fit.coefficients = {a, b};
      if (a < 0.0 && b > 0.0) fit.root = (b / a) * (b / a);
      break;
    }
    case CurveFamily::log: {
      const auto [a, b] = linear_fit(observations, [](double x) { return std::log(x); });
      fit.coefficients = {a, b};
      if (a < 0.0) fit.root = std::exp(-b / a);
      break;
    }
    case CurveFamily::linear: {
      const auto [a, b] = linear_fit(observations, [](double x) { return x; });
      fit.coefficients = {a, b};
      if (a < 0.0 && b > 0.0) fit.root = -b / a;
      break;
    }
    case CurveFamily::power: {
      fit_power(observations, fit);
      fit.root = bisect_crossing([&](double x) { return fit.evaluate(x); }, x_max, kRootSearchMax);
      break;
    }
  }
  if (fit.root && !(*fit.root > x_min)) fit.root.reset();

  double mean = 0.0;
  for (const auto& o : observations) mean += o.second;
  mean /= static_cast<double>(observations.size());
  double sst = 0.0;
  for (const auto& o : observations) sst += (o.second - mean) * (o.second - mean);
  const double sse = sse_of(fit, observations);
  fit.r2 = sst > 0.0 ? 1.0 - sse / sst : (sse <= 1e-24 ? 1.0 : 0.0);
  const double n = static_cast<double>(observations.size());
  const double p = static_cast<double>(params - 1);
  fit.r2_adj = 1.0 - (1.0 - fit.r2) * (n - 1.0) / (n - p - 1.0);
  fit.chance_crossing = bisect_crossing(
      [&](double x) { return fit.evaluate(x) - 100.0 / x; }, x_max, kRootSearchMax);
  return fit;
}

nlohmann::json to_json(const CurveFit& fit) {
  nlohmann::json j;
  j["family"] = to_string(fit.family);
  j["coefficients"] = fit.coefficients;
  j["r2"] = fit.r2;
  j["r2_adj"] = fit.r2_adj;
  j["root"] = fit.root ? nlohmann::json(*fit.root) : nlohmann::json(nullptr);
  j["chance_crossing"] = fit.chance_crossing ? nlohmann::json(*fit.chance_crossing) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const IdentificationReport& r) {
  return nlohmann::json{{"rank1_ir_percent", r.rank1_ir},
                        {"n_probes", r.n_probes},
                        {"n_gallery", r.n_gallery},
                        {"n_correct", r.n_correct},
                        {"n_excluded_probes", r.n_excluded_probes}};
}

}  // namespace gazeid
