#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gazeid/model.hpp"

namespace gazeid {

struct IdentificationReport {
  double rank1_ir = 0.0;  // percent
  std::size_t n_probes = 0;
  std::size_t n_gallery = 0;
  std::size_t n_excluded_probes = 0;  // probes whose user is not enrolled
  std::size_t n_correct = 0;
};

/// Closed-set Rank-1 identification. Probes whose user is absent from the
/// gallery are excluded. Each probe goes to the gallery entry of highest cosine
/// similarity; ties go to the smallest user id.
IdentificationReport rank1(std::span<const Embedding> gallery, std::span<const Embedding> probes);

/// Nearest-rank percentile (p in [0, 100]) of an unsorted sample.
double percentile_nearest_rank(std::vector<double> values, double p);

struct SweepPoint {
  std::size_t gallery_size = 0;
  std::string metric;
  double p5 = 0.0;
  double p95 = 0.0;
  double mid = 0.0;
  std::vector<double> samples;  // raw per-subset values, subset order
};

struct SweepResult {
  std::vector<std::size_t> sizes;
  std::vector<SweepPoint> points;  // size-major, metrics in fixed order

  const SweepPoint* find(std::size_t size, const std::string& metric) const;
};

struct GallerySweepConfig {
  std::vector<std::size_t> sizes;
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  std::vector<double> far_targets{0.00002};
};

/// For each gallery size N, draws `samples` subsets of N users (without
/// replacement within a subset) from users present on both sides, then
/// reports EER, FRR@FAR and Rank-1 IR percentiles. Subset k of size N uses an
/// RNG stream derived from (seed, N, k).
SweepResult gallery_sweep(std::span<const Embedding> enroll, std::span<const Embedding> verify,
                          const GallerySweepConfig& config);

std::string sweep_csv(const SweepResult& sweep);

enum class CurveFamily { sqrt, power, log, linear };

std::string to_string(CurveFamily family);
CurveFamily curve_family_from_string(const std::string& name);

struct CurveFit {
  CurveFamily family = CurveFamily::sqrt;
  std::vector<double> coefficients;  // sqrt/log/linear: (a, b); power: (a, b, c)
  double r2 = 0.0;
  double r2_adj = 0.0;
  std::optional<double> root;            // fitted value reaches 0
  std::optional<double> chance_crossing;  // fitted IR (%) reaches 100 / x

  double evaluate(double x) const;
};

/// Least-squares fit of an identification-rate scaling curve. sqrt, log and
/// linear families are solved in closed form on the transformed abscissa; the
/// power family a*x^b + c uses damped Gauss-Newton from several starting
/// exponents.
CurveFit fit_scaling_curve(std::span<const std::pair<double, double>> observations,
                           CurveFamily family);

nlohmann::json to_json(const CurveFit& fit);
nlohmann::json to_json(const IdentificationReport& report);

}  // namespace gazeid
