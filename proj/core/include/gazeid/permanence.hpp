#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gazeid/model.hpp"

namespace gazeid {

/// consistency = ICC(3,1), absolute_agreement = ICC(2,1); both single-measure
/// from the two-way ANOVA decomposition.
enum class IccForm { consistency, absolute_agreement };

std::string to_string(IccForm form);
IccForm icc_form_from_string(const std::string& name);

/// Per-user pair (a_u, b_u) reliability with k = 2 sessions. Needs >= 3 users.
double icc(std::span<const double> session_a, std::span<const double> session_b,
           IccForm form = IccForm::consistency);

struct Moments {
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool degenerate = false;  // zero variance
};

/// Population (biased) sample skewness g1 and excess kurtosis g2.
Moments sample_moments(std::span<const double> values);

/// Percentile band of skewness and excess kurtosis over `draws` standard-normal
/// samples of size `sample_size`.
struct NormalityReference {
  std::size_t sample_size = 0;
  double skew_lo = 0.0;
  double skew_hi = 0.0;
  double kurt_lo = 0.0;
  double kurt_hi = 0.0;
};

struct NormalityConfig {
  std::size_t draws = 10000;
  double band_lo = 2.5;
  double band_hi = 97.5;
  std::uint64_t seed = 0;
};

NormalityReference normality_reference(std::size_t sample_size, const NormalityConfig& config);

struct NormalityResult {
  bool pass = false;
  Moments moments;
};

/// Passes iff skewness and excess kurtosis both fall inside the reference band.
NormalityResult normality_screen(std::span<const double> values, const NormalityReference& reference);
NormalityResult normality_screen(std::span<const double> values, const NormalityConfig& config = {});

/// Rows are users, columns are L2-normalized embedding features.
struct FeatureTable {
  std::vector<UserId> users;
  Eigen::MatrixXd session_a;
  Eigen::MatrixXd session_b;

  std::size_t features() const { return static_cast<std::size_t>(session_a.cols()); }
};

/// Pairs the two sessions by user (users present in both only, sorted by id)
/// and L2-normalizes each embedding.
FeatureTable make_feature_table(std::span<const Embedding> session_a,
                                std::span<const Embedding> session_b);

struct Intercorrelation {
  double median_abs = 0.0;
  double max_abs = 0.0;
  std::vector<std::size_t> excluded_features;  // zero variance
};

/// Absolute Pearson correlation of every feature pair over users, session A.
Intercorrelation intercorrelations(const FeatureTable& table);

struct Summary {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

Summary summarize(std::vector<double> values);

struct PermanenceConfig {
  IccForm form = IccForm::consistency;
  NormalityConfig normality;
};

struct FeatureRow {
  double icc = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool normal_pass = false;
  bool degenerate = false;
};

struct PermanenceReport {
  std::size_t n_users = 0;
  IccForm form = IccForm::consistency;
  std::vector<FeatureRow> features;
  Summary icc;
  Intercorrelation intercorrelation;
  std::size_t normal_pass_count = 0;
  Summary skewness;
  Summary excess_kurtosis;
};

PermanenceReport permanence_report(const FeatureTable& table, const PermanenceConfig& config = {});

nlohmann::json to_json(const PermanenceReport& report);
std::string permanence_features_csv(const PermanenceReport& report);

}  // namespace gazeid
