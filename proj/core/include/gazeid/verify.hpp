#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gazeid/model.hpp"

namespace gazeid {

struct ScoredPair {
  std::uint32_t enroll = 0;  // index into ScoreSet::enroll_users
  std::uint32_t verify = 0;  // index into ScoreSet::verify_users
  double score = 0.0;
};

/// Labeled cosine similarities. A pair is genuine iff the user ids match.
struct ScoreSet {
  std::vector<UserId> enroll_users;
  std::vector<UserId> verify_users;
  std::vector<ScoredPair> genuine;
  std::vector<ScoredPair> impostor;

  std::size_t n_gen() const { return genuine.size(); }
  std::size_t n_imp() const { return impostor.size(); }
  std::vector<double> genuine_scores() const;
  std::vector<double> impostor_scores() const;
};

/// Unit-normalizes every centroid. Throws DataError naming the user when a
/// centroid has zero norm or a user appears twice on one side.
Eigen::MatrixXd unit_columns(std::span<const Embedding> centroids, const char* side);

/// Cosine similarity of every (verify, enroll) pair: rows = verify, cols = enroll.
Eigen::MatrixXd similarity_matrix(std::span<const Embedding> enroll,
                                  std::span<const Embedding> verify);

/// Full cross product of enrollment and verification centroids.
ScoreSet all_pairs_scores(std::span<const Embedding> enroll, std::span<const Embedding> verify);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

/// Operating points in increasing threshold order; the first and last points
/// are the (-inf: FAR 1, FRR 0) and (+inf: FAR 0, FRR 1) sentinels.
struct RocCurve {
  std::vector<RocPoint> points;
};

struct RocResult {
  RocCurve curve;
  double eer = 0.0;  // fraction in [0, 1]
};

/// Acceptance rule: score >= threshold. Thresholds are the distinct scores.
RocResult roc_and_eer(std::span<const double> genuine, std::span<const double> impostor);
RocResult roc_and_eer(const ScoreSet& scores);

/// EER from an ROC curve: the first point with FRR >= FAR, linearly
/// interpolated against its predecessor when FRR != FAR there.
double eer_from_curve(const RocCurve& curve);

struct FrrAtFar {
  double far_target = 0.0;
  double frr = 0.0;           // fraction
  double achieved_far = 0.0;  // fraction
  double threshold = 0.0;
  bool granularity_limited = false;  // n_imp * far_target < 1
};

/// FRR at the smallest threshold whose empirical FAR <= far_target.
FrrAtFar frr_at_far(std::span<const double> genuine, std::span<const double> impostor,
                    double far_target);
FrrAtFar frr_at_far(const RocCurve& curve, std::size_t n_imp, double far_target);

/// |mu_g - mu_i| / sqrt((sd_g^2 + sd_i^2) / 2) with population SDs.
double d_prime(std::span<const double> genuine, std::span<const double> impostor);

struct VerificationReport {
  double eer_percent = 0.0;
  std::vector<FrrAtFar> frr_at_far;  // fractions; JSON export gives percent
  double d_prime = 0.0;
  std::size_t n_gen = 0;
  std::size_t n_imp = 0;
  nlohmann::json config;
};

VerificationReport verification_report(const ScoreSet& scores, std::span<const double> far_targets,
                                       const RocResult* roc = nullptr);

nlohmann::json to_json(const VerificationReport& report);
std::string scores_csv(const ScoreSet& scores);
std::string roc_csv(const RocCurve& curve);

}  // namespace gazeid
