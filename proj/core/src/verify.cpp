#include "gazeid/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

namespace gazeid {

using Eigen::Index;

std::vector<double> ScoreSet::genuine_scores() const {
  std::vector<double> out(genuine.size());
  std::transform(genuine.begin(), genuine.end(), out.begin(), [](const ScoredPair& p) { return p.score; });
  return out;
}

std::vector<double> ScoreSet::impostor_scores() const {
  std::vector<double> out(impostor.size());
  std::transform(impostor.begin(), impostor.end(), out.begin(), [](const ScoredPair& p) { return p.score; });
  return out;
}

Eigen::MatrixXd unit_columns(std::span<const Embedding> centroids, const char* side) {
  if (centroids.empty()) throw DataError(std::string(side) + " set is empty");
  const Index dim = centroids.front().values.size();
  Eigen::MatrixXd out(dim, static_cast<Index>(centroids.size()));
  std::set<UserId> seen;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    const auto& c = centroids[i];
    if (!seen.insert(c.user).second) {
      throw DataError(std::string(side) + " set has more than one centroid for user " + c.user);
    }
    if (c.values.size() != dim) throw DataError("centroid dimension mismatch for user " + c.user);
    const double norm = c.values.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DataError(std::string(side) + " centroid of user " + c.user + " has zero norm");
    }
    out.col(static_cast<Index>(i)) = c.values / norm;
  }
  return out;
}

Eigen::MatrixXd similarity_matrix(std::span<const Embedding> enroll,
                                  std::span<const Embedding> verify) {
  const Eigen::MatrixXd e = unit_columns(enroll, "enrollment");
  const Eigen::MatrixXd v = unit_columns(verify, "verification");
  if (e.rows() != v.rows()) throw DataError("enrollment and verification dimensions differ");
  Eigen::MatrixXd s(v.cols(), e.cols());
  // Row blocks of the verify side, one per task.
  constexpr Index kBlock = 256;
  const auto blocks = static_cast<std::size_t>((v.cols() + kBlock - 1) / kBlock);
  parallel_for(blocks, [&](std::size_t b) {
    const Index begin = static_cast<Index>(b) * kBlock;
    const Index len = std::min(kBlock, v.cols() - begin);
    s.middleRows(begin, len).noalias() = v.middleCols(begin, len).transpose() * e;
  });
  return s.cwiseMax(-1.0).cwiseMin(1.0);
}

ScoreSet all_pairs_scores(std::span<const Embedding> enroll, std::span<const Embedding> verify) {
  const Eigen::MatrixXd s = similarity_matrix(enroll, verify);
  ScoreSet out;
  out.enroll_users.reserve(enroll.size());
  out.verify_users.reserve(verify.size());
  for (const auto& e : enroll) out.enroll_users.push_back(e.user);
  for (const auto& v : verify) out.verify_users.push_back(v.user);

  std::unordered_map<UserId, Index> enrolled;
  for (std::size_t i = 0; i < enroll.size(); ++i) enrolled.emplace(enroll[i].user, static_cast<Index>(i));
  std::vector<Index> match(verify.size(), -1);
  for (std::size_t j = 0; j < verify.size(); ++j) {
    if (auto it = enrolled.find(verify[j].user); it != enrolled.end()) match[j] = it->second;
  }
  std::size_t n_gen = 0;
  for (auto m : match) n_gen += m >= 0 ? 1 : 0;
  out.genuine.reserve(n_gen);
  out.impostor.reserve(enroll.size() * verify.size() - n_gen);
  for (std::size_t j = 0; j < verify.size(); ++j) {
    for (std::size_t i = 0; i < enroll.size(); ++i) {
      const ScoredPair p{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                         s(static_cast<Index>(j), static_cast<Index>(i))};
      if (match[j] == static_cast<Index>(i)) {
        out.genuine.push_back(p);
      } else {
        out.impostor.push_back(p);
      }
    }
  }
  return out;
}

double eer_from_curve(const RocCurve& curve) {
  const auto& pts = curve.points;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    const double diff = pts[j].far - pts[j].frr;
    if (diff > 0.0) continue;
    if (diff == 0.0 || j == 0) return pts[j].far;
    const double d0 = pts[j - 1].far - pts[j - 1].frr;
    const double s = d0 / (d0 - diff);
    return pts[j - 1].far + s * (pts[j].far - pts[j - 1].far);
  }
  return pts.empty() ? 0.5 : pts.back().far;
}

RocResult roc_and_eer(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) {
    throw DataError("roc: need at least one genuine and one impostor score");
  }
  std::vector<double> gen(genuine.begin(), genuine.end());
  std::vector<double> imp(impostor.begin(), impostor.end());
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  const double n_gen = static_cast<double>(gen.size());
  const double n_imp = static_cast<double>(imp.size());

  RocResult r;
  auto& pts = r.curve.points;
  pts.reserve(gen.size() + imp.size() + 2);
  pts.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
  std::size_t gi = 0;  // genuine scores < threshold
  std::size_t ii = 0;  // impostor scores < threshold
  while (gi < gen.size() || ii < imp.size()) {
    const double t = ii == imp.size() ? gen[gi]
                     : gi == gen.size() ? imp[ii]
                                        : std::min(gen[gi], imp[ii]);
    pts.push_back({t, static_cast<double>(imp.size() - ii) / n_imp, static_cast<double>(gi) / n_gen});
    while (gi < gen.size() && gen[gi] == t) ++gi;
    while (ii < imp.size() && imp[ii] == t) ++ii;
  }
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  r.eer = eer_from_curve(r.curve);
  return r;
}

RocResult roc_and_eer(const ScoreSet& scores) {
  return roc_and_eer(scores.genuine_scores(), scores.impostor_scores());
}

FrrAtFar frr_at_far(const RocCurve& curve, std::size_t n_imp, double far_target) {
  if (n_imp == 0) throw DataError("frr_at_far: no impostor scores");
  FrrAtFar out;
  out.far_target = far_target;
  out.granularity_limited = static_cast<double>(n_imp) * far_target < 1.0;
  for (const auto& p : curve.points) {
    if (p.far <= far_target) {
      out.frr = p.frr;
      out.achieved_far = p.far;
      out.threshold = p.threshold;
      return out;
    }
  }
  const auto& last = curve.points.back();
  out.frr = last.frr;
  out.achieved_far = last.far;
  out.threshold = last.threshold;
  return out;
}

FrrAtFar frr_at_far(std::span<const double> genuine, std::span<const double> impostor,
                    double far_target) {
  return frr_at_far(roc_and_eer(genuine, impostor).curve, impostor.size(), far_target);
}

double d_prime(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.size() < 2 || impostor.size() < 2) {
    throw DataError("d_prime: need at least two genuine and two impostor scores");
  }
  auto moments = [](std::span<const double> x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    return std::pair{mean, var / static_cast<double>(x.size())};
  };
  const auto [mg, vg] = moments(genuine);
  const auto [mi, vi] = moments(impostor);
  if (vg == 0.0 && vi == 0.0) throw NumericalError("d_prime: both score distributions have zero spread");
  return std::abs(mg - mi) / std::sqrt(0.5 * (vg + vi));
}

VerificationReport verification_report(const ScoreSet& scores, std::span<const double> far_targets,
                                       const RocResult* roc) {
  RocResult local;
  if (!roc) {
    local = roc_and_eer(scores);
    roc = &local;
  }
  VerificationReport rep;
  rep.n_gen = scores.n_gen();
  rep.n_imp = scores.n_imp();
  rep.eer_percent = 100.0 * roc->eer;
  for (double t : far_targets) rep.frr_at_far.push_back(frr_at_far(roc->curve, rep.n_imp, t));
  const auto gen = scores.genuine_scores();
  const auto imp = scores.impostor_scores();
  if (gen.size() >= 2 && imp.size() >= 2) {
    rep.d_prime = d_prime(gen, imp);
  }
  return rep;
}

nlohmann::json to_json(const VerificationReport& r) {
  nlohmann::json j;
  j["eer_percent"] = r.eer_percent;
  nlohmann::json frr = nlohmann::json::array();
  for (const auto& f : r.frr_at_far) {
    frr.push_back({{"far_target_percent", 100.0 * f.far_target},
                   {"frr_percent", 100.0 * f.frr},
                   {"achieved_far_percent", 100.0 * f.achieved_far},
                   {"threshold", std::isfinite(f.threshold) ? nlohmann::json(f.threshold)
                                                            : nlohmann::json(format_double(f.threshold))},
                   {"granularity_limited", f.granularity_limited}});
  }
  j["frr_at_far"] = frr;
  j["d_prime"] = r.d_prime;
  j["n_gen"] = r.n_gen;
  j["n_imp"] = r.n_imp;
  if (!r.config.is_null()) j["config"] = r.config;
  return j;
}

std::string scores_csv(const ScoreSet& scores) {
  struct Row {
    std::uint32_t e, v;
    double s;
    bool genuine;
  };
  std::vector<Row> rows;
  rows.reserve(scores.n_gen() + scores.n_imp());
  for (const auto& p : scores.genuine) rows.push_back({p.enroll, p.verify, p.score, true});
  for (const auto& p : scores.impostor) rows.push_back({p.enroll, p.verify, p.score, false});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.e != b.e ? a.e < b.e : a.v < b.v;
  });
  std::string out = "enroll_user,verify_user,score,label\n";
  out.reserve(rows.size() * 40 + out.size());
  for (const auto& r : rows) {
    out += scores.enroll_users[r.e];
    out += ',';
    out += scores.verify_users[r.v];
    out += ',';
    out += format_double(r.s);
    out += r.genuine ? ",genuine\n" : ",impostor\n";
  }
  return out;
}

std::string roc_csv(const RocCurve& curve) {
  std::string out = "threshold,far,frr\n";
  for (const auto& p : curve.points) {
    out += format_double(p.threshold);
    out += ',';
    out += format_double(p.far);
    out += ',';
    out += format_double(p.frr);
    out += '\n';
  }
  return out;
}

}  // namespace gazeid
