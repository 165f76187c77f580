#include "gazeid/permanence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "gazeid/identify.hpp"

namespace gazeid {

using Eigen::Index;

std::string to_string(IccForm form) {
  return form == IccForm::consistency ? "ICC(3,1)" : "ICC(2,1)";
}

IccForm icc_form_from_string(const std::string& name) {
  if (name == "consistency" || name == "ICC(3,1)") return IccForm::consistency;
  if (name == "absolute_agreement" || name == "ICC(2,1)") return IccForm::absolute_agreement;
  throw ConfigError("unknown ICC form '" + name + "'");
}

double icc(std::span<const double> a, std::span<const double> b, IccForm form) {
  const std::size_t n = a.size();
  if (b.size() != n) throw DataError("icc: sessions differ in length");
  if (n < 3) throw DataError("icc: need at least 3 users");
  constexpr double k = 2.0;
  const double dn = static_cast<double>(n);
  double sum = 0.0;
  double sum_sq = 0.0;
  double sum_a = 0.0;
  double sum_b = 0.0;
  double rows_sq = 0.0;  // sum of squared row totals
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw DataError("icc: non-finite value");
    sum_a += a[i];
    sum_b += b[i];
    sum_sq += a[i] * a[i] + b[i] * b[i];
    rows_sq += (a[i] + b[i]) * (a[i] + b[i]);
  }
  sum = sum_a + sum_b;
  const double correction = sum * sum / (dn * k);
  const double ss_total = sum_sq - correction;
  const double ss_rows = rows_sq / k - correction;
  const double ss_cols = (sum_a * sum_a + sum_b * sum_b) / dn - correction;
  const double ss_error = std::max(0.0, ss_total - ss_rows - ss_cols);
  const double bms = ss_rows / (dn - 1.0);
  const double jms = ss_cols / (k - 1.0);
  const double ems = ss_error / ((dn - 1.0) * (k - 1.0));
  double denom = bms + (k - 1.0) * ems;
  if (form == IccForm::absolute_agreement) denom += k * (jms - ems) / dn;
  if (!(std::abs(denom) > 0.0) || (bms <= 0.0 && ems <= 0.0)) {
    throw NumericalError("icc: undefined for zero between- and within-subject variance");
  }
  return std::clamp((bms - ems) / denom, -1.0, 1.0);
}

Moments sample_moments(std::span<const double> values) {
  Moments m;
  const double n = static_cast<double>(values.size());
  if (values.empty()) {
    m.degenerate = true;
    return m;
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (!(m2 > 1e-300)) {
    m.degenerate = true;
    m.skewness = std::numeric_limits<double>::quiet_NaN();
    m.excess_kurtosis = std::numeric_limits<double>::quiet_NaN();
    return m;
  }
  m.skewness = m3 / std::pow(m2, 1.5);
  m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  return m;
}

NormalityReference normality_reference(std::size_t sample_size, const NormalityConfig& config) {
  if (sample_size < 2 || config.draws == 0) throw ConfigError("normality reference: bad size");
  std::vector<double> skew(config.draws);
  std::vector<double> kurt(config.draws);
  parallel_for(config.draws, [&](std::size_t d) {
    Rng rng(derive_seed(config.seed, sample_size, d));
    std::vector<double> x(sample_size);
    for (auto& v : x) v = rng.normal();
    const Moments m = sample_moments(x);
    skew[d] = m.skewness;
    kurt[d] = m.excess_kurtosis;
  });
  NormalityReference ref;
  ref.sample_size = sample_size;
  ref.skew_lo = percentile_nearest_rank(skew, config.band_lo);
  ref.skew_hi = percentile_nearest_rank(skew, config.band_hi);
  ref.kurt_lo = percentile_nearest_rank(kurt, config.band_lo);
  ref.kurt_hi = percentile_nearest_rank(kurt, config.band_hi);
  return ref;
}

NormalityResult normality_screen(std::span<const double> values, const NormalityReference& ref) {
  NormalityResult r;
  r.moments = sample_moments(values);
  if (r.moments.degenerate) return r;
  r.pass = r.moments.skewness >= ref.skew_lo && r.moments.skewness <= ref.skew_hi &&
           r.moments.excess_kurtosis >= ref.kurt_lo && r.moments.excess_kurtosis <= ref.kurt_hi;
  return r;
}

NormalityResult normality_screen(std::span<const double> values, const NormalityConfig& config) {
  if (values.size() < 8) throw DataError("normality screen: need at least 8 observations");
  return normality_screen(values, normality_reference(values.size(), config));
}

FeatureTable make_feature_table(std::span<const Embedding> session_a,
                                std::span<const Embedding> session_b) {
  std::map<UserId, std::pair<const Embedding*, const Embedding*>> both;
  for (const auto& e : session_a) both[e.user].first = &e;
  for (const auto& e : session_b) both[e.user].second = &e;
  FeatureTable t;
  std::vector<std::pair<const Embedding*, const Embedding*>> rows;
  for (const auto& [user, pair] : both) {
    if (pair.first && pair.second) {
      t.users.push_back(user);
      rows.push_back(pair);
    }
  }
  if (rows.empty()) throw DataError("feature table: no user has both sessions");
  const Index dim = rows.front().first->values.size();
  t.session_a.resize(static_cast<Index>(rows.size()), dim);
  t.session_b.resize(static_cast<Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& ea = rows[i].first->values;
    const auto& eb = rows[i].second->values;
    if (ea.size() != dim || eb.size() != dim) throw DataError("feature table: dimension mismatch");
    const double na = ea.norm();
    const double nb = eb.norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw DataError("feature table: zero-norm embedding for " + t.users[i]);
    t.session_a.row(static_cast<Index>(i)) = (ea / na).transpose();
    t.session_b.row(static_cast<Index>(i)) = (eb / nb).transpose();
  }
  return t;
}

Summary summarize(std::vector<double> values) {
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  Summary s;
  s.min = values.front();
  s.max = values.back();
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

Intercorrelation intercorrelations(const FeatureTable& table) {
  const Index users = table.session_a.rows();
  if (users < 3) throw DataError("intercorrelations: need at least 3 users");
  const Eigen::MatrixXd centered = table.session_a.rowwise() - table.session_a.colwise().mean();
  const Eigen::VectorXd norms = centered.colwise().norm().transpose();
  Intercorrelation out;
  std::vector<Index> kept;
  for (Index f = 0; f < centered.cols(); ++f) {
    if (norms(f) > 1e-300) {
      kept.push_back(f);
    } else {
      out.excluded_features.push_back(static_cast<std::size_t>(f));
    }
  }
  std::vector<double> values;
  values.reserve(kept.size() * (kept.size() - (kept.empty() ? 0 : 1)) / 2);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t j = i + 1; j < kept.size(); ++j) {
      const double r = centered.col(kept[i]).dot(centered.col(kept[j])) / (norms(kept[i]) * norms(kept[j]));
      values.push_back(std::min(1.0, std::abs(r)));
    }
  }
  const Summary s = summarize(values);
  out.median_abs = s.median;
  out.max_abs = s.max;
  return out;
}

PermanenceReport permanence_report(const FeatureTable& table, const PermanenceConfig& config) {
  PermanenceReport rep;
  rep.n_users = table.users.size();
  rep.form = config.form;
  const std::size_t features = table.features();
  rep.features.resize(features);
  const NormalityReference ref = normality_reference(rep.n_users, config.normality);
  parallel_for(features, [&](std::size_t f) {
    const auto col = static_cast<Index>(f);
    const Eigen::VectorXd a = table.session_a.col(col);
    const Eigen::VectorXd b = table.session_b.col(col);
    FeatureRow& row = rep.features[f];
    row.icc = icc(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                  std::span<const double>(b.data(), static_cast<std::size_t>(b.size())), config.form);
    const NormalityResult nr =
        normality_screen(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())), ref);
    row.skewness = nr.moments.skewness;
    row.excess_kurtosis = nr.moments.excess_kurtosis;
    row.normal_pass = nr.pass;
    row.degenerate = nr.moments.degenerate;
  });
  std::vector<double> iccs;
  std::vector<double> skews;
  std::vector<double> kurts;
  for (const auto& r : rep.features) {
    iccs.push_back(r.icc);
    if (!r.degenerate) {
      skews.push_back(r.skewness);
      kurts.push_back(r.excess_kurtosis);
    }
    rep.normal_pass_count += r.normal_pass ? 1 : 0;
  }
  rep.icc = summarize(iccs);
  rep.skewness = summarize(skews);
  rep.excess_kurtosis = summarize(kurts);
  rep.intercorrelation = intercorrelations(table);
  return rep;
}

namespace {

nlohmann::json summary_json(const Summary& s) {
  return nlohmann::json{{"min", s.min}, {"median", s.median}, {"max", s.max}};
}

}  // namespace

nlohmann::json to_json(const PermanenceReport& r) {
  nlohmann::json j;
  j["n_users"] = r.n_users;
  j["n_features"] = r.features.size();
  j["icc_form"] = to_string(r.form);
  j["icc"] = summary_json(r.icc);
  j["intercorrelation"] = {{"median_abs", r.intercorrelation.median_abs},
                           {"max_abs", r.intercorrelation.max_abs},
                           {"excluded_features", r.intercorrelation.excluded_features}};
  j["normal_pass_count"] = r.normal_pass_count;
  j["skewness"] = summary_json(r.skewness);
  j["excess_kurtosis"] = summary_json(r.excess_kurtosis);
  return j;
}

std::string permanence_features_csv(const PermanenceReport& r) {
  std::string out = "feature,icc,skew,exkurt,normal_pass\n";
  for (std::size_t f = 0; f < r.features.size(); ++f) {
    const auto& row = r.features[f];
    out += std::to_string(f) + "," + format_double(row.icc) + "," + format_double(row.skewness) + "," +
           format_double(row.excess_kurtosis) + "," + (row.normal_pass ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace gazeid
