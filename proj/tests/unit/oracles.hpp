#pragma once

// Slow reference implementations. Each one evaluates its definition directly
// and shares no code with the library beyond public data types.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gazeid/model.hpp"
#include "gazeid/training.hpp"

namespace oracle {

// Fits a polynomial to each mirror-padded window by QR and differentiates it
// at the center.
inline std::vector<double> savgol(const std::vector<double>& x, double fs, int window, int order) {
  const long n = static_cast<long>(x.size());
  const int half = window / 2;
  auto at = [&](long i) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return x[static_cast<std::size_t>(i)];
  };
  std::vector<double> out(x.size());
  for (long t = 0; t < n; ++t) {
    Eigen::MatrixXd a(window, order + 1);
    Eigen::VectorXd y(window);
    for (int j = 0; j < window; ++j) {
      const double u = j - half;
      for (int k = 0; k <= order; ++k) a(j, k) = std::pow(u, k);
      y(j) = at(t + j - half);
    }
    const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
    out[static_cast<std::size_t>(t)] = coef(1) * fs;
  }
  return out;
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

inline MeanSd two_pass(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  const double mean = s / static_cast<double>(v.size());
  double q = 0.0;
  for (double x : v) q += (x - mean) * (x - mean);
  return {mean, std::sqrt(q / static_cast<double>(v.size()))};
}

// Dense network forward with explicit loops. `mean`/`var` per BN layer are the
// statistics to normalize with (running stats for eval mode).
inline Eigen::VectorXd network_forward(const gazeid::NetworkParams& p, const Eigen::MatrixXd& x,
                                       const std::vector<std::vector<double>>& mean,
                                       const std::vector<std::vector<double>>& var) {
  const auto& cfg = p.config;
  const int steps = cfg.time_steps;
  const int kk = cfg.kernel_size;
  std::vector<std::vector<double>> feat;
  for (int c = 0; c < x.rows(); ++c) {
    feat.emplace_back(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) feat.back()[static_cast<std::size_t>(t)] = x(c, t);
  }
  auto bn_relu = [&](int j, int rows) {
    std::vector<std::vector<double>> z(static_cast<std::size_t>(rows),
                                       std::vector<double>(static_cast<std::size_t>(steps)));
    for (int c = 0; c < rows; ++c) {
      const double m = mean[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
      const double s = std::sqrt(var[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] + cfg.bn_epsilon);
      for (int t = 0; t < steps; ++t) {
        const double v = p.norm_scale(j)(c) * (feat[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)] - m) / s +
                         p.norm_shift(j)(c);
        z[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)] = v > 0.0 ? v : 0.0;
      }
    }
    return z;
  };
  for (int layer = 0; layer < cfg.num_conv_layers; ++layer) {
    const int in = cfg.layer_input_channels(layer);
    const int d = cfg.dilations[static_cast<std::size_t>(layer)];
    const auto z = layer == 0 ? feat : bn_relu(layer - 1, in);
    for (int o = 0; o < cfg.growth; ++o) {
      std::vector<double> y(static_cast<std::size_t>(steps));
      for (int t = 0; t < steps; ++t) {
        double acc = p.conv_bias(layer)(o);
        for (int k = 0; k < kk; ++k) {
          const int src = t + (k - (kk - 1) / 2) * d;
          if (src < 0 || src >= steps) continue;
          for (int i = 0; i < in; ++i) {
            acc += p.conv_weight(layer, k)(o, i) * z[static_cast<std::size_t>(i)][static_cast<std::size_t>(src)];
          }
        }
        y[static_cast<std::size_t>(t)] = acc;
      }
      feat.push_back(std::move(y));
    }
  }
  const auto z = bn_relu(cfg.num_conv_layers - 1, cfg.pooled_dim());
  std::vector<double> pooled(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) {
    double s = 0.0;
    for (double v : z[c]) s += v;
    pooled[c] = s / steps;
  }
  Eigen::VectorXd e(cfg.embedding_dim);
  for (int r = 0; r < cfg.embedding_dim; ++r) {
    double acc = p.fc_bias()(r);
    for (std::size_t c = 0; c < pooled.size(); ++c) acc += p.fc_weight()(r, static_cast<long>(c)) * pooled[c];
    e(r) = acc;
  }
  return e;
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (long i = 0; i < a.size(); ++i) {
    ab += a(i) * b(i);
    aa += a(i) * a(i);
    bb += b(i) * b(i);
  }
  return ab / std::sqrt(aa * bb);
}

struct Mined {
  std::vector<std::set<std::size_t>> pos;
  std::vector<std::set<std::size_t>> neg;
};

inline Mined mine(const Eigen::MatrixXd& s, const std::vector<std::size_t>& labels, double eps) {
  const std::size_t m = labels.size();
  Mined r{std::vector<std::set<std::size_t>>(m), std::vector<std::set<std::size_t>>(m)};
  for (std::size_t i = 0; i < m; ++i) {
    double max_neg = -std::numeric_limits<double>::infinity();
    double min_pos = std::numeric_limits<double>::infinity();
    bool any_pos = false, any_neg = false;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == i) continue;
      const double v = s(static_cast<long>(i), static_cast<long>(k));
      if (labels[k] == labels[i]) {
        any_pos = true;
        min_pos = std::min(min_pos, v);
      } else {
        any_neg = true;
        max_neg = std::max(max_neg, v);
      }
    }
    if (!any_pos || !any_neg) continue;
    for (std::size_t k = 0; k < m; ++k) {
      if (k == i) continue;
      const double v = s(static_cast<long>(i), static_cast<long>(k));
      if (labels[k] == labels[i] && v < max_neg + eps) r.pos[i].insert(k);
      if (labels[k] != labels[i] && v > min_pos - eps) r.neg[i].insert(k);
    }
  }
  return r;
}

inline double ms_loss(const Eigen::MatrixXd& s, const Mined& mined, double alpha, double beta,
                      double lambda) {
  const std::size_t m = mined.pos.size();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double sp = 0.0;
    for (std::size_t k : mined.pos[i]) sp += std::exp(-alpha * (s(static_cast<long>(i), static_cast<long>(k)) - lambda));
    double sn = 0.0;
    for (std::size_t k : mined.neg[i]) sn += std::exp(beta * (s(static_cast<long>(i), static_cast<long>(k)) - lambda));
    total += std::log(1.0 + sp) / alpha + std::log(1.0 + sn) / beta;
  }
  return total / static_cast<double>(m);
}

// Exhaustive sweep: every distinct score as a threshold, FAR/FRR counted from
// scratch at each one, EER at the first crossing.
struct Sweep {
  std::vector<double> thresholds;
  std::vector<double> far;
  std::vector<double> frr;
};

inline Sweep sweep(const std::vector<double>& gen, const std::vector<double>& imp) {
  std::set<double> th(gen.begin(), gen.end());
  th.insert(imp.begin(), imp.end());
  Sweep s;
  s.thresholds.push_back(-std::numeric_limits<double>::infinity());
  s.far.push_back(1.0);
  s.frr.push_back(0.0);
  for (double t : th) {
    std::size_t fa = 0, fr = 0;
    for (double v : imp) fa += v >= t;
    for (double v : gen) fr += v < t;
    s.thresholds.push_back(t);
    s.far.push_back(static_cast<double>(fa) / static_cast<double>(imp.size()));
    s.frr.push_back(static_cast<double>(fr) / static_cast<double>(gen.size()));
  }
  s.thresholds.push_back(std::numeric_limits<double>::infinity());
  s.far.push_back(0.0);
  s.frr.push_back(1.0);
  return s;
}

inline double eer(const std::vector<double>& gen, const std::vector<double>& imp) {
  const Sweep s = sweep(gen, imp);
  for (std::size_t j = 0; j < s.far.size(); ++j) {
    if (s.frr[j] < s.far[j]) continue;
    if (s.frr[j] == s.far[j] || j == 0) return s.far[j];
    // FAR - FRR changes sign between j-1 and j; intersect the two segments.
    const double x0 = s.far[j - 1], y0 = s.frr[j - 1];
    const double x1 = s.far[j], y1 = s.frr[j];
    const double t = (x0 - y0) / ((x0 - y0) - (x1 - y1));
    return x0 + t * (x1 - x0);
  }
  return s.far.back();
}

inline double frr_at_far(const std::vector<double>& gen, const std::vector<double>& imp, double target) {
  const Sweep s = sweep(gen, imp);
  for (std::size_t j = 0; j < s.far.size(); ++j) {
    if (s.far[j] <= target) return s.frr[j];
  }
  return 1.0;
}

inline double d_prime(const std::vector<double>& gen, const std::vector<double>& imp) {
  const MeanSd g = two_pass(gen);
  const MeanSd i = two_pass(imp);
  return std::abs(g.mean - i.mean) / std::sqrt((g.sd * g.sd + i.sd * i.sd) / 2.0);
}

// Percent of probes (whose user is in the gallery) whose most similar gallery
// entry is their own; ties go to the smallest id.
inline double rank1(const std::vector<gazeid::Embedding>& gallery,
                    const std::vector<gazeid::Embedding>& probes) {
  std::size_t correct = 0, total = 0;
  for (const auto& p : probes) {
    bool enrolled = false;
    for (const auto& g : gallery) enrolled |= g.user == p.user;
    if (!enrolled) continue;
    ++total;
    double best = -std::numeric_limits<double>::infinity();
    std::string who;
    for (const auto& g : gallery) {
      const double c = cosine(g.values, p.values);
      if (c > best || (c == best && g.user < who)) {
        best = c;
        who = g.user;
      }
    }
    correct += who == p.user;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

// Two-way ANOVA with one observation per cell; rows = users, k = 2 sessions.
inline double icc(const std::vector<double>& a, const std::vector<double>& b, bool absolute) {
  const double n = static_cast<double>(a.size());
  const double k = 2.0;
  double grand = 0.0;
  for (std::size_t u = 0; u < a.size(); ++u) grand += a[u] + b[u];
  grand /= n * k;
  double ma = 0.0, mb = 0.0;
  for (std::size_t u = 0; u < a.size(); ++u) {
    ma += a[u];
    mb += b[u];
  }
  ma /= n;
  mb /= n;
  double ss_rows = 0.0, ss_err = 0.0;
  for (std::size_t u = 0; u < a.size(); ++u) {
    const double row = (a[u] + b[u]) / 2.0;
    ss_rows += k * (row - grand) * (row - grand);
    const double ea = a[u] - row - ma + grand;
    const double eb = b[u] - row - mb + grand;
    ss_err += ea * ea + eb * eb;
  }
  const double ss_cols = n * ((ma - grand) * (ma - grand) + (mb - grand) * (mb - grand));
  const double bms = ss_rows / (n - 1.0);
  const double jms = ss_cols / (k - 1.0);
  const double ems = ss_err / ((n - 1.0) * (k - 1.0));
  if (absolute) return (bms - ems) / (bms + (k - 1.0) * ems + k * (jms - ems) / n);
  return (bms - ems) / (bms + (k - 1.0) * ems);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const MeanSd a = two_pass(x);
  const MeanSd b = two_pass(y);
  double c = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) c += (x[i] - a.mean) * (y[i] - b.mean);
  return c / static_cast<double>(x.size()) / (a.sd * b.sd);
}

}  // namespace oracle
