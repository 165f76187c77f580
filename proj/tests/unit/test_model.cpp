#include <doctest.h>

#include <cmath>
#include <vector>

#include "gazeid/model.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gazeid;
using testing_helpers::random_matrix;

namespace {

NetworkConfig tiny(int steps = 12) {
  NetworkConfig c;
  c.input_channels = 2;
  c.growth = 2;
  c.num_conv_layers = 3;
  c.time_steps = steps;
  c.dilations = {1, 2, 4};
  c.embedding_dim = 5;
  return c;
}

// Random BN affine and running stats so every parameter group matters.
NetworkParams perturbed(const NetworkConfig& c, std::uint64_t seed) {
  NetworkParams p = init_params(c, seed);
  Rng rng(seed + 100);
  for (const auto& n : p.layout.norm) {
    for (int k = 0; k < n.channels; ++k) {
      p.values[n.scale + static_cast<std::size_t>(k)] = rng.uniform(0.5, 1.5);
      p.values[n.shift + static_cast<std::size_t>(k)] = rng.uniform(-0.3, 0.3);
      p.running_mean[n.buffer + static_cast<std::size_t>(k)] = rng.uniform(-0.5, 0.5);
      p.running_var[n.buffer + static_cast<std::size_t>(k)] = rng.uniform(0.5, 2.0);
    }
  }
  return p;
}

std::vector<std::vector<double>> running(const NetworkParams& p, bool mean) {
  std::vector<std::vector<double>> out;
  for (const auto& n : p.layout.norm) {
    const auto& src = mean ? p.running_mean : p.running_var;
    out.emplace_back(src.begin() + static_cast<long>(n.buffer),
                     src.begin() + static_cast<long>(n.buffer) + n.channels);
  }
  return out;
}

}  // namespace

TEST_CASE("pooled dimension is C + L*g") {
  NetworkConfig c;
  CHECK(c.pooled_dim() == 264);
  const auto p = init_params(c, 1);
  const auto f = forward_eval(p, std::vector<Eigen::MatrixXd>{random_matrix(8, 360, 1)});
  CHECK(f.cache.pooled.rows() == 264);
  CHECK(f.embeddings.rows() == 128);
  for (int l = 0; l < c.num_conv_layers; ++l) CHECK(p.layout.conv[static_cast<std::size_t>(l)].in == 8 + 32 * l);
}

TEST_CASE("init is deterministic in the seed") {
  const auto a = init_params(tiny(), 3), b = init_params(tiny(), 3), c = init_params(tiny(), 4);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  for (const auto& n : a.layout.norm) {
    for (int k = 0; k < n.channels; ++k) {
      CHECK(a.values[n.scale + static_cast<std::size_t>(k)] == 1.0);
      CHECK(a.values[n.shift + static_cast<std::size_t>(k)] == 0.0);
      CHECK(a.running_mean[n.buffer + static_cast<std::size_t>(k)] == 0.0);
      CHECK(a.running_var[n.buffer + static_cast<std::size_t>(k)] == 1.0);
    }
  }
}

TEST_CASE("eval forward matches the explicit-loop oracle") {
  const auto c = tiny();
  const auto p = perturbed(c, 7);
  std::vector<Eigen::MatrixXd> x{random_matrix(2, 12, 1), random_matrix(2, 12, 2)};
  const auto f = forward_eval(p, x);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const Eigen::VectorXd want = oracle::network_forward(p, x[n], running(p, true), running(p, false));
    CHECK((f.embeddings.col(static_cast<long>(n)) - want).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("default dilations keep length T") {
  NetworkConfig c;
  c.input_channels = 2;
  c.growth = 2;
  c.embedding_dim = 3;
  const auto p = perturbed(c, 2);
  const Eigen::MatrixXd x = random_matrix(2, 360, 3);
  const auto f = forward_eval(p, std::vector<Eigen::MatrixXd>{x});
  CHECK(f.cache.features[0].cols() == 360);
  const Eigen::VectorXd want = oracle::network_forward(p, x, running(p, true), running(p, false));
  CHECK((f.embeddings.col(0) - want).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("train forward uses batch statistics and updates running stats only") {
  const auto c = tiny();
  auto p = perturbed(c, 5);
  const auto before = p.values;
  const auto rm = p.running_mean;
  std::vector<Eigen::MatrixXd> x{random_matrix(2, 12, 4), random_matrix(2, 12, 5), random_matrix(2, 12, 6)};
  const auto f = forward(p, x, Mode::train);
  CHECK(p.values == before);
  CHECK(p.running_mean != rm);
  // Re-run the oracle with the batch statistics the forward pass recorded.
  std::vector<std::vector<double>> mean, var;
  for (std::size_t j = 0; j < f.cache.norm_mean.size(); ++j) {
    const auto& m = f.cache.norm_mean[j];
    const auto& is = f.cache.norm_inv_std[j];
    mean.emplace_back(m.data(), m.data() + m.size());
    std::vector<double> v(static_cast<std::size_t>(is.size()));
    for (long k = 0; k < is.size(); ++k) v[static_cast<std::size_t>(k)] = 1.0 / (is(k) * is(k)) - c.bn_epsilon;
    var.push_back(v);
  }
  // Batch mean of layer-0 input channels, computed directly.
  for (long ch = 0; ch < 2; ++ch) {
    double s = 0.0;
    for (const auto& w : x) s += w.row(ch).sum();
    CHECK(std::abs(mean.back()[static_cast<std::size_t>(ch)] - s / 36.0) < 1e-12);
  }
  for (std::size_t n = 0; n < x.size(); ++n) {
    const Eigen::VectorXd want = oracle::network_forward(p, x[n], mean, var);
    CHECK((f.embeddings.col(static_cast<long>(n)) - want).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("eval forward is pure and deterministic") {
  const auto p = perturbed(tiny(), 8);
  const auto copy = p;
  std::vector<Eigen::MatrixXd> x{random_matrix(2, 12, 9)};
  const auto a = forward_eval(p, x).embeddings;
  const auto b = forward_eval(p, x).embeddings;
  CHECK(a == b);
  CHECK(p.values == copy.values);
  CHECK(p.running_mean == copy.running_mean);
  CHECK(embed(p, x) == a);
}

TEST_CASE("zero weights give zero embedding") {
  auto p = init_params(tiny(), 1);
  std::fill(p.values.begin(), p.values.end(), 0.0);
  const auto f = forward_eval(p, std::vector<Eigen::MatrixXd>{random_matrix(2, 12, 1, 50.0)});
  CHECK(f.embeddings.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shape mismatch is an error") {
  const auto p = init_params(tiny(), 1);
  CHECK_THROWS_AS(forward_eval(p, std::vector<Eigen::MatrixXd>{random_matrix(3, 12, 1)}), DataError);
  CHECK_THROWS_AS(forward_eval(p, std::vector<Eigen::MatrixXd>{random_matrix(2, 11, 1)}), DataError);
}

TEST_CASE("backward matches central finite differences on every parameter") {
  const auto c = tiny();
  auto p = perturbed(c, 11);
  std::vector<Eigen::MatrixXd> x{random_matrix(2, 12, 21), random_matrix(2, 12, 22), random_matrix(2, 12, 23)};
  const Eigen::MatrixXd up = random_matrix(c.embedding_dim, 3, 24);
  auto objective = [&](NetworkParams q, const std::vector<Eigen::MatrixXd>& in) {
    const auto f = forward(q, in, Mode::train);
    return (f.embeddings.array() * up.array()).sum();
  };
  NetworkParams work = p;
  const auto f = forward(work, x, Mode::train);
  const Gradients g = backward(p, f.cache, up);
  REQUIRE(g.params.size() == p.values.size());
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    NetworkParams a = p, b = p;
    a.values[i] += h;
    b.values[i] -= h;
    const double fd = (objective(a, x) - objective(b, x)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g.params[i]) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-4);
  double worst_in = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    for (long k = 0; k < x[n].size(); ++k) {
      auto a = x, b = x;
      a[n].data()[k] += h;
      b[n].data()[k] -= h;
      const double fd = (objective(p, a) - objective(p, b)) / (2 * h);
      worst_in = std::max(worst_in, std::abs(fd - g.inputs[n].data()[k]) / std::max(1.0, std::abs(fd)));
    }
  }
  CHECK(worst_in < 1e-4);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  auto p = perturbed(tiny(), 12);
  std::vector<Eigen::MatrixXd> x{random_matrix(2, 12, 1), random_matrix(2, 12, 2)};
  const auto f = forward(p, x, Mode::train);
  const auto g = backward(p, f.cache, Eigen::MatrixXd::Zero(5, 2));
  for (double v : g.params) CHECK(v == 0.0);
}

TEST_CASE("duplicated batch doubles the gradient") {
  const auto c = tiny();
  const auto p0 = perturbed(c, 13);
  const Eigen::MatrixXd x = random_matrix(2, 12, 3);
  // Eval-mode statistics keep the two passes comparable.
  auto grad = [&](std::size_t copies) {
    std::vector<Eigen::MatrixXd> in(copies, x);
    const auto f = forward_eval(p0, in);
    return backward(p0, f.cache, Eigen::MatrixXd::Ones(c.embedding_dim, static_cast<long>(copies))).params;
  };
  const auto one = grad(1), two = grad(2);
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(std::abs(two[i] - 2.0 * one[i]) < 1e-9 * std::max(1.0, std::abs(one[i])));
}

TEST_CASE("centroids") {
  const Eigen::VectorXd e = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  const std::vector<Embedding> single{{"u", "w0", e}};
  CHECK(centroid_embedding(single).values == e);
  const std::vector<Embedding> sym{{"u", "a", e}, {"u", "b", -e}};
  CHECK(centroid_embedding(sym).values.cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd four = random_matrix(6, 4, 5);
  const Eigen::VectorXd c = centroid(four);
  for (long i = 0; i < 6; ++i) {
    CHECK(std::abs(c(i) - (four(i, 0) + four(i, 1) + four(i, 2) + four(i, 3)) / 4.0) < 1e-12);
  }
  CHECK_THROWS(centroid_embedding(std::vector<Embedding>{}));
}
