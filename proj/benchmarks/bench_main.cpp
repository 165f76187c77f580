#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "gazeid/model.hpp"
#include "gazeid/signal.hpp"
#include "gazeid/training.hpp"
#include "gazeid/verify.hpp"

using namespace gazeid;

namespace {

Eigen::MatrixXd noise(long rows, long cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, 1.0);
  return m;
}

std::vector<Embedding> population(std::size_t n, std::uint64_t seed) {
  std::vector<Embedding> out;
  Rng rng(seed);
  for (std::size_t u = 0; u < n; ++u) out.push_back({"u" + std::to_string(u), "c", noise(128, 1, rng.bits()).col(0)});
  return out;
}

void BM_AllPairsScores(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto enroll = population(n, 1);
  const auto verify = population(n, 2);
  for (auto _ : state) {
    ScoreSet s = all_pairs_scores(enroll, verify);
    benchmark::DoNotOptimize(s.genuine.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n));
}
BENCHMARK(BM_AllPairsScores)->Arg(250)->Arg(1000)->Arg(2500)->Unit(benchmark::kMillisecond);

void BM_RocAndEer(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const ScoreSet s = all_pairs_scores(population(n, 3), population(n, 4));
  for (auto _ : state) benchmark::DoNotOptimize(roc_and_eer(s).eer);
}
BENCHMARK(BM_RocAndEer)->Arg(1000)->Arg(2500)->Unit(benchmark::kMillisecond);

NetworkConfig net(int growth) {
  NetworkConfig c;
  c.growth = growth;
  return c;
}

void BM_ForwardEval(benchmark::State& state) {
  const NetworkParams p = init_params(net(static_cast<int>(state.range(0))), 1);
  std::vector<Eigen::MatrixXd> x;
  for (int i = 0; i < 16; ++i) x.push_back(noise(8, 360, 10 + static_cast<std::uint64_t>(i)));
  for (auto _ : state) benchmark::DoNotOptimize(embed(p, x).data());
}
BENCHMARK(BM_ForwardEval)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  NetworkParams p = init_params(net(static_cast<int>(state.range(0))), 1);
  std::vector<Eigen::MatrixXd> x;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 64; ++i) {
    x.push_back(noise(8, 360, 100 + static_cast<std::uint64_t>(i)));
    labels.push_back(static_cast<std::size_t>(i / 4));
  }
  const MsLossConfig loss;
  for (auto _ : state) {
    const ForwardResult f = forward(p, x, Mode::train);
    const MinedPairs mined = mine_pairs(cosine_similarity(f.embeddings), labels, loss);
    const Gradients g = backward(p, f.cache, ms_loss_backward(f.embeddings, mined, loss));
    benchmark::DoNotOptimize(g.params.data());
  }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_SavgolVelocity(benchmark::State& state) {
  const Eigen::MatrixXd x = noise(1, 2160, 5);
  const std::vector<double> v(x.data(), x.data() + x.size());
  for (auto _ : state) benchmark::DoNotOptimize(savgol_velocity(v, 72.0).data());
}
BENCHMARK(BM_SavgolVelocity);

}  // namespace

BENCHMARK_MAIN();
