// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gazeid/dataset_io.hpp"
#include "gazeid/harness.hpp"
#include "gazeid/identify.hpp"
#include "gazeid/permanence.hpp"
#include "gazeid/signal.hpp"
#include "gazeid/synth.hpp"
#include "gazeid/training.hpp"
#include "gazeid/verify.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gazeid;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// ---------------------------------------------------------------- criterion 1

void gradient_check(Outcome& o) {
  const auto t0 = Clock::now();
  NetworkConfig cfg;
  cfg.input_channels = 2;
  cfg.growth = 2;
  cfg.num_conv_layers = 3;
  cfg.dilations = {1, 2, 4};
  cfg.time_steps = 24;
  cfg.embedding_dim = 16;
  NetworkParams params = init_params(cfg, 17);
  Rng rng(18);
  for (const auto& n : params.layout.norm) {
    for (int c = 0; c < n.channels; ++c) {
      params.values[n.scale + static_cast<std::size_t>(c)] = rng.uniform(0.5, 1.5);
      params.values[n.shift + static_cast<std::size_t>(c)] = rng.uniform(-0.2, 0.2);
    }
  }
  const int m = 8;
  std::vector<Eigen::MatrixXd> x;
  for (int i = 0; i < m; ++i) x.push_back(testing_helpers::random_matrix(2, 24, 100 + static_cast<std::uint64_t>(i)));
  const std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2, 3, 3};
  const MsLossConfig loss_cfg{2.0, 50.0, 0.5, 0.5};

  NetworkParams work = params;
  const ForwardResult f = forward(work, x, Mode::train);
  const MinedPairs mined = mine_pairs(cosine_similarity(f.embeddings), labels, loss_cfg);
  const Eigen::MatrixXd g_emb = ms_loss_backward(f.embeddings, mined, loss_cfg);
  const Gradients g = backward(params, f.cache, g_emb);

  auto loss_at = [&](const NetworkParams& p, const std::vector<Eigen::MatrixXd>& in) {
    NetworkParams q = p;
    const ForwardResult r = forward(q, in, Mode::train);
    return ms_loss(cosine_similarity(r.embeddings), mined, loss_cfg);
  };
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    NetworkParams a = params, b = params;
    a.values[i] += h;
    b.values[i] -= h;
    const double fd = (loss_at(a, x) - loss_at(b, x)) / (2 * h);
    worst = std::max(worst, rel_err(fd, g.params[i]));
  }
  double worst_in = 0.0;
  for (int n = 0; n < m; ++n) {
    for (long k = 0; k < x[static_cast<std::size_t>(n)].size(); ++k) {
      auto a = x, b = x;
      a[static_cast<std::size_t>(n)].data()[k] += h;
      b[static_cast<std::size_t>(n)].data()[k] -= h;
      const double fd = (loss_at(params, a) - loss_at(params, b)) / (2 * h);
      worst_in = std::max(worst_in, rel_err(fd, g.inputs[static_cast<std::size_t>(n)].data()[k]));
    }
  }
  const double t = seconds_since(t0);
  o.require(mined.pair_count() > 0, "some pairs mined");
  o.require(worst < 1e-4, "parameter gradients");
  o.require(worst_in < 1e-4, "input gradients");
  o.require(t < 60.0, "runtime");
  o.detail << params.values.size() << " params, " << mined.pair_count() << " mined pairs, max rel err params "
           << worst << ", inputs " << worst_in << ", " << t << " s";
}

// ---------------------------------------------------------------- criterion 2

void metric_oracles(Outcome& o) {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t total = 2 + rng.below(999);
    const std::size_t ng = 1 + rng.below(total - 1);
    const std::size_t ni = total - ng;
    const bool coarse = trial % 2 == 0;
    const double shift = rng.uniform(0.0, 1.0);
    std::vector<double> gen(ng), imp(ni);
    for (auto& v : gen) v = coarse ? std::round(rng.normal(shift, 0.3) * 20) / 20 : rng.normal(shift, 0.3);
    for (auto& v : imp) v = coarse ? std::round(rng.normal(0.0, 0.3) * 20) / 20 : rng.normal(0.0, 0.3);
    const RocResult roc = roc_and_eer(gen, imp);
    worst = std::max(worst, std::abs(roc.eer - oracle::eer(gen, imp)));
    for (double t : {0.00002, 0.001, 0.01, 0.1}) {
      worst = std::max(worst, std::abs(frr_at_far(roc.curve, ni, t).frr - oracle::frr_at_far(gen, imp, t)));
    }
    if (ng >= 2 && ni >= 2) {
      bool spread = false;
      for (double v : gen) spread |= v != gen[0];
      for (double v : imp) spread |= v != imp[0];
      if (spread) worst = std::max(worst, std::abs(d_prime(gen, imp) - oracle::d_prime(gen, imp)));
    }
  }
  double worst_ir = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int users = 1 + static_cast<int>(rng.below(200));
    const long dim = 2 + static_cast<long>(rng.below(15));
    std::vector<Embedding> gallery, probes;
    const double noise = rng.uniform(0.2, 3.0);
    for (int u = 0; u < users; ++u) {
      const std::string id = "u" + std::to_string(u);
      const Eigen::VectorXd base = testing_helpers::random_matrix(dim, 1, rng.bits()).col(0);
      gallery.push_back({id, "c", base + noise * testing_helpers::random_matrix(dim, 1, rng.bits()).col(0)});
      if (rng.uniform() < 0.9) probes.push_back({id, "c", base + noise * testing_helpers::random_matrix(dim, 1, rng.bits()).col(0)});
    }
    if (probes.empty()) probes.push_back(gallery.front());
    worst_ir = std::max(worst_ir, std::abs(rank1(gallery, probes).rank1_ir - oracle::rank1(gallery, probes)));
  }
  o.require(worst <= 1e-9, "EER/FRR/d' vs oracle");
  o.require(worst_ir <= 1e-9, "Rank-1 vs oracle");
  o.detail << "1000 score sets: max |diff| " << worst << "; 200 identification instances: max |diff| " << worst_ir;
}

// ---------------------------------------------------------------- criterion 3

void preprocessing_oracles(Outcome& o) {
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = testing_helpers::random_vector(100 + static_cast<std::size_t>(trial) * 7, 300 + static_cast<std::uint64_t>(trial), 5.0);
    const auto got = savgol_velocity(x, 72.0);
    const auto want = oracle::savgol(x, 72.0, 7, 2);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  SynthDatasetSpec spec;
  spec.n_users = 12;
  spec.seed = 3;
  spec.random_saccade.duration = 20.0;
  const Dataset d = generate_dataset(spec);
  const GazeRecording* r = d.find(d.manifest().users[0].id, {Task::random_saccade, 1});
  const std::size_t windows = partition_windows(*r, ChannelSpec{}, std::nullopt).size();

  std::vector<VelocityWindow> train;
  for (const auto* u : d.manifest().users_in_split("train")) {
    for (int rep = 1; rep <= 2; ++rep) {
      auto w = partition_windows(*d.find(u->id, {Task::random_saccade, rep}), ChannelSpec{}, std::nullopt);
      train.insert(train.end(), w.begin(), w.end());
    }
  }
  const NormalizationStats stats = compute_norm_stats(train);
  double worst_mean = 0.0, worst_sd = 0.0;
  for (long c = 0; c < 8; ++c) {
    std::vector<double> all;
    for (auto w : train) {
      normalize(w.data, stats);
      for (long t = 0; t < w.data.cols(); ++t) all.push_back(w.data(c, t));
    }
    const auto ms = oracle::two_pass(all);
    worst_mean = std::max(worst_mean, std::abs(ms.mean));
    worst_sd = std::max(worst_sd, std::abs(ms.sd - 1.0));
  }
  o.require(worst <= 1e-9, "Savitzky-Golay vs least-squares oracle");
  o.require(windows == 4, "20 s gives 4 windows");
  o.require(worst_mean <= 1e-6 && worst_sd <= 1e-6, "normalized mean 0, SD 1");
  o.detail << "SG max |diff| " << worst << " deg/s; 20 s -> " << windows << " windows; normalized |mean| "
           << worst_mean << ", |SD-1| " << worst_sd;
}

// ---------------------------------------------------------------- criterion 4

void ms_loss_oracle(Outcome& o) {
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t users = 2 + rng.below(6);
    std::vector<std::size_t> labels;
    for (std::size_t u = 0; u < users; ++u)
      for (int k = 0; k < 2 + static_cast<int>(rng.below(3)); ++k) labels.push_back(u);
    const Eigen::MatrixXd s = cosine_similarity(testing_helpers::random_matrix(4, static_cast<long>(labels.size()), rng.bits()));
    const MsLossConfig cfg{rng.uniform(0.5, 4.0), rng.uniform(10.0, 60.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 0.6)};
    const MinedPairs mined = mine_pairs(s, labels, cfg);
    const oracle::Mined want = oracle::mine(s, labels, cfg.epsilon);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      o.require(std::set<std::size_t>(mined.positives[i].begin(), mined.positives[i].end()) == want.pos[i] &&
                    std::set<std::size_t>(mined.negatives[i].begin(), mined.negatives[i].end()) == want.neg[i],
                "miner rule on random batch");
    }
    worst = std::max(worst, std::abs(ms_loss(s, mined, cfg) - oracle::ms_loss(s, want, cfg.alpha, cfg.beta, cfg.lambda)));
  }
  // Constructed matrices: easy (all mined out) and hard (everything mined).
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  auto block = [&](double pos, double neg) {
    Eigen::MatrixXd s(4, 4);
    for (long i = 0; i < 4; ++i)
      for (long k = 0; k < 4; ++k)
        s(i, k) = i == k ? 1.0 : (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(k)] ? pos : neg);
    return s;
  };
  const MsLossConfig cfg;
  const MinedPairs easy = mine_pairs(block(1.0, 0.0), labels, cfg);
  const double easy_loss = ms_loss(block(1.0, 0.0), easy, cfg);
  const MinedPairs hard = mine_pairs(block(0.4, 0.6), labels, cfg);
  // pos 0.65 vs neg 0.6: kept at eps 0.1 (0.65 < 0.7), dropped at eps 0.01.
  const bool boundary = mine_pairs(block(0.65, 0.6), labels, {2, 50, 0.5, 0.1}).positives[0].size() == 1 &&
                        mine_pairs(block(0.65, 0.6), labels, {2, 50, 0.5, 0.01}).positives[0].empty();
  Eigen::MatrixXd one(2, 2);
  one << 1.0, 0.5, 0.5, 1.0;
  MinedPairs single;
  single.positives = {{1}};
  single.negatives = {{}};
  const double single_loss = ms_loss(one, single, cfg);
  o.require(worst <= 1e-9, "loss vs term-by-term oracle");
  o.require(easy.pair_count() == 0 && easy_loss == 0.0, "all mined out gives 0");
  o.require(hard.pair_count() == 12 && hard.negatives[0].size() == 2, "hard pairs mined");
  o.require(boundary, "epsilon boundary");
  o.require(std::abs(single_loss - 0.5 * std::log(2.0)) <= 1e-9, "single anchor example");
  o.detail << "500 random batches: max |diff| " << worst << "; mined-out loss " << easy_loss
           << "; single-anchor loss " << single_loss;
}

// ---------------------------------------------------------------- criterion 5

void lr_schedule(Outcome& o) {
  const TrainPlan plan;
  double worst = 0.0;
  double worst_jump = 0.0;
  for (std::int64_t total : {10, 100, 1000, 4480, 100000}) {
    const auto warm = static_cast<std::int64_t>(std::llround(0.3 * static_cast<double>(total)));
    worst = std::max(worst, std::abs(lr_at(0, total, plan) - 1e-4));
    worst = std::max(worst, std::abs(lr_at(warm, total, plan) - 1e-2));
    worst = std::max(worst, std::abs(lr_at(total - 1, total, plan) - 1e-7));
    if (total >= 1000) {
      // Neighbours of the junction differ by O(1/total^2) on both sides.
      worst_jump = std::max({worst_jump, std::abs(lr_at(warm + 1, total, plan) - 1e-2),
                             std::abs(lr_at(warm - 1, total, plan) - 1e-2)});
    }
  }
  o.require(worst <= 1e-12, "endpoints");
  o.require(worst_jump < 1e-3 * 1e-2, "continuity at the junction");
  o.detail << "max endpoint error " << worst << "; max step next to peak " << worst_jump;
}

// ---------------------------------------------------------------- criteria 6-8

SynthDatasetSpec ablation_spec() {
  SynthDatasetSpec s;  // default population and tasks
  s.n_users = 300;
  s.seed = 7;
  return s;
}

ExperimentConfig ablation_config(const std::string& id, ChannelSpec channels) {
  ExperimentConfig c;
  c.id = id;
  c.channels = channels;
  c.network.input_channels = static_cast<int>(channels.channel_count());
  c.network.growth = 8;
  c.batch = {16, 4};
  c.plan.epochs = 20;
  c.seed = 1;
  c.plan.seed = 1;
  c.permanence.normality.seed = 1;
  return c;
}

struct Ablation {
  Dataset data;
  std::map<std::string, ExperimentResult> runs;
  double seconds = 0.0;
};

const Dataset& ablation_data() {
  static const Dataset d = generate_dataset(ablation_spec());
  return d;
}

// The binocular O+V model; shared by criteria 6, 7, 8 and 9.
std::optional<ExperimentResult> g_ov;

const ExperimentResult& ov_run() {
  if (!g_ov) g_ov = run_experiment(ablation_config("binocular_ov", ChannelSpec{}), ablation_data());
  return *g_ov;
}

void ablation(Outcome& o) {
  const auto t0 = Clock::now();
  const Dataset& d = ablation_data();
  const ExperimentResult& ov = ov_run();
  const ExperimentResult v = run_experiment(ablation_config("binocular_v", {true, true, false, true, false}), d);
  const ExperimentResult mono = run_experiment(ablation_config("monocular_v", {true, false, false, true, false}), d);
  const double t = seconds_since(t0);
  const double e_ov = ov.evaluation.verification.eer_percent;
  const double e_v = v.evaluation.verification.eer_percent;
  const double e_m = mono.evaluation.verification.eer_percent;
  o.require(ov.n_train_users == 200 && ov.n_test_users == 100, "200 train / 100 test users");
  o.require(e_ov < e_v, "EER(binocular O+V) < EER(binocular V)");
  o.require(e_v < e_m, "EER(binocular V) < EER(monocular V)");
  o.require(t < 3600.0, "runtime under 60 min");
  o.detail << "EER % O+V " << e_ov << " < V " << e_v << " < mono V " << e_m << " (rank-1 % "
           << ov.evaluation.identification.rank1_ir << "/" << v.evaluation.identification.rank1_ir << "/"
           << mono.evaluation.identification.rank1_ir << "; " << ov.n_train_users << " train, "
           << ov.n_test_users << " test users, 20 epochs, m=64); " << t / 60.0 << " min";
}

void gallery_scaling(Outcome& o) {
  const ExperimentResult& ov = ov_run();
  // A fresh population large enough for galleries of 200 users.
  SynthDatasetSpec spec = ablation_spec();
  spec.seed = 8;
  spec.train_fraction = 0.1;
  spec.test_fraction = 0.9;
  const Dataset pool_data = generate_dataset(spec);
  ExperimentConfig cfg = ablation_config("gallery", ChannelSpec{});
  cfg.gallery_sizes = {25, 50, 100, 200};
  cfg.gallery_samples = 25;
  const ExperimentResult r = sweep_gallery(cfg, pool_data, &ov.trained->artifact);
  std::ostringstream rows;
  double prev_ir = 1e300, prev_p95 = 1e300;
  bool non_increasing = true;
  double eer_lo = 1e300, eer_hi = 0.0;
  for (auto n : cfg.gallery_sizes) {
    const double ir = r.sweep->find(n, "rank1_ir")->mid;
    const double p95 = r.sweep->find(n, "rank1_ir")->p95;
    const double eer = r.sweep->find(n, "eer")->mid;
    non_increasing &= ir <= prev_ir && p95 <= prev_p95;
    prev_ir = ir;
    prev_p95 = p95;
    eer_lo = std::min(eer_lo, eer);
    eer_hi = std::max(eer_hi, eer);
    rows << "N=" << n << " IR " << ir << "% (P95 " << p95 << "%) EER " << eer << "%; ";
  }
  const bool band = eer_lo > 0.0 ? eer_hi <= 2.0 * eer_lo : eer_hi == 0.0;

  // Planted sqrt curve with Gaussian noise.
  Rng rng(77);
  const double a = -0.5, b = 100.0, root = (b / a) * (b / a);
  std::vector<std::pair<double, double>> obs;
  for (double x = 250; x <= 5000; x += 250) obs.emplace_back(x, a * std::sqrt(x) + b + rng.normal(0.0, 0.5));
  const CurveFit fit = fit_scaling_curve(obs, CurveFamily::sqrt);
  const double ea = std::abs(fit.coefficients[0] / a - 1.0);
  const double eb = std::abs(fit.coefficients[1] / b - 1.0);
  const double er = fit.root ? std::abs(*fit.root / root - 1.0) : 1.0;

  o.require(r.n_test_users >= 200, "test pool of at least 200 users");
  o.require(non_increasing, "Rank-1 IR P95 and midline non-increasing");
  o.require(band, "EER midline within a factor-2 band");
  o.require(ea < 0.05 && eb < 0.05, "planted (a, b) within 5%");
  o.require(er < 0.10, "root within 10%");
  o.detail << r.n_test_users << " pool users, K=25: " << rows.str() << "fit a " << fit.coefficients[0] << " b "
           << fit.coefficients[1] << " root " << (fit.root ? *fit.root : 0.0) << " (planted " << a << ", " << b
           << ", " << root << ")";
}

void duration_effect(Outcome& o) {
  const ExperimentResult& ov = ov_run();
  ExperimentConfig cfg = ablation_config("duration", ChannelSpec{});
  cfg.durations = {{1, 1}, {4, 4}};
  const ExperimentResult r = sweep_duration(cfg, ablation_data(), &ov.trained->artifact);
  const double e1 = r.table[0].at("eer_percent").get<double>();
  const double e4 = r.table[1].at("eer_percent").get<double>();
  o.require(e4 <= e1, "EER(4 chunks) <= EER(1 chunk)");
  o.detail << "EER % n_e=n_v=1: " << e1 << ", n_e=n_v=4: " << e4;
}

// ---------------------------------------------------------------- criterion 9

void permanence(Outcome& o) {
  Rng rng(9);
  std::vector<Embedding> a, b_noise;
  for (int u = 0; u < 500; ++u) {
    const std::string id = "u" + std::to_string(1000 + u);
    a.push_back({id, "c", testing_helpers::random_matrix(128, 1, rng.bits()).col(0)});
    b_noise.push_back({id, "c", testing_helpers::random_matrix(128, 1, rng.bits()).col(0)});
  }
  PermanenceConfig cfg;
  cfg.normality.draws = 2000;
  const PermanenceReport dup = permanence_report(make_feature_table(a, a), cfg);
  double dup_min = 1.0;
  for (const auto& f : dup.features) dup_min = std::min(dup_min, f.icc);
  const FeatureTable noise_table = make_feature_table(a, b_noise);
  const PermanenceReport noise = permanence_report(noise_table, cfg);

  double worst = 0.0;
  for (long f = 0; f < 128; ++f) {
    std::vector<double> x(500), y(500);
    for (long u = 0; u < 500; ++u) {
      x[static_cast<std::size_t>(u)] = noise_table.session_a(u, f);
      y[static_cast<std::size_t>(u)] = noise_table.session_b(u, f);
    }
    worst = std::max(worst, std::abs(icc(x, y) - oracle::icc(x, y, false)));
    worst = std::max(worst, std::abs(icc(x, y, IccForm::absolute_agreement) - oracle::icc(x, y, true)));
  }

  // Report shape on the trained model's test pool.
  ExperimentConfig pc = ablation_config("permanence", ChannelSpec{});
  const ExperimentResult model_rep = permanence_experiment(pc, ablation_data(), &ov_run().trained->artifact);
  const auto j = to_json(*model_rep.permanence);

  o.require(dup.features.size() == 128 && std::abs(dup_min - 1.0) <= 1e-9, "duplicated sessions give ICC 1");
  o.require(noise.icc.median >= -0.1 && noise.icc.median <= 0.1, "independent noise median ICC in [-0.1, 0.1]");
  o.require(worst <= 1e-9, "ICC vs ANOVA oracle");
  o.require(j.at("n_features") == 128 && j.at("icc").contains("min") && j.at("icc").contains("median") &&
                j.at("icc").contains("max"),
            "report min/median/max over 128 features");
  o.detail << "duplicated min ICC " << dup_min << "; noise median ICC " << noise.icc.median << "; oracle max |diff| "
           << worst << "; trained model: median ICC " << model_rep.permanence->icc.median << ", min "
           << model_rep.permanence->icc.min << ", max " << model_rep.permanence->icc.max << " over "
           << model_rep.permanence->features.size() << " features";
}

// ---------------------------------------------------------------- criterion 10

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gazeid");
  std::vector<char*> argv;
  for (auto& s : args) argv.push_back(s.data());
  std::ostringstream out, err;
  return gazeid::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

void determinism(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / "gazeid_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::vector<std::string> verbs{"train", "eval", "sweep-train-size", "sweep-duration",
                                       "sweep-gallery", "accuracy-tiers", "permanence"};
  for (const auto& verb : verbs) {
    write_text_file(root / (verb + ".json"),
                    "{\"id\": \"" + verb + R"(",
  "manifest": "data/manifest.json",
  "network": {"growth": 4, "num_conv_layers": 4, "dilations": [1, 2, 4, 8], "embedding_dim": 32},
  "batch": {"users_per_batch": 6, "samples_per_user": 4},
  "plan": {"epochs": 2},
  "train_sizes": [10, 20],
  "durations": [[1, 1], [2, 2], [4, 4]],
  "gallery_sizes": [4, 8, 16],
  "gallery_samples": 10,
  "permanence": {"normality_draws": 500},
  "seed": 11})");
  }
  write_text_file(root / "synth.json", R"({"id": "data", "n_users": 48, "duration": 20})");
  std::vector<std::map<std::string, std::string>> snaps;
  for (const char* run : {"run_a", "run_b"}) {
    // Each run gets its own copy of the configs, so resolved paths match.
    const fs::path dir = root / run;
    fs::create_directories(dir);
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_regular_file()) fs::copy_file(e.path(), dir / e.path().filename());
    }
    const std::string out = dir.string();
    o.require(cli({"--config", (dir / "synth.json").string(), "--seed", "5", "--out", out, "synth"}) == 0, "synth");
    for (const auto& verb : verbs) {
      o.require(cli({"--config", (dir / (verb + ".json")).string(), "--out", out, verb}) == 0, verb);
    }
    o.require(cli({"--out", out, "report"}) == 0, "report");
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
    }
    snaps.push_back(std::move(files));
  }
  std::size_t differing = 0;
  for (const auto& [path, text] : snaps[0]) {
    auto it = snaps[1].find(path);
    if (it == snaps[1].end() || it->second != text) {
      ++differing;
      o.detail << "differs: " << path << "; ";
    }
  }
  o.require(snaps[0].size() == snaps[1].size() && differing == 0, "byte-identical outputs");
  o.detail << snaps[0].size() << " files per run over " << verbs.size() + 2 << " verbs, " << differing << " differ";
  fs::remove_all(root);
}

// ---------------------------------------------------------------- criterion 11

void throughput(Outcome& o) {
  const std::size_t n = 2500;
  Rng rng(11);
  std::vector<Embedding> enroll, verify;
  for (std::size_t u = 0; u < n; ++u) {
    const std::string id = "u" + std::to_string(u);
    const Eigen::VectorXd base = testing_helpers::random_matrix(128, 1, rng.bits()).col(0);
    enroll.push_back({id, "c", base + 0.8 * testing_helpers::random_matrix(128, 1, rng.bits()).col(0)});
    verify.push_back({id, "c", base + 0.8 * testing_helpers::random_matrix(128, 1, rng.bits()).col(0)});
  }
  const auto t0 = Clock::now();
  const ScoreSet scores = all_pairs_scores(enroll, verify);
  const RocResult roc = roc_and_eer(scores);
  const double t = seconds_since(t0);
  o.require(scores.n_gen() + scores.n_imp() == n * n, "6.25M scores");
  o.require(t < 10.0, "under 10 s");
  o.detail << scores.n_gen() << " genuine + " << scores.n_imp() << " impostor scores, EER " << 100.0 * roc.eer
           << "%, " << t << " s";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<void(Outcome&)>>> criteria = {
      {"gradient correctness", gradient_check},
      {"metric oracles", metric_oracles},
      {"preprocessing oracles", preprocessing_oracles},
      {"MS loss oracle", ms_loss_oracle},
      {"LR schedule", lr_schedule},
      {"synthetic channel ablation", ablation},
      {"gallery scaling", gallery_scaling},
      {"duration effect", duration_effect},
      {"permanence", permanence},
      {"determinism", determinism},
      {"throughput", throughput},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2d %-28s %s  %s\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
