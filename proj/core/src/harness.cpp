#include "gazeid/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gazeid/synth.hpp"

namespace gazeid {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

json side_json(const SideSpec& s) {
  return {{"task", to_string(s.task.kind)}, {"repetition", s.task.repetition}, {"chunks", s.chunks}};
}

void read_side(const json& j, SideSpec& s) {
  if (j.contains("task")) s.task.kind = task_from_string(j.at("task").get<std::string>());
  read_field(j, "repetition", s.task.repetition);
  read_field(j, "chunks", s.chunks);
}

json plan_json(const TrainPlan& p) {
  json j{{"epochs", p.epochs},
         {"adam_beta1", p.adam_beta1},
         {"adam_beta2", p.adam_beta2},
         {"adam_eps", p.adam_eps},
         {"lr_start", p.lr_start},
         {"lr_peak", p.lr_peak},
         {"lr_end", p.lr_end},
         {"warmup_fraction", p.warmup_fraction},
         {"seed", p.seed},
         {"ensemble_folds", p.ensemble_folds}};
  if (p.stop_after_epochs) j["stop_after_epochs"] = *p.stop_after_epochs;
  return j;
}

json table_row(const EvaluationResult& e) {
  json row{{"eer_percent", e.verification.eer_percent},
           {"d_prime", e.verification.d_prime},
           {"rank1_ir_percent", e.identification.rank1_ir},
           {"n_enrolled", e.n_enrolled},
           {"n_excluded", e.n_excluded},
           {"n_gen", e.verification.n_gen},
           {"n_imp", e.verification.n_imp}};
  for (const auto& f : e.verification.frr_at_far) {
    row["frr_percent@far_" + format_double(100.0 * f.far_target) + "%"] = 100.0 * f.frr;
  }
  return row;
}

std::string csv_cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_null()) return "";
  return v.dump();
}

// Rows of flat objects -> CSV with the union of keys (sorted) as header.
std::string table_csv(const json& rows) {
  std::set<std::string> keys;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.items()) keys.insert(k);
  }
  std::string out;
  bool first = true;
  for (const auto& k : keys) {
    out += (first ? "" : ",") + k;
    first = false;
  }
  out += '\n';
  for (const auto& r : rows) {
    first = true;
    for (const auto& k : keys) {
      if (!first) out += ',';
      first = false;
      if (r.contains(k)) out += csv_cell(r.at(k));
    }
    out += '\n';
  }
  return out;
}

ExperimentResult base_result(const ExperimentConfig& config, const char* kind) {
  config.validate();
  ExperimentResult r;
  r.id = config.id;
  r.kind = kind;
  r.config = to_json(config);
  r.config_hash = config_hash(r.config);
  return r;
}

// Model from the caller, else trained inline and recorded on the result.
const ModelArtifact& obtain_model(const ExperimentConfig& config, const Dataset& data,
                                  const ModelArtifact* model, const EpochCallback& on_epoch,
                                  ExperimentResult& result) {
  if (model) return *model;
  result.trained = train_model(data, config, on_epoch);
  result.n_train_users = result.trained->users.size();
  return result.trained->artifact;
}

void fill_evaluation(ExperimentResult& r, const EmbeddedPool& pool, const ExperimentConfig& config,
                     int n_e, int n_v) {
  r.evaluation = evaluate(pool, n_e, n_v, config.far_targets);
  r.n_test_users = pool.n_test_users;
  r.enroll_seconds = static_cast<double>(n_e) * static_cast<double>(kWindowSteps) / kDefaultSampleRate;
  r.verify_seconds = static_cast<double>(n_v) * static_cast<double>(kWindowSteps) / kDefaultSampleRate;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..") {
    throw ConfigError("experiment id must be a non-empty plain name");
  }
  channels.validate();
  network.validate();
  batch.validate();
  loss.validate();
  plan.validate();
  if (enroll.chunks < 1 || verify.chunks < 1) throw ConfigError("n_e and n_v must be >= 1");
  if (enroll.task == verify.task) {
    throw ConfigError("enrollment and verification must use distinct recordings");
  }
  if (train_size && *train_size < 2) throw ConfigError("train_size must be >= 2");
  for (auto [ne, nv] : durations) {
    if (ne < 1 || nv < 1) throw ConfigError("durations: chunk counts must be >= 1");
  }
  for (double f : far_targets) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("far_targets must lie in (0, 1)");
  }
  if (gallery_samples == 0) throw ConfigError("gallery_samples must be >= 1");
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["id"] = c.id;
  j["manifest"] = c.manifest;
  j["model"] = c.model;
  j["channels"] = to_json(c.channels);
  j["network"] = to_json(c.network);
  j["batch"] = {{"users_per_batch", c.batch.users_per_batch}, {"samples_per_user", c.batch.samples_per_user}};
  j["loss"] = {{"alpha", c.loss.alpha}, {"beta", c.loss.beta}, {"lambda", c.loss.lambda}, {"epsilon", c.loss.epsilon}};
  j["plan"] = plan_json(c.plan);
  j["savgol"] = {{"window_length", c.savgol.window_length}, {"poly_order", c.savgol.poly_order}};
  j["train_task"] = to_string(c.train_task);
  j["train_size"] = c.train_size ? json(*c.train_size) : json(nullptr);
  j["train_tiers"] = c.train_tiers;
  j["test_tiers"] = c.test_tiers;
  j["tier_quantiles"] = c.tier_quantiles;
  j["enroll"] = side_json(c.enroll);
  j["verify"] = side_json(c.verify);
  j["far_targets"] = c.far_targets;
  j["train_sizes"] = c.train_sizes;
  j["durations"] = c.durations;
  j["gallery_sizes"] = c.gallery_sizes;
  j["gallery_samples"] = c.gallery_samples;
  j["curve_family"] = to_string(c.curve_family);
  j["permanence"] = {{"icc_form", c.permanence.form == IccForm::consistency ? "consistency" : "absolute_agreement"},
                     {"normality_draws", c.permanence.normality.draws},
                     {"normality_seed", c.permanence.normality.seed}};
  j["seed"] = c.seed;
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  static const std::set<std::string> known = {
      "id", "manifest", "model", "channels", "network", "batch", "loss", "plan", "savgol",
      "train_task", "train_size", "train_tiers", "test_tiers", "tier_quantiles", "enroll", "verify",
      "far_targets", "train_sizes", "durations", "gallery_sizes", "gallery_samples", "curve_family",
      "permanence", "seed", "synth"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown config field '" + k + "'");
  }
  ExperimentConfig c;
  try {
    read_field(j, "id", c.id);
    read_field(j, "manifest", c.manifest);
    read_field(j, "model", c.model);
    read_field(j, "seed", c.seed);
    if (j.contains("channels")) c.channels = channel_spec_from_json(j.at("channels"));
    if (j.contains("network")) c.network = network_config_from_json(j.at("network"));
    c.network.input_channels = static_cast<int>(c.channels.channel_count());
    if (j.contains("batch")) {
      read_field(j.at("batch"), "users_per_batch", c.batch.users_per_batch);
      read_field(j.at("batch"), "samples_per_user", c.batch.samples_per_user);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      read_field(l, "alpha", c.loss.alpha);
      read_field(l, "beta", c.loss.beta);
      read_field(l, "lambda", c.loss.lambda);
      read_field(l, "epsilon", c.loss.epsilon);
    }
    c.plan.seed = c.seed;
    if (j.contains("plan")) {
      const auto& p = j.at("plan");
      read_field(p, "epochs", c.plan.epochs);
      if (p.contains("stop_after_epochs") && !p.at("stop_after_epochs").is_null()) {
        c.plan.stop_after_epochs = p.at("stop_after_epochs").get<int>();
      }
      read_field(p, "adam_beta1", c.plan.adam_beta1);
      read_field(p, "adam_beta2", c.plan.adam_beta2);
      read_field(p, "adam_eps", c.plan.adam_eps);
      read_field(p, "lr_start", c.plan.lr_start);
      read_field(p, "lr_peak", c.plan.lr_peak);
      read_field(p, "lr_end", c.plan.lr_end);
      read_field(p, "warmup_fraction", c.plan.warmup_fraction);
      read_field(p, "seed", c.plan.seed);
      read_field(p, "ensemble_folds", c.plan.ensemble_folds);
    }
    if (j.contains("savgol")) {
      read_field(j.at("savgol"), "window_length", c.savgol.window_length);
      read_field(j.at("savgol"), "poly_order", c.savgol.poly_order);
    }
    if (j.contains("train_task")) c.train_task = task_from_string(j.at("train_task").get<std::string>());
    if (j.contains("train_size") && !j.at("train_size").is_null()) c.train_size = j.at("train_size").get<std::size_t>();
    read_field(j, "train_tiers", c.train_tiers);
    read_field(j, "test_tiers", c.test_tiers);
    read_field(j, "tier_quantiles", c.tier_quantiles);
    if (j.contains("enroll")) read_side(j.at("enroll"), c.enroll);
    if (j.contains("verify")) read_side(j.at("verify"), c.verify);
    read_field(j, "far_targets", c.far_targets);
    read_field(j, "train_sizes", c.train_sizes);
    read_field(j, "durations", c.durations);
    read_field(j, "gallery_sizes", c.gallery_sizes);
    read_field(j, "gallery_samples", c.gallery_samples);
    if (j.contains("curve_family")) c.curve_family = curve_family_from_string(j.at("curve_family").get<std::string>());
    c.permanence.normality.seed = c.seed;
    if (j.contains("permanence")) {
      const auto& p = j.at("permanence");
      if (p.contains("icc_form")) c.permanence.form = icc_form_from_string(p.at("icc_form").get<std::string>());
      read_field(p, "normality_draws", c.permanence.normality.draws);
      read_field(p, "normality_seed", c.permanence.normality.seed);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const json& config) { return hex64(fnv1a64(config.dump())); }

std::map<UserId, std::string> partition_by_accuracy(const Manifest& manifest, std::span<const double> quantiles) {
  std::vector<UserId> ids;
  std::vector<double> values;
  for (const auto& u : manifest.users) {
    if (!u.find({Task::random_saccade, 1}) || !u.find({Task::random_saccade, 2})) continue;
    if (!u.accuracy_error_deg) throw DataError("user " + u.id + " has no accuracy value in the manifest");
    ids.push_back(u.id);
    values.push_back(*u.accuracy_error_deg);
  }
  const auto tiers = quantile_tiers(values, ids, quantiles);
  std::map<UserId, std::string> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], tiers[i]);
  return out;
}

namespace {

std::vector<UserId> users_for(const Dataset& data, const ExperimentConfig& config, const std::string& split,
                              const std::vector<std::string>& tiers) {
  std::map<UserId, std::string> tier_of;
  if (!tiers.empty()) tier_of = partition_by_accuracy(data.manifest(), config.tier_quantiles);
  std::vector<UserId> out;
  for (const auto* u : data.manifest().users_in_split(split)) {
    if (!tiers.empty()) {
      auto it = tier_of.find(u->id);
      if (it == tier_of.end() || std::find(tiers.begin(), tiers.end(), it->second) == tiers.end()) continue;
    }
    out.push_back(u->id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<UserId> training_users(const Dataset& data, const ExperimentConfig& config) {
  std::vector<UserId> pool;
  for (const auto& id : users_for(data, config, "train", config.train_tiers)) {
    const ManifestUser* u = data.manifest().find_user(id);
    const bool has_task = std::any_of(u->recordings.begin(), u->recordings.end(),
                                      [&](const RecordingEntry& r) { return r.task.kind == config.train_task; });
    if (has_task) pool.push_back(id);
  }
  Rng rng(derive_seed(config.seed, 0x7A15));
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
  if (config.train_size) {
    if (*config.train_size > pool.size()) {
      throw ConfigError("train_size " + std::to_string(*config.train_size) + " exceeds the training pool of " +
                        std::to_string(pool.size()) + " users");
    }
    pool.resize(*config.train_size);
  }
  if (pool.size() < 2) throw DataError("training needs at least 2 users");
  return pool;
}

std::vector<UserId> test_users(const Dataset& data, const ExperimentConfig& config) {
  return users_for(data, config, "test", config.test_tiers);
}

TrainedModel train_model(const Dataset& data, const ExperimentConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  TrainedModel out;
  out.users = training_users(data, config);
  std::vector<UserId> sorted = out.users;
  std::sort(sorted.begin(), sorted.end());
  std::vector<const GazeRecording*> recordings;
  for (const auto& id : sorted) {
    for (const auto& r : data.manifest().find_user(id)->recordings) {
      if (r.task.kind != config.train_task) continue;
      const GazeRecording* rec = data.find(id, r.task);
      if (!rec) throw DataError("recording " + id + "/" + to_string(r.task.kind) + " not loaded");
      recordings.push_back(rec);
    }
  }
  TrainOutput t = train(recordings, config.channels, config.network, config.batch, config.loss, config.plan,
                        config.savgol, on_epoch);
  out.artifact = std::move(t.artifact);
  out.histories = std::move(t.histories);
  out.artifact.training = {{"train_task", to_string(config.train_task)},
                           {"n_users", out.users.size()},
                           {"batch", {{"users_per_batch", config.batch.users_per_batch},
                                      {"samples_per_user", config.batch.samples_per_user}}},
                           {"loss", {{"alpha", config.loss.alpha}, {"beta", config.loss.beta},
                                     {"lambda", config.loss.lambda}, {"epsilon", config.loss.epsilon}}},
                           {"plan", plan_json(config.plan)}};
  return out;
}

std::vector<Embedding> EmbeddedPool::enroll_centroids(int chunks) const {
  std::vector<Embedding> out;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (enroll[i].cols() < chunks) throw DataError("enrollment pool holds fewer chunks than requested");
    out.push_back({users[i], enroll_recordings[i], centroid(enroll[i].leftCols(chunks))});
  }
  return out;
}

std::vector<Embedding> EmbeddedPool::verify_centroids(int chunks) const {
  std::vector<Embedding> out;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (verify[i].cols() < chunks) throw DataError("verification pool holds fewer chunks than requested");
    out.push_back({users[i], verify_recordings[i], centroid(verify[i].leftCols(chunks))});
  }
  return out;
}

EmbeddedPool embed_pool(const Dataset& data, const ModelArtifact& model, const ExperimentConfig& config,
                        int min_enroll_chunks, int min_verify_chunks) {
  const auto users = test_users(data, config);
  EmbeddedPool pool;
  pool.n_test_users = users.size();
  std::vector<Eigen::MatrixXd> windows;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (enroll begin, verify begin) per kept user
  for (const auto& id : users) {
    const GazeRecording* e = data.find(id, config.enroll.task);
    const GazeRecording* v = data.find(id, config.verify.task);
    if (!e || !v) {
      pool.excluded.push_back(id);
      continue;
    }
    auto we = partition_windows(*e, model.channels, model.normalization, model.savgol);
    auto wv = partition_windows(*v, model.channels, model.normalization, model.savgol);
    if (std::cmp_less(we.size(), min_enroll_chunks) || std::cmp_less(wv.size(), min_verify_chunks)) {
      pool.excluded.push_back(id);
      continue;
    }
    spans.emplace_back(windows.size(), windows.size() + static_cast<std::size_t>(min_enroll_chunks));
    for (int k = 0; k < min_enroll_chunks; ++k) windows.push_back(std::move(we[static_cast<std::size_t>(k)].data));
    for (int k = 0; k < min_verify_chunks; ++k) windows.push_back(std::move(wv[static_cast<std::size_t>(k)].data));
    pool.users.push_back(id);
    pool.enroll_recordings.push_back(e->recording_id());
    pool.verify_recordings.push_back(v->recording_id());
  }
  const Eigen::MatrixXd emb = windows.empty() ? Eigen::MatrixXd() : model.embed(windows);
  for (const auto& [eb, vb] : spans) {
    pool.enroll.push_back(emb.middleCols(static_cast<Eigen::Index>(eb), min_enroll_chunks));
    pool.verify.push_back(emb.middleCols(static_cast<Eigen::Index>(vb), min_verify_chunks));
  }
  return pool;
}

EvaluationResult evaluate(const EmbeddedPool& pool, int enroll_chunks, int verify_chunks,
                          std::span<const double> far_targets) {
  if (pool.users.size() < 2) throw DataError("evaluation needs at least 2 users with both recordings");
  const auto enroll = pool.enroll_centroids(enroll_chunks);
  const auto verify = pool.verify_centroids(verify_chunks);
  EvaluationResult r;
  r.scores = all_pairs_scores(enroll, verify);
  r.roc = roc_and_eer(r.scores);
  r.verification = verification_report(r.scores, far_targets, &r.roc);
  r.identification = rank1(enroll, verify);
  r.n_enrolled = pool.users.size();
  r.n_excluded = pool.excluded.size();
  return r;
}

json to_json(const ExperimentResult& r) {
  json j;
  j["id"] = r.id;
  j["kind"] = r.kind;
  j["config"] = r.config;
  j["config_hash"] = r.config_hash;
  j["n_train_users"] = r.n_train_users;
  j["n_test_users"] = r.n_test_users;
  j["n_enrolled"] = r.evaluation.n_enrolled;
  j["n_excluded"] = r.evaluation.n_excluded;
  j["enroll_seconds"] = r.enroll_seconds;
  j["verify_seconds"] = r.verify_seconds;
  j["verification"] = to_json(r.evaluation.verification);
  j["identification"] = to_json(r.evaluation.identification);
  if (r.trained) {
    json members = json::array();
    for (const auto& h : r.trained->histories) {
      members.push_back({{"epochs", h.size()}, {"final_mean_loss", h.empty() ? 0.0 : h.back().mean_loss}});
    }
    j["training"] = {{"n_users", r.trained->users.size()},
                     {"epochs_completed", r.trained->artifact.epochs_completed},
                     {"members", members}};
  }
  if (r.sweep) {
    json pts = json::array();
    for (const auto& p : r.sweep->points) {
      pts.push_back({{"N", p.gallery_size}, {"metric", p.metric}, {"p5", p.p5}, {"p95", p.p95}, {"mid", p.mid}});
    }
    j["gallery_sweep"] = pts;
  }
  if (r.fit) j["curve_fit"] = to_json(*r.fit);
  if (r.permanence) j["permanence"] = to_json(*r.permanence);
  if (!r.table.is_null()) j["table"] = r.table;
  return j;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& data, const ModelArtifact* model,
                                const EpochCallback& on_epoch) {
  ExperimentResult r = base_result(config, "experiment");
  const ModelArtifact& m = obtain_model(config, data, model, on_epoch, r);
  const EmbeddedPool pool = embed_pool(data, m, config, config.enroll.chunks, config.verify.chunks);
  fill_evaluation(r, pool, config, config.enroll.chunks, config.verify.chunks);
  return r;
}

ExperimentResult sweep_train_size(const ExperimentConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  ExperimentResult r = base_result(config, "sweep_train_size");
  if (config.train_sizes.empty()) throw ConfigError("sweep_train_size: train_sizes is empty");
  ExperimentConfig all = config;
  all.train_size.reset();
  const std::size_t pool_size = training_users(data, all).size();
  for (auto n : config.train_sizes) {
    if (n > pool_size) {
      throw ConfigError("train size " + std::to_string(n) + " exceeds the training pool of " +
                        std::to_string(pool_size) + " users");
    }
  }
  r.table = json::array();
  for (auto n : config.train_sizes) {
    ExperimentConfig c = config;
    c.train_size = n;
    TrainedModel t = train_model(data, c, on_epoch);
    const EmbeddedPool pool = embed_pool(data, t.artifact, c, c.enroll.chunks, c.verify.chunks);
    fill_evaluation(r, pool, c, c.enroll.chunks, c.verify.chunks);
    json row = table_row(r.evaluation);
    row["N"] = n;
    row["final_mean_loss"] = t.histories.front().empty() ? 0.0 : t.histories.front().back().mean_loss;
    r.table.push_back(row);
    r.n_train_users = n;
  }
  return r;
}

ExperimentResult sweep_duration(const ExperimentConfig& config, const Dataset& data, const ModelArtifact* model,
                                const EpochCallback& on_epoch) {
  ExperimentResult r = base_result(config, "sweep_duration");
  if (config.durations.empty()) throw ConfigError("sweep_duration: durations is empty");
  const ModelArtifact& m = obtain_model(config, data, model, on_epoch, r);
  int max_e = config.enroll.chunks;
  int max_v = config.verify.chunks;
  for (auto [ne, nv] : config.durations) {
    max_e = std::max(max_e, ne);
    max_v = std::max(max_v, nv);
  }
  const EmbeddedPool pool = embed_pool(data, m, config, max_e, max_v);
  r.table = json::array();
  for (auto [ne, nv] : config.durations) {
    fill_evaluation(r, pool, config, ne, nv);
    json row = table_row(r.evaluation);
    row["n_e"] = ne;
    row["n_v"] = nv;
    row["enroll_seconds"] = r.enroll_seconds;
    row["verify_seconds"] = r.verify_seconds;
    r.table.push_back(row);
  }
  fill_evaluation(r, pool, config, config.enroll.chunks, config.verify.chunks);
  return r;
}

ExperimentResult sweep_gallery(const ExperimentConfig& config, const Dataset& data, const ModelArtifact* model,
                               const EpochCallback& on_epoch) {
  ExperimentResult r = base_result(config, "sweep_gallery");
  if (config.gallery_sizes.empty()) throw ConfigError("sweep_gallery: gallery_sizes is empty");
  const ModelArtifact& m = obtain_model(config, data, model, on_epoch, r);
  const EmbeddedPool pool = embed_pool(data, m, config, config.enroll.chunks, config.verify.chunks);
  fill_evaluation(r, pool, config, config.enroll.chunks, config.verify.chunks);
  GallerySweepConfig g;
  g.sizes = config.gallery_sizes;
  g.samples = config.gallery_samples;
  g.seed = config.seed;
  g.far_targets = config.far_targets;
  const auto enroll = pool.enroll_centroids(config.enroll.chunks);
  const auto verify = pool.verify_centroids(config.verify.chunks);
  r.sweep = gallery_sweep(enroll, verify, g);
  std::vector<std::pair<double, double>> obs;
  for (auto n : r.sweep->sizes) {
    const SweepPoint* p = r.sweep->find(n, "rank1_ir");
    if (p) obs.emplace_back(static_cast<double>(n), p->mid);
  }
  if (obs.size() >= 3) r.fit = fit_scaling_curve(obs, config.curve_family);
  return r;
}

ExperimentResult accuracy_tiers(const ExperimentConfig& config, const Dataset& data, const ModelArtifact* model,
                                const EpochCallback& on_epoch) {
  ExperimentResult r = base_result(config, "accuracy_tiers");
  const ModelArtifact& m = obtain_model(config, data, model, on_epoch, r);
  const auto tier_of = partition_by_accuracy(data.manifest(), config.tier_quantiles);
  std::vector<std::string> tiers = config.test_tiers;
  if (tiers.empty()) {
    std::set<std::string> names;
    for (const auto& [u, t] : tier_of) names.insert(t);
    // Present tiers in ascending-error order.
    for (const char* n : {"low", "mid", "high"}) {
      if (names.erase(n)) tiers.emplace_back(n);
    }
    tiers.insert(tiers.end(), names.begin(), names.end());
  }
  r.table = json::array();
  for (const auto& t : tiers) {
    ExperimentConfig c = config;
    c.test_tiers = {t};
    const EmbeddedPool pool = embed_pool(data, m, c, c.enroll.chunks, c.verify.chunks);
    fill_evaluation(r, pool, c, c.enroll.chunks, c.verify.chunks);
    std::vector<double> acc;
    for (const auto& u : pool.users) acc.push_back(*data.manifest().find_user(u)->accuracy_error_deg);
    json row = table_row(r.evaluation);
    row["tier"] = t;
    row["median_accuracy_error_deg"] = summarize(acc).median;
    r.table.push_back(row);
  }
  ExperimentConfig all = config;
  all.test_tiers = tiers;
  const EmbeddedPool pool = embed_pool(data, m, all, all.enroll.chunks, all.verify.chunks);
  fill_evaluation(r, pool, all, all.enroll.chunks, all.verify.chunks);
  return r;
}

ExperimentResult permanence_experiment(const ExperimentConfig& config, const Dataset& data,
                                       const ModelArtifact* model, const EpochCallback& on_epoch) {
  ExperimentResult r = base_result(config, "permanence");
  const ModelArtifact& m = obtain_model(config, data, model, on_epoch, r);
  const EmbeddedPool pool = embed_pool(data, m, config, config.enroll.chunks, config.verify.chunks);
  fill_evaluation(r, pool, config, config.enroll.chunks, config.verify.chunks);
  const auto a = pool.enroll_centroids(config.enroll.chunks);
  const auto b = pool.verify_centroids(config.verify.chunks);
  r.permanence = permanence_report(make_feature_table(a, b), config.permanence);
  return r;
}

void write_result(const ExperimentResult& r, const fs::path& dir) {
  write_text_file(dir / "result.json", to_json(r).dump(2) + "\n");
  write_text_file(dir / "scores.csv", scores_csv(r.evaluation.scores));
  write_text_file(dir / "roc.csv", roc_csv(r.evaluation.roc.curve));
  if (r.trained) {
    save_artifact(r.trained->artifact, dir / "model.json");
    std::string log = "member,epoch,mean_loss,lr\n";
    for (std::size_t m = 0; m < r.trained->histories.size(); ++m) {
      for (const auto& e : r.trained->histories[m]) {
        log += std::to_string(m) + "," + std::to_string(e.epoch) + "," + format_double(e.mean_loss) + "," +
               format_double(e.lr) + "\n";
      }
    }
    write_text_file(dir / "training_log.csv", log);
  }
  if (r.sweep) write_text_file(dir / "gallery_sweep.csv", sweep_csv(*r.sweep));
  if (r.permanence) write_text_file(dir / "permanence_features.csv", permanence_features_csv(*r.permanence));
  if (r.table.is_array() && !r.table.empty()) write_text_file(dir / "table.csv", table_csv(r.table));
}

json collect_report(const fs::path& root) {
  std::vector<fs::path> files;
  if (fs::exists(root)) {
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file() && entry.path().filename() == "result.json") files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  json rows = json::array();
  for (const auto& f : files) {
    json j;
    try {
      j = json::parse(read_text_file(f));
    } catch (const json::exception& e) {
      throw DataError("report: cannot parse " + f.string() + ": " + e.what());
    }
    json row{{"path", fs::relative(f.parent_path(), root).generic_string()},
             {"id", j.value("id", "")},
             {"kind", j.value("kind", "")},
             {"config_hash", j.value("config_hash", "")},
             {"n_enrolled", j.value("n_enrolled", 0)},
             {"n_excluded", j.value("n_excluded", 0)}};
    if (j.contains("verification")) {
      const auto& v = j.at("verification");
      row["eer_percent"] = v.value("eer_percent", 0.0);
      row["d_prime"] = v.value("d_prime", 0.0);
      for (const auto& f2 : v.value("frr_at_far", json::array())) {
        row["frr_percent@far_" + format_double(f2.value("far_target_percent", 0.0)) + "%"] =
            f2.value("frr_percent", 0.0);
      }
    }
    if (j.contains("identification")) row["rank1_ir_percent"] = j.at("identification").value("rank1_ir_percent", 0.0);
    rows.push_back(row);
  }
  return {{"experiments", rows}};
}

std::string report_csv(const json& report) { return table_csv(report.at("experiments")); }

}  // namespace gazeid
