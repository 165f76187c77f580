#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "gazeid/harness.hpp"
#include "gazeid/synth.hpp"

namespace gazeid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int threads = 1;
  std::string manifest;
  std::string model;
};

json load_config(const Options& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::string text;
    try {
      text = read_text_file(o.config);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError("config " + o.config + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config " + o.config + " must hold a JSON object");
  }
  if (o.seed) j["seed"] = *o.seed;
  if (!o.manifest.empty()) j["manifest"] = o.manifest;
  if (!o.model.empty()) j["model"] = o.model;
  return j;
}

// Paths inside a config file are relative to that file.
std::string resolve(const Options& o, const std::string& path, bool from_flag) {
  if (path.empty() || fs::path(path).is_absolute() || from_flag || o.config.empty()) return path;
  return (fs::path(o.config).parent_path() / path).lexically_normal().string();
}

struct Loaded {
  ExperimentConfig config;
  Dataset data;
  std::optional<ModelArtifact> model;
};

Loaded load_experiment(const Options& o, std::ostream& err) {
  json j = load_config(o);
  std::optional<SynthDatasetSpec> synth;
  if (j.contains("synth")) {
    json s = j.at("synth");
    if (!s.contains("seed") && j.contains("seed")) s["seed"] = j.at("seed");
    synth = synth_spec_from_json(s);
  }
  Loaded l{experiment_config_from_json(j), {}, std::nullopt};
  const std::string manifest = resolve(o, l.config.manifest, !o.manifest.empty());
  if (!manifest.empty()) {
    l.data = Dataset::load(manifest);
  } else if (synth) {
    l.data = generate_dataset(*synth);
  } else {
    throw ConfigError("config needs a manifest path or an inline synth block");
  }
  const std::string model = resolve(o, l.config.model, !o.model.empty());
  if (!model.empty()) {
    l.model = load_artifact(model);
    if (l.model->channels != l.config.channels) {
      throw ConfigError("model channels " + l.model->channels.label() + " differ from config channels " +
                        l.config.channels.label());
    }
  }
  err << "dataset: " << l.data.manifest().users.size() << " users\n";
  return l;
}

EpochCallback progress(std::ostream& err) {
  return [&err](const EpochLog& e) {
    err << "epoch " << e.epoch << " loss " << format_double(e.mean_loss) << " lr " << format_double(e.lr) << "\n";
  };
}

fs::path experiment_dir(const Options& o, const std::string& id) { return fs::path(o.out) / id; }

void finish(const Options& o, const ExperimentResult& r, std::ostream& out) {
  const fs::path dir = experiment_dir(o, r.id);
  write_result(r, dir);
  out << r.kind << " " << r.id << ": EER " << format_double(r.evaluation.verification.eer_percent)
      << "% rank-1 " << format_double(r.evaluation.identification.rank1_ir) << "% ("
      << r.evaluation.n_enrolled << " users, " << r.evaluation.n_excluded << " excluded) -> "
      << dir.string() << "\n";
}

int verb_synth(const Options& o, std::ostream& out) {
  json j = load_config(o);
  const std::string id = j.value("id", std::string("synth"));
  j.erase("id");
  json spec = j.contains("synth") ? j.at("synth") : j;
  if (o.seed) spec["seed"] = *o.seed;
  const SynthDatasetSpec s = synth_spec_from_json(spec);
  const fs::path path = write_dataset(s, experiment_dir(o, id));
  out << "synth: " << s.n_users << " users -> " << path.string() << "\n";
  return 0;
}

int verb_train(const Options& o, std::ostream& out, std::ostream& err) {
  const Loaded l = load_experiment(o, err);
  const TrainedModel t = train_model(l.data, l.config, progress(err));
  const fs::path dir = experiment_dir(o, l.config.id);
  save_artifact(t.artifact, dir / "model.json");
  std::string log = "member,epoch,mean_loss,lr\n";
  for (std::size_t m = 0; m < t.histories.size(); ++m) {
    for (const auto& e : t.histories[m]) {
      log += std::to_string(m) + "," + std::to_string(e.epoch) + "," + format_double(e.mean_loss) + "," +
             format_double(e.lr) + "\n";
    }
  }
  write_text_file(dir / "training_log.csv", log);
  const json cfg = to_json(l.config);
  json summary{{"id", l.config.id},
               {"kind", "train"},
               {"config", cfg},
               {"config_hash", config_hash(cfg)},
               {"n_train_users", t.users.size()},
               {"train_users", t.users},
               {"epochs_completed", t.artifact.epochs_completed}};
  write_text_file(dir / "train.json", summary.dump(2) + "\n");
  out << "train " << l.config.id << ": " << t.users.size() << " users, " << t.artifact.epochs_completed
      << " epochs -> " << (dir / "model.json").string() << "\n";
  return 0;
}

template <typename Fn>
int verb_experiment(const Options& o, std::ostream& out, std::ostream& err, Fn&& fn) {
  const Loaded l = load_experiment(o, err);
  const ModelArtifact* model = l.model ? &*l.model : nullptr;
  finish(o, fn(l.config, l.data, model, progress(err)), out);
  return 0;
}

int verb_report(const Options& o, std::ostream& out) {
  const json j = load_config(o);
  const std::string id = j.value("id", std::string("report"));
  const json report = collect_report(o.out);
  const fs::path dir = experiment_dir(o, id);
  write_text_file(dir / "report.json", report.dump(2) + "\n");
  write_text_file(dir / "report.csv", report_csv(report));
  out << "report: " << report.at("experiments").size() << " experiments -> " << dir.string() << "\n";
  return 0;
}

}  // namespace

int run(int argc, char** argv) { return run(argc, argv, std::cout, std::cerr); }

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gazeid: gaze biometrics experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  std::uint64_t seed = 0;
  app.add_option("--config", o.config, "JSON configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  app.add_option("--out", o.out, "Output root; results go to <out>/<id>/");
  app.add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--manifest", o.manifest, "Dataset manifest (overrides the config)");
  app.add_option("--model", o.model, "Trained model artifact (overrides the config)");

  const std::vector<std::pair<const char*, const char*>> verbs = {
      {"synth", "Generate a synthetic dataset"},
      {"train", "Train an embedding model"},
      {"eval", "Run one verification/identification experiment"},
      {"sweep-train-size", "Train and evaluate per training-set size"},
      {"sweep-duration", "Evaluate enrollment/verification durations"},
      {"sweep-gallery", "Gallery-size scaling sweep and curve fit"},
      {"accuracy-tiers", "Evaluate per spatial-accuracy tier"},
      {"permanence", "Feature reliability across recordings"},
      {"report", "Summarize every result below --out"}};
  for (const auto& [name, help] : verbs) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  if (*seed_opt) o.seed = seed;
  set_num_threads(o.threads);
  const std::string verb = app.get_subcommands().front()->get_name();

  try {
    if (verb == "synth") return verb_synth(o, out);
    if (verb == "train") return verb_train(o, out, err);
    if (verb == "eval") return verb_experiment(o, out, err, run_experiment);
    if (verb == "sweep-train-size") {
      return verb_experiment(o, out, err,
                             [](const ExperimentConfig& c, const Dataset& d, const ModelArtifact*,
                                const EpochCallback& cb) { return sweep_train_size(c, d, cb); });
    }
    if (verb == "sweep-duration") return verb_experiment(o, out, err, sweep_duration);
    if (verb == "sweep-gallery") return verb_experiment(o, out, err, sweep_gallery);
    if (verb == "accuracy-tiers") return verb_experiment(o, out, err, accuracy_tiers);
    if (verb == "permanence") return verb_experiment(o, out, err, permanence_experiment);
    if (verb == "report") return verb_report(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  }
  err << "unknown verb " << verb << "\n";
  return 1;
}

}  // namespace gazeid::cli
