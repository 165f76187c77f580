#include "gazeid/model_artifact.hpp"

#include "gazeid/dataset_io.hpp"

namespace gazeid {

using nlohmann::json;

Eigen::MatrixXd ModelArtifact::embed(std::span<const Eigen::MatrixXd> windows) const {
  if (members.empty()) throw DataError("model artifact has no members");
  const Eigen::Index dim = network.embedding_dim;
  Eigen::MatrixXd out(embedding_dim(), static_cast<Eigen::Index>(windows.size()));
  for (std::size_t m = 0; m < members.size(); ++m) {
    out.middleRows(static_cast<Eigen::Index>(m) * dim, dim) = gazeid::embed(members[m], windows);
  }
  return out;
}

json to_json(const NetworkConfig& c) {
  return json{{"input_channels", c.input_channels}, {"time_steps", c.time_steps},
              {"num_conv_layers", c.num_conv_layers}, {"growth", c.growth},
              {"kernel_size", c.kernel_size},       {"dilations", c.dilations},
              {"embedding_dim", c.embedding_dim},   {"bn_epsilon", c.bn_epsilon},
              {"bn_momentum", c.bn_momentum}};
}

NetworkConfig network_config_from_json(const json& j) {
  NetworkConfig c;
  c.input_channels = j.value("input_channels", c.input_channels);
  c.time_steps = j.value("time_steps", c.time_steps);
  c.num_conv_layers = j.value("num_conv_layers", c.num_conv_layers);
  c.growth = j.value("growth", c.growth);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  if (j.contains("dilations")) {
    c.dilations = j.at("dilations").get<std::vector<int>>();
  } else if (c.num_conv_layers != 8) {
    throw ConfigError("network: dilations must be given when num_conv_layers != 8");
  }
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.bn_epsilon = j.value("bn_epsilon", c.bn_epsilon);
  c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
  c.validate();
  return c;
}

json to_json(const ChannelSpec& s) {
  json eyes = json::array();
  if (s.left) eyes.push_back("L");
  if (s.right) eyes.push_back("R");
  json axes = json::array();
  if (s.optical) axes.push_back("O");
  if (s.visual) axes.push_back("V");
  if (s.visual_minus_optical) axes.push_back("VminusO");
  return json{{"eyes", eyes}, {"axes", axes}};
}

ChannelSpec channel_spec_from_json(const json& j) {
  ChannelSpec s{false, false, false, false, false};
  for (const auto& e : j.at("eyes")) {
    const auto v = e.get<std::string>();
    if (v == "L") s.left = true;
    else if (v == "R") s.right = true;
    else throw ConfigError("channels: unknown eye '" + v + "'");
  }
  for (const auto& a : j.at("axes")) {
    const auto v = a.get<std::string>();
    if (v == "O") s.optical = true;
    else if (v == "V") s.visual = true;
    else if (v == "VminusO" || v == "V-O") s.visual_minus_optical = true;
    else throw ConfigError("channels: unknown axis '" + v + "'");
  }
  s.validate();
  return s;
}

json artifact_to_json(const ModelArtifact& a) {
  json j;
  j["format"] = kModelFormat;
  j["network"] = to_json(a.network);
  j["channels"] = to_json(a.channels);
  j["savgol"] = {{"window_length", a.savgol.window_length}, {"poly_order", a.savgol.poly_order}};
  j["normalization"] = {{"mean", a.normalization.mean}, {"sd", a.normalization.sd}};
  j["ensemble_embedding"] = "concatenate_raw";
  j["epochs_planned"] = a.epochs_planned;
  j["epochs_completed"] = a.epochs_completed;
  j["seed"] = a.seed;
  if (!a.training.is_null()) j["training"] = a.training;
  json members = json::array();
  for (const auto& m : a.members) {
    members.push_back({{"values", m.values}, {"running_mean", m.running_mean}, {"running_var", m.running_var}});
  }
  j["members"] = members;
  return j;
}

ModelArtifact artifact_from_json(const json& j) {
  ModelArtifact a;
  try {
    if (j.value("format", std::string{}) != kModelFormat) {
      throw DataError("model artifact: missing or unsupported format tag");
    }
    a.network = network_config_from_json(j.at("network"));
    a.channels = channel_spec_from_json(j.at("channels"));
    a.savgol.window_length = j.at("savgol").at("window_length").get<int>();
    a.savgol.poly_order = j.at("savgol").at("poly_order").get<int>();
    a.normalization.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    a.normalization.sd = j.at("normalization").at("sd").get<std::vector<double>>();
    a.normalization.validate();
    a.epochs_planned = j.value("epochs_planned", 0);
    a.epochs_completed = j.value("epochs_completed", 0);
    a.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("training")) a.training = j.at("training");
    for (const auto& jm : j.at("members")) {
      NetworkParams p;
      p.config = a.network;
      p.layout = ParamLayout::from(a.network);
      p.values = jm.at("values").get<std::vector<double>>();
      p.running_mean = jm.at("running_mean").get<std::vector<double>>();
      p.running_var = jm.at("running_var").get<std::vector<double>>();
      p.validate();
      a.members.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("model artifact: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("model artifact: ") + e.what());
  }
  if (a.members.empty()) throw DataError("model artifact: no members");
  if (static_cast<int>(a.channels.channel_count()) != a.network.input_channels ||
      a.normalization.channels() != a.channels.channel_count()) {
    throw DataError("model artifact: channel spec, network input and normalization disagree");
  }
  return a;
}

void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path) {
  write_text_file(path, artifact_to_json(artifact).dump() + "\n");
}

ModelArtifact load_artifact(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return artifact_from_json(j);
}

}  // namespace gazeid
