#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <span>
#include <vector>

#include "gazeid/model.hpp"
#include "gazeid/signal.hpp"

namespace gazeid {

inline constexpr const char* kModelFormat = "gazeid-model/1";

/// A trained embedder: one or more members sharing a network config, channel
/// selection and normalization. Multiple members form an ensemble whose
/// embeddings are concatenated raw, in member order.
struct ModelArtifact {
  NetworkConfig network;
  ChannelSpec channels;
  SavgolConfig savgol;
  NormalizationStats normalization;
  std::vector<NetworkParams> members;
  int epochs_planned = 0;
  int epochs_completed = 0;
  std::uint64_t seed = 0;
  nlohmann::json training;  // echo of the training configuration

  int embedding_dim() const {
    return network.embedding_dim * static_cast<int>(members.size());
  }

  /// Eval-mode embeddings of normalized windows, one column per window.
  Eigen::MatrixXd embed(std::span<const Eigen::MatrixXd> windows) const;
};

nlohmann::json to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ChannelSpec& spec);
ChannelSpec channel_spec_from_json(const nlohmann::json& j);

nlohmann::json artifact_to_json(const ModelArtifact& artifact);
ModelArtifact artifact_from_json(const nlohmann::json& j);
void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& path);
ModelArtifact load_artifact(const std::filesystem::path& path);

}  // namespace gazeid
