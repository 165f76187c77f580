#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gazeid/signal.hpp"

namespace gazeid {

inline constexpr const char* kRecordingCsvHeader = "t,lox,loy,lvx,lvy,rox,roy,rvx,rvy";
inline constexpr const char* kManifestFormat = "gazeid-manifest/1";

/// Writes `t,lox,loy,lvx,lvy,rox,roy,rvx,rvy` rows with shortest round-trip
/// number formatting.
void write_recording_csv(const GazeRecording& recording, const std::filesystem::path& path);

/// Reads a recording CSV. The sample rate is taken from the caller (manifest);
/// the result is validated before returning.
GazeRecording read_recording_csv(const std::filesystem::path& path, const UserId& user,
                                 TaskLabel task, double sample_rate);

struct RecordingEntry {
  std::string path;  // relative to the manifest directory
  TaskLabel task;
};

struct ManifestUser {
  UserId id;
  std::string split;  // "train" or "test"
  std::optional<double> accuracy_error_deg;
  std::optional<std::string> tier;
  std::vector<RecordingEntry> recordings;

  const RecordingEntry* find(TaskLabel task) const;
};

struct Manifest {
  double sample_rate = kDefaultSampleRate;
  std::vector<ManifestUser> users;
  nlohmann::json generator;  // provenance; null when not synthetic
  std::filesystem::path root;  // directory containing the manifest

  std::vector<const ManifestUser*> users_in_split(const std::string& split) const;
  const ManifestUser* find_user(const UserId& id) const;
};

nlohmann::json manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Manifest plus recordings held in memory, keyed by recording id.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Manifest manifest) : manifest_(std::move(manifest)) {}

  static Dataset load(const std::filesystem::path& manifest_path);

  const Manifest& manifest() const { return manifest_; }
  void add(GazeRecording recording);
  /// nullptr when the user has no recording for the task.
  const GazeRecording* find(const UserId& user, TaskLabel task) const;

 private:
  Manifest manifest_;
  std::map<std::string, GazeRecording> recordings_;
};

/// Writes text atomically enough for reproducible outputs: truncate + write.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace gazeid
