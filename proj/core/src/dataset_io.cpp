#include "gazeid/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace gazeid {

namespace fs = std::filesystem;

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_recording_csv(const GazeRecording& recording, const fs::path& path) {
  std::string text;
  text.reserve(recording.size() * 120 + 64);
  text += kRecordingCsvHeader;
  text += '\n';
  const std::vector<const std::vector<double>*> cols = {
      &recording.timestamps,     &recording.left.optical_x,  &recording.left.optical_y,
      &recording.left.visual_x,  &recording.left.visual_y,   &recording.right.optical_x,
      &recording.right.optical_y, &recording.right.visual_x, &recording.right.visual_y};
  for (std::size_t i = 0; i < recording.size(); ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) text += ',';
      text += format_double((*cols[c])[i]);
    }
    text += '\n';
  }
  write_text_file(path, text);
}

GazeRecording read_recording_csv(const fs::path& path, const UserId& user, TaskLabel task,
                                 double sample_rate) {
  const std::string text = read_text_file(path);
  GazeRecording rec;
  rec.user_id = user;
  rec.task = task;
  rec.sample_rate = sample_rate;
  std::vector<std::vector<double>*> cols = {
      &rec.timestamps,     &rec.left.optical_x,  &rec.left.optical_y,
      &rec.left.visual_x,  &rec.left.visual_y,   &rec.right.optical_x,
      &rec.right.optical_y, &rec.right.visual_x, &rec.right.visual_y};

  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kRecordingCsvHeader) {
        throw DataError(path.string() + ": unexpected header '" + std::string(line) + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    std::size_t field = 0;
    const char* p = line.data();
    const char* const stop = line.data() + line.size();
    while (true) {
      if (field >= cols.size()) throw DataError(path.string() + ": too many fields on line " + std::to_string(line_no));
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, stop, v);
      if (ec != std::errc{}) {
        throw DataError(path.string() + ": bad number on line " + std::to_string(line_no));
      }
      cols[field++]->push_back(v);
      if (next == stop) break;
      if (*next != ',') throw DataError(path.string() + ": bad separator on line " + std::to_string(line_no));
      p = next + 1;
    }
    if (field != cols.size()) {
      throw DataError(path.string() + ": expected 9 fields on line " + std::to_string(line_no));
    }
  }
  if (line_no == 0) throw DataError(path.string() + ": empty file");
  rec.validate();
  return rec;
}

const RecordingEntry* ManifestUser::find(TaskLabel task) const {
  for (const auto& r : recordings) {
    if (r.task == task) return &r;
  }
  return nullptr;
}

std::vector<const ManifestUser*> Manifest::users_in_split(const std::string& split) const {
  std::vector<const ManifestUser*> out;
  for (const auto& u : users) {
    if (u.split == split) out.push_back(&u);
  }
  return out;
}

const ManifestUser* Manifest::find_user(const UserId& id) const {
  for (const auto& u : users) {
    if (u.id == id) return &u;
  }
  return nullptr;
}

nlohmann::json manifest_to_json(const Manifest& manifest) {
  nlohmann::json j;
  j["format"] = kManifestFormat;
  j["sample_rate"] = manifest.sample_rate;
  nlohmann::json users = nlohmann::json::array();
  for (const auto& u : manifest.users) {
    nlohmann::json ju;
    ju["id"] = u.id;
    ju["split"] = u.split;
    if (u.accuracy_error_deg) ju["accuracy_error_deg"] = *u.accuracy_error_deg;
    if (u.tier) ju["tier"] = *u.tier;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : u.recordings) {
      recs.push_back({{"path", r.path}, {"task", to_string(r.task.kind)}, {"repetition", r.task.repetition}});
    }
    ju["recordings"] = recs;
    users.push_back(ju);
  }
  j["users"] = users;
  if (!manifest.generator.is_null()) j["generator"] = manifest.generator;
  return j;
}

Manifest manifest_from_json(const nlohmann::json& j, const fs::path& root) {
  Manifest m;
  m.root = root;
  try {
    if (j.value("format", std::string{}) != kManifestFormat) {
      throw DataError("manifest: missing or unsupported format tag");
    }
    m.sample_rate = j.value("sample_rate", kDefaultSampleRate);
    for (const auto& ju : j.at("users")) {
      ManifestUser u;
      u.id = ju.at("id").get<std::string>();
      u.split = ju.value("split", std::string("test"));
      if (ju.contains("accuracy_error_deg")) u.accuracy_error_deg = ju.at("accuracy_error_deg").get<double>();
      if (ju.contains("tier")) u.tier = ju.at("tier").get<std::string>();
      for (const auto& jr : ju.at("recordings")) {
        RecordingEntry r;
        r.path = jr.at("path").get<std::string>();
        r.task.kind = task_from_string(jr.at("task").get<std::string>());
        r.task.repetition = jr.at("repetition").get<int>();
        u.recordings.push_back(r);
      }
      m.users.push_back(std::move(u));
    }
    if (j.contains("generator")) m.generator = j.at("generator");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return m;
}

Manifest read_manifest(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  write_text_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

Dataset Dataset::load(const fs::path& manifest_path) {
  Dataset ds(read_manifest(manifest_path));
  for (const auto& u : ds.manifest_.users) {
    for (const auto& r : u.recordings) {
      ds.add(read_recording_csv(ds.manifest_.root / r.path, u.id, r.task, ds.manifest_.sample_rate));
    }
  }
  return ds;
}

void Dataset::add(GazeRecording recording) {
  auto id = recording.recording_id();
  recordings_.insert_or_assign(std::move(id), std::move(recording));
}

const GazeRecording* Dataset::find(const UserId& user, TaskLabel task) const {
  GazeRecording key;
  key.user_id = user;
  key.task = task;
  auto it = recordings_.find(key.recording_id());
  return it == recordings_.end() ? nullptr : &it->second;
}

}  // namespace gazeid
