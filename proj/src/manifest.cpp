// Copyright 2026 ChannelLift Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "channellift/manifest.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <unordered_set>

namespace channellift::sim {

using nlohmann::json;
namespace fs = std::filesystem;

int64_t DatasetManifest::channel_index(const std::string& id) const {
  auto it = std::find(channel_vocab.begin(), channel_vocab.end(), id);
  if (it == channel_vocab.end()) {
    throw InvalidInputError("manifest: unknown channel_id '" + id + "'");
  }
  return it - channel_vocab.begin();
}

int64_t DatasetManifest::speaker_index(const std::string& id) const {
  auto it = std::find(speaker_vocab.begin(), speaker_vocab.end(), id);
  if (it == speaker_vocab.end()) {
    throw InvalidInputError("manifest: unknown speaker_id '" + id + "'");
  }
  return it - speaker_vocab.begin();
}

const ClipRecord* DatasetManifest::find(const std::string& utterance_id,
                                        const std::string& channel_id) const {
  for (const auto& r : records) {
    if (r.utterance_id == utterance_id && r.channel_id == channel_id) {
      return &r;
    }
  }
  return nullptr;
}

std::vector<const ClipRecord*> DatasetManifest::split_records(
    const std::string& split) const {
  std::vector<const ClipRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

void DatasetManifest::validate(bool check_files) const {
  std::unordered_set<std::string> channels(channel_vocab.begin(),
                                           channel_vocab.end());
  std::unordered_set<std::string> speakers(speaker_vocab.begin(),
                                           speaker_vocab.end());
  if (channels.size() != channel_vocab.size()) {
    throw InvalidInputError("manifest: duplicate channel_id in vocab");
  }
  if (speakers.size() != speaker_vocab.size()) {
    throw InvalidInputError("manifest: duplicate speaker_id in vocab");
  }
  std::unordered_set<std::string> keys;
  for (const auto& r : records) {
    if (!channels.count(r.channel_id)) {
      throw InvalidInputError("manifest: record channel '" + r.channel_id +
                              "' not in vocab");
    }
    if (!speakers.count(r.speaker_id)) {
      throw InvalidInputError("manifest: record speaker '" + r.speaker_id +
                              "' not in vocab");
    }
    if (r.split != "train" && r.split != "test") {
      throw InvalidInputError("manifest: bad split '" + r.split + "'");
    }
    if (!(r.duration_s > 0.0)) {
      throw InvalidInputError("manifest: non-positive duration for '" +
                              r.utterance_id + "'");
    }
    if (!keys.insert(r.utterance_id + "\x1f" + r.channel_id).second) {
      throw InvalidInputError("manifest: duplicate (utterance, channel) '" +
                              r.utterance_id + "', '" + r.channel_id + "'");
    }
    if (check_files && !fs::exists(r.audio_path)) {
      throw IoError("manifest: missing audio file " + r.audio_path);
    }
  }
}

fs::path vocab_sidecar_path(const fs::path& jsonl_path) {
  fs::path p = jsonl_path;
  p.replace_extension(".vocab.json");
  return p;
}

DatasetManifest load_manifest(const fs::path& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) {
    throw IoError("load_manifest: cannot open " + jsonl_path.string());
  }
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InvalidInputError("load_manifest: " + jsonl_path.string() +
                              " line " + std::to_string(lineno) + ": " +
                              e.what());
    }
    ClipRecord r;
    try {
      r.audio_path = j.at("audio_path").get<std::string>();
      r.speaker_id = j.at("speaker_id").get<std::string>();
      r.channel_id = j.at("channel_id").get<std::string>();
      r.utterance_id = j.at("utterance_id").get<std::string>();
      r.split = j.at("split").get<std::string>();
      r.duration_s = j.at("duration_s").get<double>();
    } catch (const json::exception& e) {
      throw InvalidInputError("load_manifest: " + jsonl_path.string() +
                              " line " + std::to_string(lineno) +
                              ": missing field: " + e.what());
    }
    m.records.push_back(std::move(r));
  }

  const fs::path sidecar = vocab_sidecar_path(jsonl_path);
  std::ifstream vin(sidecar);
  if (!vin) {
    throw IoError("load_manifest: missing vocab sidecar " + sidecar.string());
  }
  json v;
  try {
    vin >> v;
    m.channel_vocab = v.at("channel_vocab").get<std::vector<std::string>>();
    m.speaker_vocab = v.at("speaker_vocab").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw InvalidInputError("load_manifest: bad vocab sidecar " +
                            sidecar.string() + ": " + e.what());
  }
  m.validate(false);
  return m;
}

void save_manifest(const fs::path& jsonl_path, const DatasetManifest& m) {
  m.validate(false);
  std::ofstream out(jsonl_path);
  if (!out) {
    throw IoError("save_manifest: cannot open " + jsonl_path.string());
  }
  for (const auto& r : m.records) {
    json j{{"audio_path", r.audio_path},   {"speaker_id", r.speaker_id},
           {"channel_id", r.channel_id},   {"utterance_id", r.utterance_id},
           {"split", r.split},             {"duration_s", r.duration_s}};
    out << j.dump() << "\n";
  }
  std::ofstream vout(vocab_sidecar_path(jsonl_path));
  if (!vout) {
    throw IoError("save_manifest: cannot open vocab sidecar");
  }
  json v{{"channel_vocab", m.channel_vocab},
         {"speaker_vocab", m.speaker_vocab}};
  vout << v.dump(2) << "\n";
}

}  // namespace channellift::sim
