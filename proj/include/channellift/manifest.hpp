// Copyright 2026 ChannelLift Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "channellift/common.hpp"

namespace channellift::sim {

struct ClipRecord {
  std::string audio_path;
  std::string speaker_id;
  std::string channel_id;
  std::string utterance_id;
  std::string split = "train";
  double duration_s = 0.0;

  bool operator==(const ClipRecord&) const = default;
};

// Record list plus the ordered label vocabularies; one-hot index == vocab
// position.
struct DatasetManifest {
  std::vector<ClipRecord> records;
  std::vector<std::string> channel_vocab;
  std::vector<std::string> speaker_vocab;

  bool operator==(const DatasetManifest&) const = default;

  int64_t channel_index(const std::string& id) const;
  int64_t speaker_index(const std::string& id) const;

  // Record for a given utterance under a given channel, or nullptr.
  const ClipRecord* find(const std::string& utterance_id,
                         const std::string& channel_id) const;

  std::vector<const ClipRecord*> split_records(const std::string& split) const;

  // Vocab coverage, label exhaustiveness, positive durations; with
  // `check_files`, also that every referenced file exists.
  void validate(bool check_files = false) const;
};

// JSON Lines, one record per line; vocabularies live in a sidecar
// "<stem>.vocab.json" next to the manifest.
DatasetManifest load_manifest(const std::filesystem::path& jsonl_path);
void save_manifest(const std::filesystem::path& jsonl_path,
                   const DatasetManifest& manifest);

std::filesystem::path vocab_sidecar_path(
    const std::filesystem::path& jsonl_path);

}  // namespace channellift::sim
