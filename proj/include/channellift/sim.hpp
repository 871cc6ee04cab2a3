// Copyright 2026 ChannelLift Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "channellift/common.hpp"
#include "channellift/manifest.hpp"

namespace channellift::sim {

enum class NoiseKind { kWhite, kBabble, kHum };

NoiseKind noise_kind_from_string(const std::string& s);
std::string to_string(NoiseKind k);

// A parameterized recording condition: room decay, additive noise at a
// target SNR, and an 8-band octave EQ standing in for the device response.
struct ChannelCondition {
  std::string condition_id;
  double rt60_s = 0.0;
  double snr_db = 60.0;
  NoiseKind noise_kind = NoiseKind::kWhite;
  std::array<double, 8> eq_gains_db{};  // bands centered 62.5 .. 8000 Hz
  uint64_t seed = 0;
};

void validate(const ChannelCondition& cond);

std::vector<ChannelCondition> load_conditions(
    const std::filesystem::path& json_path);
void save_conditions(const std::filesystem::path& json_path,
                     const std::vector<ChannelCondition>& conditions);

// Exponentially decaying noise-burst room impulse response whose energy
// decay reaches -60 dB at rt60_s. rt60_s == 0 yields the unit impulse.
Waveform synth_rir(const ChannelCondition& cond);

struct ApplyDetails {
  torch::Tensor speech_component;  // reverberant EQ'd speech, post-scaling
  torch::Tensor noise_component;   // additive noise, post-scaling
  double scale = 1.0;              // peak-normalization factor
};

// Convolves with the condition RIR, applies the EQ, then adds noise scaled
// against the reverberant EQ'd speech power. Output length equals the input
// length; peak limited to 0.99. Deterministic given (clean, cond); corpus
// building passes a per-clip `noise_seed` derived from the utterance id.
Waveform apply_condition(const Waveform& clean, const ChannelCondition& cond,
                         ApplyDetails* details = nullptr,
                         std::optional<uint64_t> noise_seed = std::nullopt);

struct CorpusOptions {
  // Hold out speakers/utterances/conditions so that test records are unseen
  // in all three respects; partially-unseen combinations are dropped.
  bool unseen_protocol = false;
  int holdout_speakers = 1;
  int holdout_utterances = 1;
  int holdout_conditions = 1;  // never holds out the first (clean) condition
  uint64_t seed = 0;
};

// Renders every (clean clip, condition) pair to out_dir/wavs and writes
// out_dir/manifest.jsonl (+ vocab sidecar). The channel vocabulary is the
// condition list in order; the speaker vocabulary preserves the clean
// manifest's order.
DatasetManifest build_corpus(const DatasetManifest& clean_manifest,
                             const std::vector<ChannelCondition>& conditions,
                             const std::filesystem::path& out_dir,
                             const CorpusOptions& opts = {});

// Deterministic vowel-sequence speech stand-in; per-speaker pitch register
// and tract length, per-utterance phone sequence, all derived from the ids.
Waveform synth_speech(const std::string& speaker_id,
                      const std::string& utterance_id, double duration_s);

// Writes a synthetic clean corpus (wavs + manifest) for demos and tests.
DatasetManifest make_clean_corpus(const std::filesystem::path& out_dir,
                                  int num_speakers, int utts_per_speaker,
                                  double duration_s, uint64_t seed = 0);

// Maps a DAPS-style directory tree (one folder per recording condition,
// files named <speaker>_<script>_<condition>.wav) onto the manifest format,
// cutting each recording into fixed-length segments.
DatasetManifest ingest_daps(const std::filesystem::path& daps_root,
                            const std::filesystem::path& out_dir,
                            double segment_s = 5.0);

}  // namespace channellift::sim
