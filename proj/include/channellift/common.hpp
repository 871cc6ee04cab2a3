// Copyright 2026 ChannelLift Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace channellift {

// Error taxonomy used across the library. The CLI maps each class to a
// distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract input data (empty signal, non-finite values,
// negative magnitudes, too-short reference, ...).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Operation applied to an object in the wrong state (compressing an already
// compressed spectrogram, projecting compressed magnitudes, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

// Tensor dimensions do not match the declared contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Scalar parameter outside its documented range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Filesystem or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Checkpoint does not match the model or config it is loaded into.
class CheckpointMismatchError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kSampleRate = 16000;

// Mono 16 kHz waveform. `samples` is a 1-D float32 CPU tensor with values
// nominally in [-1, 1].
struct Waveform {
  torch::Tensor samples;
  int sample_rate = kSampleRate;

  int64_t size() const { return samples.defined() ? samples.numel() : 0; }
  double duration_s() const {
    return static_cast<double>(size()) / sample_rate;
  }
};

inline void check_finite(const torch::Tensor& t, std::string_view what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw InvalidInputError(std::string(what) + ": non-finite values");
  }
}

// FNV-1a, used for stable content addressing (per-clip seeds, config
// hashes). Stable across platforms, unlike std::hash.
inline uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the xor of the two parts.
  uint64_t z = (a ^ 0x9e3779b97f4a7c15ull) + b;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Pins libtorch to one intra-op thread. Results of threaded reductions then
// cannot depend on scheduling, which the reproducibility contract requires.
inline void configure_determinism() {
  static bool done = false;
  if (!done) {
    at::set_num_threads(1);
    done = true;
  }
}

}  // namespace channellift
