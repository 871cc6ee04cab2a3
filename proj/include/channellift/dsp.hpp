// Copyright 2026 ChannelLift Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <string>

#include "channellift/common.hpp"

namespace channellift::dsp {

// Fixed analysis grid: 50 ms periodic Hann window, 12.5 ms hop, 1024-point
// FFT with the window centered in the frame. The Nyquist bin is dropped so
// spectrograms carry 512 frequency bins.
struct StftParams {
  static constexpr int kWinLength = 800;
  static constexpr int kHopLength = 200;
  static constexpr int kFftSize = 1024;
  static constexpr int kFreqBins = 512;
  static constexpr double kBinHz =
      static_cast<double>(kSampleRate) / kFftSize;
};

inline constexpr double kCompressionPower = 0.3;
inline constexpr int kMelBands = 80;

// Non-negative [T x 512] time-frequency grid. `compressed` marks power-law
// compressed values (magnitude^0.3).
struct MagnitudeSpectrogram {
  torch::Tensor values;
  bool compressed = false;

  int64_t frames() const { return values.size(0); }
  int64_t bins() const { return values.size(1); }
};

// [T x 80] Mel-band grid with the same framing as its source spectrogram.
struct MelSpectrogram {
  torch::Tensor values;
  bool compressed = false;

  int64_t frames() const { return values.size(0); }
  int64_t bands() const { return values.size(1); }
};

// Frame count of a center-padded analysis: 1 + floor(n / hop).
int64_t num_frames(int64_t num_samples);

// Overlap-add buffer length backing T frames: (T - 1) * hop + window.
int64_t ola_length(int64_t num_frames);

// Complex STFT, [T x 512] complex64, Nyquist bin dropped.
torch::Tensor stft_complex(const Waveform& w);

MagnitudeSpectrogram stft(const Waveform& w);

// Weighted overlap-add synthesis. Without `length` the full OLA buffer of
// (T - 1) * hop + window samples is returned; with `length` the center
// padding is removed and the result cut or zero-padded to `length`.
Waveform istft(const MagnitudeSpectrogram& s, const torch::Tensor& phase,
               int64_t length = -1);

MagnitudeSpectrogram compress(const MagnitudeSpectrogram& s);
MelSpectrogram compress(const MelSpectrogram& s);
MagnitudeSpectrogram decompress(const MagnitudeSpectrogram& s);
MelSpectrogram decompress(const MelSpectrogram& s);

// 80 triangular filters on the mel scale spanning 0-8000 Hz, peak gain 1.
class MelFilterbank {
 public:
  MelFilterbank();

  // [80 x 512] filter matrix.
  const torch::Tensor& weights() const { return weights_; }

  MelSpectrogram project(const MagnitudeSpectrogram& s) const;

  // Pseudo-inverse lift back to 512 bins, clamped to be non-negative.
  MagnitudeSpectrogram invert(const MelSpectrogram& m) const;

 private:
  torch::Tensor weights_;
  torch::Tensor lift_;  // [80 x 512] transposed pseudo-inverse
};

const MelFilterbank& default_filterbank();

MelSpectrogram mel_project(const MagnitudeSpectrogram& s);
MagnitudeSpectrogram mel_invert(const MelSpectrogram& m);

struct GriffinLimResult {
  Waveform waveform;
  // || |STFT(y_k)| - S ||_F / ||S||_F after each iteration.
  std::vector<double> convergence;
};

// Iterative phase reconstruction from zero initial phase. Deterministic.
// The returned waveform has (T - 1) * hop samples, aligned so that
// stft(result) covers the same T frames.
Waveform griffin_lim(const MagnitudeSpectrogram& s, int iterations = 60);
GriffinLimResult griffin_lim_traced(const MagnitudeSpectrogram& s,
                                    int iterations);

// Windowed-sinc rational-ratio resampler (zero phase).
torch::Tensor resample(const torch::Tensor& samples, int from_rate,
                       int to_rate);

// Reads a 16-bit PCM WAV of any rate and channel count; downmixes to mono
// and resamples to 16 kHz.
Waveform load_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM at the waveform's sample rate.
void save_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace channellift::dsp
