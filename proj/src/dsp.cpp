// Copyright 2026 ChannelLift Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "channellift/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <vector>

namespace channellift::dsp {

namespace {

constexpr int kWin = StftParams::kWinLength;
constexpr int kHop = StftParams::kHopLength;
constexpr int kFft = StftParams::kFftSize;
constexpr int kBins = StftParams::kFreqBins;
// Window offset inside the FFT frame, and the resulting offset of original
// sample 0 inside the OLA buffer after center padding by kFft / 2.
constexpr int kWinOffset = (kFft - kWin) / 2;
constexpr int kEdge = kFft / 2 - kWinOffset;

// Periodic Hann embedded in a kFft-long frame, window support centered.
const torch::Tensor& padded_window() {
  static const torch::Tensor w = [] {
    torch::Tensor full = torch::zeros({kFft}, torch::kFloat64);
    auto acc = full.accessor<double, 1>();
    for (int n = 0; n < kWin; ++n) {
      acc[kWinOffset + n] =
          0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kWin);
    }
    return full.to(torch::kFloat32);
  }();
  return w;
}

torch::Tensor frame_padded(const torch::Tensor& padded, int64_t frames) {
  // [T x kFft] windowed frames at hop offsets.
  return padded.unfold(0, kFft, kHop).slice(0, 0, frames) * padded_window();
}

torch::Tensor complex_frames_to_spectrum(const torch::Tensor& frames) {
  torch::Tensor spec = torch::fft::rfft(frames, kFft, /*dim=*/1);
  return spec.slice(1, 0, kBins);  // drop Nyquist
}

void check_magnitude(const MagnitudeSpectrogram& s, const char* op) {
  if (!s.values.defined() || s.values.dim() != 2 ||
      s.values.size(1) != kBins) {
    throw ShapeError(std::string(op) + ": expected [T x 512] spectrogram");
  }
}

// OLA synthesis shared by istft and the Griffin-Lim loop. `spec` is
// [T x 512] complex; returns the (T - 1) * hop + win sample buffer.
torch::Tensor ola_synthesize(const torch::Tensor& spec) {
  const int64_t frames = spec.size(0);
  torch::Tensor full =
      torch::cat({spec, torch::zeros({frames, 1}, spec.options())}, 1);
  torch::Tensor segs = torch::fft::irfft(full, kFft, /*dim=*/1);
  segs = segs * padded_window();

  const int64_t buf_len = (frames - 1) * kHop + kFft;
  torch::Tensor acc = torch::zeros({buf_len}, torch::kFloat32);
  torch::Tensor wsum = torch::zeros({buf_len}, torch::kFloat32);
  torch::Tensor wsq = padded_window().square();
  for (int64_t t = 0; t < frames; ++t) {
    acc.slice(0, t * kHop, t * kHop + kFft) += segs[t];
    wsum.slice(0, t * kHop, t * kHop + kFft) += wsq;
  }
  acc /= wsum.clamp_min(1e-10f);
  // Keep the window support only: (T - 1) * hop + win samples.
  return acc.slice(0, kWinOffset, buf_len - kWinOffset);
}

// In-loop Griffin-Lim analysis: frames the OLA buffer directly (no extra
// padding), so analysis and synthesis are exact adjoints and the classic
// non-increasing convergence argument applies.
torch::Tensor analyze_support_buffer(const torch::Tensor& buf,
                                     int64_t frames) {
  torch::Tensor padded = torch::constant_pad_nd(
      buf, {kWinOffset, kWinOffset + kHop});  // re-center support in kFft
  return complex_frames_to_spectrum(frame_padded(padded, frames));
}

template <typename S>
S compress_impl(const S& s, const char* name) {
  if (s.compressed) {
    throw StateError(std::string(name) + ": already compressed");
  }
  if (s.values.min().template item<float>() < 0.0f) {
    throw InvalidInputError(std::string(name) + ": negative entries");
  }
  S out;
  out.values =
      s.values.to(torch::kFloat64).pow(kCompressionPower).to(torch::kFloat32);
  out.compressed = true;
  return out;
}

template <typename S>
S decompress_impl(const S& s, const char* name) {
  if (!s.compressed) {
    throw StateError(std::string(name) + ": not compressed");
  }
  if (s.values.min().template item<float>() < 0.0f) {
    throw InvalidInputError(std::string(name) + ": negative entries");
  }
  S out;
  out.values = s.values.to(torch::kFloat64)
                   .pow(1.0 / kCompressionPower)
                   .to(torch::kFloat32);
  out.compressed = false;
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

}  // namespace

int64_t num_frames(int64_t num_samples) { return 1 + num_samples / kHop; }

int64_t ola_length(int64_t frames) { return (frames - 1) * kHop + kWin; }

torch::Tensor stft_complex(const Waveform& w) {
  if (!w.samples.defined() || w.samples.numel() == 0) {
    throw InvalidInputError("stft: empty waveform");
  }
  if (w.samples.dim() != 1) {
    throw InvalidInputError("stft: waveform must be mono (1-D)");
  }
  if (w.sample_rate != kSampleRate) {
    throw InvalidInputError("stft: expected 16 kHz input, got " +
                            std::to_string(w.sample_rate) + " Hz");
  }
  check_finite(w.samples, "stft");

  const int64_t n = w.samples.numel();
  torch::Tensor padded = torch::constant_pad_nd(
      w.samples.to(torch::kFloat32), {kFft / 2, kFft / 2});
  return complex_frames_to_spectrum(frame_padded(padded, num_frames(n)));
}

MagnitudeSpectrogram stft(const Waveform& w) {
  return MagnitudeSpectrogram{stft_complex(w).abs(), false};
}

Waveform istft(const MagnitudeSpectrogram& s, const torch::Tensor& phase,
               int64_t length) {
  check_magnitude(s, "istft");
  if (s.compressed) {
    throw StateError("istft: magnitudes must be uncompressed");
  }
  if (!phase.defined() || phase.sizes() != s.values.sizes()) {
    throw InvalidInputError("istft: phase shape must match spectrogram");
  }
  check_finite(phase, "istft phase");

  torch::Tensor spec = torch::polar(s.values.to(torch::kFloat32),
                                    phase.to(torch::kFloat32));
  torch::Tensor buf = ola_synthesize(spec);
  if (length < 0) {
    return Waveform{buf, kSampleRate};
  }
  torch::Tensor out = torch::zeros({length}, torch::kFloat32);
  const int64_t avail = std::min<int64_t>(length, buf.numel() - kEdge);
  if (avail > 0) {
    out.slice(0, 0, avail) = buf.slice(0, kEdge, kEdge + avail);
  }
  return Waveform{out, kSampleRate};
}

MagnitudeSpectrogram compress(const MagnitudeSpectrogram& s) {
  check_magnitude(s, "compress");
  return compress_impl(s, "compress");
}
MelSpectrogram compress(const MelSpectrogram& s) {
  return compress_impl(s, "compress");
}
MagnitudeSpectrogram decompress(const MagnitudeSpectrogram& s) {
  check_magnitude(s, "decompress");
  return decompress_impl(s, "decompress");
}
MelSpectrogram decompress(const MelSpectrogram& s) {
  return decompress_impl(s, "decompress");
}

MelFilterbank::MelFilterbank() {
  torch::Tensor w = torch::zeros({kMelBands, kBins}, torch::kFloat64);
  auto acc = w.accessor<double, 2>();
  const double mel_max = hz_to_mel(static_cast<double>(kSampleRate) / 2);
  std::vector<double> edges(kMelBands + 2);
  for (int i = 0; i < kMelBands + 2; ++i) {
    edges[i] = mel_to_hz(mel_max * i / (kMelBands + 1));
  }
  for (int m = 0; m < kMelBands; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < kBins; ++k) {
      const double f = k * StftParams::kBinHz;
      double v = 0.0;
      if (f > lo && f < hi) {
        v = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      }
      acc[m][k] = v;
    }
  }
  weights_ = w.to(torch::kFloat32);
  lift_ = torch::linalg_pinv(w).transpose(0, 1).to(torch::kFloat32);
}

MelSpectrogram MelFilterbank::project(const MagnitudeSpectrogram& s) const {
  check_magnitude(s, "mel_project");
  if (s.compressed) {
    throw StateError("mel_project: project raw magnitudes, then compress");
  }
  return MelSpectrogram{torch::matmul(s.values, weights_.transpose(0, 1)),
                        false};
}

MagnitudeSpectrogram MelFilterbank::invert(const MelSpectrogram& m) const {
  if (!m.values.defined() || m.values.dim() != 2 ||
      m.values.size(1) != kMelBands) {
    throw ShapeError("mel_invert: expected [T x 80] input");
  }
  if (m.compressed) {
    throw StateError("mel_invert: decompress first");
  }
  return MagnitudeSpectrogram{torch::matmul(m.values, lift_).clamp_min(0.0f),
                              false};
}

const MelFilterbank& default_filterbank() {
  static const MelFilterbank fb;
  return fb;
}

MelSpectrogram mel_project(const MagnitudeSpectrogram& s) {
  return default_filterbank().project(s);
}

MagnitudeSpectrogram mel_invert(const MelSpectrogram& m) {
  return default_filterbank().invert(m);
}

GriffinLimResult griffin_lim_traced(const MagnitudeSpectrogram& s,
                                    int iterations) {
  check_magnitude(s, "griffin_lim");
  if (s.compressed) {
    throw StateError("griffin_lim: magnitudes must be uncompressed");
  }
  if (iterations < 1) {
    throw RangeError("griffin_lim: iterations must be >= 1");
  }

  const int64_t frames = s.frames();
  const torch::Tensor mag = s.values.to(torch::kFloat32);
  const double norm = mag.square().sum().item<double>();
  torch::Tensor phase = torch::zeros_like(mag);

  // Momentum-accelerated update; plain alternating projections need several
  // hundred iterations to reach comparable error.
  constexpr float kMomentum = 0.9f;
  GriffinLimResult result;
  torch::Tensor buf, prev;
  for (int it = 0; it < iterations; ++it) {
    buf = ola_synthesize(torch::polar(mag, phase));
    torch::Tensor spec = analyze_support_buffer(buf, frames);
    torch::Tensor step = spec;
    if (prev.defined()) {
      step = spec - (kMomentum / (1.0f + kMomentum)) * prev;
    }
    phase = torch::angle(step);
    prev = spec;
    const double err = (spec.abs() - mag).square().sum().item<double>();
    result.convergence.push_back(norm > 0 ? std::sqrt(err / norm) : 0.0);
  }
  buf = ola_synthesize(torch::polar(mag, phase));
  const int64_t out_len = (frames - 1) * kHop;
  torch::Tensor out = torch::zeros({out_len}, torch::kFloat32);
  const int64_t avail = std::min<int64_t>(out_len, buf.numel() - kEdge);
  if (avail > 0) {
    out.slice(0, 0, avail) = buf.slice(0, kEdge, kEdge + avail);
  }
  result.waveform = Waveform{out, kSampleRate};
  return result;
}

Waveform griffin_lim(const MagnitudeSpectrogram& s, int iterations) {
  return griffin_lim_traced(s, iterations).waveform;
}

namespace {

double kaiser(double x, double beta) {
  // x in [-1, 1]
  const double arg = beta * std::sqrt(std::max(0.0, 1.0 - x * x));
  return std::cyl_bessel_i(0.0, arg) / std::cyl_bessel_i(0.0, beta);
}

}  // namespace

torch::Tensor resample(const torch::Tensor& samples, int from_rate,
                       int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) {
    throw RangeError("resample: rates must be positive");
  }
  torch::Tensor x64 = samples.to(torch::kFloat64).contiguous();
  if (from_rate == to_rate) {
    return x64.to(torch::kFloat32);
  }
  const int64_t g = std::gcd(from_rate, to_rate);
  const int64_t p = to_rate / g;   // upsample factor
  const int64_t q = from_rate / g; // downsample factor

  constexpr int kHalfWidth = 32;  // in input samples
  constexpr double kBeta = 12.0;
  constexpr double kRolloff = 0.945;
  const double cutoff =
      kRolloff * std::min(1.0, static_cast<double>(p) / q);

  const int64_t n_in = x64.numel();
  const int64_t n_out = (n_in * p) / q;
  const double* x = x64.data_ptr<double>();

  // One tap table per output phase: out sample m sits at input time
  // m * q / p = floor + (m * q mod p) / p.
  std::vector<std::vector<double>> taps(static_cast<size_t>(p));
  for (int64_t ph = 0; ph < p; ++ph) {
    const double frac = static_cast<double>(ph) / p;
    auto& row = taps[static_cast<size_t>(ph)];
    row.resize(2 * kHalfWidth + 1);
    for (int j = -kHalfWidth; j <= kHalfWidth; ++j) {
      const double t = j - frac;
      double sinc = cutoff;
      if (t != 0.0) {
        sinc = std::sin(std::numbers::pi * cutoff * t) /
               (std::numbers::pi * t);
      }
      row[static_cast<size_t>(j + kHalfWidth)] =
          sinc * kaiser(t / kHalfWidth, kBeta);
    }
  }

  torch::Tensor out = torch::zeros({n_out}, torch::kFloat64);
  double* y = out.data_ptr<double>();
  for (int64_t m = 0; m < n_out; ++m) {
    const int64_t num = m * q;
    const int64_t base = num / p;
    const auto& row = taps[static_cast<size_t>(num % p)];
    double acc = 0.0;
    for (int j = -kHalfWidth; j <= kHalfWidth; ++j) {
      const int64_t k = base + j;
      if (k >= 0 && k < n_in) {
        acc += x[k] * row[static_cast<size_t>(j + kHalfWidth)];
      }
    }
    y[m] = acc;
  }
  return out.to(torch::kFloat32);
}

namespace {

struct RiffReader {
  std::ifstream in;

  explicit RiffReader(const std::filesystem::path& path)
      : in(path, std::ios::binary) {}

  uint32_t u32() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  }
  uint16_t u16() {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  std::string tag() {
    char b[4];
    in.read(b, 4);
    return std::string(b, 4);
  }
};

void put_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}
void put_u16(std::ofstream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  RiffReader r(path);
  if (!r.in) {
    throw IoError("load_wav: cannot open " + path.string());
  }
  if (r.tag() != "RIFF") {
    throw InvalidInputError("load_wav: not a RIFF file: " + path.string());
  }
  r.u32();  // riff size
  if (r.tag() != "WAVE") {
    throw InvalidInputError("load_wav: not a WAVE file: " + path.string());
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<int16_t> pcm;
  bool have_fmt = false, have_data = false;
  while (r.in && !(have_fmt && have_data)) {
    const std::string id = r.tag();
    const uint32_t size = r.u32();
    if (!r.in) break;
    if (id == "fmt ") {
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      if (size > 16) r.in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (id == "data") {
      pcm.resize(size / 2);
      r.in.read(reinterpret_cast<char*>(pcm.data()),
                static_cast<std::streamsize>(pcm.size() * 2));
      pcm.resize(static_cast<size_t>(r.in.gcount()) / 2);
      have_data = true;
    } else {
      r.in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data) {
    throw InvalidInputError("load_wav: missing fmt/data chunk: " +
                            path.string());
  }
  if (format != 1 || bits != 16) {
    throw InvalidInputError(
        "load_wav: only 16-bit PCM supported: " + path.string());
  }
  if (channels == 0 || rate == 0 || pcm.empty()) {
    throw InvalidInputError("load_wav: empty or corrupt file: " +
                            path.string());
  }

  const int64_t frames = static_cast<int64_t>(pcm.size()) / channels;
  torch::Tensor mono = torch::zeros({frames}, torch::kFloat32);
  float* dst = mono.data_ptr<float>();
  for (int64_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      acc += pcm[static_cast<size_t>(i * channels + c)];
    }
    dst[i] = static_cast<float>(acc / (32768.0 * channels));
  }
  if (static_cast<int>(rate) != kSampleRate) {
    mono = resample(mono, static_cast<int>(rate), kSampleRate);
  }
  return Waveform{mono, kSampleRate};
}

void save_wav(const std::filesystem::path& path, const Waveform& w) {
  if (!w.samples.defined() || w.samples.dim() != 1) {
    throw InvalidInputError("save_wav: expected mono waveform");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("save_wav: cannot open " + path.string());
  }
  torch::Tensor clamped =
      w.samples.to(torch::kFloat64).clamp(-1.0, 1.0).contiguous();
  const double* x = clamped.data_ptr<double>();
  const int64_t n = clamped.numel();
  std::vector<int16_t> pcm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    pcm[static_cast<size_t>(i)] =
        static_cast<int16_t>(std::lround(x[i] * 32767.0));
  }
  const uint32_t data_bytes = static_cast<uint32_t>(n * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(w.sample_rate));
  put_u32(out, static_cast<uint32_t>(w.sample_rate * 2));
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  out.write(reinterpret_cast<const char*>(pcm.data()), data_bytes);
  if (!out) {
    throw IoError("save_wav: write failed: " + path.string());
  }
}

}  // namespace channellift::dsp
