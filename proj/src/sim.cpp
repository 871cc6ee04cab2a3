// Copyright 2026 ChannelLift Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "channellift/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "channellift/dsp.hpp"

namespace channellift::sim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEqBaseHz = 62.5;  // band k centered at 62.5 * 2^k

torch::Tensor fft_convolve(const torch::Tensor& x, const torch::Tensor& h) {
  const int64_t n = x.numel() + h.numel() - 1;
  int64_t fft = 1;
  while (fft < n) fft <<= 1;
  auto X = torch::fft::rfft(x.to(torch::kFloat64), fft);
  auto H = torch::fft::rfft(h.to(torch::kFloat64), fft);
  return torch::fft::irfft(X * H, fft).slice(0, 0, n);
}

// Zero-phase octave-band EQ: dB gains interpolated linearly over log2(f).
torch::Tensor apply_eq(const torch::Tensor& x,
                       const std::array<double, 8>& gains_db) {
  if (std::all_of(gains_db.begin(), gains_db.end(),
                  [](double g) { return g == 0.0; })) {
    return x;
  }
  const int64_t n = x.numel();
  int64_t fft = 1;
  while (fft < n) fft <<= 1;
  auto X = torch::fft::rfft(x.to(torch::kFloat64), fft);
  const int64_t bins = X.numel();
  torch::Tensor gain = torch::ones({bins}, torch::kFloat64);
  auto g = gain.accessor<double, 1>();
  for (int64_t k = 0; k < bins; ++k) {
    const double f = static_cast<double>(k) * kSampleRate / fft;
    double pos = f > 0 ? std::log2(f / kEqBaseHz) : 0.0;
    pos = std::clamp(pos, 0.0, 7.0);
    const int lo = static_cast<int>(pos);
    const int hi = std::min(lo + 1, 7);
    const double frac = pos - lo;
    const double db = gains_db[lo] * (1.0 - frac) + gains_db[hi] * frac;
    g[k] = std::pow(10.0, db / 20.0);
  }
  return torch::fft::irfft(X * gain, fft).slice(0, 0, n);
}

torch::Tensor gen_noise(NoiseKind kind, int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  torch::Tensor out = torch::zeros({n}, torch::kFloat64);
  double* y = out.data_ptr<double>();
  switch (kind) {
    case NoiseKind::kWhite:
      for (int64_t i = 0; i < n; ++i) y[i] = gauss(rng);
      break;
    case NoiseKind::kBabble: {
      // Speech-band shaped noise with slow amplitude modulation.
      for (int64_t i = 0; i < n; ++i) y[i] = gauss(rng);
      std::array<double, 8> tilt{-18, -6, 0, 0, -2, -6, -12, -24};
      out = apply_eq(out, tilt);
      y = out.data_ptr<double>();
      std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
      const double p1 = ph(rng), p2 = ph(rng), p3 = ph(rng);
      for (int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        const double env = 1.0 + 0.45 * std::sin(2 * kPi * 2.3 * t + p1) +
                           0.30 * std::sin(2 * kPi * 4.1 * t + p2) +
                           0.20 * std::sin(2 * kPi * 6.7 * t + p3);
        y[i] *= std::max(0.05, env);
      }
      break;
    }
    case NoiseKind::kHum: {
      std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
      double phases[5];
      for (auto& p : phases) p = ph(rng);
      for (int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        double v = 0.0;
        for (int h = 1; h <= 5; ++h) {
          v += std::pow(0.5, h - 1) *
               std::sin(2 * kPi * 50.0 * h * t + phases[h - 1]);
        }
        y[i] = v + 0.02 * gauss(rng);
      }
      break;
    }
  }
  const double power = out.square().mean().item<double>();
  if (power > 0) out /= std::sqrt(power);
  return out;
}

// Content identity shared across speakers: the utterance id minus its
// speaker prefix when present ("spk3_utt1" -> "utt1").
std::string content_key(const ClipRecord& r) {
  const std::string prefix = r.speaker_id + "_";
  if (r.utterance_id.rfind(prefix, 0) == 0) {
    return r.utterance_id.substr(prefix.size());
  }
  return r.utterance_id;
}

// Unseen-everything split: test clips are unseen in speaker, content, and
// condition at once; partially-unseen combinations are dropped. The clean
// condition is exempt from the condition axis so that test content keeps an
// aligned clean target.
std::string split_of(bool unseen, bool spk_held, bool content_held,
                     bool cond_held, bool cond_is_clean) {
  if (!unseen) return "train";
  if (cond_is_clean) {
    if (spk_held && content_held) return "test";
    if (!spk_held && !content_held) return "train";
    return "";
  }
  if (spk_held && content_held && cond_held) return "test";
  if (!spk_held && !content_held && !cond_held) return "train";
  return "";
}

}  // namespace

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "white") return NoiseKind::kWhite;
  if (s == "babble") return NoiseKind::kBabble;
  if (s == "hum") return NoiseKind::kHum;
  throw InvalidInputError("unknown noise kind '" + s + "'");
}

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kBabble: return "babble";
    case NoiseKind::kHum: return "hum";
  }
  throw RangeError("bad NoiseKind");
}

void validate(const ChannelCondition& cond) {
  if (cond.condition_id.empty()) {
    throw InvalidInputError("condition needs a condition_id");
  }
  if (!(cond.rt60_s >= 0.0 && cond.rt60_s <= 2.0)) {
    throw RangeError("condition '" + cond.condition_id +
                     "': rt60_s must be in [0, 2]");
  }
  if (!(cond.snr_db >= -5.0 && cond.snr_db <= 60.0)) {
    throw RangeError("condition '" + cond.condition_id +
                     "': snr_db must be in [-5, 60]");
  }
}

std::vector<ChannelCondition> load_conditions(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) {
    throw IoError("load_conditions: cannot open " + json_path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidInputError("load_conditions: " + json_path.string() + ": " +
                            e.what());
  }
  std::vector<ChannelCondition> out;
  try {
    for (const auto& item : j.at("conditions")) {
      ChannelCondition c;
      c.condition_id = item.at("condition_id").get<std::string>();
      c.rt60_s = item.value("rt60_s", 0.0);
      c.snr_db = item.value("snr_db", 60.0);
      c.noise_kind =
          noise_kind_from_string(item.value("noise_kind", "white"));
      if (item.contains("eq_gains_db")) {
        auto v = item.at("eq_gains_db").get<std::vector<double>>();
        if (v.size() != 8) {
          throw InvalidInputError("condition '" + c.condition_id +
                                  "': eq_gains_db needs 8 entries");
        }
        std::copy(v.begin(), v.end(), c.eq_gains_db.begin());
      }
      c.seed = item.value("seed", 0ull);
      validate(c);
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw InvalidInputError("load_conditions: " + json_path.string() + ": " +
                            e.what());
  }
  if (out.empty()) {
    throw InvalidInputError("load_conditions: no conditions in " +
                            json_path.string());
  }
  std::set<std::string> ids;
  for (const auto& c : out) {
    if (!ids.insert(c.condition_id).second) {
      throw InvalidInputError("load_conditions: duplicate condition_id '" +
                              c.condition_id + "'");
    }
  }
  return out;
}

void save_conditions(const fs::path& json_path,
                     const std::vector<ChannelCondition>& conditions) {
  json arr = json::array();
  for (const auto& c : conditions) {
    arr.push_back({{"condition_id", c.condition_id},
                   {"rt60_s", c.rt60_s},
                   {"snr_db", c.snr_db},
                   {"noise_kind", to_string(c.noise_kind)},
                   {"eq_gains_db", c.eq_gains_db},
                   {"seed", c.seed}});
  }
  std::ofstream out(json_path);
  if (!out) {
    throw IoError("save_conditions: cannot open " + json_path.string());
  }
  out << json{{"conditions", arr}}.dump(2) << "\n";
}

Waveform synth_rir(const ChannelCondition& cond) {
  validate(cond);
  if (cond.rt60_s == 0.0) {
    return Waveform{torch::ones({1}, torch::kFloat32), kSampleRate};
  }
  const double fs = kSampleRate;
  const int64_t len =
      std::max<int64_t>(2, std::llround(1.25 * cond.rt60_s * fs));
  torch::Tensor h = torch::zeros({len}, torch::kFloat64);
  double* p = h.data_ptr<double>();
  p[0] = 1.0;
  // Tail level set for a fixed -2 dB direct-to-reverberant energy ratio.
  const double decay = 6.907755278982137 / (fs * cond.rt60_s);  // ln(1e3)/T
  const double tail_energy = std::pow(10.0, 0.2);
  const double a = std::sqrt(tail_energy * 2.0 * decay);
  std::mt19937_64 rng(mix_seed(cond.seed, fnv1a64("rir")));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int64_t k = 1; k < len; ++k) {
    p[k] = a * gauss(rng) * std::exp(-decay * static_cast<double>(k));
  }
  return Waveform{h.to(torch::kFloat32), kSampleRate};
}

Waveform apply_condition(const Waveform& clean, const ChannelCondition& cond,
                         ApplyDetails* details,
                         std::optional<uint64_t> noise_seed) {
  validate(cond);
  if (!clean.samples.defined() || clean.samples.numel() == 0) {
    throw InvalidInputError("apply_condition: empty input");
  }
  const int64_t n = clean.samples.numel();

  Waveform rir = synth_rir(cond);
  torch::Tensor speech =
      rir.samples.numel() == 1
          ? clean.samples.to(torch::kFloat64) *
                rir.samples[0].item<double>()
          : fft_convolve(clean.samples, rir.samples).slice(0, 0, n);
  speech = apply_eq(speech, cond.eq_gains_db);

  const uint64_t nseed =
      noise_seed.value_or(mix_seed(cond.seed, fnv1a64("noise")));
  torch::Tensor noise = gen_noise(cond.noise_kind, n, nseed);
  const double p_speech = speech.square().mean().item<double>();
  const double target = p_speech / std::pow(10.0, cond.snr_db / 10.0);
  noise *= std::sqrt(target);  // gen_noise output has unit power

  torch::Tensor mixed = speech + noise;
  const double peak = mixed.abs().max().item<double>();
  const double scale = peak > 0.99 ? 0.99 / peak : 1.0;
  mixed *= scale;

  if (details) {
    details->speech_component = (speech * scale).to(torch::kFloat32);
    details->noise_component = (noise * scale).to(torch::kFloat32);
    details->scale = scale;
  }
  return Waveform{mixed.to(torch::kFloat32), kSampleRate};
}

DatasetManifest build_corpus(const DatasetManifest& clean_manifest,
                             const std::vector<ChannelCondition>& conditions,
                             const fs::path& out_dir,
                             const CorpusOptions& opts) {
  if (clean_manifest.records.empty()) {
    throw InvalidInputError("build_corpus: empty clean manifest");
  }
  if (conditions.size() < 2) {
    throw InvalidInputError("build_corpus: need at least 2 conditions");
  }
  if (clean_manifest.speaker_vocab.size() < 2) {
    throw InvalidInputError("build_corpus: need at least 2 speakers");
  }
  for (const auto& c : conditions) validate(c);

  std::error_code ec;
  fs::create_directories(out_dir / "wavs", ec);
  if (ec) {
    throw IoError("build_corpus: cannot create " +
                  (out_dir / "wavs").string());
  }

  // Deterministic holdout selection for the unseen-everything protocol.
  std::set<std::string> held_speakers, held_utts, held_conds;
  if (opts.unseen_protocol) {
    std::mt19937_64 rng(mix_seed(opts.seed, fnv1a64("holdout")));
    auto pick = [&rng](std::vector<std::string> pool, int k,
                       std::set<std::string>& dst) {
      std::shuffle(pool.begin(), pool.end(), rng);
      for (int i = 0; i < k && i < static_cast<int>(pool.size()) - 1; ++i) {
        dst.insert(pool[static_cast<size_t>(i)]);
      }
    };
    pick(clean_manifest.speaker_vocab, opts.holdout_speakers, held_speakers);
    std::vector<std::string> contents;
    for (const auto& r : clean_manifest.records) {
      const std::string key = content_key(r);
      if (std::find(contents.begin(), contents.end(), key) ==
          contents.end()) {
        contents.push_back(key);
      }
    }
    pick(contents, opts.holdout_utterances, held_utts);
    std::vector<std::string> conds;
    for (size_t i = 1; i < conditions.size(); ++i) {
      conds.push_back(conditions[i].condition_id);
    }
    pick(conds, opts.holdout_conditions, held_conds);
  }

  DatasetManifest out;
  for (const auto& c : conditions) {
    out.channel_vocab.push_back(c.condition_id);
  }
  out.speaker_vocab = clean_manifest.speaker_vocab;

  for (const auto& rec : clean_manifest.records) {
    Waveform clean = dsp::load_wav(rec.audio_path);
    for (const auto& cond : conditions) {
      const bool is_clean = cond.condition_id == conditions[0].condition_id;
      const std::string split =
          split_of(opts.unseen_protocol, held_speakers.count(rec.speaker_id),
                   held_utts.count(content_key(rec)),
                   held_conds.count(cond.condition_id), is_clean);
      if (split.empty()) continue;
      const uint64_t noise_seed =
          mix_seed(fnv1a64(rec.utterance_id), cond.seed);
      Waveform degraded =
          apply_condition(clean, cond, nullptr, noise_seed);
      const fs::path wav_path =
          out_dir / "wavs" /
          (rec.utterance_id + "__" + cond.condition_id + ".wav");
      dsp::save_wav(wav_path, degraded);
      out.records.push_back(ClipRecord{wav_path.string(), rec.speaker_id,
                                       cond.condition_id, rec.utterance_id,
                                       split, degraded.duration_s()});
    }
  }
  save_manifest(out_dir / "manifest.jsonl", out);
  return out;
}

Waveform synth_speech(const std::string& speaker_id,
                      const std::string& utterance_id, double duration_s) {
  if (duration_s <= 0.0) {
    throw RangeError("synth_speech: duration must be positive");
  }
  const uint64_t spk_seed = fnv1a64(speaker_id);
  std::mt19937_64 spk_rng(spk_seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double f0_base = 95.0 + 130.0 * uni(spk_rng);   // pitch register
  const double tract = 0.85 + 0.3 * uni(spk_rng);       // formant scale
  // A per-speaker inventory of vowel-like formant pairs.
  std::array<std::array<double, 2>, 5> vowels{};
  for (auto& v : vowels) {
    v[0] = tract * (300.0 + 500.0 * uni(spk_rng));
    v[1] = tract * (900.0 + 1600.0 * uni(spk_rng));
  }

  std::mt19937_64 rng(mix_seed(spk_seed, fnv1a64(utterance_id)));
  const int64_t n = static_cast<int64_t>(duration_s * kSampleRate);
  torch::Tensor out = torch::zeros({n}, torch::kFloat64);
  double* y = out.data_ptr<double>();
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Fast attack, slower release; abrupt enough that band energies vary
  // strongly from frame to frame, as in natural speech.
  auto envelope = [](double u, double attack, double release) {
    if (u < attack) return u / attack;
    if (u > 1.0 - release) return (1.0 - u) / release;
    return 1.0;
  };

  int64_t pos = 0;
  int syllables = 0;
  while (pos < n) {
    ++syllables;
    const double kind = uni(rng);
    if (kind < 0.68) {
      // voiced vowel-like syllable
      const int64_t seg =
          static_cast<int64_t>((0.07 + 0.13 * uni(rng)) * kSampleRate);
      const auto& vowel = vowels[static_cast<size_t>(rng() % vowels.size())];
      const double f0 = f0_base * (0.9 + 0.25 * uni(rng));
      const double drift = (uni(rng) - 0.5) * 0.3;
      const double loud = 0.6 + 0.4 * uni(rng);
      double phase = uni(rng) * 2 * kPi;
      const int64_t end = std::min(n, pos + seg);
      for (int64_t i = pos; i < end; ++i) {
        const double u = static_cast<double>(i - pos) / seg;
        const double env = envelope(u, 0.12, 0.25);
        const double f = f0 * (1.0 + drift * u);
        phase += 2 * kPi * f / kSampleRate;
        double v = 0.0;
        for (int h = 1; h <= 24; ++h) {
          const double fh = f * h;
          if (fh > 6800.0) break;
          const double res =
              1.8 * std::exp(-std::pow((fh - vowel[0]) / 190.0, 2)) +
              1.0 * std::exp(-std::pow((fh - vowel[1]) / 260.0, 2)) +
              0.5 * std::exp(-std::pow((fh - tract * 2900.0) / 380.0, 2));
          v += (0.35 / h + res / h) * std::sin(phase * h);
        }
        y[i] = 0.3 * loud * env * v;
      }
      pos = end;
    } else if (kind < 0.9) {
      // fricative-like burst: high-band noise with a sharp onset
      const int64_t seg =
          static_cast<int64_t>((0.035 + 0.08 * uni(rng)) * kSampleRate);
      const double center = 2800.0 + 3200.0 * uni(rng);
      const double width = 900.0 + 900.0 * uni(rng);
      const int64_t end = std::min(n, pos + seg);
      double s1 = 0.0, s2 = 0.0;  // resonator state
      const double r = std::exp(-2 * kPi * width / kSampleRate);
      const double w0 = 2 * kPi * center / kSampleRate;
      const double a1 = 2 * r * std::cos(w0), a2 = -r * r;
      for (int64_t i = pos; i < end; ++i) {
        const double u = static_cast<double>(i - pos) / seg;
        const double env = envelope(u, 0.08, 0.3);
        const double s0 = gauss(rng) + a1 * s1 + a2 * s2;
        s2 = s1;
        s1 = s0;
        y[i] = 0.03 * env * s0;
      }
      pos = end;
    }
    // inter-syllable gap; longer pause at about every sixth syllable
    const double pause =
        (syllables % 6 == 0) ? 0.1 + 0.12 * uni(rng) : 0.015 + 0.05 * uni(rng);
    pos += static_cast<int64_t>(pause * kSampleRate);
  }
  // faint breath noise bed
  for (int64_t i = 0; i < n; ++i) y[i] += 0.002 * gauss(rng);
  // keep headroom
  const double peak = out.abs().max().item<double>();
  if (peak > 0.95) out *= 0.95 / peak;
  return Waveform{out.to(torch::kFloat32), kSampleRate};
}

DatasetManifest make_clean_corpus(const fs::path& out_dir, int num_speakers,
                                  int utts_per_speaker, double duration_s,
                                  uint64_t seed) {
  if (num_speakers < 1 || utts_per_speaker < 1) {
    throw RangeError("make_clean_corpus: counts must be positive");
  }
  std::error_code ec;
  fs::create_directories(out_dir / "clean", ec);
  if (ec) {
    throw IoError("make_clean_corpus: cannot create " + out_dir.string());
  }
  DatasetManifest m;
  for (int s = 0; s < num_speakers; ++s) {
    const std::string spk = "spk" + std::to_string(s);
    m.speaker_vocab.push_back(spk);
    for (int u = 0; u < utts_per_speaker; ++u) {
      const std::string utt =
          spk + "_utt" + std::to_string(u) + "_s" + std::to_string(seed);
      Waveform w = synth_speech(spk + std::to_string(seed), utt, duration_s);
      const fs::path p = out_dir / "clean" / (utt + ".wav");
      dsp::save_wav(p, w);
      m.records.push_back(
          ClipRecord{p.string(), spk, "clean", utt, "train", duration_s});
    }
  }
  m.channel_vocab = {"clean"};
  save_manifest(out_dir / "clean_manifest.jsonl", m);
  return m;
}

DatasetManifest ingest_daps(const fs::path& daps_root,
                            const fs::path& out_dir, double segment_s) {
  if (segment_s <= 0.0) {
    throw RangeError("ingest_daps: segment_s must be positive");
  }
  if (!fs::is_directory(daps_root)) {
    throw IoError("ingest_daps: not a directory: " + daps_root.string());
  }
  std::error_code ec;
  fs::create_directories(out_dir / "wavs", ec);

  std::vector<std::string> conditions;
  for (const auto& e : fs::directory_iterator(daps_root)) {
    if (e.is_directory()) conditions.push_back(e.path().filename().string());
  }
  std::sort(conditions.begin(), conditions.end());
  if (conditions.empty()) {
    throw InvalidInputError("ingest_daps: no condition folders under " +
                            daps_root.string());
  }

  DatasetManifest m;
  m.channel_vocab = conditions;
  std::set<std::string> speakers;
  const int64_t seg_len = static_cast<int64_t>(segment_s * kSampleRate);
  for (const auto& cond : conditions) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(daps_root / cond)) {
      if (e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string stem = f.stem().string();
      const auto p1 = stem.find('_');
      const auto p2 = stem.find('_', p1 + 1);
      if (p1 == std::string::npos || p2 == std::string::npos) {
        throw InvalidInputError(
            "ingest_daps: expected <speaker>_<script>_<condition>.wav, got " +
            f.filename().string());
      }
      const std::string speaker = stem.substr(0, p1);
      const std::string script = stem.substr(p1 + 1, p2 - p1 - 1);
      speakers.insert(speaker);
      Waveform w = dsp::load_wav(f);
      const int64_t segments = w.size() / seg_len;
      for (int64_t k = 0; k < segments; ++k) {
        const std::string utt =
            speaker + "_" + script + "_seg" + std::to_string(k);
        Waveform piece{w.samples.slice(0, k * seg_len, (k + 1) * seg_len),
                       kSampleRate};
        const fs::path p = out_dir / "wavs" / (utt + "__" + cond + ".wav");
        dsp::save_wav(p, piece);
        m.records.push_back(ClipRecord{p.string(), speaker, cond, utt,
                                       "train", segment_s});
      }
    }
  }
  m.speaker_vocab.assign(speakers.begin(), speakers.end());
  save_manifest(out_dir / "manifest.jsonl", m);
  return m;
}

}  // namespace channellift::sim
