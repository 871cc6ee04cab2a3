// Copyright 2026 ChannelLift Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <fstream>

#include "channellift/dsp.hpp"
#include "channellift/sim.hpp"
#include "doctest_compat.hpp"
#include "testutil.hpp"

using namespace channellift;
namespace fs = std::filesystem;

namespace {

// Schroeder backward integration + line fit over the [-5, -25] dB stretch,
// extrapolated to -60 dB.
double schroeder_rt60(const torch::Tensor& rir) {
  auto h = rir.to(torch::kFloat64);
  auto e = h.square();
  auto tail = e.flip(0).cumsum(0).flip(0);  // E(n) = sum_{k>=n} h^2
  const double e0 = tail[0].item<double>();
  std::vector<double> xs, ys;
  for (int64_t n = 0; n < tail.numel(); ++n) {
    const double db = 10.0 * std::log10(tail[n].item<double>() / e0 + 1e-30);
    if (db <= -5.0 && db >= -25.0) {
      xs.push_back(static_cast<double>(n) / kSampleRate);
      ys.push_back(db);
    }
  }
  REQUIRE(xs.size() > 10);
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i]; sy += ys[i]; sxx += xs[i] * xs[i]; sxy += xs[i] * ys[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -60.0 / slope;
}

// Lag-1 Pearson autocorrelation of log band energies over non-overlapping
// frames (every 4th frame of the 75%-overlap grid).
double lag1_band_autocorr(const Waveform& w) {
  auto mel = dsp::mel_project(dsp::stft(w)).values.to(torch::kFloat64);
  mel = (mel + 1e-5).log10();
  mel = mel.slice(0, 0, mel.size(0), 4);
  const int64_t T = mel.size(0);
  double acc = 0.0;
  int64_t used = 0;
  for (int64_t b = 0; b < mel.size(1); ++b) {
    auto x = mel.slice(0, 0, T - 1).select(1, b);
    auto y = mel.slice(0, 1, T).select(1, b);
    auto xc = x - x.mean();
    auto yc = y - y.mean();
    const double den =
        std::sqrt((xc.square().sum() * yc.square().sum()).item<double>());
    if (den > 1e-12) {
      acc += (xc * yc).sum().item<double>() / den;
      ++used;
    }
  }
  REQUIRE(used > 0);
  return acc / static_cast<double>(used);
}

sim::ChannelCondition identity_condition() {
  sim::ChannelCondition c;
  c.condition_id = "studio";
  c.rt60_s = 0.0;
  c.snr_db = 60.0;
  c.noise_kind = sim::NoiseKind::kWhite;
  c.seed = 1;
  return c;
}

}  // namespace

TEST_CASE("synth_rir identity, determinism, and decay") {
  auto ident = identity_condition();
  auto rir0 = sim::synth_rir(ident);
  CHECK(rir0.size() == 1);
  CHECK(rir0.samples[0].item<float>() == 1.0f);

  sim::ChannelCondition c = ident;
  c.condition_id = "room";
  c.rt60_s = 0.5;
  c.seed = 42;
  auto a = sim::synth_rir(c);
  auto b = sim::synth_rir(c);
  CHECK(torch::equal(a.samples, b.samples));

  const double est = schroeder_rt60(a.samples);
  CHECK(est > 0.4);
  CHECK(est < 0.6);

  c.rt60_s = 2.5;
  CHECK_THROWS_AS(sim::synth_rir(c), RangeError);
}

TEST_CASE("apply_condition near-identity passthrough") {
  auto clean = sim::synth_speech("spkA", "utt0", 1.5);
  auto out = sim::apply_condition(clean, identity_condition());
  CHECK(out.size() == clean.size());
  CHECK(cltest::snr_db(clean.samples, out.samples) > 40.0);
}

TEST_CASE("apply_condition hits the requested SNR") {
  auto clean = sim::synth_speech("spkA", "utt1", 1.5);
  sim::ChannelCondition c = identity_condition();
  c.condition_id = "noisy";
  c.snr_db = 0.0;
  c.rt60_s = 0.2;
  c.eq_gains_db = {0, -2, 1, 0, -1, 2, 0, -3};
  c.seed = 9;
  sim::ApplyDetails det;
  auto out = sim::apply_condition(clean, c, &det);
  // components must sum to the output
  CHECK(cltest::snr_db(out.samples,
                       det.speech_component + det.noise_component) > 100.0);
  const double p_s = det.speech_component.square().mean().item<double>();
  const double p_n = det.noise_component.square().mean().item<double>();
  const double snr = 10.0 * std::log10(p_s / p_n);
  CHECK(snr == doctest::Approx(0.0).epsilon(0.5));
  CHECK(out.samples.abs().max().item<float>() <= 0.99f);
}

TEST_CASE("apply_condition is deterministic given the condition seed") {
  auto clean = sim::synth_speech("spkB", "utt2", 1.0);
  sim::ChannelCondition c = identity_condition();
  c.condition_id = "n";
  c.snr_db = 10.0;
  c.seed = 77;
  auto a = sim::apply_condition(clean, c);
  auto b = sim::apply_condition(clean, c);
  CHECK(torch::equal(a.samples, b.samples));
}

TEST_CASE("reverberation raises inter-frame energy smearing") {
  auto clean = sim::synth_speech("spkC", "utt3", 2.0);
  sim::ChannelCondition dry = identity_condition();
  sim::ChannelCondition wet = identity_condition();
  wet.condition_id = "wet";
  wet.rt60_s = 0.5;
  wet.seed = 5;
  const double r_dry = lag1_band_autocorr(sim::apply_condition(clean, dry));
  const double r_wet = lag1_band_autocorr(sim::apply_condition(clean, wet));
  CHECK(r_wet > r_dry);
}

TEST_CASE("noise kinds are distinct and unit power") {
  auto clean = sim::synth_speech("spkD", "utt4", 1.0);
  for (auto kind : {sim::NoiseKind::kWhite, sim::NoiseKind::kBabble,
                    sim::NoiseKind::kHum}) {
    sim::ChannelCondition c = identity_condition();
    c.condition_id = sim::to_string(kind);
    c.noise_kind = kind;
    c.snr_db = 5.0;
    sim::ApplyDetails det;
    sim::apply_condition(clean, c, &det);
    const double p_s = det.speech_component.square().mean().item<double>();
    const double p_n = det.noise_component.square().mean().item<double>();
    CHECK(10.0 * std::log10(p_s / p_n) == doctest::Approx(5.0).epsilon(0.5));
  }
  CHECK(sim::noise_kind_from_string("babble") == sim::NoiseKind::kBabble);
  CHECK_THROWS_AS(sim::noise_kind_from_string("brown"), InvalidInputError);
}

TEST_CASE("build_corpus renders every clip under every condition") {
  auto dir = cltest::temp_dir("corpus_count");
  auto clean = sim::make_clean_corpus(dir / "clean", 5, 2, 0.6, 3);
  CHECK(clean.records.size() == 10);

  std::vector<sim::ChannelCondition> conds(4, identity_condition());
  conds[1].condition_id = "room_a"; conds[1].rt60_s = 0.4; conds[1].seed = 2;
  conds[2].condition_id = "noisy";  conds[2].snr_db = 5;   conds[2].seed = 3;
  conds[3].condition_id = "tinny";  conds[3].eq_gains_db = {-20, -12, -6, 0, 3, 3, -2, -9};
  auto m = sim::build_corpus(clean, conds, dir / "out");

  CHECK(m.records.size() == 40);
  CHECK(m.channel_vocab.size() == 4);
  size_t wavs = 0;
  for ([[maybe_unused]] const auto& e :
       fs::directory_iterator(dir / "out" / "wavs")) {
    ++wavs;
  }
  CHECK(wavs == 40);

  // aligned pairs share sample counts
  auto a = dsp::load_wav(m.find(clean.records[0].utterance_id, "studio")
                             ->audio_path);
  auto b = dsp::load_wav(m.find(clean.records[0].utterance_id, "room_a")
                             ->audio_path);
  CHECK(a.size() == b.size());

  // manifests round trip
  auto loaded = sim::load_manifest(dir / "out" / "manifest.jsonl");
  CHECK(loaded == m);
}

TEST_CASE("build_corpus unseen protocol holds out speakers") {
  auto dir = cltest::temp_dir("corpus_unseen");
  auto clean = sim::make_clean_corpus(dir / "clean", 4, 3, 0.5, 1);
  std::vector<sim::ChannelCondition> conds(3, identity_condition());
  conds[1].condition_id = "a"; conds[1].rt60_s = 0.3; conds[1].seed = 7;
  conds[2].condition_id = "b"; conds[2].snr_db = 10;  conds[2].seed = 8;

  sim::CorpusOptions opts;
  opts.unseen_protocol = true;
  opts.seed = 99;
  auto m = sim::build_corpus(clean, conds, dir / "out", opts);

  std::set<std::string> train_speakers, test_speakers;
  std::set<std::string> train_utts, test_utts;
  std::set<std::string> train_conds, test_conds;
  for (const auto& r : m.records) {
    if (r.split == "train") {
      train_speakers.insert(r.speaker_id);
      train_utts.insert(r.utterance_id);
      train_conds.insert(r.channel_id);
    } else {
      test_speakers.insert(r.speaker_id);
      test_utts.insert(r.utterance_id);
      test_conds.insert(r.channel_id);
    }
  }
  CHECK(!test_speakers.empty());
  for (const auto& s : test_speakers) CHECK(!train_speakers.count(s));
  for (const auto& u : test_utts) CHECK(!train_utts.count(u));
  // the clean condition is shared; held-out non-clean conditions are not
  for (const auto& c : test_conds) {
    if (c != "studio") CHECK(!train_conds.count(c));
  }
}

TEST_CASE("build_corpus input validation") {
  auto dir = cltest::temp_dir("corpus_bad");
  sim::DatasetManifest empty;
  std::vector<sim::ChannelCondition> conds{identity_condition()};
  CHECK_THROWS_AS(sim::build_corpus(empty, conds, dir), InvalidInputError);

  auto clean = sim::make_clean_corpus(dir / "clean", 2, 1, 0.4, 2);
  CHECK_THROWS_AS(sim::build_corpus(clean, conds, dir), InvalidInputError);
}

TEST_CASE("manifest validation catches bad records") {
  sim::DatasetManifest m;
  m.channel_vocab = {"c0"};
  m.speaker_vocab = {"s0"};
  m.records.push_back({"x.wav", "s0", "c0", "u0", "train", 1.0});
  m.validate(false);

  auto bad_channel = m;
  bad_channel.records[0].channel_id = "nope";
  CHECK_THROWS_AS(bad_channel.validate(false), InvalidInputError);

  auto bad_split = m;
  bad_split.records[0].split = "dev";
  CHECK_THROWS_AS(bad_split.validate(false), InvalidInputError);

  auto dup = m;
  dup.records.push_back(dup.records[0]);
  CHECK_THROWS_AS(dup.validate(false), InvalidInputError);

  CHECK(m.channel_index("c0") == 0);
  CHECK_THROWS_AS(m.channel_index("zz"), InvalidInputError);
}

TEST_CASE("condition json round trip") {
  auto dir = cltest::temp_dir("conds");
  std::vector<sim::ChannelCondition> conds(2, identity_condition());
  conds[1].condition_id = "hum_room";
  conds[1].noise_kind = sim::NoiseKind::kHum;
  conds[1].rt60_s = 0.8;
  conds[1].snr_db = 12.5;
  conds[1].eq_gains_db = {1, 2, 3, 4, -4, -3, -2, -1};
  conds[1].seed = 1234;
  sim::save_conditions(dir / "c.json", conds);
  auto loaded = sim::load_conditions(dir / "c.json");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].condition_id == "hum_room");
  CHECK(loaded[1].noise_kind == sim::NoiseKind::kHum);
  CHECK(loaded[1].rt60_s == doctest::Approx(0.8));
  CHECK(loaded[1].snr_db == doctest::Approx(12.5));
  CHECK(loaded[1].eq_gains_db[4] == doctest::Approx(-4.0));
  CHECK(loaded[1].seed == 1234);
}

TEST_CASE("synth_speech is deterministic and sized correctly") {
  auto a = sim::synth_speech("spk1", "utt1", 1.2);
  auto b = sim::synth_speech("spk1", "utt1", 1.2);
  CHECK(torch::equal(a.samples, b.samples));
  CHECK(a.size() == static_cast<int64_t>(1.2 * kSampleRate));

  auto c = sim::synth_speech("spk2", "utt1", 1.2);
  CHECK_FALSE(torch::equal(a.samples, c.samples));
  CHECK(a.samples.abs().max().item<float>() > 0.05f);
}

TEST_CASE("ingest_daps maps a daps-style tree onto the manifest") {
  auto dir = cltest::temp_dir("daps");
  for (const std::string cond : {"cleanraw", "ipad_office"}) {
    fs::create_directories(dir / "tree" / cond);
    for (const std::string spk : {"f1", "m3"}) {
      auto w = sim::synth_speech(spk, spk + "_script1_" + cond, 2.3);
      dsp::save_wav(dir / "tree" / cond / (spk + "_script1_" + cond + ".wav"),
                    w);
    }
  }
  auto m = sim::ingest_daps(dir / "tree", dir / "out", 1.0);
  // 2.3 s at 1 s segments -> 2 segments per file, 2 speakers x 2 conditions
  CHECK(m.records.size() == 8);
  CHECK(m.channel_vocab == std::vector<std::string>{"cleanraw",
                                                    "ipad_office"});
  CHECK(m.speaker_vocab == std::vector<std::string>{"f1", "m3"});
  for (const auto& r : m.records) {
    CHECK(r.duration_s == doctest::Approx(1.0));
    CHECK(fs::exists(r.audio_path));
    auto w = dsp::load_wav(r.audio_path);
    CHECK(w.size() == kSampleRate);
  }
  CHECK_THROWS_AS(sim::ingest_daps(dir / "tree", dir / "out2", 0.0),
                  RangeError);
}
