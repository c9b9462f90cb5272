// Copyright 2026 The stressvoice Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stressvoice/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/LU>

#include "json.hpp"

namespace stressvoice {

namespace {

constexpr double kBaseF0 = 120.0;
constexpr double kSpeechAmplitude = 0.3;
constexpr double kNoiseRelativeDb = -30.0;
constexpr int kHarmonics = 5;
constexpr double kVibratoHz = 5.5;
constexpr double kCortisolBaseline = 10.0;
// Post-task cortisol curve relative to its peak at T4 (T3..T8).
constexpr double kCortisolShape[6] = {0.6, 1.0, 0.9, 0.7, 0.5, 0.35};
constexpr double kCortisolDecay = 3.0;

std::string speaker_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
  return buf;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_speakers < 3 || n_dev < 1 || n_test < 1 || n_dev + n_test >= n_speakers) {
    throw DataError("synth spec: need at least one train, dev and test speaker");
  }
  if (!(duration_s > 0.0) || sample_rate <= 0) throw DataError("synth spec: bad duration or rate");
  if (noise_std < 0.0) throw DataError("synth spec: noise_std must be >= 0");
  Eigen::Matrix3d c;
  for (int i = 0; i < kNumTargets; ++i) {
    for (int j = 0; j < kNumControls; ++j) c(i, j) = coupling[i][j];
  }
  // Zero coupling is allowed (no planted signal); otherwise it must be invertible.
  if (!c.isZero() && std::abs(c.determinant()) < 1e-9) {
    throw DataError("synth spec: coupling matrix is rank deficient");
  }
}

SessionRecord back_solve_session(const std::string& speaker_id, const TargetTriple& deltas,
                                 Split split, Rng& rng) {
  SessionRecord r;
  r.speaker_id = speaker_id;
  r.split = split;
  const double base = std::max(kCortisolBaseline, 1.0 - deltas[0]);
  r.cortisol[0] = base;
  r.cortisol[1] = base;
  const double peak = base + deltas[0];
  for (int i = 0; i < 6; ++i) {
    r.cortisol[2 + i] = std::max(0.0, peak - kCortisolDecay * (1.0 - kCortisolShape[i]));
  }
  r.si_pre = rng.uniform(1.5, 3.5);
  r.si_post = r.si_pre + deltas[1];
  r.na_pre = rng.uniform(1.0, 2.0);
  r.na_post = r.na_pre + deltas[2];
  return r;
}

std::vector<SynthSpeaker> synth_sessions(const SynthSpec& spec) {
  spec.validate();
  Rng master(spec.seed);
  std::vector<int> order(spec.n_speakers);
  for (int i = 0; i < spec.n_speakers; ++i) order[i] = i;
  Rng split_rng = master.fork(1);
  shuffle(order, split_rng);
  std::vector<Split> splits(spec.n_speakers, Split::kTrain);
  for (int i = 0; i < spec.n_dev; ++i) splits[order[i]] = Split::kDev;
  for (int i = 0; i < spec.n_test; ++i) splits[order[spec.n_dev + i]] = Split::kTest;

  std::vector<SynthSpeaker> out;
  for (int s = 0; s < spec.n_speakers; ++s) {
    Rng rng = master.fork(1000 + static_cast<uint64_t>(s));
    SynthSpeaker sp;
    for (double& u : sp.controls) u = rng.normal();
    TargetTriple deltas{};
    for (int k = 0; k < kNumTargets; ++k) {
      double v = 0.0;
      for (int j = 0; j < kNumControls; ++j) v += spec.coupling[k][j] * sp.controls[j];
      v += spec.noise_std * rng.normal();
      deltas[k] = spec.target_scale[k] * v;
    }
    sp.record = back_solve_session(speaker_name("spk", s), deltas, splits[s], rng);
    sp.planted = raw_deltas(sp.record);
    out.push_back(std::move(sp));
  }
  return out;
}

AudioBuffer synth_speaker_audio(const SynthSpec& spec, const std::array<double, kNumControls>& u,
                                uint64_t seed) {
  Rng rng(seed);
  const double fs = spec.sample_rate;
  const size_t n = static_cast<size_t>(std::llround(spec.duration_s * fs));
  const double half = spec.duration_s / 2.0;
  const double offset_st = spec.pitch_offset_st * u[0];
  const double gain = std::pow(10.0, spec.loudness_offset_db * u[1] / 20.0);
  // Vibrato depth is log-linear in the control so it stays positive.
  const double vibrato_st = spec.vibrato_st * std::exp2(u[2]);

  // Alternating voiced segments and pauses.
  std::vector<double> envelope(n, 0.0);
  const double ramp = 0.01;
  double t0 = rng.uniform(0.05, 0.2);
  while (t0 < spec.duration_s) {
    const double len = rng.uniform(0.25, 0.6);
    const size_t a = static_cast<size_t>(t0 * fs);
    const size_t b = std::min(n, static_cast<size_t>((t0 + len) * fs));
    for (size_t i = a; i < b; ++i) {
      const double t = i / fs - t0;
      const double in = std::min(1.0, t / ramp);
      const double out = std::min(1.0, (len - t) / ramp);
      envelope[i] = std::sin(0.5 * std::numbers::pi * std::clamp(std::min(in, out), 0.0, 1.0));
    }
    t0 += len + rng.uniform(0.08, 0.3);
  }

  // Cycle-scale perturbations: 10 ms control points, linearly interpolated.
  const size_t control_step = static_cast<size_t>(0.01 * fs);
  const size_t n_controls = n / control_step + 2;
  std::vector<double> jitter(n_controls), shimmer(n_controls);
  for (size_t i = 0; i < n_controls; ++i) {
    jitter[i] = 0.004 * rng.normal();
    shimmer[i] = 0.03 * rng.normal();
  }

  // Pink noise (Kellet's filter) normalized to the target level.
  std::vector<double> noise(n);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  double noise_energy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double white = rng.normal();
    b0 = 0.99886 * b0 + white * 0.0555179;
    b1 = 0.99332 * b1 + white * 0.0750759;
    b2 = 0.96900 * b2 + white * 0.1538520;
    b3 = 0.86650 * b3 + white * 0.3104856;
    b4 = 0.55000 * b4 + white * 0.5329522;
    b5 = -0.7616 * b5 - white * 0.0168980;
    noise[i] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362;
    b6 = white * 0.115926;
    noise_energy += noise[i] * noise[i];
  }
  double harmonic_power = 0.0;
  for (int k = 1; k <= kHarmonics; ++k) harmonic_power += 0.5 / (k * k);
  const double speech_rms = kSpeechAmplitude * std::sqrt(harmonic_power);
  const double noise_scale = n ? speech_rms * std::pow(10.0, kNoiseRelativeDb / 20.0) /
                                     std::sqrt(noise_energy / n + 1e-30)
                               : 0.0;

  AudioBuffer buf;
  buf.sample_rate = spec.sample_rate;
  buf.samples.resize(n);
  double phase = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double t = i / fs;
    const double pos = static_cast<double>(i) / control_step;
    const size_t c = static_cast<size_t>(pos);
    const double frac = pos - c;
    const double jit = jitter[c] + frac * (jitter[c + 1] - jitter[c]);
    const double shim = shimmer[c] + frac * (shimmer[c + 1] - shimmer[c]);
    const double vibrato = t < half ? vibrato_st * std::sin(2.0 * std::numbers::pi * kVibratoHz * t) : 0.0;
    const double st = std::clamp(offset_st + vibrato, -10.0, 14.0);
    const double f0 = kBaseF0 * std::pow(2.0, st / 12.0) * (1.0 + jit);
    phase += 2.0 * std::numbers::pi * f0 / fs;
    if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
    double voiced = 0.0;
    if (envelope[i] > 0.0) {
      for (int k = 1; k <= kHarmonics; ++k) voiced += std::sin(k * phase) / k;
      voiced *= kSpeechAmplitude * gain * envelope[i] * (1.0 + shim);
    }
    buf.samples[i] = voiced + noise_scale * noise[i];
  }
  return buf;
}

SynthCorpus synth_audio_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  SynthCorpus corpus;
  corpus.speakers = synth_sessions(spec);
  const auto audio_dir = out_dir / "audio";
  std::filesystem::create_directories(audio_dir);
  std::vector<SessionRecord> records;
  for (size_t s = 0; s < corpus.speakers.size(); ++s) {
    auto& sp = corpus.speakers[s];
    const auto rel = std::filesystem::path("audio") / (sp.record.speaker_id + ".wav");
    sp.record.audio_path = rel.generic_string();
    const AudioBuffer audio =
        synth_speaker_audio(spec, sp.controls, mix_seed(spec.seed, 5000 + s));
    // The speech gain can exceed full scale for loud speakers; keep headroom
    // so the 16-bit file does not clip.
    AudioBuffer scaled = audio;
    const double peak = peak_amplitude(scaled.samples);
    if (peak > 0.99) {
      for (double& x : scaled.samples) x *= 0.99 / peak;
    }
    write_wav(out_dir / rel, scaled, SampleFormat::kPcm16);
    records.push_back(sp.record);
  }
  corpus.sessions_csv = out_dir / "sessions.csv";
  write_sessions(corpus.sessions_csv, records);
  return corpus;
}

void FeatureSynthSpec::validate() const {
  if (n_train < 2 || n_dev < 1 || n_test < 1) throw DataError("feature synth: split sizes too small");
  if (length < 2 || dim < kNumTargets) throw DataError("feature synth: length/dim too small");
  if (noise_std < 0.0) throw DataError("feature synth: noise_std must be >= 0");
  if (std::abs(coupling.determinant()) < 1e-9) {
    throw DataError("feature synth: coupling matrix is rank deficient");
  }
}

FeatureCorpus synth_feature_corpus(const FeatureSynthSpec& spec) {
  spec.validate();
  FeatureCorpus corpus;
  corpus.signal_columns = {0, 1, 2};
  const int total = spec.n_train + spec.n_dev + spec.n_test;
  Rng master(spec.seed);
  for (int i = 0; i < total; ++i) {
    Rng signal_rng = master.fork(2 * static_cast<uint64_t>(i));
    Rng background_rng = master.fork(2 * static_cast<uint64_t>(i) + 1);
    TargetTriple y{};
    for (double& v : y) v = signal_rng.uniform();
    Eigen::Vector3d yv(y[0], y[1], y[2]);
    const Eigen::Vector3d planted = spec.coupling * yv;
    const Eigen::Vector3d neutral = spec.first_half_only ? Eigen::Vector3d::Zero() : planted;

    FeatureSequence seq;
    seq.speaker_id = speaker_name("syn", i);
    seq.valid_len = spec.length;
    seq.data.resize(spec.length, spec.dim);
    for (int t = 0; t < spec.length; ++t) {
      const Eigen::Vector3d& mean = t < spec.length / 2 ? planted : neutral;
      for (int j = 0; j < kNumTargets; ++j) {
        seq.data(t, corpus.signal_columns[j]) = mean[j] + spec.noise_std * signal_rng.normal();
      }
      for (int c = kNumTargets; c < spec.dim; ++c) seq.data(t, c) = background_rng.normal();
    }
    corpus.sequences.push_back(std::move(seq));
    corpus.targets.push_back(y);
    corpus.splits.push_back(i < spec.n_train                ? Split::kTrain
                            : i < spec.n_train + spec.n_dev ? Split::kDev
                                                            : Split::kTest);
  }
  return corpus;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  nlohmann::json j = {{"n_speakers", spec.n_speakers},
                      {"n_dev", spec.n_dev},
                      {"n_test", spec.n_test},
                      {"duration_s", spec.duration_s},
                      {"sample_rate", spec.sample_rate},
                      {"coupling", spec.coupling},
                      {"target_scale", spec.target_scale},
                      {"noise_std", spec.noise_std},
                      {"pitch_offset_st", spec.pitch_offset_st},
                      {"loudness_offset_db", spec.loudness_offset_db},
                      {"vibrato_st", spec.vibrato_st},
                      {"seed", spec.seed}};
  return j.dump(2);
}

SynthSpec synth_spec_from_json(const std::string& text) {
  SynthSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.n_speakers = j.value("n_speakers", s.n_speakers);
    s.n_dev = j.value("n_dev", s.n_dev);
    s.n_test = j.value("n_test", s.n_test);
    s.duration_s = j.value("duration_s", s.duration_s);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    if (j.contains("coupling")) s.coupling = j.at("coupling").get<decltype(s.coupling)>();
    if (j.contains("target_scale")) s.target_scale = j.at("target_scale").get<decltype(s.target_scale)>();
    s.noise_std = j.value("noise_std", s.noise_std);
    s.pitch_offset_st = j.value("pitch_offset_st", s.pitch_offset_st);
    s.loudness_offset_db = j.value("loudness_offset_db", s.loudness_offset_db);
    s.vibrato_st = j.value("vibrato_st", s.vibrato_st);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace stressvoice
