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

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stressvoice/features.h"
#include "stressvoice/session_data.h"

namespace stressvoice {

inline constexpr int kNumControls = 3;  // pitch offset, loudness offset, first-half vibrato depth

// Audio-level synthetic corpus. Each speaker gets standard-normal latent
// controls u; raw target deltas are scale[k] * ((C u)_k + noise_std * e_k).
struct SynthSpec {
  int n_speakers = 27;
  int n_dev = 5;
  int n_test = 5;
  double duration_s = 60.0;
  int sample_rate = 22050;  // written rate; canonicalization resamples to 16 kHz
  std::array<std::array<double, kNumControls>, kNumTargets> coupling = {
      {{1.0, 0.3, 0.0}, {0.0, 1.0, 0.3}, {0.3, 0.0, 1.0}}};
  std::array<double, kNumTargets> target_scale = {4.0, 1.0, 0.5};
  double noise_std = 0.05;
  double pitch_offset_st = 2.0;   // semitones per unit control
  double loudness_offset_db = 6.0;
  double vibrato_st = 0.5;        // first-half vibrato depth at control 0; doubles per unit
  uint64_t seed = 7;

  // Throws DataError for a rank-deficient coupling or bad sizes.
  void validate() const;
};

struct SynthSpeaker {
  SessionRecord record;
  std::array<double, kNumControls> controls{};
  TargetTriple planted{};  // deltas as recovered by the target formulas
};

struct SynthCorpus {
  std::vector<SynthSpeaker> speakers;
  std::filesystem::path sessions_csv;
};

// Session records whose cortisol/SI/NA values reproduce the given deltas.
SessionRecord back_solve_session(const std::string& speaker_id, const TargetTriple& deltas,
                                 Split split, Rng& rng);

AudioBuffer synth_speaker_audio(const SynthSpec& spec, const std::array<double, kNumControls>& u,
                                uint64_t seed);

// Writes <out>/audio/<speaker>.wav and <out>/sessions.csv.
SynthCorpus synth_audio_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir);

// Sessions only, without audio files.
std::vector<SynthSpeaker> synth_sessions(const SynthSpec& spec);

// Feature-level corpus that bypasses the DSP front end.
struct FeatureSynthSpec {
  int n_train = 200;
  int n_dev = 50;
  int n_test = 50;
  int length = 100;
  int dim = 20;
  double noise_std = 0.02;
  // Signal column j carries sum_k coupling(j, k) * y_k.
  Eigen::Matrix3d coupling = (Eigen::Matrix3d() << 1.0, 0.5, 0.0, 0.0, 1.0, 0.5, 0.5, 0.0, 1.0)
                                 .finished();
  // When set, the signal columns carry the target only in the first half of
  // each sequence; in the second half they sit at 0 plus the same noise.
  bool first_half_only = false;
  uint64_t seed = 11;

  void validate() const;
};

struct FeatureCorpus {
  std::vector<FeatureSequence> sequences;
  std::vector<TargetTriple> targets;  // raw, in [0, 1]
  std::vector<Split> splits;
  std::vector<int> signal_columns;
};

FeatureCorpus synth_feature_corpus(const FeatureSynthSpec& spec);

std::string synth_spec_to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const std::string& text);

}  // namespace stressvoice
