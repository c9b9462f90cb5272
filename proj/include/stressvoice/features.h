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

#include <Eigen/Core>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stressvoice/audio_io.h"

namespace stressvoice {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kWindowSeconds = 1.0;
inline constexpr double kHopSeconds = 0.5;
inline constexpr int kWindowSamples = 16000;
inline constexpr int kHopSamples = 8000;
inline constexpr int kFrameSamples = 400;      // 25 ms
inline constexpr int kFrameHopSamples = 160;   // 10 ms
inline constexpr int kFramesPerWindow = 1 + (kWindowSamples - kFrameSamples) / kFrameHopSamples;
inline constexpr int kNumFeatures = 88;
inline constexpr double kLoudnessFloorDb = -120.0;
inline constexpr double kMinF0 = 55.0;
inline constexpr double kMaxF0 = 600.0;
inline constexpr int kLpcOrder = 12;

extern const char* const kRegistryVersion;

// T x d matrix of window-level features. Rows at index >= valid_len are padding.
struct FeatureSequence {
  FeatureMatrix data;
  int valid_len = 0;
  std::string speaker_id;

  int rows() const { return static_cast<int>(data.rows()); }
  int dim() const { return static_cast<int>(data.cols()); }
};

// Low-level descriptors of one 25 ms frame.
struct FrameLLD {
  double f0_hz = 0.0;
  bool voiced = false;
  double jitter = 0.0;        // relative period change to the previous voiced frame
  double shimmer_db = 0.0;    // |peak amplitude change| to the previous voiced frame, dB
  double loudness_db = kLoudnessFloorDb;
  double hnr_db = 0.0;
  double alpha_ratio_db = 0.0;
  double hammarberg_db = 0.0;
  double slope_0_500 = 0.0;   // dB/octave
  double slope_500_1500 = 0.0;
  double formant_hz[3] = {0.0, 0.0, 0.0};
  double formant_bw_hz[3] = {0.0, 0.0, 0.0};
  double formant_rel_db[3] = {0.0, 0.0, 0.0};
  double h1_h2_db = 0.0;
  double h1_a3_db = 0.0;
  double spectral_flux = 0.0;
  double spectral_centroid_hz = 0.0;
};

enum class Lld {
  kF0,
  kJitter,
  kShimmer,
  kLoudness,
  kHnr,
  kAlphaRatio,
  kHammarberg,
  kSlope0To500,
  kSlope500To1500,
  kF1Freq,
  kF2Freq,
  kF3Freq,
  kF1Bandwidth,
  kF2Bandwidth,
  kF3Bandwidth,
  kF1RelEnergy,
  kF2RelEnergy,
  kF3RelEnergy,
  kH1H2,
  kH1A3,
  kSpectralFlux,
  kSpectralCentroid,
};
inline constexpr int kNumLlds = 22;

enum class Functional {
  kMean,
  kCoeffVar,
  kPercentile20,
  kPercentile50,
  kPercentile80,
  kRange20To80,
  kRisingSlopeMean,
  kRisingSlopeStd,
  kFallingSlopeMean,
  kFallingSlopeStd,
  kPeaksPerSecond,
  kEquivalentLevel,
  kVoicedFraction,
  kVoicedSegmentsPerSecond,
  kVoicedSegmentMean,
  kVoicedSegmentStd,
  kUnvoicedSegmentMean,
  kUnvoicedSegmentStd,
};

enum class FrameSet { kAll, kVoiced, kUnvoiced };

struct FeatureDescriptor {
  std::string family;  // frequency, energy or spectral
  Lld lld;
  Functional functional;
  FrameSet frames;

  std::string name() const;
};

using FeatureRegistry = std::vector<FeatureDescriptor>;

// The fixed 88-entry registry. Order is part of the cache format.
const FeatureRegistry& default_registry();
std::string lld_name(Lld lld);
std::string functional_name(Functional f);
double lld_value(const FrameLLD& frame, Lld lld);

// floor((duration - 1) / 0.5) + 1 for duration >= 1 s, else 1.
int window_count(double duration_s);
int window_count_samples(size_t num_samples);

// Frame-level analysis of one window. Holds FFT plans; not thread-safe, use
// one instance per thread.
class FrameAnalyzer {
 public:
  FrameAnalyzer();
  ~FrameAnalyzer();
  FrameAnalyzer(const FrameAnalyzer&) = delete;
  FrameAnalyzer& operator=(const FrameAnalyzer&) = delete;

  // window: up to kWindowSamples of 16 kHz audio, zero-padded if shorter.
  std::vector<FrameLLD> extract_lld(std::span<const double> window);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<FrameLLD> extract_lld(std::span<const double> window);

double percentile(std::vector<double> values, double p);

Eigen::VectorXd aggregate_functionals(std::span<const FrameLLD> llds,
                                      const FeatureRegistry& registry);

// buf must be at 16 kHz.
FeatureSequence extract_sequence(const AudioBuffer& buf, const FeatureRegistry& registry,
                                 const std::string& speaker_id = "");

// Binary cache: "FTRS", u16 version, u32 T, u32 d, T*d little-endian float32.
// A JSON sidecar (<path>.json) records the registry version and speaker id.
void write_feature_cache(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence read_feature_cache(const std::filesystem::path& path);

}  // namespace stressvoice
