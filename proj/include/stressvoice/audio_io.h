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

#include <filesystem>
#include <span>
#include <vector>

namespace stressvoice {

inline constexpr int kCanonicalRate = 16000;
inline constexpr double kDefaultPeakDb = -1.0;

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kCanonicalRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

enum class SampleFormat { kPcm8, kPcm16, kPcm24, kPcm32, kFloat32 };

// Reads RIFF/WAVE with PCM (8/16/24/32-bit) or IEEE float (32-bit) data.
// Channels are averaged to mono; the file's sample rate is kept.
AudioBuffer read_wav(const std::filesystem::path& path);
AudioBuffer decode_wav(std::span<const unsigned char> bytes);

// Writes mono audio. Integer formats clip to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioBuffer& buf,
               SampleFormat format = SampleFormat::kPcm16);
// channels > 1 repeats the mono signal in every channel.
std::vector<unsigned char> encode_wav(const AudioBuffer& buf, SampleFormat format,
                                      int channels = 1);

// Polyphase windowed-sinc resampler (Kaiser window, 64 taps per phase).
AudioBuffer resample(const AudioBuffer& buf, int target_rate);

struct PeakNormalizeResult {
  AudioBuffer audio;
  bool silent = false;  // input was all zeros and is returned unchanged
};

PeakNormalizeResult peak_normalize(const AudioBuffer& buf, double target_db = kDefaultPeakDb);

double peak_amplitude(std::span<const double> samples);

// resample to 16 kHz, then peak-normalize to -1 dB.
PeakNormalizeResult canonicalize(const AudioBuffer& buf);

}  // namespace stressvoice
