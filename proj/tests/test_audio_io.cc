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

#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "oracles.h"
#include "stressvoice/audio_io.h"

using namespace stressvoice;
using stressvoice::testing::dominant_frequency;
using stressvoice::testing::sine;

namespace {

// Hand-built RIFF header for 16-bit PCM.
std::vector<unsigned char> pcm16_file(const std::vector<int16_t>& interleaved, int channels, int rate) {
  std::vector<unsigned char> out;
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  auto u16 = [&](uint16_t v) {
    out.push_back(static_cast<unsigned char>(v));
    out.push_back(static_cast<unsigned char>(v >> 8));
  };
  auto tag = [&](const char* s) { out.insert(out.end(), s, s + 4); };
  const uint32_t data_bytes = static_cast<uint32_t>(interleaved.size() * 2);
  tag("RIFF");
  u32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(1);
  u16(static_cast<uint16_t>(channels));
  u32(static_cast<uint32_t>(rate));
  u32(static_cast<uint32_t>(rate * channels * 2));
  u16(static_cast<uint16_t>(channels * 2));
  u16(16);
  tag("data");
  u32(data_bytes);
  for (int16_t s : interleaved) u16(static_cast<uint16_t>(s));
  return out;
}

}  // namespace

TEST_SUITE("audio-io") {
  TEST_CASE("16-bit PCM scaling") {
    const auto bytes = pcm16_file({0, 16384, -32768}, 1, 16000);
    const auto buf = decode_wav(bytes);
    REQUIRE(buf.samples.size() == 3);
    CHECK(buf.sample_rate == 16000);
    CHECK(buf.samples[0] == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(buf.samples[1] == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(buf.samples[2] == doctest::Approx(-1.0).epsilon(1e-4));
  }

  TEST_CASE("stereo is averaged to mono") {
    const auto bytes = pcm16_file({6554, 19661, 6554, 19661}, 2, 8000);
    const auto mono = decode_wav(bytes);
    REQUIRE(mono.samples.size() == 2);
    CHECK(std::abs(mono.samples[0] - 0.4) < 1e-4);
    CHECK(std::abs(mono.samples[1] - 0.4) < 1e-4);
    CHECK(mono.sample_rate == 8000);

    AudioBuffer m{{0.25, -0.5}, 8000};
    const auto dup = decode_wav(encode_wav(m, SampleFormat::kFloat32, 3));
    CHECK(dup.samples == m.samples);
  }

  TEST_CASE("malformed files are rejected") {
    auto bytes = pcm16_file({1, 2, 3}, 1, 16000);
    CHECK_THROWS_AS(decode_wav(std::span(bytes).first(20)), DataError);
    auto not_wav = bytes;
    std::memcpy(not_wav.data(), "RIFX", 4);
    CHECK_THROWS_AS(decode_wav(not_wav), DataError);
    auto alaw = bytes;
    alaw[20] = 6;  // WAVE_FORMAT_ALAW
    CHECK_THROWS_AS(decode_wav(alaw), DataError);
    CHECK_THROWS_AS(read_wav("/nonexistent/file.wav"), DataError);
  }

  TEST_CASE("writer round trips within one LSB") {
    Rng rng(3);
    AudioBuffer buf;
    buf.sample_rate = 22050;
    for (int i = 0; i < 5000; ++i) buf.samples.push_back(rng.uniform(-1.0, 1.0));
    const struct {
      SampleFormat format;
      double lsb;
    } cases[] = {{SampleFormat::kPcm8, 1.0 / 128},
                 {SampleFormat::kPcm16, 1.0 / 32768},
                 {SampleFormat::kPcm24, 1.0 / 8388608},
                 {SampleFormat::kPcm32, 1.0 / 2147483648.0},
                 {SampleFormat::kFloat32, 1e-7}};
    for (const auto& c : cases) {
      const auto back = decode_wav(encode_wav(buf, c.format));
      REQUIRE(back.samples.size() == buf.samples.size());
      CHECK(back.sample_rate == 22050);
      double worst = 0.0;
      for (size_t i = 0; i < buf.samples.size(); ++i) {
        worst = std::max(worst, std::abs(back.samples[i] - buf.samples[i]));
      }
      CHECK(worst <= c.lsb);
    }
    const auto path = std::filesystem::temp_directory_path() / "sv_audio_rt.wav";
    write_wav(path, buf);
    CHECK(read_wav(path).samples.size() == buf.samples.size());
    std::filesystem::remove(path);
  }

  TEST_CASE("resample at the same rate is the identity") {
    AudioBuffer buf{sine(300.0, 0.1, 16000), 16000};
    const auto out = resample(buf, 16000);
    CHECK(out.samples == buf.samples);
  }

  TEST_CASE("resample length") {
    AudioBuffer buf{sine(440.0, 1.0, 48000), 48000};
    const auto out = resample(buf, 16000);
    CHECK(out.sample_rate == 16000);
    CHECK(std::abs(static_cast<long>(out.samples.size()) - 16000) <= 1);
    AudioBuffer odd{sine(440.0, 0.7, 22050), 22050};
    const auto out2 = resample(odd, 16000);
    CHECK(std::abs(out2.duration_s() - odd.duration_s()) <= 1.0 / 16000);
  }

  TEST_CASE("resampled tone keeps its frequency") {
    AudioBuffer buf{sine(440.0, 1.0, 48000), 48000};
    const auto out = resample(buf, 16000);
    CHECK(std::abs(dominant_frequency(out.samples, 16000) - 440.0) <= 2.0);

    AudioBuffer tone{sine(1000.0, 0.5, 22050), 22050};
    const auto there = resample(tone, 16000);
    const auto back = resample(there, 22050);
    const std::span<const double> mid(back.samples.data() + 256, back.samples.size() - 512);
    const double f = dominant_frequency(mid, 22050);
    CHECK(std::abs(f - 1000.0) / 1000.0 < 0.005);
  }

  TEST_CASE("peak normalization") {
    const double target = std::pow(10.0, -1.0 / 20.0);
    AudioBuffer buf{{0.1, -0.5, 0.25}, 16000};
    const auto a = peak_normalize(buf);
    CHECK_FALSE(a.silent);
    CHECK(peak_amplitude(a.audio.samples) == doctest::Approx(0.89125).epsilon(1e-4));
    CHECK(std::abs(peak_amplitude(a.audio.samples) - target) < 1e-12);

    AudioBuffer loud{{2.0, -1.0}, 16000};
    CHECK(peak_amplitude(peak_normalize(loud).audio.samples) == doctest::Approx(target));

    AudioBuffer silence{std::vector<double>(100, 0.0), 16000};
    const auto s = peak_normalize(silence);
    CHECK(s.silent);
    CHECK(s.audio.samples == silence.samples);

    const auto twice = peak_normalize(a.audio);
    for (size_t i = 0; i < buf.samples.size(); ++i) {
      CHECK(std::abs(twice.audio.samples[i] - a.audio.samples[i]) < 1e-9);
    }
  }

  TEST_CASE("canonicalize") {
    AudioBuffer buf{sine(200.0, 0.5, 44100, 0.3), 44100};
    const auto c = canonicalize(buf);
    CHECK(c.audio.sample_rate == 16000);
    CHECK(peak_amplitude(c.audio.samples) == doctest::Approx(0.89125).epsilon(1e-4));
  }
}
