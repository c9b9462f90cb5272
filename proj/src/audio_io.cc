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

#include "stressvoice/audio_io.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "stressvoice/common.h"

namespace stressvoice {

namespace {

uint16_t read_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xfffe;

}  // namespace

AudioBuffer decode_wav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError("not a RIFF/WAVE file");
  }
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  size_t data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t size = read_u32(chunk + 4);
    const size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) throw DataError("truncated WAV fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40 || body + 40 > bytes.size()) throw DataError("truncated WAV fmt chunk");
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<size_t>(size, bytes.size() - std::min(body, bytes.size()));
      break;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw DataError("WAV file has no fmt chunk");
  if (!data) throw DataError("WAV file has no data chunk");
  if (channels == 0 || rate == 0) throw DataError("WAV header has zero channels or rate");

  const bool is_float = format == kFormatFloat;
  if (!(format == kFormatPcm || is_float)) {
    throw DataError("unsupported WAV codec " + std::to_string(format));
  }
  if (is_float ? bits != 32 : (bits != 8 && bits != 16 && bits != 24 && bits != 32)) {
    throw DataError("unsupported WAV bit depth " + std::to_string(bits));
  }

  const size_t width = bits / 8;
  const size_t frames = data_size / (width * channels);
  AudioBuffer buf;
  buf.sample_rate = static_cast<int>(rate);
  buf.samples.resize(frames);
  for (size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (f * channels + c) * width;
      double v = 0.0;
      if (is_float) {
        float x;
        uint32_t u = read_u32(p);
        std::memcpy(&x, &u, sizeof(x));
        v = x;
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<int16_t>(read_u16(p)) / 32768.0;
      } else if (bits == 24) {
        int32_t x = static_cast<int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (x & 0x800000) x -= 0x1000000;
        v = x / 8388608.0;
      } else {
        v = static_cast<int32_t>(read_u32(p)) / 2147483648.0;
      }
      acc += v;
    }
    buf.samples[f] = acc / channels;
  }
  return buf;
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> encode_wav(const AudioBuffer& buf, SampleFormat format,
                                      int channels) {
  uint16_t bits = 16;
  uint16_t tag = kFormatPcm;
  switch (format) {
    case SampleFormat::kPcm8:
      bits = 8;
      break;
    case SampleFormat::kPcm16:
      bits = 16;
      break;
    case SampleFormat::kPcm24:
      bits = 24;
      break;
    case SampleFormat::kPcm32:
      bits = 32;
      break;
    case SampleFormat::kFloat32:
      bits = 32;
      tag = kFormatFloat;
      break;
  }
  const uint32_t width = bits / 8;
  const uint32_t data_size = static_cast<uint32_t>(buf.samples.size() * width * channels);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, static_cast<uint16_t>(channels));
  put_u32(out, static_cast<uint32_t>(buf.sample_rate));
  put_u32(out, static_cast<uint32_t>(buf.sample_rate) * width * channels);
  put_u16(out, static_cast<uint16_t>(width * channels));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);

  auto quantize = [](double x, double scale, double lo, double hi) {
    return static_cast<int64_t>(std::clamp(std::round(x * scale), lo, hi));
  };
  for (double x : buf.samples) {
    for (int c = 0; c < channels; ++c) {
      switch (format) {
        case SampleFormat::kPcm8:
          out.push_back(static_cast<unsigned char>(quantize(x, 128.0, -128.0, 127.0) + 128));
          break;
        case SampleFormat::kPcm16:
          put_u16(out, static_cast<uint16_t>(quantize(x, 32768.0, -32768.0, 32767.0)));
          break;
        case SampleFormat::kPcm24: {
          const auto v = static_cast<uint32_t>(quantize(x, 8388608.0, -8388608.0, 8388607.0));
          out.push_back(static_cast<unsigned char>(v & 0xff));
          out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
          out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
          break;
        }
        case SampleFormat::kPcm32:
          put_u32(out,
                  static_cast<uint32_t>(quantize(x, 2147483648.0, -2147483648.0, 2147483647.0)));
          break;
        case SampleFormat::kFloat32: {
          const float f = static_cast<float>(x);
          uint32_t u;
          std::memcpy(&u, &f, sizeof(u));
          put_u32(out, u);
          break;
        }
      }
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buf, SampleFormat format) {
  const auto bytes = encode_wav(buf, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write WAV file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {

constexpr int kTapsPerPhase = 64;
constexpr double kKaiserBeta = 8.0;
// Passband edge as a fraction of the lower of the two Nyquist rates.
constexpr double kCutoffFraction = 0.94;

double kaiser(double x, double beta) {
  // x in [-1, 1]
  if (std::abs(x) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / std::cyl_bessel_i(0.0, beta);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Filter taps for one fractional phase, normalized to unit DC gain.
// Tap k multiplies input sample floor(pos) + k - (kTapsPerPhase/2 - 1).
std::vector<double> phase_taps(double frac, double cutoff) {
  std::vector<double> taps(kTapsPerPhase);
  const double half = kTapsPerPhase / 2.0;
  double sum = 0.0;
  for (int k = 0; k < kTapsPerPhase; ++k) {
    const double tau = (k - (kTapsPerPhase / 2 - 1)) - frac;
    taps[k] = cutoff * sinc(cutoff * tau) * kaiser(tau / half, kKaiserBeta);
    sum += taps[k];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

}  // namespace

AudioBuffer resample(const AudioBuffer& buf, int target_rate) {
  if (target_rate <= 0) throw DataError("resample: target rate must be positive");
  if (buf.sample_rate == target_rate) return buf;

  const int64_t g = std::gcd<int64_t>(buf.sample_rate, target_rate);
  const int64_t up = target_rate / g;        // L
  const int64_t down = buf.sample_rate / g;  // M
  const double cutoff =
      kCutoffFraction * std::min(1.0, static_cast<double>(target_rate) / buf.sample_rate);

  const int64_t n_in = static_cast<int64_t>(buf.samples.size());
  const int64_t n_out = (n_in * up + down - 1) / down;

  // Phase table when the number of distinct phases is manageable.
  const bool tabulate = up <= 4096;
  std::vector<std::vector<double>> table;
  if (tabulate) {
    table.reserve(static_cast<size_t>(up));
    for (int64_t p = 0; p < up; ++p) table.push_back(phase_taps(static_cast<double>(p) / up, cutoff));
  }

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<size_t>(n_out));
  for (int64_t n = 0; n < n_out; ++n) {
    const int64_t num = n * down;
    const int64_t base = num / up;
    const int64_t phase = num % up;
    std::vector<double> local;
    const std::vector<double>* taps;
    if (tabulate) {
      taps = &table[static_cast<size_t>(phase)];
    } else {
      local = phase_taps(static_cast<double>(phase) / up, cutoff);
      taps = &local;
    }
    double acc = 0.0;
    const int64_t first = base - (kTapsPerPhase / 2 - 1);
    for (int k = 0; k < kTapsPerPhase; ++k) {
      const int64_t i = first + k;
      if (i >= 0 && i < n_in) acc += (*taps)[k] * buf.samples[static_cast<size_t>(i)];
    }
    out.samples[static_cast<size_t>(n)] = acc;
  }
  return out;
}

double peak_amplitude(std::span<const double> samples) {
  double peak = 0.0;
  for (double x : samples) peak = std::max(peak, std::abs(x));
  return peak;
}

PeakNormalizeResult peak_normalize(const AudioBuffer& buf, double target_db) {
  PeakNormalizeResult result;
  const double peak = peak_amplitude(buf.samples);
  result.audio = buf;
  if (peak == 0.0) {
    result.silent = true;
    return result;
  }
  const double gain = std::pow(10.0, target_db / 20.0) / peak;
  for (double& x : result.audio.samples) x *= gain;
  return result;
}

PeakNormalizeResult canonicalize(const AudioBuffer& buf) {
  return peak_normalize(resample(buf, kCanonicalRate), kDefaultPeakDb);
}

}  // namespace stressvoice
