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

#include "stressvoice/features.h"

#include <fftw3.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>

#include "json.hpp"
#include "stressvoice/common.h"

namespace stressvoice {

const char* const kRegistryVersion = "sv88-v1";

namespace {

constexpr double kRate = kCanonicalRate;
constexpr int kSpecFft = 512;
constexpr int kAcfFft = 1024;
constexpr double kVoicingThreshold = 0.6;
constexpr double kSilenceRms = 1e-6;
constexpr double kPowerFloor = 1e-20;
constexpr double kFrameSeconds = kFrameHopSamples / kRate;

// FFTW's planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double power_db(double p) { return 10.0 * std::log10(p + kPowerFloor); }

}  // namespace

struct FrameAnalyzer::Impl {
  double* spec_in = nullptr;
  fftw_complex* spec_out = nullptr;
  fftw_plan spec_plan = nullptr;
  double* acf_in = nullptr;
  fftw_complex* acf_freq = nullptr;
  double* acf_out = nullptr;
  fftw_plan acf_fwd = nullptr;
  fftw_plan acf_inv = nullptr;
  std::vector<double> hann;
  std::vector<double> hamming;

  Impl() {
    spec_in = fftw_alloc_real(kSpecFft);
    spec_out = fftw_alloc_complex(kSpecFft / 2 + 1);
    acf_in = fftw_alloc_real(kAcfFft);
    acf_freq = fftw_alloc_complex(kAcfFft / 2 + 1);
    acf_out = fftw_alloc_real(kAcfFft);
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      spec_plan = fftw_plan_dft_r2c_1d(kSpecFft, spec_in, spec_out, FFTW_ESTIMATE);
      acf_fwd = fftw_plan_dft_r2c_1d(kAcfFft, acf_in, acf_freq, FFTW_ESTIMATE);
      acf_inv = fftw_plan_dft_c2r_1d(kAcfFft, acf_freq, acf_out, FFTW_ESTIMATE);
    }
    hann.resize(kFrameSamples);
    hamming.resize(kFrameSamples);
    for (int n = 0; n < kFrameSamples; ++n) {
      const double phase = 2.0 * std::numbers::pi * n / (kFrameSamples - 1);
      hann[n] = 0.5 - 0.5 * std::cos(phase);
      hamming[n] = 0.54 - 0.46 * std::cos(phase);
    }
  }

  ~Impl() {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(spec_plan);
      fftw_destroy_plan(acf_fwd);
      fftw_destroy_plan(acf_inv);
    }
    fftw_free(spec_in);
    fftw_free(spec_out);
    fftw_free(acf_in);
    fftw_free(acf_freq);
    fftw_free(acf_out);
  }

  struct Pitch {
    double f0 = 0.0;
    double nccf = 0.0;  // best normalized correlation in the search range
    bool voiced = false;
  };

  // Normalized cross-correlation over the F0 search range, from an FFT
  // autocorrelation and prefix sums of the frame energy.
  Pitch estimate_pitch(std::span<const double> frame) {
    const int n = kFrameSamples;
    const double mean = std::accumulate(frame.begin(), frame.end(), 0.0) / n;
    std::fill(acf_in, acf_in + kAcfFft, 0.0);
    std::vector<double> prefix(n + 1, 0.0);
    for (int i = 0; i < n; ++i) {
      acf_in[i] = frame[i] - mean;
      prefix[i + 1] = prefix[i] + acf_in[i] * acf_in[i];
    }
    fftw_execute(acf_fwd);
    for (int k = 0; k <= kAcfFft / 2; ++k) {
      const double re = acf_freq[k][0], im = acf_freq[k][1];
      acf_freq[k][0] = re * re + im * im;
      acf_freq[k][1] = 0.0;
    }
    fftw_execute(acf_inv);

    const int min_lag = static_cast<int>(std::floor(kRate / kMaxF0));
    const int max_lag = static_cast<int>(std::ceil(kRate / kMinF0));
    std::vector<double> nccf(max_lag + 2, 0.0);
    for (int lag = min_lag - 1; lag <= max_lag + 1; ++lag) {
      const double e0 = prefix[n - lag];
      const double e1 = prefix[n] - prefix[lag];
      const double denom = std::sqrt(e0 * e1);
      nccf[lag] = denom > 0.0 ? acf_out[lag] / kAcfFft / denom : 0.0;
    }

    Pitch p;
    double best = -1.0;
    for (int lag = min_lag; lag <= max_lag; ++lag) best = std::max(best, nccf[lag]);
    p.nccf = std::max(best, 0.0);
    // First interior local maximum close to the global one, which avoids
    // picking multiples of the period.
    int chosen = -1;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      if (nccf[lag] >= 0.9 * best && nccf[lag] > nccf[lag - 1] && nccf[lag] >= nccf[lag + 1]) {
        chosen = lag;
        break;
      }
    }
    if (chosen < 0 || best < kVoicingThreshold) return p;

    const double a = nccf[chosen - 1], b = nccf[chosen], c = nccf[chosen + 1];
    const double curvature = a - 2.0 * b + c;
    double offset = curvature < 0.0 ? 0.5 * (a - c) / curvature : 0.0;
    offset = std::clamp(offset, -0.5, 0.5);
    p.f0 = kRate / (chosen + offset);
    p.voiced = p.f0 >= kMinF0 && p.f0 <= kMaxF0;
    if (!p.voiced) p.f0 = 0.0;
    return p;
  }

  // Power spectrum of the Hann-windowed frame; bin k is k * 31.25 Hz.
  std::vector<double> power_spectrum(std::span<const double> frame) {
    std::fill(spec_in, spec_in + kSpecFft, 0.0);
    for (int i = 0; i < kFrameSamples; ++i) spec_in[i] = frame[i] * hann[i];
    fftw_execute(spec_plan);
    std::vector<double> power(kSpecFft / 2 + 1);
    for (int k = 0; k <= kSpecFft / 2; ++k) {
      power[k] = spec_out[k][0] * spec_out[k][0] + spec_out[k][1] * spec_out[k][1];
    }
    return power;
  }

  struct Formant {
    double freq;
    double bw;
  };

  std::vector<Formant> formants(std::span<const double> frame) {
    std::vector<double> x(kFrameSamples);
    for (int i = 0; i < kFrameSamples; ++i) {
      const double prev = i > 0 ? frame[i - 1] : 0.0;
      x[i] = (frame[i] - 0.97 * prev) * hamming[i];
    }
    double r[kLpcOrder + 1];
    for (int lag = 0; lag <= kLpcOrder; ++lag) {
      double acc = 0.0;
      for (int i = lag; i < kFrameSamples; ++i) acc += x[i] * x[i - lag];
      r[lag] = acc;
    }
    if (r[0] <= 1e-12) return {};
    r[0] *= 1.0 + 1e-9;  // white-noise correction keeps Levinson stable

    // Levinson-Durbin
    double a[kLpcOrder + 1] = {1.0};
    double err = r[0];
    for (int i = 1; i <= kLpcOrder; ++i) {
      double acc = r[i];
      for (int j = 1; j < i; ++j) acc += a[j] * r[i - j];
      const double k = -acc / err;
      double tmp[kLpcOrder + 1];
      std::copy(a, a + kLpcOrder + 1, tmp);
      for (int j = 1; j < i; ++j) a[j] = tmp[j] + k * tmp[i - j];
      a[i] = k;
      err *= (1.0 - k * k);
      if (err <= 0.0) return {};
    }

    // Roots of z^p + a1 z^(p-1) + ... + ap from the companion matrix.
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(kLpcOrder, kLpcOrder);
    for (int j = 0; j < kLpcOrder; ++j) companion(0, j) = -a[j + 1];
    for (int i = 1; i < kLpcOrder; ++i) companion(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    if (solver.info() != Eigen::Success) return {};

    std::vector<Formant> out;
    for (const auto& z : solver.eigenvalues()) {
      if (z.imag() <= 0.0) continue;
      const double freq = std::atan2(z.imag(), z.real()) * kRate / (2.0 * std::numbers::pi);
      const double radius = std::abs(z);
      if (radius <= 0.0 || radius >= 1.0) continue;
      const double bw = -std::log(radius) * kRate / std::numbers::pi;
      if (freq > 90.0 && freq < kRate / 2.0 - 50.0 && bw < 600.0) out.push_back({freq, bw});
    }
    std::sort(out.begin(), out.end(), [](const Formant& l, const Formant& r) {
      return l.freq < r.freq;
    });
    if (out.size() > 3) out.resize(3);
    return out;
  }
};

namespace {

int bin_of(double hz) {
  return std::clamp(static_cast<int>(std::lround(hz * kSpecFft / kRate)), 0, kSpecFft / 2);
}

double band_energy(const std::vector<double>& power, double lo_hz, double hi_hz) {
  double e = 0.0;
  for (size_t k = 0; k < power.size(); ++k) {
    const double f = k * kRate / kSpecFft;
    if (f >= lo_hz && f < hi_hz) e += power[k];
  }
  return e;
}

double band_peak(const std::vector<double>& power, double lo_hz, double hi_hz) {
  double m = 0.0;
  for (size_t k = 0; k < power.size(); ++k) {
    const double f = k * kRate / kSpecFft;
    if (f >= lo_hz && f <= hi_hz) m = std::max(m, power[k]);
  }
  return m;
}

// Least-squares slope of the dB spectrum against log2 frequency.
double octave_slope(const std::vector<double>& power, double lo_hz, double hi_hz) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (size_t k = 1; k < power.size(); ++k) {
    const double f = k * kRate / kSpecFft;
    if (f < lo_hz || f > hi_hz) continue;
    const double x = std::log2(f);
    const double y = power_db(power[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  const double denom = n * sxx - sx * sx;
  return (n >= 2 && denom > 0.0) ? (n * sxy - sx * sy) / denom : 0.0;
}

// Peak power within +-10% (at least one bin) of a target frequency.
double harmonic_peak(const std::vector<double>& power, double hz) {
  const int centre = bin_of(hz);
  const int reach = std::max(1, static_cast<int>(std::lround(0.1 * hz * kSpecFft / kRate)));
  double m = 0.0;
  for (int k = std::max(0, centre - reach); k <= std::min(kSpecFft / 2, centre + reach); ++k) {
    m = std::max(m, power[k]);
  }
  return m;
}

}  // namespace

FrameAnalyzer::FrameAnalyzer() : impl_(std::make_unique<Impl>()) {}
FrameAnalyzer::~FrameAnalyzer() = default;

std::vector<FrameLLD> FrameAnalyzer::extract_lld(std::span<const double> window) {
  std::vector<double> padded(kWindowSamples, 0.0);
  std::copy_n(window.begin(), std::min<size_t>(window.size(), kWindowSamples), padded.begin());

  std::vector<FrameLLD> frames(kFramesPerWindow);
  std::vector<double> prev_mag;
  double prev_period = 0.0, prev_amp = 0.0;
  for (int f = 0; f < kFramesPerWindow; ++f) {
    std::span<const double> x(padded.data() + f * kFrameHopSamples, kFrameSamples);
    FrameLLD& out = frames[f];

    double energy = 0.0, amp = 0.0;
    for (double s : x) {
      energy += s * s;
      amp = std::max(amp, std::abs(s));
    }
    const double rms = std::sqrt(energy / kFrameSamples);
    if (rms < kSilenceRms) {
      out.loudness_db = kLoudnessFloorDb;
      prev_period = 0.0;
      prev_mag.assign(kSpecFft / 2 + 1, 0.0);
      continue;
    }
    out.loudness_db = 20.0 * std::log10(rms);

    const auto pitch = impl_->estimate_pitch(x);
    out.voiced = pitch.voiced;
    out.f0_hz = pitch.f0;
    const double r = std::clamp(pitch.nccf, 1e-4, 1.0 - 1e-4);
    out.hnr_db = 10.0 * std::log10(r / (1.0 - r));
    if (out.voiced) {
      const double period = 1.0 / out.f0_hz;
      if (prev_period > 0.0) {
        out.jitter = std::abs(period - prev_period) / (0.5 * (period + prev_period));
        out.shimmer_db = std::abs(20.0 * std::log10(amp / prev_amp));
      }
      prev_period = period;
      prev_amp = amp;
    } else {
      prev_period = 0.0;
    }

    const auto power = impl_->power_spectrum(x);
    out.alpha_ratio_db = power_db(band_energy(power, 1000.0, 5000.0)) -
                         power_db(band_energy(power, 50.0, 1000.0));
    out.hammarberg_db =
        power_db(band_peak(power, 0.0, 2000.0)) - power_db(band_peak(power, 2000.001, 5000.0));
    out.slope_0_500 = octave_slope(power, 50.0, 500.0);
    out.slope_500_1500 = octave_slope(power, 500.0, 1500.0);

    double total = 0.0, weighted = 0.0, mag_sum = 0.0;
    std::vector<double> mag(power.size());
    for (size_t k = 0; k < power.size(); ++k) {
      total += power[k];
      weighted += power[k] * k * kRate / kSpecFft;
      mag[k] = std::sqrt(power[k]);
      mag_sum += mag[k];
    }
    out.spectral_centroid_hz = total > 0.0 ? weighted / total : 0.0;
    if (mag_sum > 0.0) {
      for (double& m : mag) m /= mag_sum;
    }
    if (f > 0 && prev_mag.size() == mag.size()) {
      double d = 0.0;
      for (size_t k = 0; k < mag.size(); ++k) d += (mag[k] - prev_mag[k]) * (mag[k] - prev_mag[k]);
      out.spectral_flux = std::sqrt(d);
    }
    prev_mag = std::move(mag);

    const double peak_db = power_db(*std::max_element(power.begin(), power.end()));
    const auto fm = impl_->formants(x);
    for (size_t i = 0; i < fm.size(); ++i) {
      out.formant_hz[i] = fm[i].freq;
      out.formant_bw_hz[i] = fm[i].bw;
      out.formant_rel_db[i] = power_db(power[bin_of(fm[i].freq)]) - peak_db;
    }
    if (out.voiced) {
      const double h1 = power_db(harmonic_peak(power, out.f0_hz));
      out.h1_h2_db = h1 - power_db(harmonic_peak(power, 2.0 * out.f0_hz));
      if (fm.size() == 3) out.h1_a3_db = h1 - power_db(harmonic_peak(power, fm[2].freq));
    }
  }
  return frames;
}

std::vector<FrameLLD> extract_lld(std::span<const double> window) {
  FrameAnalyzer analyzer;
  return analyzer.extract_lld(window);
}

// ---------------------------------------------------------------------------
// Registry and functionals

std::string lld_name(Lld lld) {
  static const char* const names[kNumLlds] = {
      "F0",          "jitter",       "shimmerDB",      "loudnessDB",     "HNR",
      "alphaRatio",  "hammarberg",   "slope0-500",     "slope500-1500",  "F1freq",
      "F2freq",      "F3freq",       "F1bandwidth",    "F2bandwidth",    "F3bandwidth",
      "F1relEnergy", "F2relEnergy",  "F3relEnergy",    "H1-H2",          "H1-A3",
      "spectralFlux", "spectralCentroid"};
  return names[static_cast<int>(lld)];
}

std::string functional_name(Functional f) {
  switch (f) {
    case Functional::kMean: return "mean";
    case Functional::kCoeffVar: return "stddevNorm";
    case Functional::kPercentile20: return "pctl20";
    case Functional::kPercentile50: return "pctl50";
    case Functional::kPercentile80: return "pctl80";
    case Functional::kRange20To80: return "pctlrange20-80";
    case Functional::kRisingSlopeMean: return "meanRisingSlope";
    case Functional::kRisingSlopeStd: return "stddevRisingSlope";
    case Functional::kFallingSlopeMean: return "meanFallingSlope";
    case Functional::kFallingSlopeStd: return "stddevFallingSlope";
    case Functional::kPeaksPerSecond: return "peaksPerSec";
    case Functional::kEquivalentLevel: return "equivalentLevel";
    case Functional::kVoicedFraction: return "voicedFraction";
    case Functional::kVoicedSegmentsPerSecond: return "voicedSegmentsPerSec";
    case Functional::kVoicedSegmentMean: return "meanVoicedSegmentLengthSec";
    case Functional::kVoicedSegmentStd: return "stddevVoicedSegmentLengthSec";
    case Functional::kUnvoicedSegmentMean: return "meanUnvoicedSegmentLengthSec";
    case Functional::kUnvoicedSegmentStd: return "stddevUnvoicedSegmentLengthSec";
  }
  return "?";
}

std::string FeatureDescriptor::name() const {
  std::string n = lld_name(lld);
  if (frames == FrameSet::kVoiced && lld != Lld::kF0) n += "_V";
  if (frames == FrameSet::kUnvoiced) n += "_UV";
  return n + "_" + functional_name(functional);
}

double lld_value(const FrameLLD& frame, Lld lld) {
  switch (lld) {
    case Lld::kF0: return frame.f0_hz;
    case Lld::kJitter: return frame.jitter;
    case Lld::kShimmer: return frame.shimmer_db;
    case Lld::kLoudness: return frame.loudness_db;
    case Lld::kHnr: return frame.hnr_db;
    case Lld::kAlphaRatio: return frame.alpha_ratio_db;
    case Lld::kHammarberg: return frame.hammarberg_db;
    case Lld::kSlope0To500: return frame.slope_0_500;
    case Lld::kSlope500To1500: return frame.slope_500_1500;
    case Lld::kF1Freq: return frame.formant_hz[0];
    case Lld::kF2Freq: return frame.formant_hz[1];
    case Lld::kF3Freq: return frame.formant_hz[2];
    case Lld::kF1Bandwidth: return frame.formant_bw_hz[0];
    case Lld::kF2Bandwidth: return frame.formant_bw_hz[1];
    case Lld::kF3Bandwidth: return frame.formant_bw_hz[2];
    case Lld::kF1RelEnergy: return frame.formant_rel_db[0];
    case Lld::kF2RelEnergy: return frame.formant_rel_db[1];
    case Lld::kF3RelEnergy: return frame.formant_rel_db[2];
    case Lld::kH1H2: return frame.h1_h2_db;
    case Lld::kH1A3: return frame.h1_a3_db;
    case Lld::kSpectralFlux: return frame.spectral_flux;
    case Lld::kSpectralCentroid: return frame.spectral_centroid_hz;
  }
  return 0.0;
}

namespace {

bool voiced_only(Lld lld) {
  switch (lld) {
    case Lld::kF0:
    case Lld::kJitter:
    case Lld::kShimmer:
    case Lld::kHnr:
    case Lld::kH1H2:
    case Lld::kH1A3:
      return true;
    default:
      return false;
  }
}

std::string family_of(Lld lld) {
  switch (lld) {
    case Lld::kF0:
    case Lld::kJitter:
    case Lld::kF1Freq:
    case Lld::kF2Freq:
    case Lld::kF3Freq:
    case Lld::kF1Bandwidth:
    case Lld::kF2Bandwidth:
    case Lld::kF3Bandwidth:
      return "frequency";
    case Lld::kShimmer:
    case Lld::kLoudness:
    case Lld::kHnr:
      return "energy";
    default:
      return "spectral";
  }
}

FeatureRegistry build_registry() {
  FeatureRegistry reg;
  auto add = [&](Lld lld, Functional fn, FrameSet frames) {
    reg.push_back({family_of(lld), lld, fn, frames});
  };
  for (int i = 0; i < kNumLlds; ++i) {
    const auto lld = static_cast<Lld>(i);
    const FrameSet frames = voiced_only(lld) ? FrameSet::kVoiced : FrameSet::kAll;
    add(lld, Functional::kMean, frames);
    add(lld, Functional::kCoeffVar, frames);
  }
  for (Lld lld : {Lld::kF0, Lld::kLoudness}) {
    const FrameSet frames = lld == Lld::kF0 ? FrameSet::kVoiced : FrameSet::kAll;
    for (Functional fn : {Functional::kPercentile20, Functional::kPercentile50,
                          Functional::kPercentile80, Functional::kRange20To80,
                          Functional::kRisingSlopeMean, Functional::kRisingSlopeStd,
                          Functional::kFallingSlopeMean, Functional::kFallingSlopeStd}) {
      add(lld, fn, frames);
    }
  }
  add(Lld::kLoudness, Functional::kPeaksPerSecond, FrameSet::kAll);
  add(Lld::kLoudness, Functional::kEquivalentLevel, FrameSet::kAll);
  for (Functional fn : {Functional::kVoicedFraction, Functional::kVoicedSegmentsPerSecond,
                        Functional::kVoicedSegmentMean, Functional::kVoicedSegmentStd,
                        Functional::kUnvoicedSegmentMean, Functional::kUnvoicedSegmentStd}) {
    add(Lld::kF0, fn, FrameSet::kAll);
  }
  for (FrameSet frames : {FrameSet::kVoiced, FrameSet::kUnvoiced}) {
    for (Lld lld : {Lld::kAlphaRatio, Lld::kHammarberg, Lld::kSlope0To500, Lld::kSlope500To1500,
                    Lld::kSpectralFlux, Lld::kSpectralCentroid}) {
      add(lld, Functional::kMean, frames);
    }
  }
  add(Lld::kJitter, Functional::kPercentile50, FrameSet::kVoiced);
  add(Lld::kShimmer, Functional::kPercentile50, FrameSet::kVoiced);
  add(Lld::kHnr, Functional::kPercentile20, FrameSet::kVoiced);
  add(Lld::kHnr, Functional::kPercentile50, FrameSet::kVoiced);
  add(Lld::kHnr, Functional::kPercentile80, FrameSet::kVoiced);
  for (Lld lld : {Lld::kF1Freq, Lld::kF2Freq, Lld::kF3Freq}) {
    add(lld, Functional::kMean, FrameSet::kVoiced);
  }
  return reg;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

bool in_set(const FrameLLD& f, FrameSet set) {
  switch (set) {
    case FrameSet::kAll: return true;
    case FrameSet::kVoiced: return f.voiced;
    case FrameSet::kUnvoiced: return !f.voiced;
  }
  return true;
}

// Per-second deltas within runs of consecutive frames of the set.
void contour_slopes(std::span<const FrameLLD> llds, Lld lld, FrameSet set,
                    std::vector<double>& rising, std::vector<double>& falling) {
  for (size_t i = 1; i < llds.size(); ++i) {
    if (!in_set(llds[i], set) || !in_set(llds[i - 1], set)) continue;
    const double d = (lld_value(llds[i], lld) - lld_value(llds[i - 1], lld)) / kFrameSeconds;
    if (d > 0.0) rising.push_back(d);
    if (d < 0.0) falling.push_back(-d);
  }
}

// Run lengths in seconds of voiced (true) or unvoiced (false) frames.
std::vector<double> segment_lengths(std::span<const FrameLLD> llds, bool voiced) {
  std::vector<double> lengths;
  int run = 0;
  for (const auto& f : llds) {
    if (f.voiced == voiced) {
      ++run;
    } else if (run > 0) {
      lengths.push_back(run * kFrameSeconds);
      run = 0;
    }
  }
  if (run > 0) lengths.push_back(run * kFrameSeconds);
  return lengths;
}

double functional_value(std::span<const FrameLLD> llds, const FeatureDescriptor& desc) {
  std::vector<double> values;
  for (const auto& f : llds) {
    if (in_set(f, desc.frames)) values.push_back(lld_value(f, desc.lld));
  }
  const double seconds = llds.size() * kFrameSeconds;
  switch (desc.functional) {
    case Functional::kMean:
      return mean_of(values);
    case Functional::kCoeffVar: {
      const double m = mean_of(values);
      return std::abs(m) > 1e-10 ? std_of(values) / std::abs(m) : 0.0;
    }
    case Functional::kPercentile20:
      return values.empty() ? 0.0 : percentile(values, 20.0);
    case Functional::kPercentile50:
      return values.empty() ? 0.0 : percentile(values, 50.0);
    case Functional::kPercentile80:
      return values.empty() ? 0.0 : percentile(values, 80.0);
    case Functional::kRange20To80:
      return values.empty() ? 0.0 : percentile(values, 80.0) - percentile(values, 20.0);
    case Functional::kRisingSlopeMean:
    case Functional::kRisingSlopeStd:
    case Functional::kFallingSlopeMean:
    case Functional::kFallingSlopeStd: {
      std::vector<double> rising, falling;
      contour_slopes(llds, desc.lld, desc.frames, rising, falling);
      if (desc.functional == Functional::kRisingSlopeMean) return mean_of(rising);
      if (desc.functional == Functional::kRisingSlopeStd) return std_of(rising);
      if (desc.functional == Functional::kFallingSlopeMean) return mean_of(falling);
      return std_of(falling);
    }
    case Functional::kPeaksPerSecond: {
      // Local maxima of the contour above its mean.
      const double m = mean_of(values);
      int peaks = 0;
      for (size_t i = 1; i + 1 < values.size(); ++i) {
        if (values[i] > values[i - 1] && values[i] >= values[i + 1] && values[i] > m) ++peaks;
      }
      return seconds > 0.0 ? peaks / seconds : 0.0;
    }
    case Functional::kEquivalentLevel: {
      if (values.empty()) return kLoudnessFloorDb;
      double acc = 0.0;
      for (double db : values) acc += std::pow(10.0, db / 10.0);
      return 10.0 * std::log10(acc / values.size());
    }
    case Functional::kVoicedFraction: {
      if (llds.empty()) return 0.0;
      const auto voiced = std::count_if(llds.begin(), llds.end(),
                                        [](const FrameLLD& f) { return f.voiced; });
      return static_cast<double>(voiced) / static_cast<double>(llds.size());
    }
    case Functional::kVoicedSegmentsPerSecond:
      return seconds > 0.0 ? segment_lengths(llds, true).size() / seconds : 0.0;
    case Functional::kVoicedSegmentMean:
      return mean_of(segment_lengths(llds, true));
    case Functional::kVoicedSegmentStd:
      return std_of(segment_lengths(llds, true));
    case Functional::kUnvoicedSegmentMean:
      return mean_of(segment_lengths(llds, false));
    case Functional::kUnvoicedSegmentStd:
      return std_of(segment_lengths(llds, false));
  }
  return 0.0;
}

}  // namespace

const FeatureRegistry& default_registry() {
  static const FeatureRegistry reg = build_registry();
  return reg;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Eigen::VectorXd aggregate_functionals(std::span<const FrameLLD> llds,
                                      const FeatureRegistry& registry) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(registry.size()));
  for (size_t i = 0; i < registry.size(); ++i) {
    const double v = functional_value(llds, registry[i]);
    out[static_cast<Eigen::Index>(i)] = std::isfinite(v) ? v : 0.0;
  }
  return out;
}

int window_count(double duration_s) {
  if (duration_s < kWindowSeconds) return 1;
  return static_cast<int>(std::floor((duration_s - kWindowSeconds) / kHopSeconds)) + 1;
}

int window_count_samples(size_t num_samples) {
  if (num_samples < static_cast<size_t>(kWindowSamples)) return 1;
  return static_cast<int>((num_samples - kWindowSamples) / kHopSamples) + 1;
}

FeatureSequence extract_sequence(const AudioBuffer& buf, const FeatureRegistry& registry,
                                 const std::string& speaker_id) {
  if (buf.sample_rate != kCanonicalRate) {
    throw DataError("feature extraction expects 16 kHz audio, got " +
                    std::to_string(buf.sample_rate) + " Hz");
  }
  const int t = window_count_samples(buf.samples.size());
  FeatureSequence seq;
  seq.speaker_id = speaker_id;
  seq.valid_len = t;
  seq.data.resize(t, static_cast<Eigen::Index>(registry.size()));
  FrameAnalyzer analyzer;
  for (int w = 0; w < t; ++w) {
    const size_t start = static_cast<size_t>(w) * kHopSamples;
    const size_t len = std::min<size_t>(kWindowSamples, buf.samples.size() - start);
    const auto llds = analyzer.extract_lld(std::span<const double>(buf.samples.data() + start, len));
    seq.data.row(w) = aggregate_functionals(llds, registry).transpose();
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Feature cache

namespace {
constexpr uint16_t kCacheVersion = 1;

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw DataError("truncated feature cache");
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
  return v;
}
}  // namespace

void write_feature_cache(const std::filesystem::path& path, const FeatureSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature cache " + path.string());
  out.write("FTRS", 4);
  put_le<uint16_t>(out, kCacheVersion);
  put_le<uint32_t>(out, static_cast<uint32_t>(seq.valid_len));
  put_le<uint32_t>(out, static_cast<uint32_t>(seq.dim()));
  for (int r = 0; r < seq.valid_len; ++r) {
    for (int c = 0; c < seq.dim(); ++c) {
      const float f = static_cast<float>(seq.data(r, c));
      uint32_t u;
      std::memcpy(&u, &f, sizeof(u));
      put_le<uint32_t>(out, u);
    }
  }
  nlohmann::json side = {{"registry_version", kRegistryVersion},
                         {"speaker_id", seq.speaker_id},
                         {"rows", seq.valid_len},
                         {"dim", seq.dim()}};
  std::ofstream sidecar(path.string() + ".json");
  sidecar << side.dump(2) << "\n";
}

FeatureSequence read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature cache " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FTRS", 4) != 0) {
    throw DataError(path.string() + ": bad feature cache magic");
  }
  const auto version = get_le<uint16_t>(in);
  if (version != kCacheVersion) {
    throw DataError(path.string() + ": unsupported feature cache version " +
                    std::to_string(version));
  }
  const auto t = get_le<uint32_t>(in);
  const auto d = get_le<uint32_t>(in);
  FeatureSequence seq;
  seq.valid_len = static_cast<int>(t);
  seq.data.resize(t, d);
  for (uint32_t r = 0; r < t; ++r) {
    for (uint32_t c = 0; c < d; ++c) {
      const uint32_t u = get_le<uint32_t>(in);
      float f;
      std::memcpy(&f, &u, sizeof(f));
      seq.data(r, c) = f;
    }
  }
  const std::filesystem::path side_path = path.string() + ".json";
  if (std::filesystem::exists(side_path)) {
    std::ifstream side(side_path);
    try {
      const auto j = nlohmann::json::parse(side);
      const auto version_name = j.value("registry_version", std::string());
      if (version_name != kRegistryVersion) {
        throw DataError(path.string() + ": registry version '" + version_name +
                        "' does not match '" + kRegistryVersion + "'");
      }
      seq.speaker_id = j.value("speaker_id", std::string());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(side_path.string() + ": " + e.what());
    }
  }
  return seq;
}

}  // namespace stressvoice
