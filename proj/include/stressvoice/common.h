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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stressvoice {

// Malformed inputs: CSV/JSON/WAV schema violations, unknown speakers, bad configs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { kTrain, kDev, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& label);

// The three stress indicators, in the fixed multi-task output order.
enum class Target { kCortisol = 0, kAppraisal = 1, kAffect = 2 };
inline constexpr int kNumTargets = 3;
inline constexpr Target kAllTargets[kNumTargets] = {Target::kCortisol, Target::kAppraisal,
                                                    Target::kAffect};

std::string to_string(Target target);
Target parse_target(const std::string& name);

// SplitMix64-seeded xoshiro256** generator. Distribution helpers are written
// out here instead of using <random> distributions, whose output differs
// between standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  double normal();

  // Independent child stream; the parent state is not advanced.
  Rng fork(uint64_t stream) const;

 private:
  uint64_t s_[4];
  uint64_t seed_;
};

uint64_t mix_seed(uint64_t a, uint64_t b);
uint64_t hash_string(const std::string& s);

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace stressvoice
