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

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stressvoice/common.h"
#include "stressvoice/features.h"

namespace stressvoice {

enum class NormMode { kStandard, kSpeaker };

std::string to_string(NormMode mode);
NormMode parse_norm_mode(const std::string& name);

inline constexpr double kNormEpsilon = 1e-8;

struct ColumnStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // population (divide by N)

  bool is_constant(Eigen::Index column) const { return std[column] < kNormEpsilon; }
};

// Standard mode keeps a single entry under "global"; speaker mode one entry
// per speaker id.
struct NormStats {
  NormMode mode = NormMode::kStandard;
  std::map<std::string, ColumnStats> entries;
};

inline constexpr const char* kGlobalKey = "global";

struct SplitSequence {
  const FeatureSequence* seq;
  Split split;
};

// Standard mode fits on train-split sequences only. Speaker mode fits each
// speaker on all of that speaker's windows, whatever the split.
NormStats fit_normalization(const std::vector<SplitSequence>& sequences, NormMode mode);

ColumnStats column_stats(const std::vector<const FeatureSequence*>& sequences);

// (x - mean) / max(std, eps) on valid rows; padded rows are left untouched.
FeatureSequence transform(const FeatureSequence& seq, const NormStats& stats);

std::string norm_stats_to_json(const NormStats& stats);
NormStats norm_stats_from_json(const std::string& text);

}  // namespace stressvoice
