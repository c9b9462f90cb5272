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

#include "stressvoice/common.h"

namespace stressvoice {

inline constexpr int kNumCortisolSamples = 8;

// One subject's session. Cortisol samples T1, T2 are pre-stress baselines;
// T3..T8 are taken after the stress task.
struct SessionRecord {
  std::string speaker_id;
  std::string audio_path;
  std::array<double, kNumCortisolSamples> cortisol{};  // nmol/l
  double si_pre = 0.0;
  double si_post = 0.0;
  double na_pre = 0.0;
  double na_post = 0.0;
  Split split = Split::kTrain;
};

using TargetTriple = std::array<double, kNumTargets>;

struct TargetVector {
  TargetTriple raw{};
  TargetTriple scaled{};
};

// Per-target (min, max) of the raw train-split deltas.
struct ScalingParams {
  std::array<double, kNumTargets> min{};
  std::array<double, kNumTargets> max{};
};

// Header columns of the sessions CSV, in order.
const std::vector<std::string>& session_csv_columns();

std::vector<SessionRecord> load_sessions(const std::filesystem::path& path);
std::vector<SessionRecord> parse_sessions(const std::string& text);
void write_sessions(const std::filesystem::path& path, const std::vector<SessionRecord>& records);
std::string format_sessions(const std::vector<SessionRecord>& records);

// Throws DataError if a record breaks the SessionRecord invariants or if a
// speaker id is repeated.
void validate_sessions(const std::vector<SessionRecord>& records);

// max(T3..T8) - mean(T1, T2)
double cortisol_delta(const SessionRecord& record);
double appraisal_delta(const SessionRecord& record);
double affect_delta(const SessionRecord& record);
TargetTriple raw_deltas(const SessionRecord& record);

ScalingParams fit_scaling(const std::vector<TargetTriple>& train_deltas);
// Not clipped: dev/test deltas outside the train range map outside [0, 1].
TargetTriple scale_targets(const TargetTriple& delta, const ScalingParams& params);

std::string scaling_to_json(const ScalingParams& params);
ScalingParams scaling_from_json(const std::string& text);

// Raw and scaled targets for every record; scaling fitted on the train split.
std::vector<TargetVector> build_targets(const std::vector<SessionRecord>& records,
                                        ScalingParams* fitted = nullptr);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace stressvoice
