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

#include "stressvoice/normalization.h"

#include <cmath>

#include "json.hpp"

namespace stressvoice {

std::string to_string(NormMode mode) {
  return mode == NormMode::kStandard ? "standard" : "speaker";
}

NormMode parse_norm_mode(const std::string& name) {
  if (name == "standard") return NormMode::kStandard;
  if (name == "speaker") return NormMode::kSpeaker;
  throw DataError("unknown normalization mode '" + name + "'");
}

ColumnStats column_stats(const std::vector<const FeatureSequence*>& sequences) {
  Eigen::Index dim = -1;
  long count = 0;
  for (const auto* s : sequences) {
    if (dim < 0) dim = s->data.cols();
    if (s->data.cols() != dim) throw DataError("feature dimension mismatch between sequences");
    count += s->valid_len;
  }
  if (count == 0) throw DataError("normalization population is empty");

  // Two passes in a fixed order, so results do not depend on threading.
  ColumnStats st;
  st.mean = Eigen::VectorXd::Zero(dim);
  for (const auto* s : sequences) {
    st.mean += s->data.topRows(s->valid_len).colwise().sum().transpose();
  }
  st.mean /= static_cast<double>(count);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  for (const auto* s : sequences) {
    for (int r = 0; r < s->valid_len; ++r) {
      var += (s->data.row(r).transpose() - st.mean).array().square().matrix();
    }
  }
  st.std = (var / static_cast<double>(count)).array().sqrt();
  return st;
}

NormStats fit_normalization(const std::vector<SplitSequence>& sequences, NormMode mode) {
  NormStats stats;
  stats.mode = mode;
  if (mode == NormMode::kStandard) {
    std::vector<const FeatureSequence*> train;
    for (const auto& s : sequences) {
      if (s.split == Split::kTrain) train.push_back(s.seq);
    }
    if (train.empty()) throw DataError("standard normalization needs at least one train sequence");
    stats.entries[kGlobalKey] = column_stats(train);
  } else {
    std::map<std::string, std::vector<const FeatureSequence*>> by_speaker;
    for (const auto& s : sequences) by_speaker[s.seq->speaker_id].push_back(s.seq);
    if (by_speaker.empty()) throw DataError("speaker normalization needs at least one sequence");
    for (const auto& [speaker, seqs] : by_speaker) stats.entries[speaker] = column_stats(seqs);
  }
  return stats;
}

FeatureSequence transform(const FeatureSequence& seq, const NormStats& stats) {
  const std::string key = stats.mode == NormMode::kStandard ? kGlobalKey : seq.speaker_id;
  const auto it = stats.entries.find(key);
  if (it == stats.entries.end()) {
    throw DataError(stats.mode == NormMode::kSpeaker
                        ? "no normalization statistics for speaker '" + seq.speaker_id + "'"
                        : std::string("normalization statistics lack a global entry"));
  }
  const ColumnStats& st = it->second;
  if (st.mean.size() != seq.data.cols()) throw DataError("normalization dimension mismatch");
  const Eigen::ArrayXd scale = st.std.array().max(kNormEpsilon).inverse();
  FeatureSequence out = seq;
  for (int r = 0; r < seq.valid_len; ++r) {
    out.data.row(r) =
        ((seq.data.row(r).transpose().array() - st.mean.array()) * scale).matrix().transpose();
  }
  return out;
}

std::string norm_stats_to_json(const NormStats& stats) {
  nlohmann::json j;
  j["mode"] = to_string(stats.mode);
  j["epsilon"] = kNormEpsilon;
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [key, st] : stats.entries) {
    entries[key] = {{"mean", std::vector<double>(st.mean.data(), st.mean.data() + st.mean.size())},
                    {"std", std::vector<double>(st.std.data(), st.std.data() + st.std.size())}};
  }
  j["entries"] = entries;
  return j.dump(2);
}

NormStats norm_stats_from_json(const std::string& text) {
  NormStats stats;
  try {
    const auto j = nlohmann::json::parse(text);
    stats.mode = parse_norm_mode(j.at("mode").get<std::string>());
    for (const auto& [key, value] : j.at("entries").items()) {
      const auto mean = value.at("mean").get<std::vector<double>>();
      const auto sd = value.at("std").get<std::vector<double>>();
      if (mean.size() != sd.size()) throw DataError("normalization entry '" + key + "' ragged");
      ColumnStats st;
      st.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
      st.std = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
      stats.entries[key] = st;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed normalization JSON: ") + e.what());
  }
  return stats;
}

}  // namespace stressvoice
