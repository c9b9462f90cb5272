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

#include "stressvoice/session_data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace stressvoice {

const std::vector<std::string>& session_csv_columns() {
  static const std::vector<std::string> columns = [] {
    std::vector<std::string> c = {"speaker_id", "audio_path"};
    for (int i = 1; i <= kNumCortisolSamples; ++i) c.push_back("cortisol_t" + std::to_string(i));
    for (const char* name : {"si_pre", "si_post", "na_pre", "na_post", "split"}) c.push_back(name);
    return c;
  }();
  return columns;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

namespace {

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double parse_real(const std::string& cell, size_t row, const std::string& column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || cell.empty()) {
    throw DataError("row " + std::to_string(row) + ", column '" + column +
                    "': not a number: '" + cell + "'");
  }
  return value;
}

std::string format_real(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<SessionRecord> parse_sessions(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("sessions CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto& expected = session_csv_columns();
  const auto header = split_csv_line(line);
  for (const auto& column : expected) {
    if (std::find(header.begin(), header.end(), column) == header.end()) {
      throw DataError("sessions CSV header is missing column '" + column + "'");
    }
  }
  std::vector<size_t> index(expected.size());
  for (size_t c = 0; c < expected.size(); ++c) {
    index[c] = std::find(header.begin(), header.end(), expected[c]) - header.begin();
  }

  std::vector<SessionRecord> records;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      const size_t missing = std::min(cells.size(), expected.size());
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()) + " (column '" +
                      expected[missing < expected.size() ? missing : expected.size() - 1] +
                      "' missing)");
    }
    auto cell = [&](size_t c) -> const std::string& { return cells[index[c]]; };

    SessionRecord r;
    r.speaker_id = cell(0);
    r.audio_path = cell(1);
    if (r.speaker_id.empty()) {
      throw DataError("row " + std::to_string(row) + ", column 'speaker_id': empty");
    }
    for (int i = 0; i < kNumCortisolSamples; ++i) {
      r.cortisol[i] = parse_real(cell(2 + i), row, expected[2 + i]);
    }
    r.si_pre = parse_real(cell(10), row, expected[10]);
    r.si_post = parse_real(cell(11), row, expected[11]);
    r.na_pre = parse_real(cell(12), row, expected[12]);
    r.na_post = parse_real(cell(13), row, expected[13]);
    try {
      r.split = parse_split(cell(14));
    } catch (const DataError& e) {
      throw DataError("row " + std::to_string(row) + ", column 'split': " + e.what());
    }
    for (int i = 0; i < kNumCortisolSamples; ++i) {
      if (!std::isfinite(r.cortisol[i]) || r.cortisol[i] < 0.0) {
        throw DataError("row " + std::to_string(row) + ", column '" + expected[2 + i] +
                        "': cortisol must be finite and non-negative");
      }
    }
    records.push_back(std::move(r));
  }
  validate_sessions(records);
  return records;
}

std::vector<SessionRecord> load_sessions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open sessions file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_sessions(ss.str());
}

void validate_sessions(const std::vector<SessionRecord>& records) {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.speaker_id).second) {
      throw DataError("duplicate speaker_id '" + r.speaker_id + "'");
    }
    for (double c : r.cortisol) {
      if (!std::isfinite(c) || c < 0.0) {
        throw DataError("speaker '" + r.speaker_id + "': invalid cortisol value");
      }
    }
    for (double v : {r.si_pre, r.si_post, r.na_pre, r.na_post}) {
      if (!std::isfinite(v)) throw DataError("speaker '" + r.speaker_id + "': non-finite score");
    }
  }
}

std::string format_sessions(const std::vector<SessionRecord>& records) {
  std::ostringstream out;
  const auto& columns = session_csv_columns();
  for (size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << "\n";
  for (const auto& r : records) {
    out << quote_if_needed(r.speaker_id) << "," << quote_if_needed(r.audio_path);
    for (double c : r.cortisol) out << "," << format_real(c);
    out << "," << format_real(r.si_pre) << "," << format_real(r.si_post) << ","
        << format_real(r.na_pre) << "," << format_real(r.na_post) << "," << to_string(r.split)
        << "\n";
  }
  return out.str();
}

void write_sessions(const std::filesystem::path& path, const std::vector<SessionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write sessions file " + path.string());
  out << format_sessions(records);
}

double cortisol_delta(const SessionRecord& record) {
  const auto& c = record.cortisol;
  const double post_max = *std::max_element(c.begin() + 2, c.end());
  return post_max - (c[0] + c[1]) / 2.0;
}

double appraisal_delta(const SessionRecord& record) { return record.si_post - record.si_pre; }

double affect_delta(const SessionRecord& record) { return record.na_post - record.na_pre; }

TargetTriple raw_deltas(const SessionRecord& record) {
  return {cortisol_delta(record), appraisal_delta(record), affect_delta(record)};
}

ScalingParams fit_scaling(const std::vector<TargetTriple>& train_deltas) {
  if (train_deltas.size() < 2) {
    throw DataError("target scaling needs at least 2 train records, got " +
                    std::to_string(train_deltas.size()));
  }
  ScalingParams p;
  for (int k = 0; k < kNumTargets; ++k) {
    p.min[k] = p.max[k] = train_deltas.front()[k];
    for (const auto& d : train_deltas) {
      p.min[k] = std::min(p.min[k], d[k]);
      p.max[k] = std::max(p.max[k], d[k]);
    }
    if (!(p.max[k] > p.min[k])) {
      throw DataError("degenerate spread for target '" + to_string(static_cast<Target>(k)) +
                      "': all train deltas equal " + format_real(p.min[k]));
    }
  }
  return p;
}

TargetTriple scale_targets(const TargetTriple& delta, const ScalingParams& params) {
  TargetTriple out{};
  for (int k = 0; k < kNumTargets; ++k) {
    out[k] = (delta[k] - params.min[k]) / (params.max[k] - params.min[k]);
  }
  return out;
}

std::string scaling_to_json(const ScalingParams& params) {
  nlohmann::json j;
  for (int k = 0; k < kNumTargets; ++k) {
    j[to_string(static_cast<Target>(k))] = {params.min[k], params.max[k]};
  }
  return j.dump(2);
}

ScalingParams scaling_from_json(const std::string& text) {
  ScalingParams p;
  try {
    const auto j = nlohmann::json::parse(text);
    for (int k = 0; k < kNumTargets; ++k) {
      const auto& pair = j.at(to_string(static_cast<Target>(k)));
      p.min[k] = pair.at(0).get<double>();
      p.max[k] = pair.at(1).get<double>();
      if (!(p.max[k] > p.min[k])) throw DataError("scaling params: max must exceed min");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed scaling JSON: ") + e.what());
  }
  return p;
}

std::vector<TargetVector> build_targets(const std::vector<SessionRecord>& records,
                                        ScalingParams* fitted) {
  std::vector<TargetTriple> train;
  for (const auto& r : records) {
    if (r.split == Split::kTrain) train.push_back(raw_deltas(r));
  }
  const ScalingParams params = fit_scaling(train);
  if (fitted) *fitted = params;
  std::vector<TargetVector> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    TargetVector t;
    t.raw = raw_deltas(r);
    t.scaled = scale_targets(t.raw, params);
    out.push_back(t);
  }
  return out;
}

}  // namespace stressvoice
