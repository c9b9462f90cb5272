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
#include <atomic>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stressvoice/normalization.h"
#include "stressvoice/session_data.h"
#include "stressvoice/training.h"

namespace stressvoice {

// Per-output mean absolute error over subjects.
Eigen::VectorXd mae(std::span<const Eigen::VectorXd> predictions,
                    std::span<const Eigen::VectorXd> targets);

// One grid cell: model family x task x normalization.
struct ExperimentConfig {
  Pooling pooling = Pooling::kAttention;
  TaskMode task = TaskMode::mtl();
  NormMode normalization = NormMode::kStandard;
  int hidden = 64;
  TrainConfig train;

  std::string model_name() const;  // GRU-STL, AGRU-MTL, ...
  std::string id() const;          // e.g. agru-stl-cortisol-speaker
};

// Sequences with their scaled targets, partitioned by split. Test items are
// only reachable through test(), which counts accesses.
struct LabeledSequence {
  FeatureSequence seq;
  TargetTriple target{};
};

class SplitData {
 public:
  SplitData(std::vector<LabeledSequence> items, std::span<const Split> splits);
  SplitData(const SplitData&) = delete;
  SplitData& operator=(const SplitData&) = delete;

  std::span<const LabeledSequence> train() const { return train_; }
  std::span<const LabeledSequence> dev() const { return dev_; }
  std::span<const LabeledSequence> test() const;
  size_t test_accesses() const { return test_accesses_.load(); }

 private:
  std::vector<LabeledSequence> train_, dev_, test_;
  mutable std::atomic<size_t> test_accesses_{0};
};

// Examples for a task: one output for STL, three for MTL.
std::vector<Example> make_examples(std::span<const LabeledSequence> items, const TaskMode& task);

struct JobResult {
  ExperimentConfig config;
  TrainResult training;
  Eigen::VectorXd dev_mae;  // per model output
};

// Trains one configuration on already-normalized data.
JobResult run_experiment(const SplitData& data, const ExperimentConfig& config);

struct ResultRow {
  std::string model;
  NormMode normalization = NormMode::kStandard;
  std::array<double, kNumTargets> dev{};
  std::array<std::optional<double>, kNumTargets> test;
};

struct ResultsTable {
  std::vector<ResultRow> rows;
  std::array<size_t, kNumTargets> best_row{};

  std::string to_csv() const;
};

// Index of the lowest dev MAE per target. Only dev numbers are visible here.
std::array<size_t, kNumTargets> select_dev_best(
    std::span<const std::array<double, kNumTargets>> dev_mae);

struct GridOptions {
  TrainConfig train;
  int hidden = 64;
  uint64_t seed = 0;
  int jobs = 1;
};

struct GridResult {
  ResultsTable table;
  std::vector<JobResult> jobs;  // trainings, 8 per normalization mode
  // Test-split reads observed when selection ran; must be zero.
  size_t test_accesses_before_selection = 0;
  // Predict-the-train-mean baseline on scaled targets.
  std::array<double, kNumTargets> baseline_dev_mae{};
  std::array<double, kNumTargets> baseline_test_mae{};
  ScalingParams scaling;
};

// features[i] are raw (unnormalized) features for sessions[i].
GridResult run_grid(const std::vector<SessionRecord>& sessions,
                    const std::vector<FeatureSequence>& features, const GridOptions& options);

// Same protocol, starting from raw targets and explicit splits.
GridResult run_grid(const std::vector<FeatureSequence>& features,
                    const std::vector<TargetTriple>& raw_targets, const std::vector<Split>& splits,
                    const GridOptions& options);

// Normalizes every sequence with statistics fitted per the mode.
std::vector<FeatureSequence> normalize_all(const std::vector<FeatureSequence>& features,
                                           const std::vector<Split>& splits, NormMode mode);

// All 16 grid cells: {GRU, AGRU} x {STL x 3 targets, MTL} x {standard, speaker}.
std::vector<ExperimentConfig> grid_configs(const GridOptions& options);

struct AttentionReport {
  std::vector<std::string> subjects;
  std::vector<Eigen::VectorXd> alphas;  // one per subject, valid steps only
  Eigen::VectorXd raw_mean, raw_std;    // pointwise over subjects still present at t
  Eigen::VectorXd mean, std;            // smoothed

  std::string alphas_csv() const;
  std::string curves_csv() const;
  std::string svg() const;
  // Share of the unsmoothed mean curve's mass on the first half of the steps.
  double first_half_mass() const;
};

inline constexpr int kDefaultSmoothingWindow = 25;

// Centered moving average; windows are truncated at the edges.
Eigen::VectorXd moving_average(const Eigen::VectorXd& x, int window);

AttentionReport attention_report(const ModelParams& params,
                                 std::span<const FeatureSequence> test_features,
                                 int smoothing_window = kDefaultSmoothingWindow, int max_len = 0);

struct Histogram {
  std::vector<double> edges;  // counts.size() + 1 entries
  std::vector<int> counts;
  double min = 0.0, max = 0.0, median = 0.0;
};

Histogram histogram(std::vector<double> values, int bins = 10);
std::array<Histogram, kNumTargets> target_histograms(const std::vector<SessionRecord>& sessions,
                                                     int bins = 10);
std::string histograms_csv(const std::array<Histogram, kNumTargets>& hists);

std::string format_number(double v);

}  // namespace stressvoice
