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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "stressvoice/model.h"

namespace stressvoice {

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;  // Nesterov
  int batch_size = 16;
  int max_epochs = 100;
  int max_seq_len = 1200;  // windows; longer sequences lose their tail
  double dropout = 0.2;
  int patience = 10;
  uint64_t seed = 0;

  // Throws DataError on non-positive sizes or patience > max_epochs.
  void validate() const;
};

// A training or evaluation item. target has one entry per model output.
struct Example {
  const FeatureSequence* seq = nullptr;
  Eigen::VectorXd target;
};

// Mean absolute difference over the outputs.
double l1_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target);

// Adds weight * d l1_loss(trace.prediction, target) / d params into grads.
// The subgradient of |x| at 0 is taken as 0.
void backward(const ForwardTrace& trace, const Eigen::VectorXd& target, const ModelParams& params,
              double weight, Gradients& grads);

// Mean loss over the batch; grads receives the mean gradient. masks may be
// empty (eval-mode forward) or hold one dropout mask per example.
// Throws NumericError naming the block if a gradient is non-finite.
double batch_loss_and_gradients(const ModelParams& params, std::span<const Example> batch,
                                std::span<const Eigen::VectorXd> masks, int max_len,
                                Gradients& grads);

struct OptimizerState {
  Gradients velocity;  // zero-initialized, same shapes as the parameters
};

OptimizerState make_optimizer_state(const ModelParams& params);

// v <- mu * v + g;  theta <- theta - lr * (g + mu * v)
void sgd_nesterov_step(ModelParams& params, const Gradients& grads, OptimizerState& state,
                       double lr, double momentum);

// Tracks the best dev metric. Epochs are 1-based.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true if metric improves strictly on the best seen so far.
  bool update(int epoch, double metric);
  bool should_stop(int epoch) const { return best_epoch_ > 0 && epoch - best_epoch_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_metric_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_metric_ = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::array<std::optional<double>, kNumTargets> dev_mae;  // unset for targets an STL model lacks
  double dev_mae_mean = 0.0;
};

struct TrainResult {
  ModelParams best;
  int best_epoch = 0;
  double best_dev_mae = 0.0;
  std::vector<EpochRecord> history;
};

// Per-output MAE of eval-mode predictions.
Eigen::VectorXd evaluate_mae(const ModelParams& params, std::span<const Example> examples,
                             int max_len);

TrainResult train(std::span<const Example> train_set, std::span<const Example> dev_set,
                  const ModelShape& shape, const TrainConfig& config);

std::string history_to_csv(const std::vector<EpochRecord>& history);

}  // namespace stressvoice
