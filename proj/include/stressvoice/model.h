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

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stressvoice/common.h"
#include "stressvoice/features.h"

namespace stressvoice {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Pooling { kMean, kAttention };

std::string to_string(Pooling pooling);
Pooling parse_pooling(const std::string& name);

// Single-task heads predict one target; the multi-task head predicts all
// three in kAllTargets order.
struct TaskMode {
  bool multi = false;
  Target target = Target::kCortisol;

  static TaskMode stl(Target t) { return {false, t}; }
  static TaskMode mtl() { return {true, Target::kCortisol}; }

  int outputs() const { return multi ? kNumTargets : 1; }
  bool operator==(const TaskMode&) const = default;
};

std::string to_string(const TaskMode& task);  // "mtl" or "stl-<target>"
TaskMode parse_task(const std::string& name);

struct ModelShape {
  int input_dim = kNumFeatures;
  int hidden = 64;
  Pooling pooling = Pooling::kMean;
  TaskMode task;

  int outputs() const { return task.outputs(); }
};

struct ParamBlock {
  std::string name;
  std::span<double> values;
};

struct ConstParamBlock {
  std::string name;
  std::span<const double> values;
};

// GRU (update z, reset r, candidate c) followed by pooling and a linear
// head. Matrices are row-major; blocks() fixes the serialization order.
struct ModelParams {
  ModelShape shape;
  RowMatrix w_z, w_r, w_c;  // hidden x input
  RowMatrix u_z, u_r, u_c;  // hidden x hidden
  Eigen::VectorXd b_z, b_r, b_c;
  Eigen::VectorXd attention;  // hidden; empty for mean pooling
  RowMatrix head_w;           // outputs x hidden
  Eigen::VectorXd head_b;

  static ModelParams zeros(const ModelShape& shape);
  // Weights ~ U(-1/sqrt(h), 1/sqrt(h)), biases zero.
  static ModelParams init(const ModelShape& shape, uint64_t seed);

  std::vector<ParamBlock> blocks();
  std::vector<ConstParamBlock> blocks() const;
  size_t size() const;
  void set_zero();
  bool all_finite() const;
};

using Gradients = ModelParams;

// Everything the backward pass needs from one forward pass.
struct ForwardTrace {
  int length = 0;            // steps processed (valid_len)
  RowMatrix inputs;          // length x input_dim
  Eigen::MatrixXd hidden;    // hidden x (length + 1); column 0 is h_0 = 0
  Eigen::MatrixXd update;    // z_t, hidden x length
  Eigen::MatrixXd reset;     // r_t
  Eigen::MatrixXd candidate; // c_t
  Eigen::VectorXd logits;    // attention logits Z (attention pooling only)
  Eigen::VectorXd alpha;     // attention weights (attention pooling only)
  Eigen::VectorXd pooled;    // F
  Eigen::VectorXd dropout;   // per-unit multiplier on F; empty in eval mode
  Eigen::VectorXd prediction;
};

// Hidden states h_1..h_L as columns (h_0 excluded). Rows beyond valid_len
// are never read.
Eigen::MatrixXd gru_forward(const FeatureSequence& seq, const ModelParams& params);

// hiddens: h x T, only the first valid_len columns are used.
Eigen::VectorXd mean_pool(const Eigen::MatrixXd& hiddens, int valid_len);

struct AttentionPool {
  Eigen::VectorXd logits;  // T entries, -inf beyond valid_len
  Eigen::VectorXd alpha;   // T entries, 0 beyond valid_len
  Eigen::VectorXd pooled;
};
AttentionPool attention_pool(const Eigen::MatrixXd& hiddens, int valid_len,
                             const Eigen::VectorXd& w);

// Inverted dropout mask: each unit kept with probability keep_prob and
// scaled by 1 / keep_prob.
Eigen::VectorXd sample_dropout_mask(int size, double keep_prob, Rng& rng);

// mask == nullptr means eval mode.
Eigen::VectorXd head_forward(const Eigen::VectorXd& pooled, const ModelParams& params,
                             const Eigen::VectorXd* mask);

ForwardTrace forward(const FeatureSequence& seq, const ModelParams& params,
                     const Eigen::VectorXd* dropout_mask = nullptr, int max_len = 0);

// Eval-mode prediction.
Eigen::VectorXd predict(const FeatureSequence& seq, const ModelParams& params, int max_len = 0);

// Attention weights over the valid steps (attention pooling only).
Eigen::VectorXd attention_weights(const FeatureSequence& seq, const ModelParams& params,
                                  int max_len = 0);

struct CheckpointMeta {
  std::string registry_version = kRegistryVersion;
  uint64_t seed = 0;
};

// One JSON header line, then the parameter blob as little-endian f64 in
// blocks() order (each matrix row-major).
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointMeta& meta);
ModelParams load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace stressvoice
