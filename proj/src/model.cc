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

#include "stressvoice/model.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace stressvoice {

std::string to_string(Pooling pooling) {
  return pooling == Pooling::kMean ? "mean" : "attention";
}

Pooling parse_pooling(const std::string& name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "attention") return Pooling::kAttention;
  throw DataError("unknown pooling '" + name + "'");
}

std::string to_string(const TaskMode& task) {
  return task.multi ? "mtl" : "stl-" + to_string(task.target);
}

TaskMode parse_task(const std::string& name) {
  if (name == "mtl") return TaskMode::mtl();
  if (name.rfind("stl-", 0) == 0) return TaskMode::stl(parse_target(name.substr(4)));
  throw DataError("unknown task '" + name + "' (expected mtl or stl-<target>)");
}

ModelParams ModelParams::zeros(const ModelShape& shape) {
  if (shape.input_dim <= 0 || shape.hidden <= 0) throw DataError("model dimensions must be positive");
  const int d = shape.input_dim, h = shape.hidden, k = shape.outputs();
  ModelParams p;
  p.shape = shape;
  for (RowMatrix* m : {&p.w_z, &p.w_r, &p.w_c}) *m = RowMatrix::Zero(h, d);
  for (RowMatrix* m : {&p.u_z, &p.u_r, &p.u_c}) *m = RowMatrix::Zero(h, h);
  for (Eigen::VectorXd* v : {&p.b_z, &p.b_r, &p.b_c}) *v = Eigen::VectorXd::Zero(h);
  if (shape.pooling == Pooling::kAttention) p.attention = Eigen::VectorXd::Zero(h);
  p.head_w = RowMatrix::Zero(k, h);
  p.head_b = Eigen::VectorXd::Zero(k);
  return p;
}

ModelParams ModelParams::init(const ModelShape& shape, uint64_t seed) {
  ModelParams p = zeros(shape);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  for (auto& block : p.blocks()) {
    if (block.name.rfind("b_", 0) == 0 || block.name == "head_b") continue;
    for (double& v : block.values) v = rng.uniform(-bound, bound);
  }
  return p;
}

std::vector<ParamBlock> ModelParams::blocks() {
  auto span_of = [](auto& m) { return std::span<double>(m.data(), static_cast<size_t>(m.size())); };
  std::vector<ParamBlock> out = {
      {"w_z", span_of(w_z)}, {"w_r", span_of(w_r)}, {"w_c", span_of(w_c)},
      {"u_z", span_of(u_z)}, {"u_r", span_of(u_r)}, {"u_c", span_of(u_c)},
      {"b_z", span_of(b_z)}, {"b_r", span_of(b_r)}, {"b_c", span_of(b_c)}};
  if (shape.pooling == Pooling::kAttention) out.push_back({"attention", span_of(attention)});
  out.push_back({"head_w", span_of(head_w)});
  out.push_back({"head_b", span_of(head_b)});
  return out;
}

std::vector<ConstParamBlock> ModelParams::blocks() const {
  std::vector<ConstParamBlock> out;
  for (auto& b : const_cast<ModelParams*>(this)->blocks()) {
    out.push_back({b.name, std::span<const double>(b.values.data(), b.values.size())});
  }
  return out;
}

size_t ModelParams::size() const {
  size_t n = 0;
  for (const auto& b : blocks()) n += b.values.size();
  return n;
}

void ModelParams::set_zero() {
  for (auto& b : blocks()) std::fill(b.values.begin(), b.values.end(), 0.0);
}

bool ModelParams::all_finite() const {
  for (const auto& b : blocks()) {
    for (double v : b.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_input(const FeatureSequence& seq, const ModelParams& params) {
  if (seq.data.cols() != params.shape.input_dim) {
    throw DataError("sequence has " + std::to_string(seq.data.cols()) +
                    " features, model expects " + std::to_string(params.shape.input_dim));
  }
  if (seq.valid_len < 1 || seq.valid_len > seq.data.rows()) {
    throw DataError("sequence valid length " + std::to_string(seq.valid_len) + " out of range");
  }
}

int effective_length(const FeatureSequence& seq, int max_len) {
  return max_len > 0 ? std::min(seq.valid_len, max_len) : seq.valid_len;
}

// Fills hidden/update/reset/candidate of the trace.
void run_gru(const FeatureSequence& seq, const ModelParams& p, int length, ForwardTrace& tr) {
  const int h = p.shape.hidden;
  tr.length = length;
  tr.inputs = seq.data.topRows(length);
  const Eigen::MatrixXd xz = p.w_z * tr.inputs.transpose();
  const Eigen::MatrixXd xr = p.w_r * tr.inputs.transpose();
  const Eigen::MatrixXd xc = p.w_c * tr.inputs.transpose();
  tr.hidden = Eigen::MatrixXd::Zero(h, length + 1);
  tr.update.resize(h, length);
  tr.reset.resize(h, length);
  tr.candidate.resize(h, length);
  Eigen::VectorXd gated(h);
  for (int t = 0; t < length; ++t) {
    const auto prev = tr.hidden.col(t);
    const Eigen::VectorXd az = xz.col(t) + p.u_z * prev + p.b_z;
    const Eigen::VectorXd ar = xr.col(t) + p.u_r * prev + p.b_r;
    for (int i = 0; i < h; ++i) {
      tr.update(i, t) = sigmoid(az[i]);
      tr.reset(i, t) = sigmoid(ar[i]);
      gated[i] = tr.reset(i, t) * prev[i];
    }
    const Eigen::VectorXd ac = xc.col(t) + p.u_c * gated + p.b_c;
    for (int i = 0; i < h; ++i) {
      const double c = std::tanh(ac[i]);
      const double z = tr.update(i, t);
      tr.candidate(i, t) = c;
      tr.hidden(i, t + 1) = (1.0 - z) * prev[i] + z * c;
    }
  }
}

}  // namespace

Eigen::MatrixXd gru_forward(const FeatureSequence& seq, const ModelParams& params) {
  check_input(seq, params);
  ForwardTrace tr;
  run_gru(seq, params, seq.valid_len, tr);
  return tr.hidden.rightCols(tr.length);
}

Eigen::VectorXd mean_pool(const Eigen::MatrixXd& hiddens, int valid_len) {
  if (valid_len < 1 || valid_len > hiddens.cols()) throw DataError("mean_pool: bad valid length");
  return hiddens.leftCols(valid_len).rowwise().sum() / static_cast<double>(valid_len);
}

AttentionPool attention_pool(const Eigen::MatrixXd& hiddens, int valid_len,
                             const Eigen::VectorXd& w) {
  if (valid_len < 1 || valid_len > hiddens.cols()) {
    throw DataError("attention_pool: bad valid length");
  }
  const Eigen::Index steps = hiddens.cols();
  AttentionPool out;
  out.logits = Eigen::VectorXd::Constant(steps, -std::numeric_limits<double>::infinity());
  out.alpha = Eigen::VectorXd::Zero(steps);
  out.logits.head(valid_len) = hiddens.leftCols(valid_len).transpose() * w;
  const double peak = out.logits.head(valid_len).maxCoeff();
  double total = 0.0;
  for (int t = 0; t < valid_len; ++t) {
    out.alpha[t] = std::exp(out.logits[t] - peak);
    total += out.alpha[t];
  }
  out.alpha.head(valid_len) /= total;
  out.pooled = hiddens.leftCols(valid_len) * out.alpha.head(valid_len);
  return out;
}

Eigen::VectorXd sample_dropout_mask(int size, double keep_prob, Rng& rng) {
  Eigen::VectorXd mask(size);
  for (int i = 0; i < size; ++i) mask[i] = rng.uniform() < keep_prob ? 1.0 / keep_prob : 0.0;
  return mask;
}

Eigen::VectorXd head_forward(const Eigen::VectorXd& pooled, const ModelParams& params,
                             const Eigen::VectorXd* mask) {
  if (mask) return params.head_w * pooled.cwiseProduct(*mask) + params.head_b;
  return params.head_w * pooled + params.head_b;
}

ForwardTrace forward(const FeatureSequence& seq, const ModelParams& params,
                     const Eigen::VectorXd* dropout_mask, int max_len) {
  check_input(seq, params);
  ForwardTrace tr;
  run_gru(seq, params, effective_length(seq, max_len), tr);
  const auto states = tr.hidden.rightCols(tr.length);
  if (params.shape.pooling == Pooling::kAttention) {
    auto pool = attention_pool(states, tr.length, params.attention);
    tr.logits = std::move(pool.logits);
    tr.alpha = std::move(pool.alpha);
    tr.pooled = std::move(pool.pooled);
  } else {
    tr.pooled = mean_pool(states, tr.length);
  }
  if (dropout_mask) tr.dropout = *dropout_mask;
  tr.prediction = head_forward(tr.pooled, params, dropout_mask);
  return tr;
}

Eigen::VectorXd predict(const FeatureSequence& seq, const ModelParams& params, int max_len) {
  return forward(seq, params, nullptr, max_len).prediction;
}

Eigen::VectorXd attention_weights(const FeatureSequence& seq, const ModelParams& params,
                                  int max_len) {
  if (params.shape.pooling != Pooling::kAttention) {
    throw DataError("attention weights requested from a mean-pooling model");
  }
  return forward(seq, params, nullptr, max_len).alpha;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointMeta& meta) {
  nlohmann::json header = {{"format", "stressvoice-checkpoint"},
                           {"version", 1},
                           {"d", params.shape.input_dim},
                           {"h", params.shape.hidden},
                           {"k", params.shape.outputs()},
                           {"pooling", to_string(params.shape.pooling)},
                           {"task", to_string(params.shape.task)},
                           {"registry_version", meta.registry_version},
                           {"seed", meta.seed}};
  nlohmann::json order = nlohmann::json::array();
  for (const auto& b : params.blocks()) order.push_back({b.name, b.values.size()});
  header["blocks"] = order;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << header.dump() << "\n";
  for (const auto& b : params.blocks()) {
    for (double v : b.values) {
      uint64_t u;
      std::memcpy(&u, &v, sizeof(u));
      unsigned char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
}

ModelParams load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty checkpoint");
  ModelShape shape;
  CheckpointMeta m;
  try {
    const auto header = nlohmann::json::parse(line);
    shape.input_dim = header.at("d").get<int>();
    shape.hidden = header.at("h").get<int>();
    shape.pooling = parse_pooling(header.at("pooling").get<std::string>());
    shape.task = parse_task(header.at("task").get<std::string>());
    if (header.at("k").get<int>() != shape.outputs()) throw DataError("checkpoint k/task mismatch");
    m.registry_version = header.value("registry_version", std::string());
    m.seed = header.value("seed", uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  ModelParams params = ModelParams::zeros(shape);
  for (auto& b : params.blocks()) {
    for (double& v : b.values) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        throw DataError(path.string() + ": truncated parameter blob");
      }
      uint64_t u = 0;
      for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(bytes[i]) << (8 * i);
      std::memcpy(&v, &u, sizeof(v));
    }
  }
  if (meta) *meta = m;
  return params;
}

}  // namespace stressvoice
