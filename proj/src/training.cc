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

#include "stressvoice/training.h"

#include <cmath>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

namespace stressvoice {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DataError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw DataError("momentum must be in [0, 1)");
  if (batch_size <= 0) throw DataError("batch_size must be positive");
  if (max_epochs <= 0) throw DataError("max_epochs must be positive");
  if (max_seq_len <= 0) throw DataError("max_seq_len must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw DataError("dropout must be in [0, 1)");
  if (patience <= 0 || patience > max_epochs) {
    throw DataError("patience must be in [1, max_epochs]");
  }
}

double l1_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXd& target) {
  if (prediction.size() != target.size() || prediction.size() == 0) {
    throw DataError("l1_loss: prediction/target length mismatch");
  }
  return (prediction - target).cwiseAbs().mean();
}

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

void backward(const ForwardTrace& tr, const Eigen::VectorXd& target, const ModelParams& p,
              double weight, Gradients& g) {
  const int h = p.shape.hidden;
  const int k = p.shape.outputs();
  const int steps = tr.length;

  Eigen::VectorXd dy(k);
  for (int i = 0; i < k; ++i) dy[i] = weight * sign(tr.prediction[i] - target[i]) / k;

  // Head.
  const Eigen::VectorXd dropped =
      tr.dropout.size() ? tr.pooled.cwiseProduct(tr.dropout) : tr.pooled;
  g.head_w.noalias() += dy * dropped.transpose();
  g.head_b += dy;
  Eigen::VectorXd d_pooled = p.head_w.transpose() * dy;
  if (tr.dropout.size()) d_pooled = d_pooled.cwiseProduct(tr.dropout);

  // Pooling -> gradient w.r.t. each hidden state h_1..h_L (columns).
  const auto states = tr.hidden.rightCols(steps);
  Eigen::MatrixXd d_states(h, steps);
  if (p.shape.pooling == Pooling::kAttention) {
    const Eigen::VectorXd alpha = tr.alpha.head(steps);
    const Eigen::VectorXd d_alpha = states.transpose() * d_pooled;
    const double expected = alpha.dot(d_alpha);
    const Eigen::VectorXd d_logits = alpha.cwiseProduct(d_alpha.array().matrix() -
                                                        Eigen::VectorXd::Constant(steps, expected));
    g.attention.noalias() += states * d_logits;
    d_states = d_pooled * alpha.transpose() + p.attention * d_logits.transpose();
  } else {
    d_states = (d_pooled / static_cast<double>(steps)).replicate(1, steps);
  }

  // Backpropagation through time. Pre-activation gradients are collected per
  // step and folded into the weight gradients with one product each.
  Eigen::MatrixXd da_z(h, steps), da_r(h, steps), da_c(h, steps), gated(h, steps);
  Eigen::VectorXd carry = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd d_gated(h);
  for (int t = steps - 1; t >= 0; --t) {
    const auto prev = tr.hidden.col(t);
    const Eigen::VectorXd dh = d_states.col(t) + carry;
    Eigen::VectorXd d_prev(h);
    for (int i = 0; i < h; ++i) {
      const double z = tr.update(i, t), c = tr.candidate(i, t);
      da_c(i, t) = dh[i] * z * (1.0 - c * c);
      da_z(i, t) = dh[i] * (c - prev[i]) * z * (1.0 - z);
      d_prev[i] = dh[i] * (1.0 - z);
      gated(i, t) = tr.reset(i, t) * prev[i];
    }
    d_gated.noalias() = p.u_c.transpose() * da_c.col(t);
    for (int i = 0; i < h; ++i) {
      const double r = tr.reset(i, t);
      da_r(i, t) = d_gated[i] * prev[i] * r * (1.0 - r);
      d_prev[i] += d_gated[i] * r;
    }
    d_prev.noalias() += p.u_z.transpose() * da_z.col(t);
    d_prev.noalias() += p.u_r.transpose() * da_r.col(t);
    carry = d_prev;
  }
  const auto prevs = tr.hidden.leftCols(steps);
  g.w_z.noalias() += da_z * tr.inputs;
  g.w_r.noalias() += da_r * tr.inputs;
  g.w_c.noalias() += da_c * tr.inputs;
  g.u_z.noalias() += da_z * prevs.transpose();
  g.u_r.noalias() += da_r * prevs.transpose();
  g.u_c.noalias() += da_c * gated.transpose();
  g.b_z += da_z.rowwise().sum();
  g.b_r += da_r.rowwise().sum();
  g.b_c += da_c.rowwise().sum();
}

double batch_loss_and_gradients(const ModelParams& params, std::span<const Example> batch,
                                std::span<const Eigen::VectorXd> masks, int max_len,
                                Gradients& grads) {
  if (batch.empty()) throw DataError("empty batch");
  if (!masks.empty() && masks.size() != batch.size()) throw DataError("one dropout mask per example");
  grads = Gradients::zeros(params.shape);
  const double weight = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const Eigen::VectorXd* mask = masks.empty() ? nullptr : &masks[i];
    const ForwardTrace tr = forward(*batch[i].seq, params, mask, max_len);
    loss += weight * l1_loss(tr.prediction, batch[i].target);
    backward(tr, batch[i].target, params, weight, grads);
  }
  for (const auto& block : grads.blocks()) {
    for (double v : block.values) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient in parameter block '" + block.name + "'");
    }
  }
  return loss;
}

OptimizerState make_optimizer_state(const ModelParams& params) {
  return {Gradients::zeros(params.shape)};
}

void sgd_nesterov_step(ModelParams& params, const Gradients& grads, OptimizerState& state,
                       double lr, double momentum) {
  auto theta = params.blocks();
  const auto g = grads.blocks();
  auto v = state.velocity.blocks();
  if (theta.size() != g.size() || theta.size() != v.size()) {
    throw DataError("optimizer: parameter/gradient structure mismatch");
  }
  for (size_t b = 0; b < theta.size(); ++b) {
    if (theta[b].values.size() != g[b].values.size() || theta[b].values.size() != v[b].values.size()) {
      throw DataError("optimizer: shape mismatch in block '" + theta[b].name + "'");
    }
    for (size_t i = 0; i < theta[b].values.size(); ++i) {
      v[b].values[i] = momentum * v[b].values[i] + g[b].values[i];
      theta[b].values[i] -= lr * (g[b].values[i] + momentum * v[b].values[i]);
    }
  }
}

bool EarlyStopper::update(int epoch, double metric) {
  if (best_epoch_ == 0 || metric < best_metric_) {
    best_epoch_ = epoch;
    best_metric_ = metric;
    return true;
  }
  return false;
}

Eigen::VectorXd evaluate_mae(const ModelParams& params, std::span<const Example> examples,
                             int max_len) {
  if (examples.empty()) throw DataError("cannot evaluate MAE on an empty set");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(params.shape.outputs());
  for (const auto& ex : examples) {
    total += (predict(*ex.seq, params, max_len) - ex.target).cwiseAbs();
  }
  return total / static_cast<double>(examples.size());
}

TrainResult train(std::span<const Example> train_set, std::span<const Example> dev_set,
                  const ModelShape& shape, const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw DataError("training split is empty");
  if (dev_set.empty()) throw DataError("dev split is empty");
  for (const auto& ex : train_set) {
    if (ex.target.size() != shape.outputs()) throw DataError("train target size mismatch");
  }

  ModelParams params = ModelParams::init(shape, mix_seed(config.seed, 0x1417));
  OptimizerState opt = make_optimizer_state(params);
  EarlyStopper stopper(config.patience);
  TrainResult result;
  result.best = params;

  std::vector<size_t> order(train_set.size());
  std::vector<Example> batch;
  std::vector<Eigen::VectorXd> masks;
  Gradients grads = Gradients::zeros(shape);
  const double keep = 1.0 - config.dropout;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(mix_seed(config.seed, static_cast<uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), size_t{0});
    shuffle(order, rng);

    double epoch_loss = 0.0;
    int batch_index = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      batch.clear();
      masks.clear();
      for (size_t i = start; i < end; ++i) {
        batch.push_back(train_set[order[i]]);
        if (config.dropout > 0.0) masks.push_back(sample_dropout_mask(shape.hidden, keep, rng));
      }
      const double loss = batch_loss_and_gradients(params, batch, masks, config.max_seq_len, grads);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      epoch_loss += loss * static_cast<double>(end - start);
      sgd_nesterov_step(params, grads, opt, config.learning_rate, config.momentum);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    const Eigen::VectorXd dev = evaluate_mae(params, dev_set, config.max_seq_len);
    if (shape.task.multi) {
      for (int k = 0; k < kNumTargets; ++k) rec.dev_mae[k] = dev[k];
    } else {
      rec.dev_mae[static_cast<int>(shape.task.target)] = dev[0];
    }
    rec.dev_mae_mean = dev.mean();
    result.history.push_back(rec);
    spdlog::debug("epoch {} train_loss {:.6f} dev_mae {:.6f}", epoch, rec.train_loss,
                  rec.dev_mae_mean);

    if (stopper.update(epoch, rec.dev_mae_mean)) result.best = params;
    if (stopper.should_stop(epoch)) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.best_dev_mae = stopper.best_metric();
  return result;
}

std::string history_to_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,dev_mae_cortisol,dev_mae_appraisal,dev_mae_affect,dev_mae_mean\n";
  for (const auto& r : history) {
    out << r.epoch << "," << r.train_loss;
    for (const auto& m : r.dev_mae) {
      out << ",";
      if (m) out << *m;
    }
    out << "," << r.dev_mae_mean << "\n";
  }
  return out.str();
}

}  // namespace stressvoice
