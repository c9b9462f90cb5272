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

#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.h"
#include "stressvoice/training.h"

using namespace stressvoice;
using stressvoice::testing::finite_difference_gradients;
using stressvoice::testing::max_relative_error;

namespace {

FeatureSequence random_sequence(int rows, int dim, int valid, Rng& rng) {
  FeatureSequence seq;
  seq.data.resize(rows, dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) seq.data(r, c) = rng.normal();
  }
  seq.valid_len = valid;
  return seq;
}

// Random weights with non-zero biases and attention so every gate path
// carries gradient.
ModelParams dense_params(const ModelShape& shape, uint64_t seed) {
  ModelParams p = ModelParams::init(shape, seed);
  Rng rng(seed + 1000);
  for (auto& block : p.blocks()) {
    if (block.name == "attention") {
      for (double& v : block.values) v = rng.uniform(-1.5, 1.5);
    } else if (block.name.starts_with("b_") || block.name == "head_b") {
      for (double& v : block.values) v = rng.uniform(-0.5, 0.5);
    }
  }
  return p;
}

ModelShape tiny_shape(Pooling pooling, TaskMode task) {
  ModelShape s;
  s.input_dim = 6;
  s.hidden = 4;
  s.pooling = pooling;
  s.task = task;
  return s;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("l1 loss and its subgradient") {
    Eigen::VectorXd p(3), t(3);
    p << 0.5, 0.2, 0.9;
    t << 0.3, 0.2, 1.0;
    CHECK(l1_loss(p, t) == doctest::Approx((0.2 + 0.0 + 0.1) / 3.0));

    // One output exactly on target: its gradient is zero.
    const auto shape = tiny_shape(Pooling::kMean, TaskMode::stl(Target::kCortisol));
    auto params = ModelParams::zeros(shape);
    params.head_b[0] = 0.4;
    Rng rng(3);
    const auto seq = random_sequence(5, 6, 5, rng);
    const auto trace = forward(seq, params);
    Gradients g = Gradients::zeros(shape);
    backward(trace, Eigen::VectorXd::Constant(1, 0.4), params, 1.0, g);
    CHECK(g.head_b[0] == 0.0);
    backward(trace, Eigen::VectorXd::Constant(1, 0.0), params, 1.0, g);
    CHECK(g.head_b[0] == 1.0);
  }

  TEST_CASE("analytic gradients match finite differences") {
    const std::vector<std::pair<Pooling, TaskMode>> configs = {
        {Pooling::kMean, TaskMode::stl(Target::kCortisol)},
        {Pooling::kMean, TaskMode::mtl()},
        {Pooling::kAttention, TaskMode::stl(Target::kAffect)},
        {Pooling::kAttention, TaskMode::mtl()},
    };
    for (const auto& [pooling, task] : configs) {
      for (bool with_dropout : {false, true}) {
        CAPTURE(to_string(pooling));
        CAPTURE(to_string(task));
        CAPTURE(with_dropout);
        const auto shape = tiny_shape(pooling, task);
        const auto params = dense_params(shape, 21);
        Rng rng(77);
        std::vector<FeatureSequence> seqs = {random_sequence(9, 6, 9, rng),
                                             random_sequence(9, 6, 6, rng)};
        std::vector<Example> batch;
        for (auto& s : seqs) {
          Eigen::VectorXd t(task.outputs());
          for (int k = 0; k < t.size(); ++k) t[k] = rng.uniform(-2.0, 2.0);
          batch.push_back({&s, t});
        }
        std::vector<Eigen::VectorXd> masks;
        if (with_dropout) {
          Rng mask_rng(5);
          for (size_t i = 0; i < batch.size(); ++i) {
            Eigen::VectorXd m = sample_dropout_mask(shape.hidden, 0.8, mask_rng);
            m[i % shape.hidden] = 0.0;
            masks.push_back(m);
          }
        }
        Gradients analytic = Gradients::zeros(shape);
        batch_loss_and_gradients(params, batch, masks, 0, analytic);
        const Gradients numeric = finite_difference_gradients(params, batch, masks);
        std::string worst;
        const double err = max_relative_error(analytic, numeric, &worst);
        CAPTURE(worst);
        CHECK(err < 1e-4);
      }
    }
  }

  TEST_CASE("batch gradient is the mean of per-example gradients") {
    const auto shape = tiny_shape(Pooling::kAttention, TaskMode::mtl());
    const auto params = dense_params(shape, 4);
    Rng rng(8);
    std::vector<FeatureSequence> seqs = {random_sequence(7, 6, 7, rng), random_sequence(7, 6, 3, rng)};
    std::vector<Example> batch = {{&seqs[0], Eigen::Vector3d(0.1, 0.5, 0.9)},
                                  {&seqs[1], Eigen::Vector3d(0.7, 0.2, 0.4)}};
    Gradients joint = Gradients::zeros(shape);
    const double loss = batch_loss_and_gradients(params, batch, {}, 0, joint);
    Gradients g0 = Gradients::zeros(shape), g1 = Gradients::zeros(shape);
    const double l0 = batch_loss_and_gradients(params, std::span(batch).first(1), {}, 0, g0);
    const double l1 = batch_loss_and_gradients(params, std::span(batch).last(1), {}, 0, g1);
    CHECK(loss == doctest::Approx((l0 + l1) / 2.0).epsilon(1e-14));
    const auto j = joint.blocks();
    const auto a = g0.blocks();
    const auto b = g1.blocks();
    for (size_t k = 0; k < j.size(); ++k) {
      for (size_t i = 0; i < j[k].values.size(); ++i) {
        CHECK(j[k].values[i] == doctest::Approx((a[k].values[i] + b[k].values[i]) / 2.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("padding leaves loss and gradients unchanged") {
    for (Pooling pooling : {Pooling::kMean, Pooling::kAttention}) {
      const auto shape = tiny_shape(pooling, TaskMode::mtl());
      const auto params = dense_params(shape, 2);
      Rng rng(4);
      FeatureSequence seq = random_sequence(9, 6, 9, rng);
      FeatureSequence padded = seq;
      padded.data.conservativeResize(9 + 50, Eigen::NoChange);
      for (int r = 9; r < 59; ++r) {
        for (int c = 0; c < 6; ++c) padded.data(r, c) = 1e6 * rng.normal();
      }
      const Eigen::VectorXd target = Eigen::Vector3d(0.2, 0.4, 0.6);
      std::vector<Example> a = {{&seq, target}}, b = {{&padded, target}};
      Gradients ga = Gradients::zeros(shape), gb = Gradients::zeros(shape);
      const double la = batch_loss_and_gradients(params, a, {}, 0, ga);
      const double lb = batch_loss_and_gradients(params, b, {}, 0, gb);
      CHECK(std::abs(la - lb) < 1e-10);
      const auto ba = ga.blocks();
      const auto bb = gb.blocks();
      for (size_t k = 0; k < ba.size(); ++k) {
        for (size_t i = 0; i < ba[k].values.size(); ++i) {
          CHECK(std::abs(ba[k].values[i] - bb[k].values[i]) < 1e-10);
        }
      }
    }
  }

  TEST_CASE("max_len truncates the tail") {
    const auto shape = tiny_shape(Pooling::kAttention, TaskMode::mtl());
    const auto params = dense_params(shape, 6);
    Rng rng(1);
    FeatureSequence seq = random_sequence(20, 6, 20, rng);
    FeatureSequence head = seq;
    head.data = seq.data.topRows(8);
    head.valid_len = 8;
    CHECK((predict(seq, params, 8) - predict(head, params)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(forward(seq, params, nullptr, 8).length == 8);
  }

  TEST_CASE("Nesterov step on a scalar quadratic") {
    ModelShape shape = tiny_shape(Pooling::kMean, TaskMode::stl(Target::kCortisol));
    shape.input_dim = 1;
    shape.hidden = 1;
    auto params = ModelParams::zeros(shape);
    params.head_b[0] = 1.0;
    auto state = make_optimizer_state(params);
    const auto expected = stressvoice::testing::nesterov_quadratic_trace(1.0, 0.1, 0.9, 5);
    for (int s = 0; s < 5; ++s) {
      Gradients g = Gradients::zeros(shape);
      g.head_b[0] = params.head_b[0];
      sgd_nesterov_step(params, g, state, 0.1, 0.9);
      CHECK(params.head_b[0] == doctest::Approx(expected[s]).epsilon(1e-15));
    }
    // First two steps by hand: 1 - 0.1 * 1.9 = 0.81; v = 0.9 + 0.81 = 1.71,
    // 0.81 - 0.1 * (0.81 + 0.9 * 1.71) = 0.5751.
    CHECK(expected[0] == doctest::Approx(0.81).epsilon(1e-15));
    CHECK(expected[1] == doctest::Approx(0.5751).epsilon(1e-15));
  }

  TEST_CASE("early stopping") {
    EarlyStopper stopper(3);
    CHECK(stopper.update(1, 0.5));
    CHECK_FALSE(stopper.update(2, 0.6));
    CHECK(stopper.update(3, 0.4));
    CHECK_FALSE(stopper.update(4, 0.4));
    CHECK_FALSE(stopper.should_stop(5));
    CHECK_FALSE(stopper.update(6, 0.45));
    CHECK(stopper.should_stop(6));
    CHECK(stopper.best_epoch() == 3);
    CHECK(stopper.best_metric() == 0.4);
  }

  TEST_CASE("config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = TrainConfig{};
    c.patience = 500;
    CHECK_THROWS_AS(c.validate(), DataError);
    c = TrainConfig{};
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(c.validate(), DataError);
  }

  TEST_CASE("non-finite input is reported, not propagated") {
    const auto shape = tiny_shape(Pooling::kMean, TaskMode::mtl());
    const auto params = dense_params(shape, 3);
    Rng rng(2);
    FeatureSequence seq = random_sequence(4, 6, 4, rng);
    seq.data(1, 2) = std::numeric_limits<double>::quiet_NaN();
    std::vector<Example> batch = {{&seq, Eigen::Vector3d(0.1, 0.2, 0.3)}};
    Gradients g = Gradients::zeros(shape);
    CHECK_THROWS_AS(batch_loss_and_gradients(params, batch, {}, 0, g), NumericError);
  }

  TEST_CASE("training is reproducible and improves on a learnable task") {
    Rng rng(10);
    std::vector<FeatureSequence> seqs;
    std::vector<double> ys;
    for (int i = 0; i < 48; ++i) {
      auto s = random_sequence(12, 6, 12, rng);
      const double y = rng.uniform();
      for (int r = 0; r < 12; ++r) s.data(r, 0) = 2.0 * y - 1.0 + 0.01 * rng.normal();
      seqs.push_back(std::move(s));
      ys.push_back(y);
    }
    std::vector<Example> train_set, dev_set;
    for (int i = 0; i < 48; ++i) {
      (i < 36 ? train_set : dev_set).push_back({&seqs[i], Eigen::VectorXd::Constant(1, ys[i])});
    }
    ModelShape shape = tiny_shape(Pooling::kAttention, TaskMode::stl(Target::kCortisol));
    shape.hidden = 8;
    TrainConfig config;
    config.learning_rate = 0.05;
    config.batch_size = 4;
    config.max_epochs = 30;
    config.seed = 123;
    const auto a = train(train_set, dev_set, shape, config);
    const auto b = train(train_set, dev_set, shape, config);
    CHECK(history_to_csv(a.history) == history_to_csv(b.history));
    CHECK(a.history.front().epoch == 1);
    CHECK(a.best_dev_mae < a.history.front().dev_mae_mean);
    CHECK(a.best_dev_mae < 0.1);
    CHECK(evaluate_mae(a.best, dev_set, 0)[0] == doctest::Approx(a.best_dev_mae).epsilon(1e-12));
  }

  TEST_CASE("momentum zero is plain SGD") {
    ModelShape shape = tiny_shape(Pooling::kMean, TaskMode::stl(Target::kCortisol));
    auto params = ModelParams::zeros(shape);
    params.head_b[0] = 1.0;
    auto state = make_optimizer_state(params);
    Gradients g = Gradients::zeros(shape);
    g.head_b[0] = 1.0;
    sgd_nesterov_step(params, g, state, 0.1, 0.0);
    CHECK(params.head_b[0] == doctest::Approx(0.9).epsilon(1e-15));

    // Zero gradient: the step shrinks geometrically with the velocity.
    params.head_b[0] = 0.0;
    state = make_optimizer_state(params);
    sgd_nesterov_step(params, g, state, 0.1, 0.5);
    g.set_zero();
    double prev_step = 0.0, prev = params.head_b[0];
    for (int s = 0; s < 4; ++s) {
      sgd_nesterov_step(params, g, state, 0.1, 0.5);
      const double step = prev - params.head_b[0];
      if (s > 0) CHECK(step == doctest::Approx(0.5 * prev_step).epsilon(1e-12));
      prev_step = step;
      prev = params.head_b[0];
    }
  }

  TEST_CASE("head bias gradient is the mean sign over the batch") {
    const auto shape = tiny_shape(Pooling::kMean, TaskMode::mtl());
    const auto params = dense_params(shape, 9);
    Rng rng(12);
    std::vector<FeatureSequence> seqs = {random_sequence(5, 6, 5, rng), random_sequence(5, 6, 4, rng)};
    std::vector<Example> batch = {{&seqs[0], Eigen::Vector3d(5.0, -5.0, 5.0)},
                                  {&seqs[1], Eigen::Vector3d(5.0, 5.0, -5.0)}};
    Gradients g = Gradients::zeros(shape);
    batch_loss_and_gradients(params, batch, {}, 0, g);
    // Predictions are far from the targets, so the signs are known.
    CHECK(g.head_b[0] == doctest::Approx(-1.0 / 3.0).epsilon(1e-14));
    CHECK(g.head_b[1] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(g.head_b[2] == doctest::Approx(0.0).epsilon(1e-14));
  }

  TEST_CASE("a single sequence is overfit") {
    Rng rng(31);
    FeatureSequence seq = random_sequence(10, 6, 10, rng);
    std::vector<Example> set = {{&seq, Eigen::Vector3d(0.9, 0.1, 0.6)}};
    ModelShape shape = tiny_shape(Pooling::kAttention, TaskMode::mtl());
    shape.hidden = 16;
    TrainConfig config;
    config.learning_rate = 0.01;
    config.dropout = 0.0;
    config.max_epochs = 5;
    config.patience = 5;
    const auto result = train(set, set, shape, config);
    REQUIRE(result.history.size() == 5);
    for (size_t e = 1; e < 5; ++e) {
      CHECK(result.history[e].train_loss < result.history[e - 1].train_loss);
    }
  }

  TEST_CASE("patience ten stops ten epochs after the best") {
    EarlyStopper stopper(10);
    const double metrics[] = {0.5, 0.4, 0.3};
    int stopped_at = 0;
    for (int epoch = 1; epoch <= 100; ++epoch) {
      stopper.update(epoch, epoch <= 3 ? metrics[epoch - 1] : 0.3 + 0.01 * epoch);
      if (stopper.should_stop(epoch)) {
        stopped_at = epoch;
        break;
      }
    }
    CHECK(stopped_at == 13);
    CHECK(stopper.best_epoch() == 3);
  }
}
