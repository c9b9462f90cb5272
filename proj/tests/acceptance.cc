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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fail. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "oracles.h"
#include "stressvoice/audio_io.h"
#include "stressvoice/evaluation.h"
#include "stressvoice/features.h"
#include "stressvoice/session_data.h"
#include "stressvoice/synth.h"
#include "stressvoice/training.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace stressvoice;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path work_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() / "stressvoice_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI; stdout and stderr go to <log>.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + STRESSVOICE_CLI + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) rows.push_back(split_csv_line(line));
  return rows;
}

FeatureSequence random_sequence(int rows, int dim, int valid, Rng& rng) {
  FeatureSequence seq;
  seq.data.resize(rows, dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) seq.data(r, c) = rng.normal();
  }
  seq.valid_len = valid;
  return seq;
}

ModelShape shape_of(int d, int h, Pooling pooling, TaskMode task) {
  ModelShape s;
  s.input_dim = d;
  s.hidden = h;
  s.pooling = pooling;
  s.task = task;
  return s;
}

// Biases and attention drawn away from zero so every path carries gradient.
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

const std::vector<std::pair<Pooling, TaskMode>> kConfigs = {
    {Pooling::kMean, TaskMode::stl(Target::kCortisol)},
    {Pooling::kMean, TaskMode::mtl()},
    {Pooling::kAttention, TaskMode::stl(Target::kAppraisal)},
    {Pooling::kAttention, TaskMode::mtl()},
};

std::string config_name(Pooling p, const TaskMode& t) {
  return (p == Pooling::kAttention ? "agru-" : "gru-") + to_string(t);
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  for (const auto& [pooling, task] : kConfigs) {
    const auto shape = shape_of(6, 4, pooling, task);
    const auto params = dense_params(shape, 31);
    Rng rng(12);
    std::vector<FeatureSequence> seqs = {random_sequence(9, 6, 9, rng), random_sequence(9, 6, 7, rng)};
    std::vector<Example> batch;
    for (auto& s : seqs) {
      Eigen::VectorXd t(task.outputs());
      for (int k = 0; k < t.size(); ++k) t[k] = rng.uniform(-2.0, 2.0);
      batch.push_back({&s, t});
    }
    Gradients analytic = Gradients::zeros(shape);
    batch_loss_and_gradients(params, batch, {}, 0, analytic);
    const auto numeric = stressvoice::testing::finite_difference_gradients(params, batch, {});
    std::string block;
    const double err = stressvoice::testing::max_relative_error(analytic, numeric, &block);
    if (err >= worst) {
      worst = err;
      where = config_name(pooling, task) + "/" + block;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0,
          fmt::format("max relative error {:.2e} at {}, {:.2f} s", worst, where, secs)};
}

Outcome pooling_equivalence() {
  double worst = 0.0;
  Rng rng(41);
  for (const TaskMode task : {TaskMode::stl(Target::kAffect), TaskMode::mtl()}) {
    auto attn = ModelParams::init(shape_of(7, 5, Pooling::kAttention, task), 3);
    attn.attention.setZero();
    auto mean = ModelParams::init(shape_of(7, 5, Pooling::kMean, task), 3);
    const auto src = attn.blocks();
    for (auto& block : mean.blocks()) {
      for (const auto& s : src) {
        if (s.name == block.name) std::copy(s.values.begin(), s.values.end(), block.values.begin());
      }
    }
    for (int i = 0; i < 50; ++i) {
      const int rows = 1 + static_cast<int>(rng.below(40));
      const int valid = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(rows)));
      const auto seq = random_sequence(rows, 7, valid, rng);
      worst = std::max(worst, (predict(seq, attn) - predict(seq, mean)).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-12, fmt::format("100 sequences, max |diff| {:.2e}", worst)};
}

Outcome padding_invariance() {
  double worst_loss = 0.0, worst_grad = 0.0, worst_pred = 0.0;
  Rng rng(8);
  for (const auto& [pooling, task] : kConfigs) {
    const auto shape = shape_of(6, 4, pooling, task);
    const auto params = dense_params(shape, 17);
    for (int pad = 1; pad <= 50; ++pad) {
      const int len = 3 + pad % 9;
      const auto seq = random_sequence(len, 6, len, rng);
      FeatureSequence padded = seq;
      padded.data.conservativeResize(len + pad, Eigen::NoChange);
      for (int r = len; r < len + pad; ++r) {
        for (int c = 0; c < 6; ++c) padded.data(r, c) = 1e3 * rng.normal();
      }
      Eigen::VectorXd target(task.outputs());
      for (int k = 0; k < target.size(); ++k) target[k] = rng.uniform();
      const std::vector<Example> a = {{&seq, target}}, b = {{&padded, target}};
      Gradients ga = Gradients::zeros(shape), gb = Gradients::zeros(shape);
      const double la = batch_loss_and_gradients(params, a, {}, 0, ga);
      const double lb = batch_loss_and_gradients(params, b, {}, 0, gb);
      worst_loss = std::max(worst_loss, std::abs(la - lb));
      const auto ba = ga.blocks();
      const auto bb = gb.blocks();
      for (size_t k = 0; k < ba.size(); ++k) {
        for (size_t i = 0; i < ba[k].values.size(); ++i) {
          worst_grad = std::max(worst_grad, std::abs(ba[k].values[i] - bb[k].values[i]));
        }
      }
      worst_pred = std::max(worst_pred, (predict(seq, params) - predict(padded, params)).cwiseAbs().maxCoeff());
    }
  }
  const double worst = std::max({worst_loss, worst_grad, worst_pred});
  return {worst < 1e-10, fmt::format("1..50 pad steps x 4 configs; max diff loss {:.1e}, grad {:.1e}, pred {:.1e}",
                                     worst_loss, worst_grad, worst_pred)};
}

struct PreparedCorpus {
  std::unique_ptr<SplitData> data;
};

PreparedCorpus prepare_features(const FeatureCorpus& corpus) {
  const auto feats = normalize_all(corpus.sequences, corpus.splits, NormMode::kStandard);
  std::vector<LabeledSequence> items;
  for (size_t i = 0; i < feats.size(); ++i) items.push_back({feats[i], corpus.targets[i]});
  return {std::make_unique<SplitData>(std::move(items), corpus.splits)};
}

ExperimentConfig agru_mtl(uint64_t seed) {
  ExperimentConfig cfg;
  cfg.pooling = Pooling::kAttention;
  cfg.task = TaskMode::mtl();
  cfg.normalization = NormMode::kStandard;
  cfg.train.seed = seed;
  return cfg;
}

Outcome synthetic_learnability() {
  const auto t0 = Clock::now();
  const FeatureSynthSpec spec;  // 200/50/50, T=100, d=20, noise 0.02
  const auto corpus = synth_feature_corpus(spec);
  const auto prepared = prepare_features(corpus);
  const auto& data = *prepared.data;

  // Predict-the-train-mean baseline on dev.
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& item : data.train()) mean += Eigen::Vector3d(item.target[0], item.target[1], item.target[2]);
  mean /= static_cast<double>(data.train().size());
  Eigen::Vector3d base = Eigen::Vector3d::Zero();
  for (const auto& item : data.dev()) {
    base += (Eigen::Vector3d(item.target[0], item.target[1], item.target[2]) - mean).cwiseAbs();
  }
  base /= static_cast<double>(data.dev().size());

  const auto job = run_experiment(data, agru_mtl(1));
  const double dev = job.dev_mae.mean();
  const double secs = seconds_since(t0);
  return {dev <= 0.08 && base.minCoeff() >= 0.20 && secs < 300.0,
          fmt::format("dev MAE {:.4f} (best epoch {}), baseline MAE min {:.3f}, {:.0f} s", dev,
                      job.training.best_epoch, base.minCoeff(), secs)};
}

Outcome end_to_end_audio() {
  const auto t0 = Clock::now();
  const fs::path dir = work_root() / "e2e";
  fs::create_directories(dir);
  const std::string jobs = std::to_string(std::max(1u, std::thread::hardware_concurrency()));
  struct Step {
    std::string name, args;
  };
  const std::vector<Step> steps = {
      {"synth", "synth --out \"" + (dir / "synth").string() + "\""},
      {"canonicalize", "canonicalize --sessions \"" + (dir / "synth/sessions.csv").string() + "\" --out \"" +
                           (dir / "canon").string() + "\" --jobs " + jobs},
      {"extract", "extract --sessions \"" + (dir / "canon/sessions.csv").string() + "\" --out \"" +
                      (dir / "features").string() + "\" --jobs " + jobs},
      {"grid", "grid --sessions \"" + (dir / "canon/sessions.csv").string() + "\" --features \"" +
                   (dir / "features").string() + "\" --out \"" + (dir / "grid").string() + "\" --jobs " + jobs},
  };
  for (const auto& step : steps) {
    const int code = cli(step.args, dir / (step.name + ".log"));
    if (code != 0) return {false, fmt::format("{} exited {} (see {})", step.name, code, (dir / (step.name + ".log")).string())};
  }
  const double secs = seconds_since(t0);
  const auto summary = json::parse(slurp(dir / "grid/summary.json"));
  const auto baseline = summary.at("baseline_test_mae").get<std::vector<double>>();
  bool ok = secs < 1200.0;
  std::string detail;
  for (int k = 0; k < kNumTargets; ++k) {
    const auto name = to_string(kAllTargets[k]);
    const double test = summary.at("selection").at(name).at("test_mae").get<double>();
    ok = ok && test <= 0.8 * baseline[k];
    detail += fmt::format("{} {:.3f}/{:.3f} ", name, test, baseline[k]);
  }
  return {ok, fmt::format("test/baseline MAE: {}; {:.0f} s", detail, secs)};
}

Outcome dsp_accuracy() {
  const int f0_col = stressvoice::testing::feature_index(Lld::kF0, Functional::kMean, FrameSet::kVoiced);
  double worst = 0.0;
  for (double hz : {110.0, 220.0, 330.0, 440.0}) {
    AudioBuffer tone{stressvoice::testing::sine(hz, 3.0, kCanonicalRate, 0.5), kCanonicalRate};
    const auto seq = extract_sequence(tone, default_registry());
    for (int r = 0; r < seq.valid_len; ++r) worst = std::max(worst, std::abs(seq.data(r, f0_col) - hz) / hz);
  }
  // Peak normalization after resampling a 44.1 kHz tone.
  AudioBuffer buf{stressvoice::testing::sine(200.0, 1.0, 44100, 0.3), 44100};
  const double peak = peak_amplitude(canonicalize(buf).audio.samples);
  return {worst < 0.02 && std::abs(peak - 0.89125) <= 1e-4,
          fmt::format("worst F0 error {:.3f}%, peak {:.6f}", 100.0 * worst, peak)};
}

// Small audio corpus shared by the protocol and determinism checks.
fs::path small_corpus() {
  static const fs::path dir = [] {
    const fs::path d = work_root() / "small";
    fs::create_directories(d);
    std::ofstream(d / "spec.json") << R"({"n_speakers": 12, "n_dev": 3, "n_test": 3, "duration_s": 8, "seed": 3})";
    const std::vector<std::string> steps = {
        "synth --spec \"" + (d / "spec.json").string() + "\" --out \"" + (d / "synth").string() + "\"",
        "canonicalize --sessions \"" + (d / "synth/sessions.csv").string() + "\" --out \"" + (d / "canon").string() + "\"",
        "extract --sessions \"" + (d / "canon/sessions.csv").string() + "\" --out \"" + (d / "features").string() + "\"",
    };
    for (const auto& s : steps) {
      if (cli(s, d / "prepare.log") != 0) throw std::runtime_error("small corpus preparation failed: " + s);
    }
    return d;
  }();
  return dir;
}

int small_grid(const fs::path& out) {
  const fs::path d = small_corpus();
  return cli("grid --sessions \"" + (d / "canon/sessions.csv").string() + "\" --features \"" +
                 (d / "features").string() + "\" --epochs 8 --hidden 8 --seed 4 --jobs 2 --out \"" +
                 out.string() + "\"",
             out.string() + ".log");
}

Outcome protocol_shape() {
  // In-process: the instrumented counter.
  FeatureSynthSpec spec;
  spec.n_train = 30;
  spec.n_dev = 8;
  spec.n_test = 8;
  spec.length = 12;
  spec.dim = 6;
  const auto corpus = synth_feature_corpus(spec);
  GridOptions options;
  options.hidden = 6;
  options.train.max_epochs = 4;
  options.train.patience = 4;
  const auto result = run_grid(corpus.sequences, corpus.targets, corpus.splits, options);
  bool ok = result.test_accesses_before_selection == 0 && result.table.rows.size() == 8;

  // Through the CLI: the emitted table.
  const fs::path out = work_root() / "protocol_grid";
  if (small_grid(out) != 0) return {false, "grid exited non-zero"};
  const auto rows = read_csv(out / "results.csv");
  ok = ok && rows.size() == 9;
  const auto summary = json::parse(slurp(out / "summary.json"));
  ok = ok && summary.at("test_accesses_before_selection").get<size_t>() == 0;
  std::map<int, size_t> best;
  for (int k = 0; k < kNumTargets; ++k) {
    best[k] = summary.at("selection").at(to_string(kAllTargets[k])).at("row").get<size_t>();
  }
  int populated = 0;
  for (size_t r = 1; r < rows.size() && ok; ++r) {
    ok = rows[r].size() == 8;
    for (int k = 0; k < kNumTargets && ok; ++k) {
      const bool has_dev = !rows[r][2 + k].empty();
      const bool has_test = !rows[r][5 + k].empty();
      ok = has_dev && has_test == (best[k] == r - 1);
      populated += has_test;
      // The selected row holds the smallest dev MAE.
      if (ok && best[k] == r - 1) {
        for (size_t q = 1; q < rows.size(); ++q) ok = ok && std::stod(rows[q][2 + k]) >= std::stod(rows[r][2 + k]);
      }
    }
  }
  ok = ok && populated == kNumTargets;
  return {ok, fmt::format("{} rows, {} test cells, test reads before selection: {} (in-process) / {} (cli)",
                          rows.size() - 1, populated, result.test_accesses_before_selection,
                          summary.at("test_accesses_before_selection").get<size_t>())};
}

Outcome attention_localization() {
  const auto t0 = Clock::now();
  FeatureSynthSpec spec;
  spec.first_half_only = true;
  const auto corpus = synth_feature_corpus(spec);
  const auto prepared = prepare_features(corpus);
  const auto job = run_experiment(*prepared.data, agru_mtl(1));
  std::vector<FeatureSequence> test;
  for (const auto& item : prepared.data->test()) test.push_back(item.seq);
  const auto report = attention_report(job.training.best, test);
  const double mass = report.first_half_mass();
  return {mass > 0.6, fmt::format("first-half attention mass {:.3f} (dev MAE {:.4f}), {:.0f} s", mass,
                                  job.dev_mae.mean(), seconds_since(t0))};
}

Outcome determinism() {
  const fs::path a = work_root() / "determinism_a";
  const fs::path b = work_root() / "determinism_b";
  if (small_grid(a) != 0 || small_grid(b) != 0) return {false, "grid exited non-zero"};
  int compared = 0;
  bool same = slurp(a / "results.csv") == slurp(b / "results.csv");
  ++compared;
  for (const auto& entry : fs::directory_iterator(a / "cells")) {
    const auto rel = fs::relative(entry.path(), a);
    same = same && slurp(a / rel / "history.csv") == slurp(b / rel / "history.csv") &&
           slurp(a / rel / "checkpoint.bin") == slurp(b / rel / "checkpoint.bin");
    ++compared;
  }
  return {same && compared == 17, fmt::format("results.csv plus {} cell histories and checkpoints compared, {}",
                                              compared - 1, same ? "identical" : "DIFFERENT")};
}

Outcome target_construction() {
  bool ok = true;
  auto rec = [](std::array<double, 8> c, double si_pre, double si_post, double na_pre, double na_post) {
    SessionRecord r;
    r.speaker_id = "x";
    r.cortisol = c;
    r.si_pre = si_pre;
    r.si_post = si_post;
    r.na_pre = na_pre;
    r.na_post = na_post;
    return r;
  };
  // Hand-computed: max(12,15,14,13,11,10) - mean(10,10) = 5; 9 - 10 = -1.
  ok = ok && cortisol_delta(rec({10, 10, 12, 15, 14, 13, 11, 10}, 0, 0, 0, 0)) == 5.0;
  ok = ok && cortisol_delta(rec({8, 12, 9, 9, 9, 9, 9, 9}, 0, 0, 0, 0)) == -1.0;
  ok = ok && cortisol_delta(rec({7, 7, 7, 7, 7, 7, 7, 7}, 0, 0, 0, 0)) == 0.0;
  ok = ok && appraisal_delta(rec({}, 2.0, 1.5, 0, 0)) == -0.5;
  ok = ok && std::abs(affect_delta(rec({}, 0, 0, 1.1, 2.0)) - 0.9) < 1e-15;
  ScalingParams p;
  p.min = {0.0, -2.0, 1.0};
  p.max = {10.0, 2.0, 3.0};
  ok = ok && scale_targets({5.0, 0.0, 2.0}, p) == TargetTriple{0.5, 0.5, 0.5};
  ok = ok && scale_targets({0.0, -2.0, 1.0}, p) == TargetTriple{0.0, 0.0, 0.0};
  ok = ok && scale_targets({10.0, 2.0, 3.0}, p) == TargetTriple{1.0, 1.0, 1.0};
  const bool fixtures = ok;

  const auto records = load_sessions(fs::path(SV_TEST_DATA_DIR) / "sessions_27.csv");
  const auto targets = build_targets(records);
  int checked = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].split != Split::kTrain) continue;
    for (double v : targets[i].scaled) ok = ok && v >= 0.0 && v <= 1.0;
    ++checked;
  }
  return {ok, fmt::format("hand fixtures {}, {} train subjects scaled into [0, 1]", fixtures ? "exact" : "WRONG",
                          checked)};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient oracle", gradient_oracle},
      {"pooling equivalence", pooling_equivalence},
      {"padding invariance", padding_invariance},
      {"synthetic learnability", synthetic_learnability},
      {"end-to-end audio run", end_to_end_audio},
      {"DSP accuracy", dsp_accuracy},
      {"protocol shape", protocol_shape},
      {"attention localization", attention_localization},
      {"determinism", determinism},
      {"target construction", target_construction},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += !outcome.pass;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " " << number << " " << criteria[i].first << ": "
              << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
