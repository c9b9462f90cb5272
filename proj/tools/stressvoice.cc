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

// stressvoice: command-line driver for the stress-indicator pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 numeric failure during training.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "stressvoice/audio_io.h"
#include "stressvoice/evaluation.h"
#include "stressvoice/features.h"
#include "stressvoice/model.h"
#include "stressvoice/normalization.h"
#include "stressvoice/session_data.h"
#include "stressvoice/synth.h"
#include "stressvoice/training.h"

#ifndef STRESSVOICE_VERSION
#define STRESSVOICE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace stressvoice;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  uint64_t seed = 0;
  Pooling pooling = Pooling::kAttention;
  TaskMode task = TaskMode::mtl();
  NormMode normalization = NormMode::kSpeaker;
  int hidden = 64;
  TrainConfig train;
  std::string sessions;
  std::string features;
};

json config_to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"model",
           {{"pooling", to_string(c.pooling)},
            {"task", to_string(c.task)},
            {"normalization", to_string(c.normalization)},
            {"hidden", c.hidden}}},
          {"train",
           {{"learning_rate", c.train.learning_rate},
            {"momentum", c.train.momentum},
            {"batch_size", c.train.batch_size},
            {"max_epochs", c.train.max_epochs},
            {"max_seq_len", c.train.max_seq_len},
            {"dropout", c.train.dropout},
            {"patience", c.train.patience}}},
          {"data", {{"sessions", c.sessions}, {"features", c.features}}}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  auto take = [](const json& obj, const char* key, auto& dst) {
    if (obj.contains(key)) dst = obj.at(key).get<std::decay_t<decltype(dst)>>();
  };
  auto check_keys = [](const json& obj, const std::string& where, const std::set<std::string>& known) {
    if (!obj.is_object()) throw DataError("config: " + where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
      if (!known.count(key)) throw DataError("config: unknown key '" + where + key + "'");
    }
  };
  check_keys(j, "", {"seed", "model", "train", "data"});
  if (j.contains("model")) check_keys(j.at("model"), "model.", {"pooling", "task", "normalization", "hidden"});
  if (j.contains("train")) {
    check_keys(j.at("train"), "train.", {"learning_rate", "momentum", "batch_size", "max_epochs",
                                         "max_seq_len", "dropout", "patience"});
  }
  if (j.contains("data")) check_keys(j.at("data"), "data.", {"sessions", "features"});
  take(j, "seed", c.seed);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    if (m.contains("pooling")) c.pooling = parse_pooling(m.at("pooling").get<std::string>());
    if (m.contains("task")) c.task = parse_task(m.at("task").get<std::string>());
    if (m.contains("normalization")) {
      c.normalization = parse_norm_mode(m.at("normalization").get<std::string>());
    }
    take(m, "hidden", c.hidden);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    take(t, "learning_rate", c.train.learning_rate);
    take(t, "momentum", c.train.momentum);
    take(t, "batch_size", c.train.batch_size);
    take(t, "max_epochs", c.train.max_epochs);
    take(t, "max_seq_len", c.train.max_seq_len);
    take(t, "dropout", c.train.dropout);
    take(t, "patience", c.train.patience);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    take(d, "sessions", c.sessions);
    take(d, "features", c.features);
  }
  return c;
}

// Flags that override the config file. Unset optionals leave it alone.
struct ConfigOverrides {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<double> learning_rate;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<int> hidden;
  std::optional<int> patience;
  std::optional<std::string> pooling, task, normalization;
  std::string sessions, features;

  void add_to(CLI::App* cmd, bool model_flags) {
    cmd->add_option("--config", config_path, "JSON config (defaults apply when omitted)");
    cmd->add_option("--sessions", sessions, "sessions CSV");
    cmd->add_option("--features", features, "feature cache directory");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--lr", learning_rate, "learning rate");
    cmd->add_option("--epochs", epochs, "maximum epochs");
    cmd->add_option("--batch-size", batch_size, "batch size");
    cmd->add_option("--hidden", hidden, "GRU hidden size");
    cmd->add_option("--patience", patience, "early-stopping patience");
    if (model_flags) {
      cmd->add_option("--pooling", pooling, "mean | attention");
      cmd->add_option("--task", task, "mtl | stl-cortisol | stl-appraisal | stl-affect");
      cmd->add_option("--normalization", normalization, "standard | speaker");
    }
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config_path.empty()) {
      try {
        c = config_from_json(json::parse(read_text(config_path)));
      } catch (const json::exception& e) {
        throw DataError("config " + config_path + ": " + e.what());
      }
      // Data paths in the config are relative to the config file.
      const fs::path base = fs::path(config_path).parent_path();
      if (!c.sessions.empty() && fs::path(c.sessions).is_relative()) c.sessions = (base / c.sessions).string();
      if (!c.features.empty() && fs::path(c.features).is_relative()) c.features = (base / c.features).string();
    }
    if (seed) c.seed = *seed;
    if (learning_rate) c.train.learning_rate = *learning_rate;
    if (epochs) c.train.max_epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (hidden) c.hidden = *hidden;
    if (patience) {
      c.train.patience = *patience;
    } else if (epochs && c.train.patience > *epochs) {
      // A short --epochs run without --patience would otherwise fail validation.
      spdlog::info("patience lowered to {} to fit --epochs", *epochs);
      c.train.patience = *epochs;
    }
    if (pooling) c.pooling = parse_pooling(*pooling);
    if (task) c.task = parse_task(*task);
    if (normalization) c.normalization = parse_norm_mode(*normalization);
    if (!sessions.empty()) c.sessions = sessions;
    if (!features.empty()) c.features = features;
    c.train.seed = c.seed;
    c.train.validate();
    if (c.hidden <= 0) throw DataError("config: hidden must be positive");
    if (c.sessions.empty()) throw UsageError("no sessions CSV given (--sessions or data.sessions)");
    if (c.features.empty()) throw UsageError("no feature directory given (--features or data.features)");
    return c;
  }
};

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  fs::path out_dir;
  std::string config_path;
  json config = json::object();
  json inputs = json::object();
  json outputs = json::array();
  uint64_t seed = 0;
  std::string started_at = now_utc();

  void write() const {
    json j = {{"command", command},
              {"argv", argv},
              {"tool_version", STRESSVOICE_VERSION},
              {"registry_version", kRegistryVersion},
              {"config_path", config_path},
              {"config", config},
              {"seed", seed},
              {"inputs", inputs},
              {"outputs", outputs},
              {"output_dir", out_dir.string()},
              {"started_at", started_at},
              {"finished_at", now_utc()}};
    write_text(out_dir / "manifest.json", j.dump(2) + "\n");
  }
};

// ---------------------------------------------------------------------------
// Corpus helpers

fs::path resolve_audio(const fs::path& sessions_csv, const std::string& audio_path) {
  const fs::path p(audio_path);
  return p.is_absolute() ? p : sessions_csv.parent_path() / p;
}

fs::path feature_path(const fs::path& dir, const std::string& speaker_id) {
  return dir / (speaker_id + ".ftrs");
}

std::vector<FeatureSequence> load_features(const std::vector<SessionRecord>& sessions,
                                           const fs::path& dir) {
  std::vector<FeatureSequence> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) {
    auto seq = read_feature_cache(feature_path(dir, s.speaker_id));
    seq.speaker_id = s.speaker_id;
    out.push_back(std::move(seq));
  }
  if (!out.empty()) {
    for (const auto& seq : out) {
      if (seq.dim() != out.front().dim()) throw DataError("feature caches disagree on dimension");
    }
  }
  return out;
}

template <typename Fn>
void parallel_each(size_t n, int jobs, Fn&& fn) {
  const size_t workers = std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(jobs), n));
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct PreparedData {
  std::vector<SessionRecord> sessions;
  std::vector<Split> splits;
  ScalingParams scaling;
  NormStats norm;
  std::unique_ptr<SplitData> data;
};

PreparedData prepare(const RunConfig& config, const std::optional<NormStats>& stats = std::nullopt,
                     const std::optional<ScalingParams>& scaling = std::nullopt) {
  PreparedData p;
  p.sessions = load_sessions(config.sessions);
  const auto features = load_features(p.sessions, config.features);
  std::vector<SplitSequence> split_seqs;
  for (size_t i = 0; i < p.sessions.size(); ++i) {
    p.splits.push_back(p.sessions[i].split);
    split_seqs.push_back({&features[i], p.sessions[i].split});
  }
  if (scaling) {
    p.scaling = *scaling;
  } else {
    build_targets(p.sessions, &p.scaling);
  }
  p.norm = stats ? *stats : fit_normalization(split_seqs, config.normalization);
  std::vector<LabeledSequence> items;
  for (size_t i = 0; i < p.sessions.size(); ++i) {
    items.push_back({transform(features[i], p.norm), scale_targets(raw_deltas(p.sessions[i]), p.scaling)});
  }
  p.data = std::make_unique<SplitData>(std::move(items), p.splits);
  return p;
}

void save_model_dir(const fs::path& dir, const ModelParams& params, uint64_t seed,
                    const NormStats& norm, const ScalingParams& scaling,
                    const std::vector<EpochRecord>& history) {
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint.bin", params, {kRegistryVersion, seed});
  write_text(dir / "norm_stats.json", norm_stats_to_json(norm) + "\n");
  write_text(dir / "scaling.json", scaling_to_json(scaling) + "\n");
  write_text(dir / "history.csv", history_to_csv(history));
}

struct ModelDir {
  ModelParams params;
  NormStats norm;
  ScalingParams scaling;
  CheckpointMeta meta;
};

ModelDir load_model_dir(const fs::path& dir) {
  ModelDir m;
  m.params = load_checkpoint(dir / "checkpoint.bin", &m.meta);
  m.norm = norm_stats_from_json(read_text(dir / "norm_stats.json"));
  m.scaling = scaling_from_json(read_text(dir / "scaling.json"));
  return m;
}

json mae_json(const Eigen::VectorXd& mae, const TaskMode& task) {
  json j = json::object();
  if (task.multi) {
    for (int k = 0; k < kNumTargets; ++k) j[to_string(kAllTargets[k])] = mae[k];
  } else {
    j[to_string(task.target)] = mae[0];
  }
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(const std::string& spec_path, const fs::path& out, Manifest& manifest) {
  SynthSpec spec;
  if (!spec_path.empty()) spec = synth_spec_from_json(read_text(spec_path));
  fs::create_directories(out);
  const auto corpus = synth_audio_corpus(spec, out);
  write_text(out / "synth_spec.json", synth_spec_to_json(spec) + "\n");
  json planted = json::array();
  for (const auto& sp : corpus.speakers) {
    planted.push_back({{"speaker_id", sp.record.speaker_id},
                       {"controls", sp.controls},
                       {"deltas", sp.planted}});
  }
  write_text(out / "planted.json", planted.dump(2) + "\n");
  manifest.config_path = spec_path;
  manifest.config = json::parse(synth_spec_to_json(spec));
  manifest.seed = spec.seed;
  manifest.outputs = {"sessions.csv", "audio/", "synth_spec.json", "planted.json"};
  spdlog::info("wrote {} speakers to {}", corpus.speakers.size(), out.string());
  return kExitOk;
}

int cmd_canonicalize(const std::string& in, const std::string& sessions, const fs::path& out,
                     int jobs, Manifest& manifest) {
  if (!in.empty() == !sessions.empty()) {
    throw UsageError("canonicalize needs exactly one of --in <wav> or --sessions <csv>");
  }
  if (!in.empty()) {
    // Single-file mode: --out names the output WAV.
    const auto result = canonicalize(read_wav(in));
    if (result.silent) spdlog::warn("{}: silent input left unchanged", in);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_wav(out, result.audio, SampleFormat::kFloat32);
    return kExitOk;
  }
  auto records = load_sessions(sessions);
  fs::create_directories(out / "audio");
  parallel_each(records.size(), jobs, [&](size_t i) {
    auto& r = records[i];
    const auto result = canonicalize(read_wav(resolve_audio(sessions, r.audio_path)));
    if (result.silent) spdlog::warn("{}: silent recording left unchanged", r.speaker_id);
    const fs::path rel = fs::path("audio") / (r.speaker_id + ".wav");
    write_wav(out / rel, result.audio, SampleFormat::kFloat32);
    r.audio_path = rel.generic_string();
  });
  write_sessions(out / "sessions.csv", records);
  manifest.inputs = {{"sessions", sessions}};
  manifest.outputs = {"sessions.csv", "audio/"};
  spdlog::info("canonicalized {} recordings", records.size());
  return kExitOk;
}

int cmd_extract(const std::string& sessions, const fs::path& out, int jobs, Manifest& manifest) {
  const auto records = load_sessions(sessions);
  fs::create_directories(out);
  parallel_each(records.size(), jobs, [&](size_t i) {
    const auto& r = records[i];
    const auto audio = read_wav(resolve_audio(sessions, r.audio_path));
    if (audio.sample_rate != kCanonicalRate) {
      throw DataError(r.speaker_id + ": audio is " + std::to_string(audio.sample_rate) +
                      " Hz; run canonicalize first");
    }
    const auto seq = extract_sequence(audio, default_registry(), r.speaker_id);
    write_feature_cache(feature_path(out, r.speaker_id), seq);
    spdlog::debug("{}: {} windows", r.speaker_id, seq.valid_len);
  });
  std::ostringstream names;
  names << "index,name,family\n";
  const auto& reg = default_registry();
  for (size_t i = 0; i < reg.size(); ++i) names << i << "," << reg[i].name() << "," << reg[i].family << "\n";
  write_text(out / "registry.csv", names.str());
  manifest.inputs = {{"sessions", sessions}};
  manifest.outputs = {"<speaker_id>.ftrs", "registry.csv"};
  spdlog::info("extracted features for {} sessions", records.size());
  return kExitOk;
}

int cmd_build_targets(const std::string& sessions, const fs::path& out, Manifest& manifest) {
  const auto records = load_sessions(sessions);
  ScalingParams scaling;
  const auto targets = build_targets(records, &scaling);
  fs::create_directories(out);
  std::ostringstream csv;
  csv << "speaker_id,split";
  for (Target t : kAllTargets) csv << ",raw_" << to_string(t);
  for (Target t : kAllTargets) csv << ",scaled_" << to_string(t);
  csv << "\n";
  for (size_t i = 0; i < records.size(); ++i) {
    csv << records[i].speaker_id << "," << to_string(records[i].split);
    for (double v : targets[i].raw) csv << "," << format_number(v);
    for (double v : targets[i].scaled) csv << "," << format_number(v);
    csv << "\n";
  }
  write_text(out / "targets.csv", csv.str());
  write_text(out / "scaling.json", scaling_to_json(scaling) + "\n");
  manifest.inputs = {{"sessions", sessions}};
  manifest.outputs = {"targets.csv", "scaling.json"};
  return kExitOk;
}

int cmd_train(const ConfigOverrides& overrides, const fs::path& out, Manifest& manifest) {
  const RunConfig config = overrides.resolve();
  manifest.config = config_to_json(config);
  manifest.seed = config.seed;
  manifest.inputs = {{"sessions", config.sessions}, {"features", config.features}};
  const auto prepared = prepare(config);
  ExperimentConfig exp;
  exp.pooling = config.pooling;
  exp.task = config.task;
  exp.normalization = config.normalization;
  exp.hidden = config.hidden;
  exp.train = config.train;
  spdlog::info("training {}", exp.id());
  const auto job = run_experiment(*prepared.data, exp);
  save_model_dir(out, job.training.best, config.seed, prepared.norm, prepared.scaling,
                 job.training.history);
  const json metrics = {{"id", exp.id()},
                        {"best_epoch", job.training.best_epoch},
                        {"epochs_run", job.training.history.size()},
                        {"dev_mae", mae_json(job.dev_mae, exp.task)}};
  write_text(out / "metrics.json", metrics.dump(2) + "\n");
  manifest.outputs = {"checkpoint.bin", "history.csv", "norm_stats.json", "scaling.json", "metrics.json"};
  spdlog::info("best epoch {}, dev MAE {:.4f}", job.training.best_epoch, job.training.best_dev_mae);
  return kExitOk;
}

int cmd_grid(const ConfigOverrides& overrides, int jobs, const fs::path& out, Manifest& manifest) {
  const RunConfig config = overrides.resolve();
  manifest.config = config_to_json(config);
  manifest.config["jobs"] = jobs;
  manifest.seed = config.seed;
  manifest.inputs = {{"sessions", config.sessions}, {"features", config.features}};

  const auto sessions = load_sessions(config.sessions);
  const auto features = load_features(sessions, config.features);
  GridOptions options;
  options.train = config.train;
  options.hidden = config.hidden;
  options.seed = config.seed;
  options.jobs = jobs;
  const auto result = run_grid(sessions, features, options);

  fs::create_directories(out / "cells");
  write_text(out / "results.csv", result.table.to_csv());
  write_text(out / "scaling.json", scaling_to_json(result.scaling) + "\n");

  std::vector<SplitSequence> split_seqs;
  for (size_t i = 0; i < sessions.size(); ++i) split_seqs.push_back({&features[i], sessions[i].split});
  std::map<NormMode, NormStats> stats;
  for (NormMode m : {NormMode::kStandard, NormMode::kSpeaker}) stats[m] = fit_normalization(split_seqs, m);

  json cells = json::array();
  for (const auto& job : result.jobs) {
    const auto id = job.config.id();
    save_model_dir(out / "cells" / id, job.training.best, job.config.train.seed,
                   stats.at(job.config.normalization), result.scaling, job.training.history);
    cells.push_back({{"id", id},
                     {"model", job.config.model_name()},
                     {"task", to_string(job.config.task)},
                     {"normalization", to_string(job.config.normalization)},
                     {"seed", job.config.train.seed},
                     {"best_epoch", job.training.best_epoch},
                     {"dev_mae", mae_json(job.dev_mae, job.config.task)}});
  }
  json selection = json::object();
  for (int k = 0; k < kNumTargets; ++k) {
    const auto& row = result.table.rows[result.table.best_row[k]];
    selection[to_string(kAllTargets[k])] = {{"row", result.table.best_row[k]},
                                           {"model", row.model},
                                           {"normalization", to_string(row.normalization)},
                                           {"dev_mae", row.dev[k]},
                                           {"test_mae", *row.test[k]}};
  }
  json summary = {{"cells", cells},
                  {"selection", selection},
                  {"test_accesses_before_selection", result.test_accesses_before_selection},
                  {"baseline_dev_mae", result.baseline_dev_mae},
                  {"baseline_test_mae", result.baseline_test_mae}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  manifest.outputs = {"results.csv", "summary.json", "scaling.json", "cells/<id>/"};
  std::cout << result.table.to_csv();
  return kExitOk;
}

int cmd_evaluate(const fs::path& model_dir, const std::string& sessions_path,
                 const std::string& features_dir, const std::string& split_name, const fs::path& out,
                 Manifest& manifest) {
  const auto model = load_model_dir(model_dir);
  const Split split = parse_split(split_name);
  RunConfig config;
  config.sessions = sessions_path;
  config.features = features_dir;
  const auto prepared = prepare(config, model.norm, model.scaling);
  const auto items = split == Split::kTrain ? prepared.data->train()
                     : split == Split::kDev ? prepared.data->dev()
                                            : prepared.data->test();
  if (items.empty()) throw DataError("split '" + split_name + "' is empty");
  const auto& task = model.params.shape.task;
  std::vector<Eigen::VectorXd> preds, truths;
  std::ostringstream csv;
  csv << "speaker_id";
  const int k_out = task.outputs();
  for (int k = 0; k < k_out; ++k) {
    const auto name = to_string(task.multi ? kAllTargets[k] : task.target);
    csv << ",pred_" << name << ",true_" << name;
  }
  csv << "\n";
  for (const auto& item : items) {
    const Eigen::VectorXd y = predict(item.seq, model.params);
    Eigen::VectorXd t(k_out);
    for (int k = 0; k < k_out; ++k) {
      t[k] = item.target[static_cast<int>(task.multi ? kAllTargets[k] : task.target)];
    }
    csv << item.seq.speaker_id;
    for (int k = 0; k < k_out; ++k) csv << "," << format_number(y[k]) << "," << format_number(t[k]);
    csv << "\n";
    preds.push_back(y);
    truths.push_back(t);
  }
  fs::create_directories(out);
  write_text(out / "predictions.csv", csv.str());
  const json metrics = {{"split", split_name}, {"subjects", items.size()}, {"mae", mae_json(mae(preds, truths), task)}};
  write_text(out / "metrics.json", metrics.dump(2) + "\n");
  manifest.seed = model.meta.seed;
  manifest.inputs = {{"model", model_dir.string()}, {"sessions", sessions_path}, {"features", features_dir}, {"split", split_name}};
  manifest.outputs = {"predictions.csv", "metrics.json"};
  std::cout << metrics.dump(2) << "\n";
  return kExitOk;
}

int cmd_attention(const fs::path& model_dir, const std::string& sessions_path,
                  const std::string& features_dir, const std::string& split_name, int window,
                  const fs::path& out, Manifest& manifest) {
  const auto model = load_model_dir(model_dir);
  if (model.params.shape.pooling != Pooling::kAttention) {
    throw DataError("attention report needs an attention-pooling checkpoint");
  }
  const Split split = parse_split(split_name);
  RunConfig config;
  config.sessions = sessions_path;
  config.features = features_dir;
  const auto prepared = prepare(config, model.norm, model.scaling);
  const auto items = split == Split::kTrain ? prepared.data->train()
                     : split == Split::kDev ? prepared.data->dev()
                                            : prepared.data->test();
  std::vector<FeatureSequence> seqs;
  for (const auto& item : items) seqs.push_back(item.seq);
  const auto report = attention_report(model.params, seqs, window);
  fs::create_directories(out);
  write_text(out / "alphas.csv", report.alphas_csv());
  write_text(out / "curves.csv", report.curves_csv());
  write_text(out / "attention.svg", report.svg());
  const json summary = {{"subjects", seqs.size()},
                        {"smoothing_window", window},
                        {"first_half_mass", report.first_half_mass()}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  manifest.seed = model.meta.seed;
  manifest.inputs = {{"model", model_dir.string()}, {"sessions", sessions_path}, {"features", features_dir}, {"split", split_name}};
  manifest.outputs = {"alphas.csv", "curves.csv", "attention.svg", "summary.json"};
  return kExitOk;
}

int cmd_histograms(const std::string& sessions, int bins, const fs::path& out, Manifest& manifest) {
  if (bins < 1) throw UsageError("--bins must be at least 1");
  const auto records = load_sessions(sessions);
  fs::create_directories(out);
  write_text(out / "histograms.csv", histograms_csv(target_histograms(records, bins)));
  manifest.inputs = {{"sessions", sessions}};
  manifest.outputs = {"histograms.csv"};
  return kExitOk;
}

void configure_logging() {
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("STRESSVOICE_LOG_LEVEL")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only accept explicit "off".
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"stressvoice: speech-based stress-indicator regression"};
  app.require_subcommand(1);
  app.set_version_flag("--version", STRESSVOICE_VERSION);

  std::string out;
  int jobs = 1;

  auto* synth = app.add_subcommand("synth", "write a synthetic WAV corpus and sessions CSV");
  std::string spec_path;
  synth->add_option("--spec", spec_path, "synthesis spec JSON (defaults when omitted)");
  synth->add_option("--out", out, "output directory")->required();

  auto* canon = app.add_subcommand("canonicalize", "resample to 16 kHz and peak-normalize to -1 dB");
  std::string canon_in, canon_sessions;
  canon->add_option("--in", canon_in, "input WAV (single-file mode; --out is then a WAV path)");
  canon->add_option("--sessions", canon_sessions, "sessions CSV (corpus mode; --out is a directory)");
  canon->add_option("--out", out, "output WAV or directory")->required();
  canon->add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);

  auto* extract = app.add_subcommand("extract", "extract windowed acoustic features");
  std::string extract_sessions;
  extract->add_option("--sessions", extract_sessions, "sessions CSV with 16 kHz audio")->required();
  extract->add_option("--out", out, "feature cache directory")->required();
  extract->add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);

  auto* targets = app.add_subcommand("build-targets", "compute raw and scaled targets");
  std::string targets_sessions;
  targets->add_option("--sessions", targets_sessions, "sessions CSV")->required();
  targets->add_option("--out", out, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train one model configuration");
  ConfigOverrides train_overrides;
  train_overrides.add_to(train_cmd, true);
  train_cmd->add_option("--out", out, "output directory")->required();

  auto* grid = app.add_subcommand("grid", "train the full grid and report dev-best test results");
  ConfigOverrides grid_overrides;
  grid_overrides.add_to(grid, false);
  grid->add_option("--jobs", jobs, "parallel grid cells")->check(CLI::PositiveNumber);
  grid->add_option("--out", out, "output directory")->required();

  std::string model_dir, eval_sessions, eval_features, split_name = "dev";
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a trained model on one split");
  evaluate->add_option("--model", model_dir, "directory written by train or a grid cell")->required();
  evaluate->add_option("--sessions", eval_sessions, "sessions CSV")->required();
  evaluate->add_option("--features", eval_features, "feature cache directory")->required();
  evaluate->add_option("--split", split_name, "train | dev | test");
  evaluate->add_option("--out", out, "output directory")->required();

  auto* attention = app.add_subcommand("attention", "attention weights over time");
  int window = kDefaultSmoothingWindow;
  std::string attention_split = "test";
  attention->add_option("--model", model_dir, "attention-pooling model directory")->required();
  attention->add_option("--sessions", eval_sessions, "sessions CSV")->required();
  attention->add_option("--features", eval_features, "feature cache directory")->required();
  attention->add_option("--split", attention_split, "train | dev | test");
  attention->add_option("--window", window, "moving-average window")->check(CLI::PositiveNumber);
  attention->add_option("--out", out, "output directory")->required();

  auto* hist = app.add_subcommand("histograms", "histograms of the raw target deltas");
  std::string hist_sessions;
  int bins = 10;
  hist->add_option("--sessions", hist_sessions, "sessions CSV")->required();
  hist->add_option("--bins", bins, "number of bins");
  hist->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Manifest manifest;
  manifest.command = chosen->get_name();
  manifest.argv.assign(argv, argv + argc);
  manifest.out_dir = out;
  bool write_manifest = true;

  try {
    int code = kExitOk;
    if (chosen == synth) {
      code = cmd_synth(spec_path, out, manifest);
    } else if (chosen == canon) {
      write_manifest = canon_in.empty();
      code = cmd_canonicalize(canon_in, canon_sessions, out, jobs, manifest);
    } else if (chosen == extract) {
      code = cmd_extract(extract_sessions, out, jobs, manifest);
    } else if (chosen == targets) {
      code = cmd_build_targets(targets_sessions, out, manifest);
    } else if (chosen == train_cmd) {
      manifest.config_path = train_overrides.config_path;
      code = cmd_train(train_overrides, out, manifest);
    } else if (chosen == grid) {
      manifest.config_path = grid_overrides.config_path;
      code = cmd_grid(grid_overrides, jobs, out, manifest);
    } else if (chosen == evaluate) {
      code = cmd_evaluate(model_dir, eval_sessions, eval_features, split_name, out, manifest);
    } else if (chosen == attention) {
      code = cmd_attention(model_dir, eval_sessions, eval_features, attention_split, window, out, manifest);
    } else if (chosen == hist) {
      code = cmd_histograms(hist_sessions, bins, out, manifest);
    }
    if (code == kExitOk && write_manifest) manifest.write();
    return code;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
}
