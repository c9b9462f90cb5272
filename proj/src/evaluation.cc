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

#include "stressvoice/evaluation.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

namespace stressvoice {

Eigen::VectorXd mae(std::span<const Eigen::VectorXd> predictions,
                    std::span<const Eigen::VectorXd> targets) {
  if (predictions.empty()) throw DataError("MAE of an empty prediction list");
  if (predictions.size() != targets.size()) throw DataError("MAE: prediction/target count mismatch");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(predictions.front().size());
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != total.size() || targets[i].size() != total.size()) {
      throw DataError("MAE: inconsistent output sizes");
    }
    total += (predictions[i] - targets[i]).cwiseAbs();
  }
  return total / static_cast<double>(predictions.size());
}

std::string ExperimentConfig::model_name() const {
  return std::string(pooling == Pooling::kAttention ? "AGRU" : "GRU") +
         (task.multi ? "-MTL" : "-STL");
}

std::string ExperimentConfig::id() const {
  return std::string(pooling == Pooling::kAttention ? "agru" : "gru") + "-" + to_string(task) +
         "-" + to_string(normalization);
}

SplitData::SplitData(std::vector<LabeledSequence> items, std::span<const Split> splits) {
  if (items.size() != splits.size()) throw DataError("split labels do not match items");
  for (size_t i = 0; i < items.size(); ++i) {
    switch (splits[i]) {
      case Split::kTrain:
        train_.push_back(std::move(items[i]));
        break;
      case Split::kDev:
        dev_.push_back(std::move(items[i]));
        break;
      case Split::kTest:
        test_.push_back(std::move(items[i]));
        break;
    }
  }
}

std::span<const LabeledSequence> SplitData::test() const {
  ++test_accesses_;
  return test_;
}

std::vector<Example> make_examples(std::span<const LabeledSequence> items, const TaskMode& task) {
  std::vector<Example> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    Example ex;
    ex.seq = &item.seq;
    if (task.multi) {
      ex.target = Eigen::Map<const Eigen::VectorXd>(item.target.data(), kNumTargets);
    } else {
      ex.target = Eigen::VectorXd::Constant(1, item.target[static_cast<int>(task.target)]);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

JobResult run_experiment(const SplitData& data, const ExperimentConfig& config) {
  const auto train_ex = make_examples(data.train(), config.task);
  const auto dev_ex = make_examples(data.dev(), config.task);
  if (train_ex.empty()) throw DataError(config.id() + ": train split is empty");
  if (dev_ex.empty()) throw DataError(config.id() + ": dev split is empty");
  ModelShape shape;
  shape.input_dim = train_ex.front().seq->dim();
  shape.hidden = config.hidden;
  shape.pooling = config.pooling;
  shape.task = config.task;

  JobResult job;
  job.config = config;
  try {
    job.training = train(train_ex, dev_ex, shape, config.train);
  } catch (const NumericError& e) {
    throw NumericError(config.id() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(config.id() + ": " + e.what());
  }
  job.dev_mae = evaluate_mae(job.training.best, dev_ex, config.train.max_seq_len);
  return job;
}

std::array<size_t, kNumTargets> select_dev_best(
    std::span<const std::array<double, kNumTargets>> dev_mae) {
  if (dev_mae.empty()) throw DataError("no configurations to select from");
  std::array<size_t, kNumTargets> best{};
  for (int k = 0; k < kNumTargets; ++k) {
    for (size_t r = 1; r < dev_mae.size(); ++r) {
      if (dev_mae[r][k] < dev_mae[best[k]][k]) best[k] = r;
    }
  }
  return best;
}

std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string ResultsTable::to_csv() const {
  std::ostringstream out;
  out << "model,normalization,dev_cortisol,dev_appraisal,dev_affect,test_cortisol,test_appraisal,"
         "test_affect\n";
  for (const auto& row : rows) {
    out << row.model << "," << to_string(row.normalization);
    for (double d : row.dev) out << "," << format_number(d);
    for (const auto& t : row.test) {
      out << ",";
      if (t) out << format_number(*t);
    }
    out << "\n";
  }
  return out.str();
}

std::vector<ExperimentConfig> grid_configs(const GridOptions& options) {
  std::vector<ExperimentConfig> configs;
  for (Pooling pooling : {Pooling::kMean, Pooling::kAttention}) {
    for (NormMode norm : {NormMode::kStandard, NormMode::kSpeaker}) {
      for (Target t : kAllTargets) {
        ExperimentConfig c;
        c.pooling = pooling;
        c.task = TaskMode::stl(t);
        c.normalization = norm;
        configs.push_back(c);
      }
      ExperimentConfig c;
      c.pooling = pooling;
      c.task = TaskMode::mtl();
      c.normalization = norm;
      configs.push_back(c);
    }
  }
  for (auto& c : configs) {
    c.hidden = options.hidden;
    c.train = options.train;
    c.train.seed = mix_seed(options.seed, hash_string(c.id()));
  }
  return configs;
}

std::vector<FeatureSequence> normalize_all(const std::vector<FeatureSequence>& features,
                                           const std::vector<Split>& splits, NormMode mode) {
  std::vector<SplitSequence> fit_input;
  for (size_t i = 0; i < features.size(); ++i) fit_input.push_back({&features[i], splits[i]});
  const NormStats stats = fit_normalization(fit_input, mode);
  std::vector<FeatureSequence> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(transform(f, stats));
  return out;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first error.
template <typename Fn>
void parallel_for(size_t n, int jobs, Fn fn) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (int w = 0; w < std::min<int>(jobs, static_cast<int>(n)); ++w) {
    workers.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

std::array<double, kNumTargets> baseline_mae(std::span<const LabeledSequence> train,
                                             std::span<const LabeledSequence> eval) {
  std::array<double, kNumTargets> mean{}, out{};
  for (const auto& item : train) {
    for (int k = 0; k < kNumTargets; ++k) mean[k] += item.target[k] / train.size();
  }
  for (const auto& item : eval) {
    for (int k = 0; k < kNumTargets; ++k) out[k] += std::abs(item.target[k] - mean[k]) / eval.size();
  }
  return out;
}

}  // namespace

GridResult run_grid(const std::vector<FeatureSequence>& features,
                    const std::vector<TargetTriple>& raw_targets, const std::vector<Split>& splits,
                    const GridOptions& options) {
  if (features.size() != raw_targets.size() || features.size() != splits.size()) {
    throw DataError("grid: features, targets and splits must align");
  }
  GridResult result;
  std::vector<TargetTriple> train_raw;
  for (size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == Split::kTrain) train_raw.push_back(raw_targets[i]);
  }
  result.scaling = fit_scaling(train_raw);

  const auto configs = grid_configs(options);
  std::vector<std::unique_ptr<SplitData>> data;  // indexed by NormMode
  for (NormMode mode : {NormMode::kStandard, NormMode::kSpeaker}) {
    const auto normalized = normalize_all(features, splits, mode);
    std::vector<LabeledSequence> items;
    for (size_t i = 0; i < normalized.size(); ++i) {
      items.push_back({normalized[i], scale_targets(raw_targets[i], result.scaling)});
    }
    data.push_back(std::make_unique<SplitData>(std::move(items), splits));
  }
  auto data_for = [&](NormMode m) -> const SplitData& {
    return *data[m == NormMode::kStandard ? 0 : 1];
  };

  result.jobs.resize(configs.size());
  parallel_for(configs.size(), options.jobs, [&](size_t i) {
    spdlog::info("training {}", configs[i].id());
    result.jobs[i] = run_experiment(data_for(configs[i].normalization), configs[i]);
    spdlog::info("finished {} (best epoch {}, dev MAE {:.4f})", configs[i].id(),
                 result.jobs[i].training.best_epoch, result.jobs[i].training.best_dev_mae);
  });

  // Rows in table order: GRU-STL, GRU-MTL, AGRU-STL, AGRU-MTL, each with
  // standard then speaker normalization.
  struct RowSource {
    std::array<const JobResult*, kNumTargets> job{};
    std::array<int, kNumTargets> output{};
  };
  std::vector<RowSource> sources;
  for (Pooling pooling : {Pooling::kMean, Pooling::kAttention}) {
    for (bool multi : {false, true}) {
      for (NormMode norm : {NormMode::kStandard, NormMode::kSpeaker}) {
        ResultRow row;
        RowSource src;
        for (const auto& job : result.jobs) {
          const auto& c = job.config;
          if (c.pooling != pooling || c.task.multi != multi || c.normalization != norm) continue;
          row.model = c.model_name();
          if (multi) {
            for (int k = 0; k < kNumTargets; ++k) {
              src.job[k] = &job;
              src.output[k] = k;
            }
          } else {
            const int k = static_cast<int>(c.task.target);
            src.job[k] = &job;
            src.output[k] = 0;
          }
        }
        row.normalization = norm;
        for (int k = 0; k < kNumTargets; ++k) {
          row.dev[k] = src.job[k]->dev_mae[src.output[k]];
        }
        result.table.rows.push_back(row);
        sources.push_back(src);
      }
    }
  }

  // Selection sees the dev columns only.
  std::vector<std::array<double, kNumTargets>> dev_columns;
  for (const auto& row : result.table.rows) dev_columns.push_back(row.dev);
  result.test_accesses_before_selection =
      data_for(NormMode::kStandard).test_accesses() + data_for(NormMode::kSpeaker).test_accesses();
  result.table.best_row = select_dev_best(dev_columns);

  for (int k = 0; k < kNumTargets; ++k) {
    const size_t r = result.table.best_row[k];
    const auto& src = sources[r];
    const auto& job = *src.job[k];
    const auto test = data_for(job.config.normalization).test();
    if (test.empty()) throw DataError("test split is empty");
    double total = 0.0;
    for (const auto& item : test) {
      const Eigen::VectorXd y = predict(item.seq, job.training.best, job.config.train.max_seq_len);
      total += std::abs(y[src.output[k]] - item.target[k]);
    }
    result.table.rows[r].test[k] = total / static_cast<double>(test.size());
  }

  const auto& standard = data_for(NormMode::kStandard);
  result.baseline_dev_mae = baseline_mae(standard.train(), standard.dev());
  result.baseline_test_mae = baseline_mae(standard.train(), standard.test());
  return result;
}

GridResult run_grid(const std::vector<SessionRecord>& sessions,
                    const std::vector<FeatureSequence>& features, const GridOptions& options) {
  if (sessions.size() != features.size()) throw DataError("grid: one feature sequence per session");
  std::vector<TargetTriple> raw;
  std::vector<Split> splits;
  for (const auto& s : sessions) {
    raw.push_back(raw_deltas(s));
    splits.push_back(s.split);
  }
  std::vector<FeatureSequence> named = features;
  for (size_t i = 0; i < named.size(); ++i) named[i].speaker_id = sessions[i].speaker_id;
  return run_grid(named, raw, splits, options);
}

// ---------------------------------------------------------------------------
// Attention analysis

Eigen::VectorXd moving_average(const Eigen::VectorXd& x, int window) {
  if (window <= 1 || x.size() == 0) return x;
  const Eigen::Index half_lo = (window - 1) / 2;
  const Eigen::Index half_hi = window / 2;
  Eigen::VectorXd out(x.size());
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - half_lo);
    const Eigen::Index hi = std::min<Eigen::Index>(x.size() - 1, t + half_hi);
    out[t] = x.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

AttentionReport attention_report(const ModelParams& params,
                                 std::span<const FeatureSequence> test_features,
                                 int smoothing_window, int max_len) {
  if (params.shape.pooling != Pooling::kAttention) {
    throw DataError("attention report needs an attention-pooling checkpoint");
  }
  if (test_features.empty()) throw DataError("attention report needs at least one subject");
  AttentionReport rep;
  Eigen::Index longest = 0;
  for (const auto& seq : test_features) {
    Eigen::VectorXd alpha = attention_weights(seq, params, max_len);
    rep.subjects.push_back(seq.speaker_id);
    longest = std::max(longest, alpha.size());
    rep.alphas.push_back(std::move(alpha));
  }
  rep.raw_mean = Eigen::VectorXd::Zero(longest);
  rep.raw_std = Eigen::VectorXd::Zero(longest);
  for (Eigen::Index t = 0; t < longest; ++t) {
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (const auto& a : rep.alphas) {
      if (t < a.size()) {
        sum += a[t];
        ++n;
      }
    }
    const double m = sum / n;
    for (const auto& a : rep.alphas) {
      if (t < a.size()) sq += (a[t] - m) * (a[t] - m);
    }
    rep.raw_mean[t] = m;
    rep.raw_std[t] = std::sqrt(sq / n);
  }
  rep.mean = moving_average(rep.raw_mean, smoothing_window);
  rep.std = moving_average(rep.raw_std, smoothing_window);
  return rep;
}

double AttentionReport::first_half_mass() const {
  const Eigen::Index half = raw_mean.size() / 2;
  const double total = raw_mean.sum();
  return total > 0.0 ? raw_mean.head(half).sum() / total : 0.0;
}

std::string AttentionReport::alphas_csv() const {
  std::ostringstream out;
  out << "subject,t,alpha\n";
  for (size_t s = 0; s < alphas.size(); ++s) {
    for (Eigen::Index t = 0; t < alphas[s].size(); ++t) {
      out << subjects[s] << "," << t << "," << format_number(alphas[s][t]) << "\n";
    }
  }
  return out.str();
}

std::string AttentionReport::curves_csv() const {
  std::ostringstream out;
  out << "t,mean,std\n";
  for (Eigen::Index t = 0; t < mean.size(); ++t) {
    out << t << "," << format_number(mean[t]) << "," << format_number(std[t]) << "\n";
  }
  return out.str();
}

std::string AttentionReport::svg() const {
  const double width = 800, height = 300, pad = 40;
  const Eigen::Index n = mean.size();
  double top = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) top = std::max(top, mean[t] + std[t]);
  if (top <= 0.0) top = 1.0;
  auto x = [&](Eigen::Index t) { return pad + (width - 2 * pad) * t / std::max<double>(1.0, n - 1); };
  auto y = [&](double v) { return height - pad - (height - 2 * pad) * v / top; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  out << "<path fill=\"#9ecae1\" fill-opacity=\"0.5\" d=\"";
  for (Eigen::Index t = 0; t < n; ++t) {
    out << (t ? " L" : "M") << x(t) << "," << y(std::min(top, mean[t] + std[t]));
  }
  for (Eigen::Index t = n - 1; t >= 0; --t) out << " L" << x(t) << "," << y(std::max(0.0, mean[t] - std[t]));
  out << " Z\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\" points=\"";
  for (Eigen::Index t = 0; t < n; ++t) out << (t ? " " : "") << x(t) << "," << y(mean[t]);
  out << "\"/>\n";
  out << "<text x=\"" << pad << "\" y=\"20\" font-size=\"12\">attention weight (mean, std) vs window index</text>\n";
  out << "</svg>\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Histograms

Histogram histogram(std::vector<double> values, int bins) {
  Histogram h;
  if (values.empty()) return h;
  std::sort(values.begin(), values.end());
  h.min = values.front();
  h.max = values.back();
  const size_t n = values.size();
  h.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  if (h.max == h.min || bins <= 1) {
    h.edges = {h.min, h.max};
    h.counts = {static_cast<int>(n)};
    return h;
  }
  const double width = (h.max - h.min) / bins;
  for (int b = 0; b <= bins; ++b) h.edges.push_back(b == bins ? h.max : h.min + b * width);
  h.counts.assign(bins, 0);
  for (double v : values) {
    int b = static_cast<int>((v - h.min) / width);
    h.counts[std::clamp(b, 0, bins - 1)]++;
  }
  return h;
}

std::array<Histogram, kNumTargets> target_histograms(const std::vector<SessionRecord>& sessions,
                                                     int bins) {
  std::array<std::vector<double>, kNumTargets> values;
  for (const auto& s : sessions) {
    const auto d = raw_deltas(s);
    for (int k = 0; k < kNumTargets; ++k) values[k].push_back(d[k]);
  }
  std::array<Histogram, kNumTargets> out;
  for (int k = 0; k < kNumTargets; ++k) out[k] = histogram(values[k], bins);
  return out;
}

std::string histograms_csv(const std::array<Histogram, kNumTargets>& hists) {
  std::ostringstream out;
  out << "target,bin,lower,upper,count,min,max,median\n";
  for (int k = 0; k < kNumTargets; ++k) {
    const auto& h = hists[k];
    for (size_t b = 0; b < h.counts.size(); ++b) {
      out << to_string(static_cast<Target>(k)) << "," << b << "," << format_number(h.edges[b]) << ","
          << format_number(h.edges[b + 1]) << "," << h.counts[b] << "," << format_number(h.min)
          << "," << format_number(h.max) << "," << format_number(h.median) << "\n";
    }
  }
  return out.str();
}

}  // namespace stressvoice
