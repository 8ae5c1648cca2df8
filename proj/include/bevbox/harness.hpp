// Copyright 2026 The bevbox Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bevbox/dataset.hpp"
#include "bevbox/geometry.hpp"
#include "bevbox/network.hpp"
#include "bevbox/slf.hpp"

namespace bevbox
{

/// A box estimate, or the reason there is none.
struct Estimate
{
  OrientedBox box;
  std::string error;

  bool ok() const { return error.empty(); }
};

class Estimator
{
public:
  virtual ~Estimator() = default;
  virtual std::string name() const = 0;
  virtual std::uint64_t config_hash() const = 0;
  /// One estimate per sample, in order. Per-sample failures are reported, not thrown.
  virtual std::vector<Estimate> estimate(std::span<const Sample> samples) const = 0;
};

/// Resamples each cloud to the network input size, then predicts in batches.
class BoxNetEstimator : public Estimator
{
public:
  BoxNetEstimator(NetworkParams params, NetworkConfig cfg, std::uint64_t resample_seed = 0);

  std::string name() const override;
  std::uint64_t config_hash() const override;
  std::vector<Estimate> estimate(std::span<const Sample> samples) const override;

private:
  NetworkParams params_;
  NetworkConfig cfg_;
  std::uint64_t seed_;
};

class SlfEstimator : public Estimator
{
public:
  explicit SlfEstimator(SlfConfig cfg);

  std::string name() const override;
  std::uint64_t config_hash() const override;
  std::vector<Estimate> estimate(std::span<const Sample> samples) const override;

private:
  SlfConfig cfg_;
};

/// Wraps a per-sample function. Exceptions it throws become failed estimates.
class FunctionEstimator : public Estimator
{
public:
  FunctionEstimator(std::string name, std::function<OrientedBox(const Sample &)> fn);

  std::string name() const override { return name_; }
  std::uint64_t config_hash() const override;
  std::vector<Estimate> estimate(std::span<const Sample> samples) const override;

private:
  std::string name_;
  std::function<OrientedBox(const Sample &)> fn_;
};

/// Seed used to resample sample `index` for evaluation.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);

struct EvalRow
{
  std::string id;
  ObjectClass label = ObjectClass::car;
  OrientedBox pred;
  double err_c = 0.0;
  /// Signed, degrees.
  double err_theta_deg = 0.0;
  double iou = 0.0;
  /// Empty unless the estimator failed on this sample.
  std::string error;

  bool ok() const { return error.empty(); }
};

struct MetricSummary
{
  std::string group;  ///< class name or "all"
  std::size_t count = 0;
  double mean_err_c = 0.0;
  double mean_abs_err_theta_deg = 0.0;
  double mean_iou = 0.0;
};

struct EvalReport
{
  std::string method;
  std::uint64_t config_hash = 0;
  std::uint64_t dataset_hash = 0;
  std::vector<EvalRow> rows;
  /// Per present class in car, pedestrian, cyclist order, then "all".
  std::vector<MetricSummary> summaries;
  std::size_t failed = 0;

  const MetricSummary & overall() const { return summaries.back(); }
  /// Summary for a class; throws InvalidArgument if the class has no rows.
  const MetricSummary & summary(ObjectClass c) const;
};

EvalRow evaluate_row(const Sample & s, const OrientedBox & pred);

/// Failed rows are kept but excluded from the summaries.
EvalReport evaluate(const Estimator & estimator, std::span<const Sample> samples);

std::vector<MetricSummary> summarize(std::span<const EvalRow> rows);

/// Per-sample CSV: id,class,err_c,err_theta_deg,iou,status.
std::string format_report_csv(const EvalReport & report);
/// Aggregate CSV: method,group,count,failed,mean_err_c,mean_abs_err_theta_deg,mean_iou.
std::string format_summary_csv(const EvalReport & report);

enum class Metric { err_c, err_theta_deg, abs_err_theta_deg, iou };
std::string_view to_string(Metric m);
Metric parse_metric(std::string_view name);

struct HistogramBin
{
  double low = 0.0;
  std::size_t count = 0;
};

/// Fixed-width bins from the bin holding the smallest value to the one holding the largest.
std::vector<HistogramBin> histogram(const EvalReport & report, Metric metric, double bin_width);
std::vector<HistogramBin> histogram(std::span<const double> values, double bin_width);
std::string format_histogram_csv(std::span<const HistogramBin> bins);

// ---------------------------------------------------------------------------
// Ablation

/// Parses "axis=v1,v2;axis=v1,..." over angle, center, concat and scale into the cartesian
/// product of cells. Axes left out keep the value from `base`.
std::vector<NetworkConfig> parse_grid(std::string_view grid, const NetworkConfig & base);

std::string describe(const NetworkConfig & cfg);

struct AblationRow
{
  NetworkConfig config;
  double eval_loss = 0.0;
  double mean_err_c = 0.0;
  double mean_abs_err_theta_deg = 0.0;
  double mean_iou = 0.0;
  std::size_t best_epoch = 0;
  /// Non-empty if training or evaluation of this cell failed.
  std::string error;
};

/// Weighted loss on the test set using MSE for every head, regardless of cfg.loss.
double evaluation_loss(
  const NetworkParams & params, const NetworkConfig & cfg, std::span<const ResampledSample> data);

/// Trains and evaluates one model per cell with a shared seed and schedule. A failing cell is
/// reported in its row and does not stop the grid.
std::vector<AblationRow> ablate(
  std::span<const NetworkConfig> cells, std::span<const Sample> train_data,
  std::span<const Sample> val_data, std::span<const Sample> test_data, const TrainConfig & tcfg,
  std::uint64_t seed, const std::function<void(const AblationRow &)> & on_cell = {});

std::string format_ablation_csv(std::span<const AblationRow> rows);

/// Resamples every sample to `n` points with per-sample seeds derived from `seed`.
std::vector<ResampledSample> resample_all(std::span<const Sample> samples, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Timing

struct TimingReport
{
  std::size_t batch_size = 0;
  std::size_t repetitions = 0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  double per_cloud_ms = 0.0;
};

inline constexpr std::size_t kTimingWarmup = 10;

/// Wall-clock inference time per batch over `repetitions` runs after kTimingWarmup warm-up runs.
TimingReport time_inference(
  const NetworkParams & params, const NetworkConfig & cfg, std::span<const ResampledSample> data,
  std::size_t batch_size, std::size_t repetitions);

// ---------------------------------------------------------------------------
// Run manifests

using Manifest = std::vector<std::pair<std::string, std::string>>;

/// key=value lines, written to a temporary file and renamed into place.
void write_manifest(const std::filesystem::path & path, const Manifest & entries);
void write_text_atomic(const std::filesystem::path & path, std::string_view text);

std::uint64_t fnv1a(std::string_view text);
std::string format_double(double v);

}  // namespace bevbox
