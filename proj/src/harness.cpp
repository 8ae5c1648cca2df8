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

#include "bevbox/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bevbox/error.hpp"

namespace bevbox
{

namespace
{

constexpr double kRadToDeg = 180.0 / kPi;
constexpr std::size_t kEvalBatch = 64;

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fnv1a(std::string_view text)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_double(double v)
{
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index)
{
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index)));
}

std::vector<ResampledSample> resample_all(std::span<const Sample> samples, std::size_t n, std::uint64_t seed)
{
  std::vector<ResampledSample> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(resample(samples[i], n, sample_seed(seed, i)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Estimators

BoxNetEstimator::BoxNetEstimator(NetworkParams params, NetworkConfig cfg, std::uint64_t resample_seed)
: params_(std::move(params)), cfg_(cfg), seed_(resample_seed)
{
  check_shapes(params_, cfg_);
}

std::string BoxNetEstimator::name() const { return "boxnet"; }

std::uint64_t BoxNetEstimator::config_hash() const { return fnv1a(format_network_config(cfg_)); }

std::vector<Estimate> BoxNetEstimator::estimate(std::span<const Sample> samples) const
{
  std::vector<Estimate> out(samples.size());
  std::vector<ResampledSample> chunk;
  std::vector<std::span<const Point2>> clouds;
  for (std::size_t start = 0; start < samples.size(); start += kEvalBatch) {
    const std::size_t end = std::min(samples.size(), start + kEvalBatch);
    chunk.clear();
    clouds.clear();
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < end; ++i) {
      try {
        chunk.push_back(resample(samples[i], kCloudSize, sample_seed(seed_, i)));
        idx.push_back(i);
      } catch (const std::exception & e) {
        out[i].error = e.what();
      }
    }
    for (const auto & r : chunk) clouds.emplace_back(r.sample.points);
    if (clouds.empty()) {
      continue;
    }
    try {
      const auto res = forward(params_, cfg_, make_batch(clouds), RunMode::infer);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        try {
          out[idx[k]].box = decode_box(res.outputs, res.reference, k, cfg_);
        } catch (const std::exception & e) {
          out[idx[k]].error = e.what();
        }
      }
    } catch (const std::exception & e) {
      for (std::size_t i : idx) out[i].error = e.what();
    }
  }
  return out;
}

SlfEstimator::SlfEstimator(SlfConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::string SlfEstimator::name() const { return "slf-" + std::string(to_string(cfg_.criterion)); }

std::uint64_t SlfEstimator::config_hash() const
{
  return fnv1a(name() + " " + format_double(cfg_.step) + " " + format_double(cfg_.d0));
}

std::vector<Estimate> SlfEstimator::estimate(std::span<const Sample> samples) const
{
  std::vector<Estimate> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      out[i].box = slf_fit(samples[i].points, cfg_);
    } catch (const FitError & e) {
      out[i].error = e.what();
    }
  }
  return out;
}

FunctionEstimator::FunctionEstimator(std::string name, std::function<OrientedBox(const Sample &)> fn)
: name_(std::move(name)), fn_(std::move(fn))
{
}

std::uint64_t FunctionEstimator::config_hash() const { return fnv1a(name_); }

std::vector<Estimate> FunctionEstimator::estimate(std::span<const Sample> samples) const
{
  std::vector<Estimate> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      out[i].box = fn_(samples[i]);
    } catch (const std::exception & e) {
      out[i].error = e.what();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

const MetricSummary & EvalReport::summary(ObjectClass c) const
{
  for (const auto & s : summaries) {
    if (s.group == to_string(c)) return s;
  }
  throw InvalidArgument("report has no rows of class " + std::string(to_string(c)));
}

EvalRow evaluate_row(const Sample & s, const OrientedBox & pred)
{
  EvalRow row;
  row.id = s.id;
  row.label = s.label;
  row.pred = pred;
  row.err_c = center_error(pred, s.gt);
  row.err_theta_deg = orientation_error(pred, s.gt) * kRadToDeg;
  row.iou = iou(pred, s.gt);
  return row;
}

std::vector<MetricSummary> summarize(std::span<const EvalRow> rows)
{
  std::vector<MetricSummary> out;
  auto add = [&](std::string group, auto pred) {
    MetricSummary m;
    m.group = std::move(group);
    for (const auto & r : rows) {
      if (!r.ok() || !pred(r)) continue;
      ++m.count;
      m.mean_err_c += r.err_c;
      m.mean_abs_err_theta_deg += std::abs(r.err_theta_deg);
      m.mean_iou += r.iou;
    }
    if (m.count > 0) {
      const double n = static_cast<double>(m.count);
      m.mean_err_c /= n;
      m.mean_abs_err_theta_deg /= n;
      m.mean_iou /= n;
    }
    return m;
  };
  for (ObjectClass c : {ObjectClass::car, ObjectClass::pedestrian, ObjectClass::cyclist}) {
    auto m = add(std::string(to_string(c)), [c](const EvalRow & r) { return r.label == c; });
    if (m.count > 0) out.push_back(std::move(m));
  }
  out.push_back(add("all", [](const EvalRow &) { return true; }));
  return out;
}

EvalReport evaluate(const Estimator & estimator, std::span<const Sample> samples)
{
  EvalReport report;
  report.method = estimator.name();
  report.config_hash = estimator.config_hash();
  report.dataset_hash = dataset_hash(samples);
  const auto estimates = estimator.estimate(samples);
  if (estimates.size() != samples.size()) {
    throw InvalidArgument("evaluate: estimator returned the wrong number of estimates");
  }
  report.rows.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (estimates[i].ok() && is_valid(estimates[i].box)) {
      report.rows.push_back(evaluate_row(samples[i], estimates[i].box));
    } else {
      EvalRow row;
      row.id = samples[i].id;
      row.label = samples[i].label;
      row.error = estimates[i].ok() ? "invalid box" : estimates[i].error;
      report.rows.push_back(std::move(row));
      ++report.failed;
    }
  }
  report.summaries = summarize(report.rows);
  return report;
}

std::string format_report_csv(const EvalReport & report)
{
  std::string out = "id,class,err_c,err_theta_deg,iou,status\n";
  for (const auto & r : report.rows) {
    out += r.id;
    out += ',';
    out += to_string(r.label);
    if (r.ok()) {
      out += ',' + format_double(r.err_c) + ',' + format_double(r.err_theta_deg) + ',' +
             format_double(r.iou) + ",ok\n";
    } else {
      out += ",,,,failed\n";
    }
  }
  return out;
}

std::string format_summary_csv(const EvalReport & report)
{
  std::string out = "method,group,count,failed,mean_err_c,mean_abs_err_theta_deg,mean_iou\n";
  for (const auto & s : report.summaries) {
    out += report.method + ',' + s.group + ',' + std::to_string(s.count) + ',' +
           std::to_string(s.group == "all" ? report.failed : 0) + ',' + format_double(s.mean_err_c) +
           ',' + format_double(s.mean_abs_err_theta_deg) + ',' + format_double(s.mean_iou) + '\n';
  }
  return out;
}

std::string_view to_string(Metric m)
{
  switch (m) {
    case Metric::err_c:
      return "err_c";
    case Metric::err_theta_deg:
      return "err_theta_deg";
    case Metric::abs_err_theta_deg:
      return "abs_err_theta_deg";
    case Metric::iou:
      return "iou";
  }
  return "err_c";
}

Metric parse_metric(std::string_view name)
{
  if (name == "err_c") return Metric::err_c;
  if (name == "err_theta_deg") return Metric::err_theta_deg;
  if (name == "abs_err_theta_deg") return Metric::abs_err_theta_deg;
  if (name == "iou") return Metric::iou;
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

std::vector<HistogramBin> histogram(std::span<const double> values, double bin_width)
{
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw InvalidArgument("histogram: bin width must be positive");
  }
  std::vector<HistogramBin> bins;
  if (values.empty()) {
    return bins;
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double first = std::floor(*lo / bin_width);
  const auto nbins = static_cast<std::size_t>(std::floor(*hi / bin_width) - first) + 1;
  bins.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) {
    bins[k].low = (first + static_cast<double>(k)) * bin_width;
  }
  for (double v : values) {
    const auto k = static_cast<std::size_t>(std::floor(v / bin_width) - first);
    ++bins[std::min(k, nbins - 1)].count;
  }
  return bins;
}

std::vector<HistogramBin> histogram(const EvalReport & report, Metric metric, double bin_width)
{
  std::vector<double> values;
  for (const auto & r : report.rows) {
    if (!r.ok()) continue;
    switch (metric) {
      case Metric::err_c:
        values.push_back(r.err_c);
        break;
      case Metric::err_theta_deg:
        values.push_back(r.err_theta_deg);
        break;
      case Metric::abs_err_theta_deg:
        values.push_back(std::abs(r.err_theta_deg));
        break;
      case Metric::iou:
        values.push_back(r.iou);
        break;
    }
  }
  return histogram(values, bin_width);
}

std::string format_histogram_csv(std::span<const HistogramBin> bins)
{
  std::string out = "bin_low,count\n";
  for (const auto & b : bins) {
    out += format_double(b.low) + ',' + std::to_string(b.count) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ablation

namespace
{

std::vector<std::string_view> split(std::string_view s, char sep)
{
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    parts.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return parts;
}

double parse_scale(std::string_view v)
{
  const auto slash = v.find('/');
  auto num = [&](std::string_view t) {
    double x = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), x);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
      throw InvalidArgument("grid: bad scale '" + std::string(v) + "'");
    }
    return x;
  };
  if (slash == std::string_view::npos) {
    return num(v);
  }
  return num(v.substr(0, slash)) / num(v.substr(slash + 1));
}

}  // namespace

std::vector<NetworkConfig> parse_grid(std::string_view grid, const NetworkConfig & base)
{
  std::vector<NetworkConfig> cells{base};
  if (grid.empty()) {
    return cells;
  }
  for (auto axis : split(grid, ';')) {
    if (axis.empty()) continue;
    const auto eq = axis.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument("grid: expected axis=values, got '" + std::string(axis) + "'");
    }
    const auto key = axis.substr(0, eq);
    const auto values = split(axis.substr(eq + 1), ',');
    std::vector<NetworkConfig> next;
    for (const auto & cell : cells) {
      for (auto v : values) {
        NetworkConfig c = cell;
        if (key == "angle") {
          c.angle_mode = parse_angle_mode(v);
        } else if (key == "center") {
          c.center_mode = parse_center_mode(v);
        } else if (key == "concat") {
          if (v != "on" && v != "off") throw InvalidArgument("grid: concat must be on|off");
          c.concat = v == "on";
        } else if (key == "scale") {
          c.scale = parse_scale(v);
        } else {
          throw InvalidArgument("grid: unknown axis '" + std::string(key) + "'");
        }
        c.validate();
        next.push_back(c);
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::string describe(const NetworkConfig & cfg)
{
  return "angle=" + std::string(to_string(cfg.angle_mode)) + " center=" +
         std::string(to_string(cfg.center_mode)) + " concat=" + (cfg.concat ? "on" : "off") +
         " scale=" + format_double(cfg.scale);
}

double evaluation_loss(
  const NetworkParams & params, const NetworkConfig & cfg, std::span<const ResampledSample> data)
{
  if (data.empty()) {
    throw InvalidArgument("evaluation_loss: empty data");
  }
  NetworkConfig mse = cfg;
  mse.loss = LossKind::mse;
  double weighted = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    const auto chunk = data.subspan(start, std::min(kEvalBatch, data.size() - start));
    const auto res = forward(params, mse, make_batch(chunk), RunMode::infer);
    std::vector<OrientedBox> gt;
    for (const auto & s : chunk) gt.push_back(s.sample.gt);
    const auto loss = compute_loss(res.outputs, make_targets(gt, res.reference, mse), mse);
    weighted += loss.total * static_cast<double>(chunk.size());
  }
  return weighted / static_cast<double>(data.size());
}

std::vector<AblationRow> ablate(
  std::span<const NetworkConfig> cells, std::span<const Sample> train_data,
  std::span<const Sample> val_data, std::span<const Sample> test_data, const TrainConfig & tcfg,
  std::uint64_t seed, const std::function<void(const AblationRow &)> & on_cell)
{
  const auto train_r = resample_all(train_data, kCloudSize, seed);
  const auto val_r = resample_all(val_data, kCloudSize, seed + 1);
  const auto test_r = resample_all(test_data, kCloudSize, seed + 2);
  TrainConfig t = tcfg;
  t.seed = seed;

  std::vector<AblationRow> rows;
  for (const auto & cfg : cells) {
    AblationRow row;
    row.config = cfg;
    try {
      const auto result = train(train_r, val_r, cfg, t);
      row.best_epoch = result.best_epoch;
      row.eval_loss = evaluation_loss(result.params, cfg, test_r);
      const auto report = evaluate(BoxNetEstimator(result.params, cfg, seed + 2), test_data);
      row.mean_err_c = report.overall().mean_err_c;
      row.mean_abs_err_theta_deg = report.overall().mean_abs_err_theta_deg;
      row.mean_iou = report.overall().mean_iou;
    } catch (const std::exception & e) {
      row.error = e.what();
    }
    if (on_cell) on_cell(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_csv(std::span<const AblationRow> rows)
{
  std::string out =
    "angle_mode,center_mode,concat,scale,eval_loss,mean_err_c,mean_abs_err_theta_deg,mean_iou,best_epoch,status\n";
  for (const auto & r : rows) {
    out += std::string(to_string(r.config.angle_mode)) + ',' + std::string(to_string(r.config.center_mode)) +
           ',' + (r.config.concat ? "on" : "off") + ',' + format_double(r.config.scale) + ',';
    if (r.error.empty()) {
      out += format_double(r.eval_loss) + ',' + format_double(r.mean_err_c) + ',' +
             format_double(r.mean_abs_err_theta_deg) + ',' + format_double(r.mean_iou) + ',' +
             std::to_string(r.best_epoch) + ",ok\n";
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), '"', '\'');
      out += ",,,,,\"failed: " + msg + "\"\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Timing

TimingReport time_inference(
  const NetworkParams & params, const NetworkConfig & cfg, std::span<const ResampledSample> data,
  std::size_t batch_size, std::size_t repetitions)
{
  if (repetitions == 0) {
    throw InvalidArgument("time_inference: repetitions must be >= 1");
  }
  if (batch_size == 0) {
    throw InvalidArgument("time_inference: batch size must be >= 1");
  }
  if (data.empty()) {
    throw InvalidArgument("time_inference: no data");
  }
  check_shapes(params, cfg);

  std::vector<CloudBatch> batches;
  std::size_t cursor = 0;
  const std::size_t distinct = std::max<std::size_t>(1, std::min<std::size_t>(8, data.size() / batch_size));
  for (std::size_t k = 0; k < distinct; ++k) {
    std::vector<std::span<const Point2>> clouds;
    for (std::size_t i = 0; i < batch_size; ++i) {
      clouds.emplace_back(data[cursor % data.size()].sample.points);
      ++cursor;
    }
    batches.push_back(make_batch(clouds));
  }

  std::vector<double> ms;
  ms.reserve(repetitions);
  double sink = 0.0;
  for (std::size_t r = 0; r < kTimingWarmup + repetitions; ++r) {
    const auto & batch = batches[r % batches.size()];
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = forward(params, cfg, batch, RunMode::infer);
    const auto t1 = std::chrono::steady_clock::now();
    sink += res.outputs.center(0, 0);
    if (r >= kTimingWarmup) {
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  (void)sink;

  TimingReport rep;
  rep.batch_size = batch_size;
  rep.repetitions = repetitions;
  double sum = 0.0;
  for (double v : ms) sum += v;
  rep.mean_ms = sum / static_cast<double>(ms.size());
  double var = 0.0;
  for (double v : ms) var += (v - rep.mean_ms) * (v - rep.mean_ms);
  rep.stddev_ms = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
  rep.per_cloud_ms = rep.mean_ms / static_cast<double>(batch_size);
  return rep;
}

// ---------------------------------------------------------------------------
// Manifests

void write_text_atomic(const std::filesystem::path & path, std::string_view text)
{
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + tmp.string());
    }
    out << text;
    if (!out) {
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_manifest(const std::filesystem::path & path, const Manifest & entries)
{
  std::string text;
  for (const auto & [k, v] : entries) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw InvalidArgument("manifest: keys may not hold '=' or newlines, values may not hold newlines");
    }
    text += k + "=" + v + "\n";
  }
  write_text_atomic(path, text);
}

}  // namespace bevbox
