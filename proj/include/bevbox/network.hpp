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

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bevbox/dataset.hpp"
#include "bevbox/geometry.hpp"

namespace bevbox
{

enum class AngleMode { direct_theta, sincos, sincos2 };
enum class CenterMode { none, mean, median };
enum class LossKind { mse, huber };
enum class RunMode { train, infer };

std::string_view to_string(AngleMode m);
std::string_view to_string(CenterMode m);
std::string_view to_string(LossKind k);
AngleMode parse_angle_mode(std::string_view name);
CenterMode parse_center_mode(std::string_view name);
LossKind parse_loss_kind(std::string_view name);

/// Number of values the angle head regresses.
std::size_t angle_encoding_size(AngleMode mode);

struct LossWeights
{
  double angle = 1.0;
  double size = 2.0;
  double center = 1.0;

  friend bool operator==(const LossWeights &, const LossWeights &) = default;
};

struct NetworkConfig
{
  AngleMode angle_mode = AngleMode::sincos2;
  CenterMode center_mode = CenterMode::mean;
  bool concat = true;
  /// Layer width multiplier in (0, 1]. Layers that shrink to one unit or fewer are dropped.
  double scale = 1.0;
  LossKind loss = LossKind::mse;
  double huber_delta = 1.0;
  LossWeights weights;

  void validate() const;
  std::vector<std::size_t> shared_widths() const;
  std::vector<std::size_t> head_widths() const;
  /// Width of the pooled global feature.
  std::size_t feature_size() const;

  friend bool operator==(const NetworkConfig &, const NetworkConfig &) = default;
};

/// One fully connected layer. Weights are fan_in x fan_out; every other tensor is 1 x fan_out.
/// Batch-norm tensors are empty for layers without normalization.
template <typename T>
struct BasicLayer
{
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  Mat weight;
  Mat bias;
  Mat gamma;
  Mat beta;
  Mat running_mean;
  Mat running_var;

  bool normalized() const { return gamma.size() > 0; }

  template <typename U>
  BasicLayer<U> cast() const
  {
    return {weight.template cast<U>(),       bias.template cast<U>(),
            gamma.template cast<U>(),        beta.template cast<U>(),
            running_mean.template cast<U>(), running_var.template cast<U>()};
  }
};

/// All learnable tensors and batch-norm state of the box regressor.
template <typename T>
struct BasicParams
{
  std::vector<BasicLayer<T>> shared;
  std::vector<BasicLayer<T>> angle_head;
  std::vector<BasicLayer<T>> size_head;
  std::vector<BasicLayer<T>> center_head;
  /// Optimizer iterations taken.
  std::int64_t step = 0;
  /// Training samples consumed; drives the learning-rate and batch-norm schedules.
  std::int64_t samples_seen = 0;

  template <typename U>
  BasicParams<U> cast() const
  {
    BasicParams<U> out;
    auto conv = [](const std::vector<BasicLayer<T>> & src, std::vector<BasicLayer<U>> & dst) {
      dst.reserve(src.size());
      for (const auto & l : src) dst.push_back(l.template cast<U>());
    };
    conv(shared, out.shared);
    conv(angle_head, out.angle_head);
    conv(size_head, out.size_head);
    conv(center_head, out.center_head);
    out.step = step;
    out.samples_seen = samples_seen;
    return out;
  }
};

using Layer = BasicLayer<double>;
using NetworkParams = BasicParams<double>;

/// Calls f(name, tensor) for every learnable tensor in a fixed order.
template <typename P, typename F>
void for_each_trainable(P & params, F && f)
{
  auto group = [&](std::string_view prefix, auto & layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = std::string(prefix) + "." + std::to_string(i) + ".";
      auto & l = layers[i];
      f(base + "weight", l.weight);
      f(base + "bias", l.bias);
      if (l.normalized()) {
        f(base + "gamma", l.gamma);
        f(base + "beta", l.beta);
      }
    }
  };
  group("shared", params.shared);
  group("angle", params.angle_head);
  group("size", params.size_head);
  group("center", params.center_head);
}

/// Like for_each_trainable, plus batch-norm running statistics.
template <typename P, typename F>
void for_each_tensor(P & params, F && f)
{
  auto group = [&](std::string_view prefix, auto & layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = std::string(prefix) + "." + std::to_string(i) + ".";
      auto & l = layers[i];
      f(base + "weight", l.weight);
      f(base + "bias", l.bias);
      if (l.normalized()) {
        f(base + "gamma", l.gamma);
        f(base + "beta", l.beta);
        f(base + "running_mean", l.running_mean);
        f(base + "running_var", l.running_var);
      }
    }
  };
  group("shared", params.shared);
  group("angle", params.angle_head);
  group("size", params.size_head);
  group("center", params.center_head);
}

/// Fan-in scaled uniform weights, zero biases, unit gamma, zero beta, unit running variance.
NetworkParams init_params(const NetworkConfig & cfg, std::uint64_t seed);

/// Same layout as `like`, every tensor zero.
NetworkParams zeros_like(const NetworkParams & like);

/// Throws CheckpointError if tensor shapes do not match what `cfg` implies.
void check_shapes(const NetworkParams & params, const NetworkConfig & cfg);

std::size_t parameter_count(const NetworkParams & params);

/// B clouds of N points stacked row-wise: rows [b*N, (b+1)*N) hold cloud b.
struct CloudBatch
{
  Eigen::MatrixXd points;
  std::size_t batch_size = 0;
  std::size_t cloud_size = 0;
};

CloudBatch make_batch(std::span<const std::span<const Point2>> clouds);
CloudBatch make_batch(std::span<const ResampledSample> samples);

/// Per-cloud point mean or median (zero for CenterMode::none), B x 2.
Eigen::MatrixXd cloud_references(const CloudBatch & batch, CenterMode mode);

/// Head outputs, regression targets, or gradients with respect to either.
struct HeadOutputs
{
  Eigen::MatrixXd angle;   ///< B x angle_encoding_size
  Eigen::MatrixXd size;    ///< B x 2, (w, l)
  Eigen::MatrixXd center;  ///< B x 2, relative to the cloud reference
};

struct ForwardResult
{
  HeadOutputs outputs;
  Eigen::MatrixXd reference;
};

/// Intermediate values of a forward pass needed by backward().
class ForwardCache
{
public:
  ForwardCache();
  ~ForwardCache();
  ForwardCache(ForwardCache &&) noexcept;
  ForwardCache & operator=(ForwardCache &&) noexcept;

  struct Impl;
  Impl & impl() { return *impl_; }
  const Impl & impl() const { return *impl_; }

private:
  std::unique_ptr<Impl> impl_;
};

/// Runs the network on a batch. Clouds are put in a canonical point order first, so the
/// result is bit-identical under any permutation of the input points.
/// Train mode normalizes with batch statistics; infer mode uses the running statistics.
ForwardResult forward(
  const NetworkParams & params, const NetworkConfig & cfg, const CloudBatch & batch, RunMode mode,
  ForwardCache * cache = nullptr);

/// Gradients of every learnable tensor, laid out like `params`.
/// Throws InvalidArgument if the cache comes from an infer-mode pass.
NetworkParams backward(
  const NetworkParams & params, const NetworkConfig & cfg, const ForwardCache & cache,
  const HeadOutputs & output_grad);

/// Blends the batch statistics recorded in `cache` into the running statistics.
void update_running_stats(NetworkParams & params, const ForwardCache & cache, double momentum);

std::vector<double> encode_angle(double theta, AngleMode mode);

/// Recovers theta in (-pi/2, pi/2]. Throws NumericError on a degenerate (0, 0) encoding.
double recover_theta(std::span<const double> encoding, AngleMode mode);

/// Regression targets for ground-truth boxes given per-cloud references (B x 2).
HeadOutputs make_targets(
  std::span<const OrientedBox> gt, const Eigen::MatrixXd & reference, const NetworkConfig & cfg);

struct LossResult
{
  double total = 0.0;
  double angle = 0.0;
  double size = 0.0;
  double center = 0.0;
  HeadOutputs grad;
};

/// Weighted sum of per-head losses, each averaged over batch and components.
LossResult compute_loss(
  const HeadOutputs & pred, const HeadOutputs & target, const NetworkConfig & cfg);

/// Turns row b of the head outputs into an absolute box.
OrientedBox decode_box(
  const HeadOutputs & outputs, const Eigen::MatrixXd & reference, std::size_t b,
  const NetworkConfig & cfg);

OrientedBox predict(
  const NetworkParams & params, const NetworkConfig & cfg, std::span<const Point2> cloud);

std::vector<OrientedBox> predict_batch(
  const NetworkParams & params, const NetworkConfig & cfg,
  std::span<const std::span<const Point2>> clouds);

// ---------------------------------------------------------------------------
// Optimization

enum class Precision { float32, float64 };

struct TrainConfig
{
  std::size_t batch_size = 32;
  std::size_t epochs = 400;
  double lr0 = 0.005;
  double lr_decay_rate = 0.7;
  double lr_decay_steps = 250000.0;
  double bn_decay_start = 0.5;
  double bn_decay_end = 0.99;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Arithmetic used for forward/backward during training. Parameters stay 64-bit.
  Precision precision = Precision::float32;

  void validate() const;
};

double learning_rate(double schedule_step, const TrainConfig & cfg);
double bn_momentum(double schedule_step, const TrainConfig & cfg);

struct AdamState
{
  NetworkParams m;
  NetworkParams v;

  explicit AdamState(const NetworkParams & like);
};

/// One Adam update. Uses the learning rate at params.samples_seen and bumps params.step.
/// Throws NumericError naming the first non-finite gradient; params are untouched then.
void adam_step(
  NetworkParams & params, AdamState & state, const NetworkParams & grads, const TrainConfig & cfg);

struct EpochLog
{
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_err_c = 0.0;
  double val_err_theta_deg = 0.0;
  double val_iou = 0.0;
};

struct TrainResult
{
  NetworkParams params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

/// Trains from scratch and returns the parameters with the best validation IoU
/// (the last epoch when `val` is empty).
TrainResult train(
  std::span<const ResampledSample> train_data, std::span<const ResampledSample> val_data,
  const NetworkConfig & cfg, const TrainConfig & tcfg,
  const std::function<void(const EpochLog &)> & on_epoch = {});

std::string format_epoch_log(std::span<const EpochLog> log);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint
{
  NetworkParams params;
  NetworkConfig config;
};

std::string format_checkpoint(const NetworkParams & params, const NetworkConfig & cfg);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(
  const NetworkParams & params, const NetworkConfig & cfg, const std::filesystem::path & path);
Checkpoint load_checkpoint(const std::filesystem::path & path);

std::string format_network_config(const NetworkConfig & cfg);

}  // namespace bevbox
