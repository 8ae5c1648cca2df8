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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "bevbox/error.hpp"
#include "bevbox/network.hpp"
#include "network_kernels.hpp"

namespace bevbox
{

void TrainConfig::validate() const
{
  if (batch_size < 2) {
    throw InvalidArgument("train: batch_size must be >= 2 (batch-norm needs two samples)");
  }
  if (!(lr0 > 0.0 && lr_decay_rate > 0.0 && lr_decay_steps > 0.0)) {
    throw InvalidArgument("train: learning-rate schedule must be positive");
  }
  if (!(bn_decay_start > 0.0 && bn_decay_start <= bn_decay_end && bn_decay_end < 1.0)) {
    throw InvalidArgument("train: need 0 < bn_decay_start <= bn_decay_end < 1");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 &&
        adam_epsilon > 0.0)) {
    throw InvalidArgument("train: invalid Adam hyper-parameters");
  }
}

double learning_rate(double schedule_step, const TrainConfig & cfg)
{
  return cfg.lr0 * std::pow(cfg.lr_decay_rate, schedule_step / cfg.lr_decay_steps);
}

double bn_momentum(double schedule_step, const TrainConfig & cfg)
{
  const double m =
    1.0 - (1.0 - cfg.bn_decay_start) * std::pow(0.5, schedule_step / cfg.lr_decay_steps);
  return std::min(cfg.bn_decay_end, m);
}

AdamState::AdamState(const NetworkParams & like) : m(zeros_like(like)), v(zeros_like(like)) {}

void adam_step(NetworkParams & params, AdamState & state, const NetworkParams & grads, const TrainConfig & cfg)
{
  for_each_trainable(grads, [](const std::string & name, const Eigen::MatrixXd & g) {
    if (!g.allFinite()) {
      throw NumericError("adam: non-finite gradient in " + name);
    }
  });

  std::vector<Eigen::MatrixXd *> p, m, v;
  std::vector<const Eigen::MatrixXd *> g;
  for_each_trainable(params, [&](const std::string &, Eigen::MatrixXd & t) { p.push_back(&t); });
  for_each_trainable(state.m, [&](const std::string &, Eigen::MatrixXd & t) { m.push_back(&t); });
  for_each_trainable(state.v, [&](const std::string &, Eigen::MatrixXd & t) { v.push_back(&t); });
  for_each_trainable(grads, [&](const std::string &, const Eigen::MatrixXd & t) { g.push_back(&t); });
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw InvalidArgument("adam: gradient layout does not match parameters");
  }

  const double t = static_cast<double>(params.step + 1);
  const double lr = learning_rate(static_cast<double>(params.samples_seen), cfg);
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]->rows() != g[i]->rows() || p[i]->cols() != g[i]->cols()) {
      throw InvalidArgument("adam: gradient shape does not match parameter");
    }
    *m[i] = b1 * *m[i] + (1.0 - b1) * *g[i];
    v[i]->array() = b2 * v[i]->array() + (1.0 - b2) * g[i]->array().square();
    p[i]->array() -= lr * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + cfg.adam_epsilon);
  }
  ++params.step;
}

namespace
{

struct ValMetrics
{
  double err_c = std::numeric_limits<double>::quiet_NaN();
  double err_theta_deg = std::numeric_limits<double>::quiet_NaN();
  double iou = std::numeric_limits<double>::quiet_NaN();
};

ValMetrics validate_params(
  const NetworkParams & params, const NetworkConfig & cfg, std::span<const ResampledSample> val)
{
  ValMetrics m;
  if (val.empty()) {
    return m;
  }
  constexpr std::size_t kEvalBatch = 64;
  double sum_c = 0.0, sum_t = 0.0, sum_iou = 0.0;
  std::size_t n = 0;
  for (std::size_t start = 0; start < val.size(); start += kEvalBatch) {
    const auto chunk = val.subspan(start, std::min(kEvalBatch, val.size() - start));
    std::vector<std::span<const Point2>> clouds;
    for (const auto & s : chunk) clouds.emplace_back(s.sample.points);
    const auto boxes = predict_batch(params, cfg, clouds);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto & gt = chunk[i].sample.gt;
      sum_c += center_error(boxes[i], gt);
      sum_t += std::abs(orientation_error(boxes[i], gt)) * 180.0 / kPi;
      sum_iou += iou(boxes[i], gt);
      ++n;
    }
  }
  m.err_c = sum_c / static_cast<double>(n);
  m.err_theta_deg = sum_t / static_cast<double>(n);
  m.iou = sum_iou / static_cast<double>(n);
  return m;
}

// One forward/backward pass in precision T. Returns the batch loss.
template <typename T>
double train_batch(
  NetworkParams & params, AdamState & adam, const NetworkConfig & cfg, const TrainConfig & tcfg,
  const CloudBatch & batch, std::span<const OrientedBox> gt)
{
  auto in = detail::prepare_input(batch, cfg);
  const HeadOutputs targets = make_targets(gt, in.reference, cfg);

  detail::Cache<T> cache;
  NetworkParams grads;
  double loss = 0.0;
  if constexpr (std::is_same_v<T, double>) {
    auto heads = detail::forward_impl<double>(
      params, cfg, std::move(in.centered), batch.batch_size, batch.cloud_size, RunMode::train, &cache);
    const auto res = compute_loss({heads.angle, heads.size, heads.center}, targets, cfg);
    loss = res.total;
    grads = detail::backward_impl<double>(params, cfg, cache, {res.grad.angle, res.grad.size, res.grad.center});
  } else {
    const auto low = params.template cast<T>();
    auto heads = detail::forward_impl<T>(
      low, cfg, in.centered.template cast<T>(), batch.batch_size, batch.cloud_size, RunMode::train, &cache);
    const HeadOutputs pred{
      heads.angle.template cast<double>(), heads.size.template cast<double>(),
      heads.center.template cast<double>()};
    const auto res = compute_loss(pred, targets, cfg);
    loss = res.total;
    const detail::Heads<T> dout{
      res.grad.angle.template cast<T>(), res.grad.size.template cast<T>(), res.grad.center.template cast<T>()};
    grads = detail::backward_impl<T>(low, cfg, cache, dout).template cast<double>();
  }
  detail::update_running_stats_impl(params, cache, bn_momentum(static_cast<double>(params.samples_seen), tcfg));
  adam_step(params, adam, grads, tcfg);
  params.samples_seen += static_cast<std::int64_t>(batch.batch_size);
  return loss;
}

}  // namespace

TrainResult train(
  std::span<const ResampledSample> train_data, std::span<const ResampledSample> val_data,
  const NetworkConfig & cfg, const TrainConfig & tcfg, const std::function<void(const EpochLog &)> & on_epoch)
{
  cfg.validate();
  tcfg.validate();
  if (train_data.size() < 2) {
    throw InvalidArgument("train: need at least two training samples");
  }

  TrainResult result;
  NetworkParams params = init_params(cfg, tcfg.seed);
  AdamState adam(params);
  std::mt19937_64 rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  double best_iou = -1.0;
  std::vector<std::span<const Point2>> clouds;
  std::vector<OrientedBox> gts;
  for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + tcfg.batch_size);
      if (end - start < 2) {
        continue;
      }
      clouds.clear();
      gts.clear();
      for (std::size_t i = start; i < end; ++i) {
        const auto & s = train_data[order[i]].sample;
        clouds.emplace_back(s.points);
        gts.push_back(s.gt);
      }
      const CloudBatch batch = make_batch(clouds);
      loss_sum += tcfg.precision == Precision::float32
                    ? train_batch<float>(params, adam, cfg, tcfg, batch, gts)
                    : train_batch<double>(params, adam, cfg, tcfg, batch, gts);
      ++batches;
    }

    const ValMetrics vm = validate_params(params, cfg, val_data);
    EpochLog log{epoch, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)), vm.err_c,
                 vm.err_theta_deg, vm.iou};
    result.log.push_back(log);
    if (on_epoch) {
      on_epoch(log);
    }
    if (val_data.empty() || (std::isfinite(vm.iou) && vm.iou > best_iou)) {
      best_iou = vm.iou;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  if (result.best_epoch == 0) {
    result.params = params;
    result.best_epoch = tcfg.epochs;
  }
  return result;
}

std::string format_epoch_log(std::span<const EpochLog> log)
{
  std::ostringstream out;
  out.precision(9);
  out << "epoch,train_loss,val_err_c,val_err_theta_deg,val_iou\n";
  for (const auto & e : log) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_err_c << ',' << e.val_err_theta_deg << ','
        << e.val_iou << '\n';
  }
  return out.str();
}

}  // namespace bevbox
