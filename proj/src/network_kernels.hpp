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

// Forward/backward kernels shared by the 64-bit public API and the 32-bit training path.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "bevbox/error.hpp"
#include "bevbox/network.hpp"

namespace bevbox::detail
{

inline constexpr double kBatchNormEpsilon = 1e-5;

enum class Activation { relu, tanh, identity };

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
using IndexMat = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
struct LayerCache
{
  Mat<T> input;
  Mat<T> xhat;  // normalized pre-activation, normalized layers only
  RowVec<T> inv_std;
  RowVec<T> batch_mean;
  RowVec<T> batch_var;
  Mat<T> output;  // activation output, plain layers only
};

template <typename T>
struct Cache
{
  RunMode mode = RunMode::infer;
  std::size_t batch_size = 0;
  std::size_t cloud_size = 0;
  std::vector<LayerCache<T>> shared;
  Mat<T> pool_source;  // only kept when there are no shared layers
  IndexMat argmax;     // B x F, row into the stacked point matrix
  std::vector<LayerCache<T>> angle;
  std::vector<LayerCache<T>> size;
  std::vector<LayerCache<T>> center;
};

template <typename T>
struct Heads
{
  Mat<T> angle;
  Mat<T> size;
  Mat<T> center;
};

inline Activation angle_activation(AngleMode mode)
{
  return mode == AngleMode::direct_theta ? Activation::identity : Activation::tanh;
}

template <typename T>
void activate(Mat<T> & y, Activation act)
{
  switch (act) {
    case Activation::relu:
      y = y.cwiseMax(T(0));
      break;
    case Activation::tanh:
      y = y.array().tanh();
      break;
    case Activation::identity:
      break;
  }
}

template <typename T>
Mat<T> dense_forward(
  const BasicLayer<T> & layer, const Mat<T> & x, Activation act, RunMode mode, LayerCache<T> * c)
{
  Mat<T> y(x.rows(), layer.weight.cols());
  y.noalias() = x * layer.weight;
  y.rowwise() += layer.bias.row(0);
  if (layer.normalized()) {
    RowVec<T> inv;
    if (mode == RunMode::train) {
      const T rows = static_cast<T>(y.rows());
      RowVec<T> mean = y.colwise().sum() / rows;
      y.rowwise() -= mean;
      RowVec<T> var = y.array().square().colwise().sum().matrix() / rows;
      inv = (var.array() + T(kBatchNormEpsilon)).rsqrt().matrix();
      if (c) {
        c->batch_mean = std::move(mean);
        c->batch_var = std::move(var);
      }
    } else {
      y.rowwise() -= layer.running_mean.row(0);
      inv = (layer.running_var.array() + T(kBatchNormEpsilon)).rsqrt().matrix();
    }
    y.array().rowwise() *= inv.array();
    if (c) {
      c->xhat = y;
      c->inv_std = inv;
    }
    y.array().rowwise() *= layer.gamma.row(0).array();
    y.rowwise() += layer.beta.row(0);
  }
  activate(y, act);
  if (c && !layer.normalized()) {
    c->output = y;
  }
  return y;
}

// Returns the gradient with respect to the layer input when need_input_grad is set.
template <typename T>
Mat<T> dense_backward(
  const BasicLayer<T> & layer, const LayerCache<T> & c, Mat<T> dy, Activation act,
  BasicLayer<T> & grad, bool need_input_grad)
{
  const Eigen::Index cols = dy.cols();
  if (layer.normalized()) {
    const T rows = static_cast<T>(dy.rows());
    grad.gamma.resize(1, cols);
    grad.beta.resize(1, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      auto d = dy.col(j);
      const auto xh = c.xhat.col(j);
      const T g = layer.gamma(0, j);
      const T b = layer.beta(0, j);
      if (act == Activation::relu) {
        d = (xh.array() * g + b > T(0)).select(d, T(0));
      }
      const T dbeta = d.sum();
      const T dgamma = d.dot(xh);
      grad.gamma(0, j) = dgamma;
      grad.beta(0, j) = dbeta;
      // batch-norm backward with dxhat = g * d
      d = (g * c.inv_std(0, j)) * (d.array() - dbeta / rows - xh.array() * (dgamma / rows));
    }
  } else {
    switch (act) {
      case Activation::relu:
        dy = (c.output.array() > T(0)).select(dy, T(0));
        break;
      case Activation::tanh:
        dy.array() *= T(1) - c.output.array().square();
        break;
      case Activation::identity:
        break;
    }
  }
  grad.weight.resize(layer.weight.rows(), layer.weight.cols());
  grad.weight.noalias() = c.input.transpose() * dy;
  grad.bias = dy.colwise().sum();
  if (!need_input_grad) {
    return {};
  }
  Mat<T> dx(dy.rows(), layer.weight.rows());
  dx.noalias() = dy * layer.weight.transpose();
  return dx;
}

template <typename T>
Mat<T> head_forward(
  const std::vector<BasicLayer<T>> & layers, Mat<T> x, Activation final_act, RunMode mode,
  std::vector<LayerCache<T>> * caches)
{
  if (caches) {
    caches->assign(layers.size(), {});
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Activation act = i + 1 == layers.size() ? final_act : Activation::relu;
    if (caches) {
      auto & c = (*caches)[i];
      c.input = std::move(x);
      x = dense_forward(layers[i], c.input, act, mode, &c);
    } else {
      x = dense_forward<T>(layers[i], x, act, mode, nullptr);
    }
  }
  return x;
}

template <typename T>
Mat<T> head_backward(
  const std::vector<BasicLayer<T>> & layers, const std::vector<LayerCache<T>> & caches,
  Mat<T> dout, Activation final_act, std::vector<BasicLayer<T>> & grads)
{
  grads.resize(layers.size());
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Activation act = k + 1 == layers.size() ? final_act : Activation::relu;
    dout = dense_backward(layers[k], caches[k], std::move(dout), act, grads[k], true);
  }
  return dout;
}

template <typename T>
Mat<T> max_pool(const Mat<T> & a, std::size_t batch, std::size_t n, IndexMat * argmax)
{
  const Eigen::Index f = a.cols();
  Mat<T> pooled(static_cast<Eigen::Index>(batch), f);
  if (argmax) {
    argmax->resize(static_cast<Eigen::Index>(batch), f);
  }
  for (Eigen::Index c = 0; c < f; ++c) {
    const T * col = a.col(c).data();
    for (std::size_t b = 0; b < batch; ++b) {
      const T * seg = col + b * n;
      std::size_t best = 0;
      T best_v = seg[0];
      for (std::size_t i = 1; i < n; ++i) {
        // strict comparison keeps the lowest index on ties
        if (seg[i] > best_v) {
          best_v = seg[i];
          best = i;
        }
      }
      pooled(static_cast<Eigen::Index>(b), c) = best_v;
      if (argmax) {
        (*argmax)(static_cast<Eigen::Index>(b), c) = static_cast<Eigen::Index>(b * n + best);
      }
    }
  }
  return pooled;
}

template <typename T>
Heads<T> forward_impl(
  const BasicParams<T> & params, const NetworkConfig & cfg, Mat<T> x, std::size_t batch,
  std::size_t n, RunMode mode, Cache<T> * cache)
{
  if (cache) {
    cache->mode = mode;
    cache->batch_size = batch;
    cache->cloud_size = n;
    cache->shared.assign(params.shared.size(), {});
  }
  Mat<T> feature;
  if (!cache && mode == RunMode::infer && batch > 1 && !params.shared.empty()) {
    // Rows are independent under running statistics: run one cloud at a time so the
    // wide activations stay in cache.
    const auto rows = static_cast<Eigen::Index>(n);
    for (std::size_t b = 0; b < batch; ++b) {
      Mat<T> y = x.middleRows(static_cast<Eigen::Index>(b) * rows, rows);
      for (const auto & layer : params.shared) {
        y = dense_forward<T>(layer, y, Activation::relu, mode, nullptr);
      }
      if (b == 0) feature.resize(static_cast<Eigen::Index>(batch), y.cols());
      feature.row(static_cast<Eigen::Index>(b)) = y.colwise().maxCoeff();
    }
  } else {
    for (std::size_t i = 0; i < params.shared.size(); ++i) {
      if (cache) {
        auto & c = cache->shared[i];
        c.input = std::move(x);
        x = dense_forward(params.shared[i], c.input, Activation::relu, mode, &c);
      } else {
        x = dense_forward<T>(params.shared[i], x, Activation::relu, mode, nullptr);
      }
    }
    feature = max_pool(x, batch, n, cache ? &cache->argmax : nullptr);
  }
  x.resize(0, 0);

  Heads<T> out;
  const Activation angle_act = angle_activation(cfg.angle_mode);
  out.angle = head_forward(params.angle_head, feature, angle_act, mode, cache ? &cache->angle : nullptr);
  out.size = head_forward(params.size_head, feature, Activation::relu, mode, cache ? &cache->size : nullptr);
  Mat<T> center_in;
  if (cfg.concat) {
    center_in.resize(feature.rows(), feature.cols() + out.angle.cols() + out.size.cols());
    center_in << feature, out.angle, out.size;
  } else {
    center_in = std::move(feature);
  }
  out.center = head_forward(
    params.center_head, std::move(center_in), Activation::identity, mode, cache ? &cache->center : nullptr);
  return out;
}

template <typename T>
BasicParams<T> backward_impl(
  const BasicParams<T> & params, const NetworkConfig & cfg, const Cache<T> & cache, const Heads<T> & dout)
{
  if (cache.mode != RunMode::train) {
    throw InvalidArgument("backward: cache comes from an infer-mode forward pass");
  }
  BasicParams<T> grads;
  grads.step = params.step;
  grads.samples_seen = params.samples_seen;

  Mat<T> d_angle = dout.angle;
  Mat<T> d_size = dout.size;
  Mat<T> d_center_in =
    head_backward(params.center_head, cache.center, dout.center, Activation::identity, grads.center_head);

  const Eigen::Index f = static_cast<Eigen::Index>(cfg.feature_size());
  Mat<T> d_feature;
  if (cfg.concat) {
    d_feature = d_center_in.leftCols(f);
    d_angle += d_center_in.middleCols(f, d_angle.cols());
    d_size += d_center_in.rightCols(d_size.cols());
  } else {
    d_feature = std::move(d_center_in);
  }
  d_feature += head_backward(
    params.angle_head, cache.angle, std::move(d_angle), angle_activation(cfg.angle_mode),
    grads.angle_head);
  d_feature +=
    head_backward(params.size_head, cache.size, std::move(d_size), Activation::relu, grads.size_head);

  grads.shared.resize(params.shared.size());
  if (!params.shared.empty()) {
    const auto rows = static_cast<Eigen::Index>(cache.batch_size * cache.cloud_size);
    Mat<T> da = Mat<T>::Zero(rows, f);
    for (Eigen::Index c = 0; c < f; ++c) {
      for (Eigen::Index b = 0; b < d_feature.rows(); ++b) {
        da(cache.argmax(b, c), c) += d_feature(b, c);
      }
    }
    for (std::size_t k = params.shared.size(); k-- > 0;) {
      da = dense_backward(
        params.shared[k], cache.shared[k], std::move(da), Activation::relu, grads.shared[k], k > 0);
    }
  }

  // running statistics carry no gradient; keep shapes aligned with params
  auto fill = [](const std::vector<BasicLayer<T>> & src, std::vector<BasicLayer<T>> & dst) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i].running_mean = Mat<T>::Zero(src[i].running_mean.rows(), src[i].running_mean.cols());
      dst[i].running_var = Mat<T>::Zero(src[i].running_var.rows(), src[i].running_var.cols());
    }
  };
  fill(params.shared, grads.shared);
  fill(params.angle_head, grads.angle_head);
  fill(params.size_head, grads.size_head);
  fill(params.center_head, grads.center_head);
  return grads;
}

template <typename T>
void update_running_stats_impl(NetworkParams & params, const Cache<T> & cache, double momentum)
{
  if (cache.mode != RunMode::train) {
    throw InvalidArgument("update_running_stats: cache comes from an infer-mode forward pass");
  }
  auto blend = [momentum](std::vector<Layer> & layers, const std::vector<LayerCache<T>> & caches) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (!layers[i].normalized()) {
        continue;
      }
      const auto & c = caches[i];
      layers[i].running_mean =
        momentum * layers[i].running_mean + (1.0 - momentum) * c.batch_mean.template cast<double>();
      layers[i].running_var =
        momentum * layers[i].running_var + (1.0 - momentum) * c.batch_var.template cast<double>();
    }
  };
  blend(params.shared, cache.shared);
  blend(params.angle_head, cache.angle);
  blend(params.size_head, cache.size);
  blend(params.center_head, cache.center);
}

/// Canonically ordered, reference-subtracted input points (R x 2) and the references (B x 2).
struct PreparedInput
{
  Eigen::MatrixXd centered;
  Eigen::MatrixXd reference;
};

PreparedInput prepare_input(const CloudBatch & batch, const NetworkConfig & cfg);

}  // namespace bevbox::detail
