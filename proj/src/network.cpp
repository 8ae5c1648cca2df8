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

#include "bevbox/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bevbox/error.hpp"
#include "network_kernels.hpp"

namespace bevbox
{

std::string_view to_string(AngleMode m)
{
  switch (m) {
    case AngleMode::direct_theta:
      return "direct_theta";
    case AngleMode::sincos:
      return "sincos";
    case AngleMode::sincos2:
      return "sincos2";
  }
  return "sincos2";
}

std::string_view to_string(CenterMode m)
{
  switch (m) {
    case CenterMode::none:
      return "none";
    case CenterMode::mean:
      return "mean";
    case CenterMode::median:
      return "median";
  }
  return "mean";
}

std::string_view to_string(LossKind k) { return k == LossKind::mse ? "mse" : "huber"; }

AngleMode parse_angle_mode(std::string_view name)
{
  if (name == "direct_theta" || name == "theta") return AngleMode::direct_theta;
  if (name == "sincos") return AngleMode::sincos;
  if (name == "sincos2") return AngleMode::sincos2;
  throw InvalidArgument("unknown angle mode '" + std::string(name) + "'");
}

CenterMode parse_center_mode(std::string_view name)
{
  if (name == "none") return CenterMode::none;
  if (name == "mean") return CenterMode::mean;
  if (name == "median") return CenterMode::median;
  throw InvalidArgument("unknown center mode '" + std::string(name) + "'");
}

LossKind parse_loss_kind(std::string_view name)
{
  if (name == "mse") return LossKind::mse;
  if (name == "huber") return LossKind::huber;
  throw InvalidArgument("unknown loss '" + std::string(name) + "'");
}

std::size_t angle_encoding_size(AngleMode mode) { return mode == AngleMode::direct_theta ? 1 : 2; }

namespace
{

constexpr std::size_t kSharedBase[] = {64, 128, 1024};
constexpr std::size_t kHeadBase[] = {512, 128};
constexpr std::size_t kOutputSize = 2;
constexpr double kMinPredictedExtent = 1e-3;

std::vector<std::size_t> shrink(std::span<const std::size_t> base, double scale)
{
  std::vector<std::size_t> out;
  for (std::size_t w : base) {
    const auto scaled = static_cast<std::size_t>(std::floor(static_cast<double>(w) * scale + 1e-9));
    if (scaled > 1) {
      out.push_back(scaled);
    }
  }
  return out;
}

Layer make_layer(std::size_t in, std::size_t out, bool normalized, std::mt19937_64 & rng)
{
  Layer l;
  const double limit = std::sqrt(3.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> u(-limit, limit);
  l.weight.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
  for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      l.weight(i, j) = u(rng);
    }
  }
  const auto o = static_cast<Eigen::Index>(out);
  l.bias = Eigen::MatrixXd::Zero(1, o);
  if (normalized) {
    l.gamma = Eigen::MatrixXd::Ones(1, o);
    l.beta = Eigen::MatrixXd::Zero(1, o);
    l.running_mean = Eigen::MatrixXd::Zero(1, o);
    l.running_var = Eigen::MatrixXd::Ones(1, o);
  }
  return l;
}

struct LayerShape
{
  std::size_t in;
  std::size_t out;
  bool normalized;
};

std::vector<LayerShape> head_shapes(const NetworkConfig & cfg, std::size_t in, std::size_t out)
{
  std::vector<LayerShape> shapes;
  for (std::size_t w : cfg.head_widths()) {
    shapes.push_back({in, w, true});
    in = w;
  }
  shapes.push_back({in, out, false});
  return shapes;
}

struct Layout
{
  std::vector<LayerShape> shared, angle, size, center;
};

Layout layout(const NetworkConfig & cfg)
{
  Layout lay;
  std::size_t in = 2;
  for (std::size_t w : cfg.shared_widths()) {
    lay.shared.push_back({in, w, true});
    in = w;
  }
  const std::size_t f = cfg.feature_size();
  const std::size_t a = angle_encoding_size(cfg.angle_mode);
  lay.angle = head_shapes(cfg, f, a);
  lay.size = head_shapes(cfg, f, kOutputSize);
  lay.center = head_shapes(cfg, cfg.concat ? f + a + kOutputSize : f, kOutputSize);
  return lay;
}

}  // namespace

void NetworkConfig::validate() const
{
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw InvalidArgument("network: scale must lie in (0, 1]");
  }
  if (!(huber_delta > 0.0)) {
    throw InvalidArgument("network: huber_delta must be > 0");
  }
  if (!(weights.angle >= 0.0 && weights.size >= 0.0 && weights.center >= 0.0)) {
    throw InvalidArgument("network: loss weights must be >= 0");
  }
}

std::vector<std::size_t> NetworkConfig::shared_widths() const { return shrink(kSharedBase, scale); }

std::vector<std::size_t> NetworkConfig::head_widths() const { return shrink(kHeadBase, scale); }

std::size_t NetworkConfig::feature_size() const
{
  const auto w = shared_widths();
  return w.empty() ? 2 : w.back();
}

NetworkParams init_params(const NetworkConfig & cfg, std::uint64_t seed)
{
  cfg.validate();
  std::mt19937_64 rng(seed);
  const Layout lay = layout(cfg);
  NetworkParams p;
  auto build = [&](const std::vector<LayerShape> & shapes, std::vector<Layer> & layers) {
    for (const auto & s : shapes) {
      layers.push_back(make_layer(s.in, s.out, s.normalized, rng));
    }
  };
  build(lay.shared, p.shared);
  build(lay.angle, p.angle_head);
  build(lay.size, p.size_head);
  build(lay.center, p.center_head);
  return p;
}

NetworkParams zeros_like(const NetworkParams & like)
{
  NetworkParams z = like;
  for_each_tensor(z, [](const std::string &, Eigen::MatrixXd & m) { m.setZero(); });
  z.step = 0;
  z.samples_seen = 0;
  return z;
}

void check_shapes(const NetworkParams & params, const NetworkConfig & cfg)
{
  const Layout lay = layout(cfg);
  auto check = [](std::string_view name, const std::vector<LayerShape> & shapes,
                  const std::vector<Layer> & layers) {
    if (shapes.size() != layers.size()) {
      throw CheckpointError(
        std::string(name) + ": expected " + std::to_string(shapes.size()) + " layers, found " +
        std::to_string(layers.size()));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      const auto & s = shapes[i];
      const auto & l = layers[i];
      const auto in = static_cast<Eigen::Index>(s.in);
      const auto out = static_cast<Eigen::Index>(s.out);
      bool ok = l.weight.rows() == in && l.weight.cols() == out && l.bias.rows() == 1 &&
                l.bias.cols() == out && l.normalized() == s.normalized;
      if (ok && s.normalized) {
        for (const auto * m : {&l.gamma, &l.beta, &l.running_mean, &l.running_var}) {
          ok = ok && m->rows() == 1 && m->cols() == out;
        }
      }
      if (!ok) {
        throw CheckpointError(
          std::string(name) + "." + std::to_string(i) + ": tensor shapes do not match the configuration");
      }
    }
  };
  check("shared", lay.shared, params.shared);
  check("angle", lay.angle, params.angle_head);
  check("size", lay.size, params.size_head);
  check("center", lay.center, params.center_head);
}

std::size_t parameter_count(const NetworkParams & params)
{
  std::size_t n = 0;
  for_each_trainable(params, [&](const std::string &, const Eigen::MatrixXd & m) {
    n += static_cast<std::size_t>(m.size());
  });
  return n;
}

CloudBatch make_batch(std::span<const std::span<const Point2>> clouds)
{
  CloudBatch batch;
  batch.batch_size = clouds.size();
  batch.cloud_size = clouds.empty() ? 0 : clouds[0].size();
  batch.points.resize(static_cast<Eigen::Index>(batch.batch_size * batch.cloud_size), 2);
  Eigen::Index row = 0;
  for (const auto & cloud : clouds) {
    if (cloud.size() != batch.cloud_size) {
      throw InvalidArgument("make_batch: clouds differ in size");
    }
    for (const auto & p : cloud) {
      batch.points(row, 0) = p.x;
      batch.points(row, 1) = p.y;
      ++row;
    }
  }
  return batch;
}

CloudBatch make_batch(std::span<const ResampledSample> samples)
{
  std::vector<std::span<const Point2>> clouds;
  clouds.reserve(samples.size());
  for (const auto & s : samples) {
    clouds.emplace_back(s.sample.points);
  }
  return make_batch(clouds);
}

Eigen::MatrixXd cloud_references(const CloudBatch & batch, CenterMode mode)
{
  const auto b = static_cast<Eigen::Index>(batch.batch_size);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(b, 2);
  if (mode == CenterMode::none) {
    return ref;
  }
  std::vector<Point2> pts(batch.cloud_size);
  for (Eigen::Index k = 0; k < b; ++k) {
    for (std::size_t i = 0; i < batch.cloud_size; ++i) {
      const auto r = k * static_cast<Eigen::Index>(batch.cloud_size) + static_cast<Eigen::Index>(i);
      pts[i] = {batch.points(r, 0), batch.points(r, 1)};
    }
    const Point2 c = mode == CenterMode::mean ? cloud_mean(pts) : cloud_median(pts);
    ref(k, 0) = c.x;
    ref(k, 1) = c.y;
  }
  return ref;
}

namespace detail
{

PreparedInput prepare_input(const CloudBatch & batch, const NetworkConfig & cfg)
{
  if (batch.batch_size == 0) {
    throw InvalidArgument("forward: empty batch");
  }
  if (batch.cloud_size != kCloudSize) {
    throw InvalidArgument(
      "forward: clouds must hold " + std::to_string(kCloudSize) + " points, got " +
      std::to_string(batch.cloud_size));
  }
  if (batch.points.rows() != static_cast<Eigen::Index>(batch.batch_size * batch.cloud_size) ||
      batch.points.cols() != 2) {
    throw InvalidArgument("forward: point matrix shape does not match batch dimensions");
  }
  if (!batch.points.allFinite()) {
    throw InvalidArgument("forward: non-finite input coordinate");
  }

  PreparedInput in;
  in.reference = cloud_references(batch, cfg.center_mode);
  in.centered.resize(batch.points.rows(), 2);
  const std::size_t n = batch.cloud_size;
  std::vector<Point2> pts(n);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    const auto base = static_cast<Eigen::Index>(b * n);
    for (std::size_t i = 0; i < n; ++i) {
      pts[i] = {batch.points(base + static_cast<Eigen::Index>(i), 0),
                batch.points(base + static_cast<Eigen::Index>(i), 1)};
    }
    std::sort(pts.begin(), pts.end(), [](const Point2 & a, const Point2 & c) {
      return a.x < c.x || (a.x == c.x && a.y < c.y);
    });
    const auto bb = static_cast<Eigen::Index>(b);
    for (std::size_t i = 0; i < n; ++i) {
      in.centered(base + static_cast<Eigen::Index>(i), 0) = pts[i].x - in.reference(bb, 0);
      in.centered(base + static_cast<Eigen::Index>(i), 1) = pts[i].y - in.reference(bb, 1);
    }
  }
  return in;
}

}  // namespace detail

struct ForwardCache::Impl
{
  detail::Cache<double> cache;
};

ForwardCache::ForwardCache() : impl_(std::make_unique<Impl>()) {}
ForwardCache::~ForwardCache() = default;
ForwardCache::ForwardCache(ForwardCache &&) noexcept = default;
ForwardCache & ForwardCache::operator=(ForwardCache &&) noexcept = default;

ForwardResult forward(
  const NetworkParams & params, const NetworkConfig & cfg, const CloudBatch & batch, RunMode mode,
  ForwardCache * cache)
{
  check_shapes(params, cfg);
  auto in = detail::prepare_input(batch, cfg);
  auto heads = detail::forward_impl<double>(
    params, cfg, std::move(in.centered), batch.batch_size, batch.cloud_size, mode,
    cache ? &cache->impl().cache : nullptr);
  return {{std::move(heads.angle), std::move(heads.size), std::move(heads.center)}, std::move(in.reference)};
}

NetworkParams backward(
  const NetworkParams & params, const NetworkConfig & cfg, const ForwardCache & cache,
  const HeadOutputs & output_grad)
{
  const auto & c = cache.impl().cache;
  const auto b = static_cast<Eigen::Index>(c.batch_size);
  if (output_grad.angle.rows() != b || output_grad.size.rows() != b || output_grad.center.rows() != b) {
    throw InvalidArgument("backward: output gradient batch size does not match the cache");
  }
  return detail::backward_impl<double>(
    params, cfg, c, {output_grad.angle, output_grad.size, output_grad.center});
}

void update_running_stats(NetworkParams & params, const ForwardCache & cache, double momentum)
{
  detail::update_running_stats_impl(params, cache.impl().cache, momentum);
}

std::vector<double> encode_angle(double theta, AngleMode mode)
{
  switch (mode) {
    case AngleMode::direct_theta:
      return {theta};
    case AngleMode::sincos:
      return {std::cos(theta), std::sin(theta)};
    case AngleMode::sincos2:
      return {std::cos(2.0 * theta), std::sin(2.0 * theta)};
  }
  return {};
}

double recover_theta(std::span<const double> enc, AngleMode mode)
{
  if (enc.size() != angle_encoding_size(mode)) {
    throw InvalidArgument("recover_theta: encoding has the wrong size");
  }
  for (double v : enc) {
    if (!std::isfinite(v)) {
      throw NumericError("recover_theta: non-finite encoding");
    }
  }
  if (mode == AngleMode::direct_theta) {
    return normalize_angle(enc[0]);
  }
  if (enc[0] == 0.0 && enc[1] == 0.0) {
    throw NumericError("recover_theta: degenerate (0, 0) angle encoding");
  }
  const double a = std::atan2(enc[1], enc[0]);
  if (mode == AngleMode::sincos) {
    return normalize_angle(a);
  }
  // atan2 lies in [-pi, pi]; -pi only arises for a signed-zero sine
  return a / 2.0 <= -kHalfPi ? kHalfPi : a / 2.0;
}

HeadOutputs make_targets(
  std::span<const OrientedBox> gt, const Eigen::MatrixXd & reference, const NetworkConfig & cfg)
{
  const auto b = static_cast<Eigen::Index>(gt.size());
  if (reference.rows() != b || reference.cols() != 2) {
    throw InvalidArgument("make_targets: reference shape does not match the batch");
  }
  const auto a = static_cast<Eigen::Index>(angle_encoding_size(cfg.angle_mode));
  HeadOutputs t{Eigen::MatrixXd(b, a), Eigen::MatrixXd(b, 2), Eigen::MatrixXd(b, 2)};
  for (Eigen::Index k = 0; k < b; ++k) {
    const auto & box = gt[static_cast<std::size_t>(k)];
    const auto enc = encode_angle(box.theta, cfg.angle_mode);
    for (Eigen::Index j = 0; j < a; ++j) {
      t.angle(k, j) = enc[static_cast<std::size_t>(j)];
    }
    t.size(k, 0) = box.w;
    t.size(k, 1) = box.l;
    t.center(k, 0) = box.cx - reference(k, 0);
    t.center(k, 1) = box.cy - reference(k, 1);
  }
  return t;
}

namespace
{

double head_loss(
  const Eigen::MatrixXd & pred, const Eigen::MatrixXd & target, const NetworkConfig & cfg,
  double weight, Eigen::MatrixXd & grad)
{
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw InvalidArgument("loss: prediction and target shapes differ");
  }
  const double count = static_cast<double>(pred.size());
  const Eigen::ArrayXXd r = (pred - target).array();
  if (cfg.loss == LossKind::mse) {
    grad = (weight * 2.0 / count) * r.matrix();
    return r.square().sum() / count;
  }
  const double delta = cfg.huber_delta;
  const Eigen::ArrayXXd abs_r = r.abs();
  const Eigen::ArrayXXd per = (abs_r <= delta).select(0.5 * r.square(), delta * (abs_r - 0.5 * delta));
  grad = ((weight / count) * (abs_r <= delta).select(r, delta * r.sign())).matrix();
  return per.sum() / count;
}

}  // namespace

LossResult compute_loss(const HeadOutputs & pred, const HeadOutputs & target, const NetworkConfig & cfg)
{
  LossResult res;
  res.angle = head_loss(pred.angle, target.angle, cfg, cfg.weights.angle, res.grad.angle);
  res.size = head_loss(pred.size, target.size, cfg, cfg.weights.size, res.grad.size);
  res.center = head_loss(pred.center, target.center, cfg, cfg.weights.center, res.grad.center);
  res.total = cfg.weights.angle * res.angle + cfg.weights.size * res.size + cfg.weights.center * res.center;
  return res;
}

OrientedBox decode_box(
  const HeadOutputs & outputs, const Eigen::MatrixXd & reference, std::size_t b, const NetworkConfig & cfg)
{
  const auto k = static_cast<Eigen::Index>(b);
  std::vector<double> enc(static_cast<std::size_t>(outputs.angle.cols()));
  for (Eigen::Index j = 0; j < outputs.angle.cols(); ++j) {
    enc[static_cast<std::size_t>(j)] = outputs.angle(k, j);
  }
  OrientedBox box;
  box.theta = recover_theta(enc, cfg.angle_mode);
  box.w = std::max(outputs.size(k, 0), kMinPredictedExtent);
  box.l = std::max(outputs.size(k, 1), kMinPredictedExtent);
  box.cx = outputs.center(k, 0) + reference(k, 0);
  box.cy = outputs.center(k, 1) + reference(k, 1);
  return box;
}

OrientedBox predict(const NetworkParams & params, const NetworkConfig & cfg, std::span<const Point2> cloud)
{
  const std::span<const Point2> one[] = {cloud};
  return predict_batch(params, cfg, one).front();
}

std::vector<OrientedBox> predict_batch(
  const NetworkParams & params, const NetworkConfig & cfg, std::span<const std::span<const Point2>> clouds)
{
  const auto batch = make_batch(clouds);
  const auto res = forward(params, cfg, batch, RunMode::infer);
  std::vector<OrientedBox> boxes;
  boxes.reserve(clouds.size());
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    boxes.push_back(decode_box(res.outputs, res.reference, b, cfg));
  }
  return boxes;
}

}  // namespace bevbox
