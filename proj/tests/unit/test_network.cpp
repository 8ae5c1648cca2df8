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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../gradcheck.hpp"
#include "bevbox/error.hpp"
#include "bevbox/network.hpp"

using namespace bevbox;

namespace
{

NetworkConfig small(AngleMode a = AngleMode::sincos2, CenterMode c = CenterMode::mean, bool concat = true)
{
  NetworkConfig cfg;
  cfg.angle_mode = a;
  cfg.center_mode = c;
  cfg.concat = concat;
  cfg.scale = 1.0 / 16;
  return cfg;
}

// Points on a 1/64 grid: means, differences and translations by integers stay exact.
std::vector<Point2> dyadic_cloud(std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(-256, 256);
  std::vector<Point2> pts;
  for (std::size_t i = 0; i < kCloudSize; ++i) pts.push_back({u(rng) / 64.0, u(rng) / 128.0});
  return pts;
}

}  // namespace

TEST(NetworkConfig, ShrinkRule)
{
  NetworkConfig cfg;
  EXPECT_EQ(cfg.shared_widths(), (std::vector<std::size_t>{64, 128, 1024}));
  EXPECT_EQ(cfg.head_widths(), (std::vector<std::size_t>{512, 128}));
  cfg.scale = 1.0 / 16;
  EXPECT_EQ(cfg.shared_widths(), (std::vector<std::size_t>{4, 8, 64}));
  EXPECT_EQ(cfg.head_widths(), (std::vector<std::size_t>{32, 8}));
  cfg.scale = 1.0 / 64;
  EXPECT_EQ(cfg.shared_widths(), (std::vector<std::size_t>{2, 16}));
  EXPECT_EQ(cfg.head_widths(), (std::vector<std::size_t>{8, 2}));
  cfg.scale = 1.0 / 128;
  EXPECT_EQ(cfg.shared_widths(), (std::vector<std::size_t>{8}));
  EXPECT_EQ(cfg.head_widths(), (std::vector<std::size_t>{4}));
  cfg.scale = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.scale = 1.5;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Network, ParameterShapes)
{
  NetworkConfig cfg;
  const auto p = init_params(cfg, 1);
  ASSERT_EQ(p.shared.size(), 3u);
  EXPECT_EQ(p.shared[2].weight.rows(), 128);
  EXPECT_EQ(p.shared[2].weight.cols(), 1024);
  ASSERT_EQ(p.center_head.size(), 3u);
  EXPECT_EQ(p.center_head[0].weight.rows(), 1024 + 4);
  EXPECT_EQ(p.angle_head[2].weight.cols(), 2);
  EXPECT_FALSE(p.angle_head[2].normalized());
  EXPECT_TRUE(p.angle_head[1].normalized());
  cfg.concat = false;
  EXPECT_EQ(init_params(cfg, 1).center_head[0].weight.rows(), 1024);
  cfg.angle_mode = AngleMode::direct_theta;
  EXPECT_EQ(init_params(cfg, 1).angle_head[2].weight.cols(), 1);
  EXPECT_THROW(check_shapes(p, cfg), CheckpointError);
}

TEST(Network, FullScaleBatchShapesAndRanges)
{
  NetworkConfig cfg;
  const auto p = init_params(cfg, 2);
  std::vector<std::vector<Point2>> clouds;
  for (int i = 0; i < 32; ++i) clouds.push_back(dyadic_cloud(i));
  std::vector<std::span<const Point2>> spans(clouds.begin(), clouds.end());
  for (auto mode : {RunMode::train, RunMode::infer}) {
    const auto out = forward(p, cfg, make_batch(spans), mode).outputs;
    EXPECT_EQ(out.angle.rows(), 32);
    EXPECT_EQ(out.angle.cols(), 2);
    EXPECT_EQ(out.size.rows(), 32);
    EXPECT_EQ(out.size.cols(), 2);
    EXPECT_EQ(out.center.rows(), 32);
    EXPECT_EQ(out.center.cols(), 2);
    EXPECT_TRUE((out.angle.array().abs() < 1.0).all());
    EXPECT_TRUE((out.size.array() >= 0.0).all());
  }
}

TEST(Network, InputValidation)
{
  const auto cfg = small();
  const auto p = init_params(cfg, 1);
  std::vector<Point2> pts(100, Point2{1, 1});
  std::vector<std::span<const Point2>> one{pts};
  EXPECT_THROW(forward(p, cfg, make_batch(one), RunMode::infer), InvalidArgument);
  auto cloud = dyadic_cloud(1);
  cloud[7].x = NAN;
  std::vector<std::span<const Point2>> bad{cloud};
  EXPECT_THROW(forward(p, cfg, make_batch(bad), RunMode::infer), InvalidArgument);
}

TEST(Network, PermutationInvarianceIsExact)
{
  for (auto mode : {RunMode::train, RunMode::infer}) {
    const auto cfg = small(AngleMode::sincos2, CenterMode::median);
    const auto p = init_params(cfg, 3);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0, 3);
    std::vector<Point2> a, c;
    for (std::size_t i = 0; i < kCloudSize; ++i) {
      a.push_back({g(rng), g(rng)});
      c.push_back({g(rng), g(rng)});
    }
    auto b = a;
    std::shuffle(b.begin(), b.end(), rng);
    std::vector<std::span<const Point2>> x{a, c}, y{b, c};
    const auto oa = forward(p, cfg, make_batch(x), mode).outputs;
    const auto ob = forward(p, cfg, make_batch(y), mode).outputs;
    EXPECT_EQ(oa.angle, ob.angle);
    EXPECT_EQ(oa.size, ob.size);
    EXPECT_EQ(oa.center, ob.center);
  }
}

TEST(Network, TranslationInvariance)
{
  for (auto cm : {CenterMode::mean, CenterMode::median}) {
    const auto cfg = small(AngleMode::sincos2, cm);
    const auto p = init_params(cfg, 5);
    const auto a = dyadic_cloud(9);
    auto b = a;
    for (auto & q : b) {
      q.x += 10;
      q.y -= 5;
    }
    std::vector<std::span<const Point2>> x{a}, y{b};
    const auto ra = forward(p, cfg, make_batch(x), RunMode::infer);
    const auto rb = forward(p, cfg, make_batch(y), RunMode::infer);
    EXPECT_EQ(ra.outputs.angle, rb.outputs.angle);
    EXPECT_EQ(ra.outputs.size, rb.outputs.size);
    EXPECT_EQ(ra.outputs.center, rb.outputs.center);
    EXPECT_EQ(rb.reference(0, 0) - ra.reference(0, 0), 10.0);
    EXPECT_EQ(rb.reference(0, 1) - ra.reference(0, 1), -5.0);
    const auto ba = predict(p, cfg, a), bb = predict(p, cfg, b);
    EXPECT_NEAR(bb.cx - ba.cx, 10.0, 1e-12);
    EXPECT_NEAR(bb.cy - ba.cy, -5.0, 1e-12);
    EXPECT_EQ(ba.theta, bb.theta);
    EXPECT_EQ(ba.w, bb.w);
    EXPECT_EQ(ba.l, bb.l);
  }
}

TEST(Network, PredictIsValidAndDeterministic)
{
  for (auto am : {AngleMode::direct_theta, AngleMode::sincos, AngleMode::sincos2}) {
    const auto cfg = small(am, CenterMode::none, false);
    const auto p = init_params(cfg, 6);
    for (int i = 0; i < 10; ++i) {
      const auto cloud = dyadic_cloud(100 + i);
      const auto box = predict(p, cfg, cloud);
      EXPECT_TRUE(is_valid(box));
      EXPECT_GE(box.w, 1e-3);
      EXPECT_EQ(box, predict(p, cfg, cloud));
    }
  }
}

TEST(Network, BatchedInferenceMatchesSingle)
{
  const auto cfg = small();
  auto p = init_params(cfg, 7);
  std::vector<std::vector<Point2>> clouds;
  for (int i = 0; i < 5; ++i) clouds.push_back(dyadic_cloud(20 + i));
  std::vector<std::span<const Point2>> spans(clouds.begin(), clouds.end());
  const auto boxes = predict_batch(p, cfg, spans);
  for (int i = 0; i < 5; ++i) {
    const auto one = predict(p, cfg, clouds[i]);
    EXPECT_NEAR(boxes[i].cx, one.cx, 1e-9);
    EXPECT_NEAR(boxes[i].theta, one.theta, 1e-9);
    EXPECT_NEAR(boxes[i].l, one.l, 1e-9);
  }
}

TEST(Backward, ZeroOutputGradientGivesZero)
{
  const auto cfg = small();
  const auto p = init_params(cfg, 8);
  const auto batch = gradcheck::make_clouds(3, 1);
  ForwardCache cache;
  const auto out = forward(p, cfg, batch, RunMode::train, &cache).outputs;
  HeadOutputs zero{Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 2)};
  const auto g = backward(p, cfg, cache, zero);
  for_each_tensor(g, [](const std::string & n, const Eigen::MatrixXd & m) {
    EXPECT_TRUE((m.array() == 0.0).all()) << n;
  });
}

TEST(Backward, ConcatOffIsolatesCenterHead)
{
  const auto cfg = small(AngleMode::sincos2, CenterMode::mean, false);
  const auto p = init_params(cfg, 9);
  const auto batch = gradcheck::make_clouds(3, 2);
  ForwardCache cache;
  forward(p, cfg, batch, RunMode::train, &cache);
  HeadOutputs d{Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Ones(3, 2)};
  const auto g = backward(p, cfg, cache, d);
  for (const auto * head : {&g.angle_head, &g.size_head}) {
    for (const auto & layer : *head) {
      EXPECT_TRUE((layer.weight.array() == 0.0).all());
      EXPECT_TRUE((layer.bias.array() == 0.0).all());
    }
  }
  EXPECT_GT(g.center_head.back().weight.norm(), 0.0);
  EXPECT_GT(g.shared.back().weight.norm(), 0.0);

  // with concat on, the same center gradient reaches the other heads
  const auto on = small();
  const auto q = init_params(on, 9);
  ForwardCache c2;
  forward(q, on, batch, RunMode::train, &c2);
  EXPECT_GT(backward(q, on, c2, d).angle_head.back().weight.norm(), 0.0);
}

TEST(Backward, RejectsInferCache)
{
  const auto cfg = small();
  const auto p = init_params(cfg, 1);
  ForwardCache cache;
  const auto batch = gradcheck::make_clouds(2, 3);
  const auto out = forward(p, cfg, batch, RunMode::infer, &cache).outputs;
  EXPECT_THROW(backward(p, cfg, cache, out), InvalidArgument);
}

TEST(Backward, FiniteDifferenceSmall)
{
  // A cheaper variant of the acceptance check, over every angle/center/concat mode.
  for (auto am : {AngleMode::direct_theta, AngleMode::sincos}) {
    for (bool concat : {true, false}) {
      NetworkConfig cfg = small(am, CenterMode::median, concat);
      cfg.scale = 1.0 / 64;
      const auto r = gradcheck::run(cfg, 3, 17);
      EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
    }
  }
}

TEST(Loss, Examples)
{
  NetworkConfig cfg;
  HeadOutputs t{Eigen::MatrixXd(1, 2), Eigen::MatrixXd(1, 2), Eigen::MatrixXd(1, 2)};
  t.angle << 0, 1;
  t.size << 1.5, 4;
  t.center << 0.2, -0.1;
  EXPECT_EQ(compute_loss(t, t, cfg).total, 0.0);
  auto p = t;
  p.angle << 1, 0;
  EXPECT_NEAR(compute_loss(p, t, cfg).total, 1.0, 1e-15);
  p = t;
  p.size.array() += 0.1;
  EXPECT_NEAR(compute_loss(p, t, cfg).total, 0.02, 1e-15);
}

TEST(Loss, GradientMatchesFiniteDifference)
{
  for (auto kind : {LossKind::mse, LossKind::huber}) {
    NetworkConfig cfg;
    cfg.loss = kind;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0, 2);
    HeadOutputs p, t;
    for (auto * m : {&p.angle, &p.size, &p.center, &t.angle, &t.size, &t.center}) {
      *m = Eigen::MatrixXd::NullaryExpr(4, 2, [&] { return g(rng); });
    }
    const auto res = compute_loss(p, t, cfg);
    for (auto [pm, gm] : {std::pair{&p.angle, &res.grad.angle}, {&p.size, &res.grad.size}, {&p.center, &res.grad.center}}) {
      for (Eigen::Index i = 0; i < pm->size(); ++i) {
        const double old = pm->data()[i];
        pm->data()[i] = old + 1e-6;
        const double up = compute_loss(p, t, cfg).total;
        pm->data()[i] = old - 1e-6;
        const double dn = compute_loss(p, t, cfg).total;
        pm->data()[i] = old;
        EXPECT_NEAR(gm->data()[i], (up - dn) / 2e-6, 1e-7);
      }
    }
  }
}

TEST(Loss, HuberIsLinearInTheTail)
{
  NetworkConfig cfg;
  cfg.loss = LossKind::huber;
  cfg.weights = {0, 0, 1};
  HeadOutputs p{Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd(1, 2)};
  HeadOutputs t = p;
  t.center << 0, 0;
  p.center << 3, 0.5;
  // (3 - 0.5) + 0.5 * 0.25, averaged over 2 components
  EXPECT_NEAR(compute_loss(p, t, cfg).total, (2.5 + 0.125) / 2, 1e-15);
}

TEST(Targets, RelativeCenterAndEncoding)
{
  NetworkConfig cfg;
  Eigen::MatrixXd ref(1, 2);
  ref << 1, 2;
  const std::vector<OrientedBox> gt{{4, 6, 1.5, 4, 0.25}};
  const auto t = make_targets(gt, ref, cfg);
  EXPECT_EQ(t.center(0, 0), 3);
  EXPECT_EQ(t.center(0, 1), 4);
  EXPECT_EQ(t.size(0, 0), 1.5);
  EXPECT_EQ(t.size(0, 1), 4);
  EXPECT_NEAR(t.angle(0, 0), std::cos(0.5), 1e-15);
  EXPECT_NEAR(t.angle(0, 1), std::sin(0.5), 1e-15);
}

TEST(Angle, RecoverExamples)
{
  EXPECT_NEAR(recover_theta(std::vector<double>{0, 1}, AngleMode::sincos2), kPi / 4, 1e-15);
  EXPECT_EQ(recover_theta(std::vector<double>{-1, 0}, AngleMode::sincos2), kHalfPi);
  EXPECT_EQ(recover_theta(std::vector<double>{-1, -0.0}, AngleMode::sincos2), kHalfPi);
  const double th = 0.7;
  const auto e = encode_angle(th, AngleMode::sincos2);
  EXPECT_NEAR(recover_theta(std::vector<double>{0.5 * e[0], 0.5 * e[1]}, AngleMode::sincos2), th, 1e-15);
  EXPECT_NEAR(recover_theta(std::vector<double>{2.0}, AngleMode::direct_theta), 2.0 - kPi, 1e-15);
  EXPECT_NEAR(recover_theta(std::vector<double>{-1, 0}, AngleMode::sincos), 0.0, 1e-15);
  EXPECT_THROW(recover_theta(std::vector<double>{0, 0}, AngleMode::sincos2), NumericError);
  EXPECT_THROW(recover_theta(std::vector<double>{0, 0}, AngleMode::sincos), NumericError);
}

TEST(Angle, RoundTripAndContinuity)
{
  for (int k = -899; k <= 900; ++k) {
    const double th = k * kPi / 1800;
    const auto e = encode_angle(th, AngleMode::sincos2);
    ASSERT_NEAR(e[0] * e[0] + e[1] * e[1], 1.0, 1e-12);
    ASSERT_NEAR(recover_theta(e, AngleMode::sincos2), th, 1e-12);
  }
  for (double eps : {1e-3, 1e-6, 1e-9}) {
    const auto a = encode_angle(kHalfPi - eps, AngleMode::sincos2);
    const auto b = encode_angle(-kHalfPi + eps, AngleMode::sincos2);
    EXPECT_LT(std::hypot(a[0] - b[0], a[1] - b[1]), 2.1 * 2 * eps);
  }
}

TEST(Schedule, LearningRateAndMomentum)
{
  TrainConfig t;
  EXPECT_EQ(learning_rate(0, t), 0.005);
  EXPECT_NEAR(learning_rate(250000, t), 0.0035, 1e-15);
  EXPECT_NEAR(learning_rate(500000, t), 0.00245, 1e-15);
  EXPECT_EQ(bn_momentum(0, t), 0.5);
  EXPECT_NEAR(bn_momentum(250000, t), 0.75, 1e-15);
  EXPECT_EQ(bn_momentum(1e9, t), 0.99);
  t.batch_size = 1;
  EXPECT_THROW(t.validate(), InvalidArgument);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
  const auto cfg = small();
  auto p = init_params(cfg, 1);
  const auto before = p;
  auto g = zeros_like(p);
  g.shared[0].weight.setConstant(3.0);
  g.shared[0].weight(0, 0) = -0.5;
  AdamState st(p);
  TrainConfig t;
  adam_step(p, st, g, t);
  EXPECT_EQ(p.step, 1);
  // bias-corrected first step is lr * sign(g)
  EXPECT_NEAR(p.shared[0].weight(0, 1) - before.shared[0].weight(0, 1), -0.005, 1e-9);
  EXPECT_NEAR(p.shared[0].weight(0, 0) - before.shared[0].weight(0, 0), 0.005, 1e-9);
  EXPECT_EQ(p.shared[1].weight, before.shared[1].weight);
  EXPECT_EQ(p.shared[0].running_var, before.shared[0].running_var);
}

TEST(Adam, NonFiniteGradientNamesParameter)
{
  const auto cfg = small();
  auto p = init_params(cfg, 1);
  const auto before = p;
  auto g = zeros_like(p);
  g.size_head[1].gamma(0, 2) = NAN;
  AdamState st(p);
  try {
    adam_step(p, st, g, TrainConfig{});
    FAIL();
  } catch (const NumericError & e) {
    EXPECT_NE(std::string(e.what()).find("size.1.gamma"), std::string::npos) << e.what();
  }
  EXPECT_EQ(p.size_head[1].gamma, before.size_head[1].gamma);
  EXPECT_EQ(p.step, 0);
}

TEST(RunningStats, MomentumBlend)
{
  const auto cfg = small();
  auto p = init_params(cfg, 1);
  const auto batch = gradcheck::make_clouds(4, 5);
  ForwardCache cache;
  forward(p, cfg, batch, RunMode::train, &cache);
  update_running_stats(p, cache, 0.5);
  // running_mean started at 0 and running_var at 1
  const auto m = p.shared[0].running_mean;
  update_running_stats(p, cache, 0.5);
  EXPECT_TRUE(p.shared[0].running_mean.isApprox(1.5 * m, 1e-12));
  EXPECT_TRUE((p.shared[2].running_var.array() > 0).all());
}
