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
#include <fstream>
#include <random>

#include "bevbox/error.hpp"
#include "bevbox/harness.hpp"

using namespace bevbox;

namespace
{

std::vector<Sample> synth(std::size_t n, std::uint64_t seed, VisibilityMode mode = VisibilityMode::mixed)
{
  SynthConfig cfg;
  cfg.mode = mode;
  cfg.object_class.reset();
  return generate_synthetic(cfg, n, seed);
}

}  // namespace

TEST(Evaluate, OracleEstimatorIsPerfect)
{
  const auto data = synth(30, 1);
  FunctionEstimator gt("oracle", [](const Sample & s) { return s.gt; });
  const auto rep = evaluate(gt, data);
  EXPECT_EQ(rep.method, "oracle");
  EXPECT_EQ(rep.failed, 0u);
  EXPECT_EQ(rep.dataset_hash, dataset_hash(data));
  for (const auto & r : rep.rows) {
    EXPECT_EQ(r.err_c, 0.0);
    EXPECT_EQ(r.err_theta_deg, 0.0);
    EXPECT_NEAR(r.iou, 1.0, 1e-12);
  }
  EXPECT_EQ(rep.overall().group, "all");
  EXPECT_EQ(rep.overall().count, 30u);
  std::size_t per_class = 0;
  for (std::size_t i = 0; i + 1 < rep.summaries.size(); ++i) per_class += rep.summaries[i].count;
  EXPECT_EQ(per_class, 30u);
}

TEST(Evaluate, RowsMatchGeometryAndMeansMatchRows)
{
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 0.3);
  const auto data = synth(20, 2);
  std::vector<OrientedBox> preds;
  for (const auto & s : data) {
    OrientedBox b = s.gt;
    b.cx += g(rng);
    b.cy += g(rng);
    b.l = std::abs(b.l + g(rng)) + 0.1;
    b.theta = normalize_angle(b.theta + g(rng));
    preds.push_back(b);
  }
  std::size_t i = 0;
  FunctionEstimator est("noisy", [&](const Sample &) { return preds[i++]; });
  const auto rep = evaluate(est, data);
  double sc = 0, st = 0, si = 0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto & r = rep.rows[k];
    EXPECT_EQ(r.err_c, center_error(preds[k], data[k].gt));
    EXPECT_DOUBLE_EQ(r.err_theta_deg, orientation_error(preds[k], data[k].gt) * 180 / kPi);
    EXPECT_EQ(r.iou, iou(preds[k], data[k].gt));
    sc += r.err_c;
    st += std::abs(r.err_theta_deg);
    si += r.iou;
  }
  EXPECT_NEAR(rep.overall().mean_err_c, sc / 20, 1e-9);
  EXPECT_NEAR(rep.overall().mean_abs_err_theta_deg, st / 20, 1e-9);
  EXPECT_NEAR(rep.overall().mean_iou, si / 20, 1e-9);
}

TEST(Evaluate, FailuresAreFlaggedAndExcluded)
{
  auto data = synth(5, 3);
  data[2].points.resize(2);
  data[4].points.assign(40, Point2{1, 1});
  const auto rep = evaluate(SlfEstimator(SlfConfig{}), data);
  EXPECT_EQ(rep.failed, 2u);
  EXPECT_FALSE(rep.rows[2].ok());
  EXPECT_FALSE(rep.rows[4].ok());
  EXPECT_EQ(rep.overall().count, 3u);
  const auto csv = format_report_csv(rep);
  EXPECT_NE(csv.find(data[2].id + "," + std::string(to_string(data[2].label)) + ",,,,failed\n"), std::string::npos);
}

TEST(Evaluate, BoxNetIsDeterministic)
{
  NetworkConfig cfg;
  cfg.scale = 1.0 / 16;
  const auto p = init_params(cfg, 1);
  const auto data = synth(70, 4);
  const auto a = format_report_csv(evaluate(BoxNetEstimator(p, cfg, 5), data));
  const auto b = format_report_csv(evaluate(BoxNetEstimator(p, cfg, 5), data));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, format_report_csv(evaluate(BoxNetEstimator(p, cfg, 6), data)));
  EXPECT_EQ(a.substr(0, a.find('\n')), "id,class,err_c,err_theta_deg,iou,status");
}

TEST(Evaluate, SummaryByClassThrowsWhenAbsent)
{
  const auto data = synth(10, 5);
  FunctionEstimator gt("oracle", [](const Sample & s) { return s.gt; });
  auto rep = evaluate(gt, std::span(data).first(1));
  EXPECT_NO_THROW(rep.summary(data[0].label));
  const ObjectClass other = data[0].label == ObjectClass::car ? ObjectClass::cyclist : ObjectClass::car;
  EXPECT_THROW(rep.summary(other), InvalidArgument);
}

TEST(Histogram, Examples)
{
  const std::vector<double> zeros(7, 0.0);
  const auto h0 = histogram(zeros, 1.0);
  ASSERT_EQ(h0.size(), 1u);
  EXPECT_EQ(h0[0].low, 0.0);
  EXPECT_EQ(h0[0].count, 7u);
  const std::vector<double> two{0.5, 1.5};
  const auto h1 = histogram(two, 1.0);
  ASSERT_EQ(h1.size(), 2u);
  EXPECT_EQ(h1[0].count, 1u);
  EXPECT_EQ(h1[1].count, 1u);
  EXPECT_EQ(h1[1].low, 1.0);
  EXPECT_EQ(format_histogram_csv(h1), "bin_low,count\n0,1\n1,1\n");
  EXPECT_THROW(histogram(two, 0.0), InvalidArgument);
  EXPECT_TRUE(histogram(std::vector<double>{}, 1.0).empty());
}

TEST(Histogram, CountsSumToRows)
{
  const auto data = synth(50, 6);
  const auto rep = evaluate(SlfEstimator(SlfConfig{}), data);
  for (auto m : {Metric::err_c, Metric::err_theta_deg, Metric::abs_err_theta_deg, Metric::iou}) {
    std::size_t total = 0;
    const auto bins = histogram(rep, m, 0.25);
    for (const auto & b : bins) total += b.count;
    EXPECT_EQ(total, 50u) << to_string(m);
    EXPECT_EQ(parse_metric(to_string(m)), m);
  }
}

TEST(Grid, CartesianProduct)
{
  const auto cells = parse_grid("angle=direct_theta,sincos,sincos2;scale=1,1/16", NetworkConfig{});
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0].angle_mode, AngleMode::direct_theta);
  EXPECT_EQ(cells[1].scale, 1.0 / 16);
  EXPECT_EQ(cells[5].angle_mode, AngleMode::sincos2);
  EXPECT_EQ(cells[5].center_mode, CenterMode::mean);
  EXPECT_EQ(parse_grid("", NetworkConfig{}).size(), 1u);
  EXPECT_EQ(parse_grid("concat=on,off;center=none,mean,median", NetworkConfig{}).size(), 6u);
  EXPECT_THROW(parse_grid("depth=3", NetworkConfig{}), InvalidArgument);
  EXPECT_THROW(parse_grid("scale=2", NetworkConfig{}), InvalidArgument);
  EXPECT_THROW(parse_grid("concat=maybe", NetworkConfig{}), InvalidArgument);
  EXPECT_THROW(parse_grid("angle", NetworkConfig{}), InvalidArgument);
}

TEST(Ablate, RunsEveryCellAndReportsFailures)
{
  const auto train_s = synth(24, 7);
  const auto test_s = synth(8, 8);
  std::vector<NetworkConfig> cells = parse_grid("concat=on,off;scale=1/16", NetworkConfig{});
  NetworkConfig broken = cells[0];
  broken.scale = -1;
  cells.push_back(broken);
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  std::size_t seen = 0;
  const auto rows = ablate(cells, train_s, {}, test_s, t, 3, [&](const AblationRow &) { ++seen; });
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(seen, 3u);
  EXPECT_TRUE(rows[0].error.empty());
  EXPECT_TRUE(rows[1].error.empty());
  EXPECT_FALSE(rows[2].error.empty());
  EXPECT_GT(rows[0].eval_loss, 0.0);
  const auto csv = format_ablation_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("failed"), std::string::npos);
}

TEST(EvaluationLoss, UsesMseRegardlessOfTrainingLoss)
{
  NetworkConfig cfg;
  cfg.scale = 1.0 / 16;
  const auto p = init_params(cfg, 2);
  const auto d = resample_all(synth(10, 9), kCloudSize, 1);
  NetworkConfig huber = cfg;
  huber.loss = LossKind::huber;
  EXPECT_EQ(evaluation_loss(p, cfg, d), evaluation_loss(p, huber, d));
}

TEST(Timing, ReportsAndValidates)
{
  NetworkConfig cfg;
  cfg.scale = 1.0 / 16;
  const auto p = init_params(cfg, 2);
  const auto d = resample_all(synth(8, 10), kCloudSize, 1);
  const auto r = time_inference(p, cfg, d, 4, 3);
  EXPECT_EQ(r.repetitions, 3u);
  EXPECT_GT(r.mean_ms, 0.0);
  EXPECT_NEAR(r.per_cloud_ms, r.mean_ms / 4, 1e-12);
  EXPECT_THROW(time_inference(p, cfg, d, 4, 0), InvalidArgument);
  EXPECT_THROW(time_inference(p, cfg, d, 0, 3), InvalidArgument);
}

TEST(Manifest, AtomicKeyValue)
{
  const auto dir = std::filesystem::temp_directory_path() / "bevbox_manifest_test";
  std::filesystem::create_directories(dir);
  write_manifest(dir / "m", {{"a", "1"}, {"seed", "7"}});
  std::ifstream in(dir / "m");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(text, "a=1\nseed=7\n");
  EXPECT_THROW(write_manifest(dir / "m", {{"a=b", "1"}}), InvalidArgument);
  std::filesystem::remove_all(dir);
}
