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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "bevbox/cli.hpp"
#include "bevbox/dataset.hpp"

using namespace bevbox;
namespace fs = std::filesystem;

namespace
{

class Cli : public ::testing::Test
{
protected:
  fs::path dir;
  std::string out, err;

  void SetUp() override
  {
    dir = fs::temp_directory_path() /
          ("bevbox_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string p(const std::string & name) const { return (dir / name).string(); }

  int run(std::vector<std::string> args)
  {
    args.insert(args.begin(), "bevbox");
    std::vector<const char *> argv;
    for (const auto & a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
    out = o.str();
    err = e.str();
    return rc;
  }

  static std::string slurp(const std::string & path)
  {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  std::set<std::string> files() const
  {
    std::set<std::string> names;
    for (const auto & e : fs::recursive_directory_iterator(dir)) names.insert(fs::relative(e.path(), dir).string());
    return names;
  }
};

// Parse "id,class,err_c,err_theta_deg,iou,status" rows.
std::vector<std::vector<std::string>> csv_rows(const std::string & text)
{
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

}  // namespace

TEST_F(Cli, GenSynthIsReproducibleAndWritesManifest)
{
  ASSERT_EQ(run({"gen-synth", "--count", "10", "--seed", "1", "--out", p("a.pbev")}), 0) << err;
  ASSERT_EQ(run({"gen-synth", "--count", "10", "--seed", "1", "--out", p("b.pbev")}), 0) << err;
  EXPECT_EQ(slurp(p("a.pbev")), slurp(p("b.pbev")));
  EXPECT_EQ(read_pbev(p("a.pbev")).size(), 10u);
  const auto m = slurp(p("a.pbev.manifest"));
  EXPECT_NE(m.find("seed=1\n"), std::string::npos);
  EXPECT_NE(m.find("dataset_hash="), std::string::npos);
  EXPECT_NE(m.find("started="), std::string::npos);
  EXPECT_EQ(files(), (std::set<std::string>{"a.pbev", "a.pbev.manifest", "b.pbev", "b.pbev.manifest"}));
}

TEST_F(Cli, UsageErrorsExitTwoWithOneLine)
{
  EXPECT_EQ(run({"gen-synth", "--count", "1", "--seed", "1", "--out", p("a"), "--bogus"}), 2);
  EXPECT_EQ(std::count(err.begin(), err.end(), '\n'), 1);
  EXPECT_EQ(err.rfind("error usage:", 0), 0u);
  EXPECT_EQ(run({"eval", "--data", p("missing.pbev"), "--slf", "area", "--report", p("r.csv")}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"gen-synth", "--count", "1", "--seed", "1", "--out", p("a"), "--mode", "sideways"}), 2);
  ASSERT_EQ(run({"gen-synth", "--count", "3", "--seed", "1", "--out", p("d.pbev")}), 0);
  EXPECT_EQ(run({"train", "--train", p("d.pbev"), "--val", p("d.pbev"), "--out", p("m"), "--scale", "2"}), 2);
  EXPECT_EQ(run({"train", "--train", p("d.pbev"), "--val", p("d.pbev"), "--out", p("m"), "--batch", "1"}), 2);
  EXPECT_FALSE(fs::exists(p("r.csv")));
  EXPECT_FALSE(fs::exists(p("m")));
}

TEST_F(Cli, EvalNeedsExactlyOneEstimator)
{
  ASSERT_EQ(run({"gen-synth", "--count", "3", "--seed", "1", "--out", p("d.pbev")}), 0);
  EXPECT_EQ(run({"eval", "--data", p("d.pbev"), "--report", p("r.csv")}), 2);
  std::ofstream(p("x.ckpt")) << "boxnet-ckpt 1\n";
  EXPECT_EQ(run({"eval", "--data", p("d.pbev"), "--ckpt", p("x.ckpt"), "--slf", "area", "--report", p("r.csv")}), 2);
  EXPECT_NE(err.find("excludes"), std::string::npos);
  // a damaged checkpoint is a runtime error, not a usage error
  EXPECT_EQ(run({"eval", "--data", p("d.pbev"), "--ckpt", p("x.ckpt"), "--report", p("r.csv")}), 1);
  EXPECT_EQ(err.rfind("error checkpoint:", 0), 0u);
}

TEST_F(Cli, SlfOnFourCorners)
{
  const OrientedBox truth{3, -2, 2, 4, 30.0 * kPi / 180.0};
  Sample s;
  s.id = "corners";
  const auto c = box_corners(truth);
  s.points.assign(c.begin(), c.end());
  s.gt = truth;
  write_pbev(p("c.pbev"), std::vector<Sample>{s});
  ASSERT_EQ(run({"eval", "--data", p("c.pbev"), "--slf", "area", "--report", p("r.csv"), "--hist", p("h.csv")}), 0)
    << err;
  const auto rows = csv_rows(slurp(p("r.csv")));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0][5], "ok");
  EXPECT_LE(std::abs(std::stod(rows[0][3])), 0.5);
  EXPECT_GT(std::stod(rows[0][4]), 0.99);
  EXPECT_NE(out.find("slf-area,all,1,0,"), std::string::npos);
  EXPECT_TRUE(fs::exists(p("r.csv.manifest")));
  EXPECT_TRUE(fs::exists(p("h.csv.manifest")));
  EXPECT_EQ(run({"eval", "--data", p("c.pbev"), "--slf", "area", "--step-deg", "60", "--report", p("r.csv")}), 2);
}

TEST_F(Cli, OverfitOneSampleThenEval)
{
  ASSERT_EQ(run({"gen-synth", "--count", "1", "--seed", "4", "--out", p("one.pbev")}), 0);
  ASSERT_EQ(
    run({"train", "--train", p("one.pbev"), "--val", p("one.pbev"), "--out", p("m.ckpt"), "--scale", "0.25",
         "--epochs", "300", "--seed", "2", "--log", p("log.csv")}),
    0)
    << err;
  const auto manifest = slurp(p("m.ckpt.manifest"));
  EXPECT_NE(manifest.find("loss_weights=1,2,1\n"), std::string::npos);
  EXPECT_NE(manifest.find("angle_mode=sincos2\n"), std::string::npos);
  EXPECT_NE(manifest.find("seed=2\n"), std::string::npos);
  EXPECT_NE(manifest.find("single_sample_resamplings=2\n"), std::string::npos);
  EXPECT_EQ(slurp(p("log.csv")).rfind("epoch,train_loss,val_err_c,val_err_theta_deg,val_iou\n", 0), 0u);
  // same seed as training, so eval sees the very cloud the network was fitted to
  ASSERT_EQ(
    run({"eval", "--data", p("one.pbev"), "--ckpt", p("m.ckpt"), "--report", p("r.csv"), "--seed", "2"}), 0)
    << err;
  const auto rows = csv_rows(slurp(p("r.csv")));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(std::stod(rows[0][4]), 1.0, 0.02);
  ASSERT_EQ(run({"time", "--ckpt", p("m.ckpt"), "--data", p("one.pbev"), "--batch", "2", "--reps", "3"}), 0);
  EXPECT_NE(out.find("per_cloud_ms="), std::string::npos);
  EXPECT_EQ(run({"time", "--ckpt", p("m.ckpt"), "--data", p("one.pbev"), "--batch", "2", "--reps", "0"}), 2);
  EXPECT_EQ(
    files(), (std::set<std::string>{"one.pbev", "one.pbev.manifest", "m.ckpt", "m.ckpt.manifest", "log.csv",
                                    "r.csv", "r.csv.manifest"}));
}

TEST_F(Cli, SplitAndAblate)
{
  ASSERT_EQ(run({"gen-synth", "--count", "40", "--seed", "3", "--out", p("all.pbev"), "--mode", "mixed"}), 0);
  ASSERT_EQ(
    run({"split", "--in", p("all.pbev"), "--train", p("tr.pbev"), "--test", p("te.pbev"), "--ratio", "0.75",
         "--seed", "5"}),
    0)
    << err;
  EXPECT_EQ(read_pbev(p("tr.pbev")).size(), 30u);
  EXPECT_EQ(read_pbev(p("te.pbev")).size(), 10u);
  ASSERT_EQ(
    run({"ablate", "--train", p("tr.pbev"), "--test", p("te.pbev"), "--grid", "angle=sincos,sincos2;scale=1/16",
         "--out", p("abl"), "--seed", "1", "--epochs", "2", "--batch", "8"}),
    0)
    << err;
  const auto csv = slurp(p("abl/ablation.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_TRUE(fs::exists(p("abl/ablation.csv.manifest")));
  EXPECT_EQ(run({"ablate", "--train", p("tr.pbev"), "--test", p("te.pbev"), "--grid", "bogus=1", "--out", p("x"),
                 "--seed", "1"}),
            2);
}

TEST_F(Cli, IngestKittiMissingDirectoryIsUsageError)
{
  EXPECT_EQ(run({"ingest-kitti", "--labels", p("nope"), "--velodyne", p("nope"), "--calib", p("nope"), "--out",
                 p("k.pbev")}),
            2);
}

TEST_F(Cli, MalformedDataIsParseError)
{
  std::ofstream(p("bad.pbev")) << "pbev 1\nsample a car\nbox 0 0 1 2 2.0\n";
  EXPECT_EQ(run({"eval", "--data", p("bad.pbev"), "--slf", "area", "--report", p("r.csv")}), 1);
  EXPECT_EQ(err.rfind("error parse: line 3", 0), 0u) << err;
}
