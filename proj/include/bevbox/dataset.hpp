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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bevbox/geometry.hpp"

namespace bevbox
{

enum class ObjectClass { car, pedestrian, cyclist };

std::string_view to_string(ObjectClass c);
/// Throws InvalidArgument for anything other than car, pedestrian or cyclist.
ObjectClass parse_object_class(std::string_view name);

/// A labeled object point cloud.
struct Sample
{
  std::string id;
  ObjectClass label = ObjectClass::car;
  std::vector<Point2> points;
  OrientedBox gt;
};

/// A sample whose cloud holds exactly the network input size. Labels are untouched.
struct ResampledSample
{
  Sample sample;
};

struct DatasetSplit
{
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::uint64_t seed = 0;
};

/// Objects need strictly more than this many points to be retained.
inline constexpr std::size_t kMinObjectPoints = 30;

/// Network input size.
inline constexpr std::size_t kCloudSize = 512;

/// Draws n points from s. Without replacement when the cloud is large enough; otherwise
/// all points are kept and the remainder is drawn with replacement.
ResampledSample resample(const Sample & s, std::size_t n, std::uint64_t seed);

/// Componentwise means/medians. Sums are taken over sorted coordinates so the result does
/// not depend on point order.
Point2 cloud_mean(std::span<const Point2> points);
Point2 cloud_median(std::span<const Point2> points);

/// Shuffles `samples` with `seed` and puts round(ratio * size) of them into train.
/// Throws InvalidArgument on duplicate ids or ratio outside [0, 1].
DatasetSplit split_dataset(std::vector<Sample> samples, double train_ratio, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic scans

enum class VisibilityMode { full, lshape, single_edge, mixed };

std::string_view to_string(VisibilityMode m);
VisibilityMode parse_visibility_mode(std::string_view name);

struct SizeRange
{
  double min_l;
  double max_l;
  double min_w;
  double max_w;
};

struct SynthConfig
{
  /// Class to draw; empty means uniform over all three.
  std::optional<ObjectClass> object_class = ObjectClass::car;
  VisibilityMode mode = VisibilityMode::full;
  double noise_m = 0.02;
  double points_per_edge = 40.0;
  /// Poisson mean of uniform interior points in full mode.
  double interior_points = 10.0;
  double min_range = 5.0;
  double max_range = 40.0;
  /// Occlusion: visible edges in lshape/single-edge mode show a random prefix between these
  /// fractions, measured from the corner nearest the sensor. The default shows whole edges.
  double min_visible_fraction = 1.0;
  double max_visible_fraction = 1.0;
  SizeRange car{3.2, 4.8, 1.5, 1.9};
  SizeRange pedestrian{0.4, 0.9, 0.4, 0.9};
  SizeRange cyclist{1.5, 1.9, 0.4, 0.7};

  /// Throws InvalidArgument on an impossible configuration.
  void validate() const;
  const SizeRange & prior(ObjectClass c) const;
};

/// Simulates the points a sensor at `sensor` sees on `box`. `mode` must not be mixed.
/// Points get isotropic Gaussian noise of cfg.noise_m.
std::vector<Point2> simulate_scan(
  const OrientedBox & box, const Point2 & sensor, VisibilityMode mode, const SynthConfig & cfg,
  std::mt19937_64 & rng);

/// `count` samples with random boxes around a sensor at the origin. Samples with too few
/// points are redrawn.
std::vector<Sample> generate_synthetic(
  const SynthConfig & cfg, std::size_t count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// KITTI

/// Extracts BEV object clouds from KITTI label/velodyne/calib directories.
/// Objects with min_points points or fewer are dropped.
std::vector<Sample> ingest_kitti(
  const std::filesystem::path & label_dir, const std::filesystem::path & velo_dir,
  const std::filesystem::path & calib_dir, std::size_t min_points = kMinObjectPoints);

// ---------------------------------------------------------------------------
// PBEV text format

std::vector<Sample> read_pbev(const std::filesystem::path & path);
std::vector<Sample> parse_pbev(std::string_view text);
void write_pbev(const std::filesystem::path & path, std::span<const Sample> samples);
std::string format_pbev(std::span<const Sample> samples);

/// FNV-1a over the PBEV serialization.
std::uint64_t dataset_hash(std::span<const Sample> samples);

}  // namespace bevbox
