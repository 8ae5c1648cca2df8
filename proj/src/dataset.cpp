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

#include "bevbox/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "bevbox/error.hpp"

namespace bevbox
{

std::string_view to_string(ObjectClass c)
{
  switch (c) {
    case ObjectClass::car:
      return "car";
    case ObjectClass::pedestrian:
      return "pedestrian";
    case ObjectClass::cyclist:
      return "cyclist";
  }
  return "car";
}

ObjectClass parse_object_class(std::string_view name)
{
  if (name == "car") return ObjectClass::car;
  if (name == "pedestrian") return ObjectClass::pedestrian;
  if (name == "cyclist") return ObjectClass::cyclist;
  throw InvalidArgument("unknown object class '" + std::string(name) + "'");
}

ResampledSample resample(const Sample & s, std::size_t n, std::uint64_t seed)
{
  if (s.points.empty()) {
    throw InvalidArgument("resample: sample '" + s.id + "' has no points");
  }
  if (n == 0) {
    throw InvalidArgument("resample: n must be >= 1");
  }
  std::mt19937_64 rng(seed);
  const std::size_t m = s.points.size();
  ResampledSample out{Sample{s.id, s.label, {}, s.gt}};
  auto & pts = out.sample.points;
  pts.reserve(n);
  if (m >= n) {
    // partial Fisher-Yates
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, m - 1);
      std::swap(idx[i], idx[pick(rng)]);
      pts.push_back(s.points[idx[i]]);
    }
  } else {
    pts = s.points;
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    while (pts.size() < n) {
      pts.push_back(s.points[pick(rng)]);
    }
  }
  return out;
}

namespace
{

double sorted_sum(std::vector<double> & v)
{
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) {
    sum += x;
  }
  return sum;
}

double median_of(std::vector<double> & v)
{
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) {
    return v[n / 2];
  }
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void split_xy(std::span<const Point2> points, std::vector<double> & xs, std::vector<double> & ys)
{
  xs.resize(points.size());
  ys.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    xs[i] = points[i].x;
    ys[i] = points[i].y;
  }
}

}  // namespace

Point2 cloud_mean(std::span<const Point2> points)
{
  if (points.empty()) {
    throw InvalidArgument("cloud_mean: empty point list");
  }
  std::vector<double> xs, ys;
  split_xy(points, xs, ys);
  const double n = static_cast<double>(points.size());
  return {sorted_sum(xs) / n, sorted_sum(ys) / n};
}

Point2 cloud_median(std::span<const Point2> points)
{
  if (points.empty()) {
    throw InvalidArgument("cloud_median: empty point list");
  }
  std::vector<double> xs, ys;
  split_xy(points, xs, ys);
  return {median_of(xs), median_of(ys)};
}

DatasetSplit split_dataset(std::vector<Sample> samples, double train_ratio, std::uint64_t seed)
{
  if (!(train_ratio >= 0.0 && train_ratio <= 1.0)) {
    throw InvalidArgument("split: ratio must lie in [0, 1]");
  }
  std::unordered_set<std::string> ids;
  for (const auto & s : samples) {
    if (!ids.insert(s.id).second) {
      throw InvalidArgument("split: duplicate sample id '" + s.id + "'");
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(samples.begin(), samples.end(), rng);
  const auto n_train =
    static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(samples.size())));
  DatasetSplit split;
  split.seed = seed;
  split.train.assign(
    std::make_move_iterator(samples.begin()), std::make_move_iterator(samples.begin() + n_train));
  split.test.assign(
    std::make_move_iterator(samples.begin() + n_train), std::make_move_iterator(samples.end()));
  return split;
}

std::uint64_t dataset_hash(std::span<const Sample> samples)
{
  const std::string text = format_pbev(samples);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace bevbox
