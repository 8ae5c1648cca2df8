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

#include "bevbox/slf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bevbox/error.hpp"

namespace bevbox
{

std::string_view to_string(SlfCriterion c)
{
  switch (c) {
    case SlfCriterion::area:
      return "area";
    case SlfCriterion::closeness:
      return "closeness";
    case SlfCriterion::variance:
      return "variance";
  }
  return "area";
}

SlfCriterion parse_slf_criterion(std::string_view name)
{
  if (name == "area") return SlfCriterion::area;
  if (name == "closeness") return SlfCriterion::closeness;
  if (name == "variance") return SlfCriterion::variance;
  throw InvalidArgument("unknown SLF criterion '" + std::string(name) + "'");
}

void SlfConfig::validate() const
{
  if (!(step > 0.0 && step <= kPi / 4.0)) {
    throw InvalidArgument("slf: step must lie in (0, pi/4]");
  }
  if (!(d0 > 0.0)) {
    throw InvalidArgument("slf: d0 must be > 0");
  }
}

namespace
{

// Degenerate extents (collinear input) are widened to keep the box valid.
constexpr double kMinExtent = 1e-6;

struct Projection
{
  std::vector<double> p1;
  std::vector<double> p2;
  double min1, max1, min2, max2;
};

void project(std::span<const Point2> points, double theta, Projection & pr)
{
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const std::size_t n = points.size();
  pr.p1.resize(n);
  pr.p2.resize(n);
  pr.min1 = pr.min2 = std::numeric_limits<double>::infinity();
  pr.max1 = pr.max2 = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double a = points[i].x * c + points[i].y * s;
    const double b = -points[i].x * s + points[i].y * c;
    pr.p1[i] = a;
    pr.p2[i] = b;
    pr.min1 = std::min(pr.min1, a);
    pr.max1 = std::max(pr.max1, a);
    pr.min2 = std::min(pr.min2, b);
    pr.max2 = std::max(pr.max2, b);
  }
}

double variance(const std::vector<double> & v)
{
  if (v.size() < 2) {
    return 0.0;
  }
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size());
}

double score(const Projection & pr, const SlfConfig & cfg)
{
  switch (cfg.criterion) {
    case SlfCriterion::area:
      return -(pr.max1 - pr.min1) * (pr.max2 - pr.min2);
    case SlfCriterion::closeness: {
      double total = 0.0;
      for (std::size_t i = 0; i < pr.p1.size(); ++i) {
        const double d1 = std::min(pr.max1 - pr.p1[i], pr.p1[i] - pr.min1);
        const double d2 = std::min(pr.max2 - pr.p2[i], pr.p2[i] - pr.min2);
        total += 1.0 / std::max(std::min(d1, d2), cfg.d0);
      }
      return total;
    }
    case SlfCriterion::variance: {
      std::vector<double> g1, g2;
      for (std::size_t i = 0; i < pr.p1.size(); ++i) {
        const double d1 = std::min(pr.max1 - pr.p1[i], pr.p1[i] - pr.min1);
        const double d2 = std::min(pr.max2 - pr.p2[i], pr.p2[i] - pr.min2);
        if (d1 <= d2) {
          g1.push_back(d1);
        } else {
          g2.push_back(d2);
        }
      }
      return -(variance(g1) + variance(g2));
    }
  }
  return 0.0;
}

}  // namespace

double slf_score(std::span<const Point2> points, double theta, const SlfConfig & cfg)
{
  Projection pr;
  project(points, theta, pr);
  return score(pr, cfg);
}

OrientedBox slf_fit(std::span<const Point2> points, const SlfConfig & cfg)
{
  cfg.validate();
  if (points.size() < 3) {
    throw FitError("slf: need at least 3 points, got " + std::to_string(points.size()));
  }
  const bool coincident = std::all_of(points.begin(), points.end(), [&](const Point2 & p) {
    return p.x == points[0].x && p.y == points[0].y;
  });
  if (coincident) {
    throw FitError("slf: all points coincide");
  }
  for (const auto & p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw FitError("slf: non-finite point");
    }
  }

  Projection pr;
  double best_theta = 0.0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0;; ++k) {
    const double theta = static_cast<double>(k) * cfg.step;
    if (theta >= kHalfPi) {
      break;
    }
    project(points, theta, pr);
    const double sc = score(pr, cfg);
    if (sc > best_score) {
      best_score = sc;
      best_theta = theta;
    }
  }

  project(points, best_theta, pr);
  const double mid1 = 0.5 * (pr.min1 + pr.max1);
  const double mid2 = 0.5 * (pr.min2 + pr.max2);
  const double ext1 = std::max(pr.max1 - pr.min1, kMinExtent);
  const double ext2 = std::max(pr.max2 - pr.min2, kMinExtent);
  const double c = std::cos(best_theta);
  const double s = std::sin(best_theta);

  OrientedBox box;
  box.cx = mid1 * c - mid2 * s;
  box.cy = mid1 * s + mid2 * c;
  if (ext1 >= ext2) {
    box.l = ext1;
    box.w = ext2;
    box.theta = normalize_angle(best_theta);
  } else {
    box.l = ext2;
    box.w = ext1;
    box.theta = normalize_angle(best_theta + kHalfPi);
  }
  return box;
}

}  // namespace bevbox
