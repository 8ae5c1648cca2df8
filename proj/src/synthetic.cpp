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

#include <cmath>
#include <string>

#include "bevbox/dataset.hpp"
#include "bevbox/error.hpp"

namespace bevbox
{

std::string_view to_string(VisibilityMode m)
{
  switch (m) {
    case VisibilityMode::full:
      return "full";
    case VisibilityMode::lshape:
      return "lshape";
    case VisibilityMode::single_edge:
      return "single-edge";
    case VisibilityMode::mixed:
      return "mixed";
  }
  return "full";
}

VisibilityMode parse_visibility_mode(std::string_view name)
{
  if (name == "full") return VisibilityMode::full;
  if (name == "lshape") return VisibilityMode::lshape;
  if (name == "single-edge") return VisibilityMode::single_edge;
  if (name == "mixed") return VisibilityMode::mixed;
  throw InvalidArgument("unknown visibility mode '" + std::string(name) + "'");
}

void SynthConfig::validate() const
{
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(points_per_edge) || points_per_edge <= 0.0) {
    throw InvalidArgument("synth: points_per_edge must be > 0");
  }
  if (!finite(interior_points) || interior_points < 0.0) {
    throw InvalidArgument("synth: interior_points must be >= 0");
  }
  if (!finite(noise_m) || noise_m < 0.0) {
    throw InvalidArgument("synth: noise_m must be >= 0");
  }
  if (!finite(min_range) || !finite(max_range) || min_range < 0.0 || max_range < min_range) {
    throw InvalidArgument("synth: need 0 <= min_range <= max_range");
  }
  if (!(min_visible_fraction > 0.0 && min_visible_fraction <= max_visible_fraction &&
        max_visible_fraction <= 1.0)) {
    throw InvalidArgument("synth: need 0 < min_visible_fraction <= max_visible_fraction <= 1");
  }
  for (const SizeRange * r : {&car, &pedestrian, &cyclist}) {
    if (!(r->min_l > 0.0 && r->min_l <= r->max_l && r->min_w > 0.0 && r->min_w <= r->max_w)) {
      throw InvalidArgument("synth: size priors must be positive ranges");
    }
  }
}

const SizeRange & SynthConfig::prior(ObjectClass c) const
{
  switch (c) {
    case ObjectClass::pedestrian:
      return pedestrian;
    case ObjectClass::cyclist:
      return cyclist;
    case ObjectClass::car:
      break;
  }
  return car;
}

namespace
{

struct Edge
{
  Point2 a;
  Point2 b;
  Point2 normal;  // outward, unit
};

std::array<Edge, 4> box_edges(const OrientedBox & box)
{
  const auto c = box_corners(box);
  std::array<Edge, 4> edges;
  for (std::size_t i = 0; i < 4; ++i) {
    const Point2 & a = c[i];
    const Point2 & b = c[(i + 1) % 4];
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len = std::hypot(dx, dy);
    edges[i] = {a, b, {dy / len, -dx / len}};
  }
  return edges;
}

// Cosine between the outward normal and the direction to the sensor; > 0 means visible.
double facing(const Edge & e, const Point2 & sensor)
{
  const double mx = 0.5 * (e.a.x + e.b.x);
  const double my = 0.5 * (e.a.y + e.b.y);
  const double dx = sensor.x - mx;
  const double dy = sensor.y - my;
  const double d = std::hypot(dx, dy);
  if (d == 0.0) {
    return 0.0;
  }
  return (e.normal.x * dx + e.normal.y * dy) / d;
}

void sample_edge(
  const Edge & e, double fraction, const Point2 & sensor, double mean_points,
  std::mt19937_64 & rng, std::vector<Point2> & out)
{
  // anchor the visible prefix at the endpoint nearer to the sensor
  Point2 from = e.a;
  Point2 to = e.b;
  if (std::hypot(e.b.x - sensor.x, e.b.y - sensor.y) < std::hypot(e.a.x - sensor.x, e.a.y - sensor.y)) {
    std::swap(from, to);
  }
  std::poisson_distribution<int> count(mean_points);
  std::uniform_real_distribution<double> u(0.0, fraction);
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const double t = u(rng);
    out.push_back({from.x + t * (to.x - from.x), from.y + t * (to.y - from.y)});
  }
}

}  // namespace

std::vector<Point2> simulate_scan(
  const OrientedBox & box, const Point2 & sensor, VisibilityMode mode, const SynthConfig & cfg,
  std::mt19937_64 & rng)
{
  cfg.validate();
  if (mode == VisibilityMode::mixed) {
    throw InvalidArgument("simulate_scan: mode must be full, lshape or single-edge");
  }
  const auto edges = box_edges(box);
  std::vector<Point2> pts;
  std::uniform_real_distribution<double> frac(cfg.min_visible_fraction, cfg.max_visible_fraction);

  switch (mode) {
    case VisibilityMode::full: {
      for (const auto & e : edges) {
        sample_edge(e, 1.0, sensor, cfg.points_per_edge, rng, pts);
      }
      std::poisson_distribution<int> count(cfg.interior_points > 0.0 ? cfg.interior_points : 1.0);
      const int n = cfg.interior_points > 0.0 ? count(rng) : 0;
      std::uniform_real_distribution<double> u(-0.5, 0.5);
      const double c = std::cos(box.theta);
      const double s = std::sin(box.theta);
      for (int i = 0; i < n; ++i) {
        const double a = u(rng) * box.l;
        const double b = u(rng) * box.w;
        pts.push_back({box.cx + a * c - b * s, box.cy + a * s + b * c});
      }
      break;
    }
    case VisibilityMode::lshape: {
      for (const auto & e : edges) {
        if (facing(e, sensor) > 0.0) {
          sample_edge(e, frac(rng), sensor, cfg.points_per_edge, rng, pts);
        }
      }
      break;
    }
    case VisibilityMode::single_edge: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < edges.size(); ++i) {
        if (facing(edges[i], sensor) > facing(edges[best], sensor)) {
          best = i;
        }
      }
      sample_edge(edges[best], frac(rng), sensor, cfg.points_per_edge, rng, pts);
      break;
    }
    case VisibilityMode::mixed:
      break;
  }

  if (cfg.noise_m > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_m);
    for (auto & p : pts) {
      p.x += noise(rng);
      p.y += noise(rng);
    }
  }
  return pts;
}

std::vector<Sample> generate_synthetic(const SynthConfig & cfg, std::size_t count, std::uint64_t seed)
{
  cfg.validate();
  constexpr std::size_t kMaxAttempts = 10000;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, 2);
  const Point2 sensor{0.0, 0.0};

  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    bool done = false;
    for (std::size_t attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
      const ObjectClass cls =
        cfg.object_class ? *cfg.object_class : static_cast<ObjectClass>(pick_class(rng));
      const SizeRange & prior = cfg.prior(cls);
      double l = prior.min_l + unit(rng) * (prior.max_l - prior.min_l);
      double w = prior.min_w + unit(rng) * (prior.max_w - prior.min_w);
      if (w > l) {
        std::swap(w, l);
      }
      const double theta = normalize_angle(-kHalfPi + unit(rng) * kPi);
      const double range = cfg.min_range + unit(rng) * (cfg.max_range - cfg.min_range);
      const double bearing = -kPi + unit(rng) * 2.0 * kPi;
      const OrientedBox box{range * std::cos(bearing), range * std::sin(bearing), w, l, theta};

      VisibilityMode mode = cfg.mode;
      if (mode == VisibilityMode::mixed) {
        mode = unit(rng) < 0.5 ? VisibilityMode::full : VisibilityMode::lshape;
      }
      auto pts = simulate_scan(box, sensor, mode, cfg, rng);
      if (pts.size() > kMinObjectPoints) {
        out.push_back(
          Sample{"synth-" + std::to_string(seed) + "-" + std::to_string(i), cls, std::move(pts), box});
        done = true;
      }
    }
    if (!done) {
      throw InvalidArgument("synth: configuration cannot produce samples with enough points");
    }
  }
  return out;
}

}  // namespace bevbox
