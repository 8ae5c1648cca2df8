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

#include "bevbox/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "bevbox/error.hpp"

namespace bevbox
{

namespace
{

constexpr double kMinIntersectionArea = 1e-12;
constexpr double kMinEdge = 1e-9;

double cross(const Point2 & o, const Point2 & a, const Point2 & b)
{
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

double normalize_angle(double theta)
{
  if (!std::isfinite(theta)) {
    throw InvalidArgument("normalize_angle: non-finite angle");
  }
  double t = std::fmod(theta, kPi);
  if (t > kHalfPi) {
    t -= kPi;
  } else if (t <= -kHalfPi) {
    t += kPi;
  }
  return t;
}

bool is_valid(const OrientedBox & box)
{
  return std::isfinite(box.cx) && std::isfinite(box.cy) && std::isfinite(box.w) &&
         std::isfinite(box.l) && std::isfinite(box.theta) && box.w > 0.0 && box.l > 0.0 &&
         box.theta > -kHalfPi && box.theta <= kHalfPi;
}

std::array<Point2, 4> box_corners(const OrientedBox & box)
{
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  // half extents along the length axis u and the width axis v
  const double ux = 0.5 * box.l * c;
  const double uy = 0.5 * box.l * s;
  const double vx = -0.5 * box.w * s;
  const double vy = 0.5 * box.w * c;
  return {{
    {box.cx + ux - vx, box.cy + uy - vy},
    {box.cx + ux + vx, box.cy + uy + vy},
    {box.cx - ux + vx, box.cy - uy + vy},
    {box.cx - ux - vx, box.cy - uy - vy},
  }};
}

double box_area(const OrientedBox & box) { return box.w * box.l; }

bool box_contains(const OrientedBox & box, const Point2 & p, double tolerance)
{
  const double c = std::cos(box.theta);
  const double s = std::sin(box.theta);
  const double dx = p.x - box.cx;
  const double dy = p.y - box.cy;
  const double along = dx * c + dy * s;
  const double across = -dx * s + dy * c;
  return std::abs(along) <= 0.5 * box.l + tolerance && std::abs(across) <= 0.5 * box.w + tolerance;
}

double center_error(const OrientedBox & pred, const OrientedBox & gt)
{
  return std::hypot(pred.cx - gt.cx, pred.cy - gt.cy);
}

double orientation_error(const OrientedBox & pred, const OrientedBox & gt)
{
  double err = gt.theta - pred.theta;
  if (err > kHalfPi) {
    err -= kPi;
  } else if (err < -kHalfPi) {
    err += kPi;
  }
  // -pi/2 and pi/2 are the same rotation; report the closed end. The slack catches a
  // difference of exactly 90 degrees that rounded just past pi/2 and wrapped.
  if (err <= -kHalfPi + 1e-12) {
    err = kHalfPi;
  }
  return err;
}

double polygon_area(std::span<const Point2> polygon)
{
  const std::size_t n = polygon.size();
  if (n < 3) {
    return 0.0;
  }
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 & a = polygon[i];
    const Point2 & b = polygon[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip)
{
  std::vector<Point2> output(subject.begin(), subject.end());
  std::vector<Point2> input;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Point2 & a = clip[e];
    const Point2 & b = clip[(e + 1) % m];
    input.swap(output);
    output.clear();
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 & cur = input[i];
      const Point2 & nxt = input[(i + 1) % n];
      const double dc = cross(a, b, cur);
      const double dn = cross(a, b, nxt);
      if (dc >= 0.0) {
        output.push_back(cur);
      }
      if ((dc >= 0.0) != (dn >= 0.0)) {
        const double t = dc / (dc - dn);
        output.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
      }
    }
  }
  return output;
}

double intersection_area(const OrientedBox & a, const OrientedBox & b)
{
  const auto pa = box_corners(a);
  const auto pb = box_corners(b);
  const auto poly = clip_convex(pa, pb);
  const double area = std::abs(polygon_area(poly));
  return area < kMinIntersectionArea ? 0.0 : area;
}

double iou(const OrientedBox & a, const OrientedBox & b)
{
  if (a.w < kMinEdge || a.l < kMinEdge || b.w < kMinEdge || b.l < kMinEdge) {
    return 0.0;
  }
  const double inter = intersection_area(a, b);
  if (inter == 0.0) {
    return 0.0;
  }
  const double uni = box_area(a) + box_area(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace bevbox
