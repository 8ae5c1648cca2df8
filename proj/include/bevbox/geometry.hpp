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

#include <array>
#include <numbers>
#include <span>
#include <vector>

namespace bevbox
{

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHalfPi = std::numbers::pi / 2.0;

/// One bird's-eye-view point, meters.
struct Point2
{
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2 &, const Point2 &) = default;
};

/// Rectangle in the BEV plane. The length edges run along (cos theta, sin theta).
struct OrientedBox
{
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double l = 1.0;
  double theta = 0.0;

  friend bool operator==(const OrientedBox &, const OrientedBox &) = default;
};

/// Wraps theta into (-pi/2, pi/2] modulo pi. Throws InvalidArgument on non-finite input.
double normalize_angle(double theta);

/// True if all fields are finite, w > 0, l > 0 and theta is already normalized.
bool is_valid(const OrientedBox & box);

/// Corners in counter-clockwise order, starting at +l/2 along the length axis, -w/2 across it.
std::array<Point2, 4> box_corners(const OrientedBox & box);

double box_area(const OrientedBox & box);

/// Point-in-box test in the box frame, with `tolerance` meters of inflation.
bool box_contains(const OrientedBox & box, const Point2 & p, double tolerance = 0.0);

/// Euclidean distance between box centers.
double center_error(const OrientedBox & pred, const OrientedBox & gt);

/// Smallest rotation from pred to gt modulo pi, in (-pi/2, pi/2].
double orientation_error(const OrientedBox & pred, const OrientedBox & gt);

/// Signed shoelace area; positive for counter-clockwise polygons.
double polygon_area(std::span<const Point2> polygon);

/// Clips `subject` against the convex counter-clockwise polygon `clip`.
std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip);

/// Area of intersection of two boxes, zero below 1e-12 m^2.
double intersection_area(const OrientedBox & a, const OrientedBox & b);

/// Intersection over union of two oriented boxes. Returns 0 if either box is degenerate.
double iou(const OrientedBox & a, const OrientedBox & b);

}  // namespace bevbox
