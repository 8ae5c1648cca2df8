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

#include <span>
#include <string_view>

#include "bevbox/geometry.hpp"

namespace bevbox
{

enum class SlfCriterion { area, closeness, variance };

std::string_view to_string(SlfCriterion c);
SlfCriterion parse_slf_criterion(std::string_view name);

/// Search-based L-shape fitting settings.
struct SlfConfig
{
  SlfCriterion criterion = SlfCriterion::area;
  /// Orientation search resolution in radians, 0 < step <= pi/4.
  double step = kPi / 360.0;
  /// Floor on point-to-edge distance for the closeness score, meters.
  double d0 = 0.01;

  void validate() const;
};

/// Score of the rectangle aligned with theta that embraces `points`. Higher is better.
double slf_score(std::span<const Point2> points, double theta, const SlfConfig & cfg);

/// Searches theta over [0, pi/2) in cfg.step increments and returns the embracing box of the
/// best-scoring orientation, with l >= w and theta along the longer side.
/// Throws FitError for fewer than 3 points or coincident points.
OrientedBox slf_fit(std::span<const Point2> points, const SlfConfig & cfg);

}  // namespace bevbox
