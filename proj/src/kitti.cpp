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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bevbox/dataset.hpp"
#include "bevbox/error.hpp"

namespace bevbox
{

namespace fs = std::filesystem;

namespace
{

struct Calibration
{
  Eigen::Matrix3d rect;
  Eigen::Matrix<double, 3, 4> velo_to_cam;
};

struct Label
{
  ObjectClass cls;
  double h, w, l;
  double x, y, z;
  double ry;
};

std::vector<std::string> frame_ids(const fs::path & dir, const std::string & ext)
{
  if (!fs::is_directory(dir)) {
    throw IoError("kitti: not a directory: " + dir.string());
  }
  std::vector<std::string> ids;
  for (const auto & entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<double> parse_numbers(std::istringstream & in)
{
  std::vector<double> values;
  double v;
  while (in >> v) {
    values.push_back(v);
  }
  return values;
}

Calibration read_calibration(const fs::path & path, const std::string & frame)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError("kitti frame " + frame + ": cannot open " + path.string());
  }
  std::map<std::string, std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      continue;
    }
    std::istringstream values(line.substr(colon + 1));
    rows[line.substr(0, colon)] = parse_numbers(values);
  }
  const auto tr = rows.find("Tr_velo_to_cam");
  const auto r0 = rows.find("R0_rect");
  if (tr == rows.end() || tr->second.size() != 12 || r0 == rows.end() || r0->second.size() != 9) {
    throw IoError("kitti frame " + frame + ": calibration lacks Tr_velo_to_cam (12) or R0_rect (9)");
  }
  Calibration calib;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      calib.rect(r, c) = r0->second[3 * r + c];
    }
    for (int c = 0; c < 4; ++c) {
      calib.velo_to_cam(r, c) = tr->second[4 * r + c];
    }
  }
  return calib;
}

std::vector<Label> read_labels(const fs::path & path, const std::string & frame)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError("kitti frame " + frame + ": cannot open " + path.string());
  }
  std::vector<Label> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string type;
    if (!(fields >> type)) {
      continue;
    }
    const auto values = parse_numbers(fields);
    if (values.size() < 14) {
      throw IoError(
        "kitti frame " + frame + ": malformed label at line " + std::to_string(lineno));
    }
    ObjectClass cls;
    if (type == "Car") {
      cls = ObjectClass::car;
    } else if (type == "Pedestrian") {
      cls = ObjectClass::pedestrian;
    } else if (type == "Cyclist") {
      cls = ObjectClass::cyclist;
    } else {
      continue;
    }
    // values: truncated occluded alpha bbox(4) h w l x y z ry [score]
    labels.push_back(
      {cls, values[7], values[8], values[9], values[10], values[11], values[12], values[13]});
  }
  return labels;
}

std::vector<Eigen::Vector3d> read_scan(const fs::path & path, const std::string & frame)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("kitti frame " + frame + ": cannot open " + path.string());
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % (4 * sizeof(float)) != 0) {
    throw IoError("kitti frame " + frame + ": velodyne scan size is not a multiple of 16 bytes");
  }
  const std::size_t n = bytes.size() / (4 * sizeof(float));
  std::vector<Eigen::Vector3d> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    float v[4];
    std::copy_n(bytes.data() + i * sizeof(v), sizeof(v), reinterpret_cast<char *>(v));
    pts[i] = {v[0], v[1], v[2]};
  }
  return pts;
}

bool inside(const Label & b, const Eigen::Vector3d & p)
{
  // camera frame: y points down and the label location is the bottom face center
  const double dy = p.y() - b.y;
  if (dy > 0.0 || dy < -b.h) {
    return false;
  }
  const double c = std::cos(b.ry);
  const double s = std::sin(b.ry);
  const double dx = p.x() - b.x;
  const double dz = p.z() - b.z;
  const double along = c * dx - s * dz;
  const double across = s * dx + c * dz;
  return std::abs(along) <= 0.5 * b.l && std::abs(across) <= 0.5 * b.w;
}

}  // namespace

std::vector<Sample> ingest_kitti(
  const fs::path & label_dir, const fs::path & velo_dir, const fs::path & calib_dir,
  std::size_t min_points)
{
  const auto label_ids = frame_ids(label_dir, ".txt");
  const auto velo_ids = frame_ids(velo_dir, ".bin");
  const auto calib_ids = frame_ids(calib_dir, ".txt");
  if (label_ids != velo_ids || label_ids != calib_ids) {
    throw IoError("kitti: label, velodyne and calib directories hold different frame sets");
  }

  std::vector<Sample> samples;
  for (const auto & frame : label_ids) {
    const auto labels = read_labels(label_dir / (frame + ".txt"), frame);
    if (labels.empty()) {
      continue;
    }
    const auto calib = read_calibration(calib_dir / (frame + ".txt"), frame);
    const auto scan = read_scan(velo_dir / (frame + ".bin"), frame);

    std::vector<Eigen::Vector3d> cam(scan.size());
    for (std::size_t i = 0; i < scan.size(); ++i) {
      cam[i] = calib.rect * (calib.velo_to_cam * scan[i].homogeneous());
    }

    for (std::size_t k = 0; k < labels.size(); ++k) {
      const Label & b = labels[k];
      Sample s;
      s.id = frame + "_" + std::to_string(k);
      s.label = b.cls;
      for (const auto & p : cam) {
        if (inside(b, p)) {
          s.points.push_back({p.x(), p.z()});
        }
      }
      if (s.points.size() <= min_points) {
        continue;
      }
      // rotation_y turns the length axis from +x towards -z, i.e. by -ry in the (x, z) plane
      s.gt = {b.x, b.z, b.w, b.l, normalize_angle(-b.ry)};
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

}  // namespace bevbox
