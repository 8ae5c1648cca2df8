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

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bevbox/error.hpp"
#include "bevbox/network.hpp"

namespace bevbox
{

namespace
{

constexpr std::string_view kMagic = "boxnet-ckpt";
constexpr int kVersion = 1;

void append_number(std::string & out, double v)
{
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

std::vector<std::string_view> tokens_of(std::string_view line)
{
  std::vector<std::string_view> tok;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t s = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > s) tok.push_back(line.substr(s, i - s));
  }
  return tok;
}

double number(std::string_view tok)
{
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw CheckpointError("checkpoint: bad number '" + std::string(tok) + "'");
  }
  return v;
}

long long integer(std::string_view tok)
{
  long long v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw CheckpointError("checkpoint: bad integer '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

std::string format_network_config(const NetworkConfig & cfg)
{
  std::string out;
  out += "angle_mode ";
  out += to_string(cfg.angle_mode);
  out += "\ncenter_mode ";
  out += to_string(cfg.center_mode);
  out += "\nconcat ";
  out += cfg.concat ? "on" : "off";
  out += "\nscale ";
  append_number(out, cfg.scale);
  out += "\nloss ";
  out += to_string(cfg.loss);
  out += "\nhuber_delta ";
  append_number(out, cfg.huber_delta);
  out += "\nloss_weights ";
  append_number(out, cfg.weights.angle);
  out += ' ';
  append_number(out, cfg.weights.size);
  out += ' ';
  append_number(out, cfg.weights.center);
  out += '\n';
  return out;
}

std::string format_checkpoint(const NetworkParams & params, const NetworkConfig & cfg)
{
  check_shapes(params, cfg);
  std::string out;
  out += std::string(kMagic) + " " + std::to_string(kVersion) + "\n";
  out += format_network_config(cfg);
  out += "step " + std::to_string(params.step) + "\n";
  out += "samples_seen " + std::to_string(params.samples_seen) + "\n";
  for_each_tensor(params, [&](const std::string & name, const Eigen::MatrixXd & m) {
    out += "param " + name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c > 0) out += ' ';
        append_number(out, m(r, c));
      }
      out += '\n';
    }
  });
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text)
{
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    const auto nl = text.find('\n', pos);
    const auto stop = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(pos, stop - pos));
    pos = stop + 1;
  }
  std::size_t li = 0;
  auto next = [&]() -> std::vector<std::string_view> {
    while (li < lines.size()) {
      auto tok = tokens_of(lines[li++]);
      if (!tok.empty()) return tok;
    }
    throw CheckpointError("checkpoint: truncated file");
  };

  auto tok = next();
  if (tok.size() != 2 || tok[0] != kMagic) {
    throw CheckpointError("checkpoint: missing 'boxnet-ckpt' header");
  }
  if (integer(tok[1]) != kVersion) {
    throw CheckpointError(
      "checkpoint: unsupported version " + std::string(tok[1]) + " (expected " +
      std::to_string(kVersion) + ")");
  }

  Checkpoint ck;
  std::map<std::string, Eigen::MatrixXd> tensors;
  bool saw_end = false;
  try {
    while (!saw_end) {
      tok = next();
      const auto key = tok[0];
      auto want = [&](std::size_t n) {
        if (tok.size() != n) {
          throw CheckpointError("checkpoint: malformed '" + std::string(key) + "' line");
        }
      };
      if (key == "angle_mode") {
        want(2);
        ck.config.angle_mode = parse_angle_mode(tok[1]);
      } else if (key == "center_mode") {
        want(2);
        ck.config.center_mode = parse_center_mode(tok[1]);
      } else if (key == "concat") {
        want(2);
        if (tok[1] != "on" && tok[1] != "off") throw CheckpointError("checkpoint: concat must be on|off");
        ck.config.concat = tok[1] == "on";
      } else if (key == "scale") {
        want(2);
        ck.config.scale = number(tok[1]);
      } else if (key == "loss") {
        want(2);
        ck.config.loss = parse_loss_kind(tok[1]);
      } else if (key == "huber_delta") {
        want(2);
        ck.config.huber_delta = number(tok[1]);
      } else if (key == "loss_weights") {
        want(4);
        ck.config.weights = {number(tok[1]), number(tok[2]), number(tok[3])};
      } else if (key == "step") {
        want(2);
        ck.params.step = integer(tok[1]);
      } else if (key == "samples_seen") {
        want(2);
        ck.params.samples_seen = integer(tok[1]);
      } else if (key == "param") {
        want(4);
        const long long rows = integer(tok[2]);
        const long long cols = integer(tok[3]);
        if (rows < 0 || cols < 0) throw CheckpointError("checkpoint: negative tensor shape");
        Eigen::MatrixXd m(rows, cols);
        for (long long r = 0; r < rows; ++r) {
          const auto row = next();
          if (static_cast<long long>(row.size()) != cols) {
            throw CheckpointError("checkpoint: tensor " + std::string(tok[1]) + " has a short row");
          }
          for (long long c = 0; c < cols; ++c) {
            m(r, c) = number(row[static_cast<std::size_t>(c)]);
          }
        }
        if (!tensors.emplace(std::string(tok[1]), std::move(m)).second) {
          throw CheckpointError("checkpoint: duplicate tensor " + std::string(tok[1]));
        }
      } else if (key == "end") {
        saw_end = true;
      } else {
        throw CheckpointError("checkpoint: unknown record '" + std::string(key) + "'");
      }
    }
    ck.config.validate();
  } catch (const InvalidArgument & e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }

  // Build the layout the config implies, then fill it by name.
  ck.params = [&] {
    NetworkParams p = init_params(ck.config, 0);
    p.step = ck.params.step;
    p.samples_seen = ck.params.samples_seen;
    return p;
  }();
  std::size_t used = 0;
  for_each_tensor(ck.params, [&](const std::string & name, Eigen::MatrixXd & m) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw CheckpointError("checkpoint: missing tensor " + name);
    }
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw CheckpointError("checkpoint: tensor " + name + " does not match the recorded configuration");
    }
    if (!it->second.allFinite()) {
      throw CheckpointError("checkpoint: tensor " + name + " holds non-finite values");
    }
    if (name.ends_with("running_var") && (it->second.array() <= 0.0).any()) {
      throw CheckpointError("checkpoint: tensor " + name + " holds non-positive variances");
    }
    m = it->second;
    ++used;
  });
  if (used != tensors.size()) {
    throw CheckpointError("checkpoint: tensors present that the recorded configuration does not use");
  }
  return ck;
}

void save_checkpoint(const NetworkParams & params, const NetworkConfig & cfg, const std::filesystem::path & path)
{
  const std::string text = format_checkpoint(params, cfg);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + tmp.string());
    }
    out << text;
    if (!out) {
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace bevbox
