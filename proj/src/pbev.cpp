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
#include <sstream>

#include "bevbox/dataset.hpp"
#include "bevbox/error.hpp"

namespace bevbox
{

namespace
{

void append_number(std::string & out, double v)
{
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

class LineReader
{
public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Splits the next non-empty line into whitespace-separated tokens.
  bool next(std::vector<std::string_view> & tokens)
  {
    while (pos_ < text_.size()) {
      const auto end = text_.find('\n', pos_);
      const auto stop = end == std::string_view::npos ? text_.size() : end;
      std::string_view line = text_.substr(pos_, stop - pos_);
      pos_ = stop + 1;
      ++line_;
      tokens.clear();
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) tokens.push_back(line.substr(start, i - start));
      }
      if (!tokens.empty()) {
        return true;
      }
    }
    return false;
  }

  std::size_t line() const { return line_; }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

double to_double(std::string_view tok, std::size_t line)
{
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError(line, "expected a finite number, got '" + std::string(tok) + "'");
  }
  return v;
}

std::size_t to_count(std::string_view tok, std::size_t line)
{
  std::size_t v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ParseError(line, "expected a count, got '" + std::string(tok) + "'");
  }
  return v;
}

void expect(bool ok, std::size_t line, const std::string & what)
{
  if (!ok) {
    throw ParseError(line, what);
  }
}

}  // namespace

std::string format_pbev(std::span<const Sample> samples)
{
  std::string out = "pbev 1\n";
  for (const auto & s : samples) {
    if (s.id.empty() || s.id.find_first_of(" \t\r\n") != std::string::npos) {
      throw InvalidArgument("pbev: sample id must be a non-empty token, got '" + s.id + "'");
    }
    out += "sample ";
    out += s.id;
    out += ' ';
    out += to_string(s.label);
    out += "\nbox";
    for (double v : {s.gt.cx, s.gt.cy, s.gt.w, s.gt.l, s.gt.theta}) {
      out += ' ';
      append_number(out, v);
    }
    out += "\npoints ";
    out += std::to_string(s.points.size());
    out += '\n';
    for (const auto & p : s.points) {
      append_number(out, p.x);
      out += ' ';
      append_number(out, p.y);
      out += '\n';
    }
    out += "end\n";
  }
  return out;
}

std::vector<Sample> parse_pbev(std::string_view text)
{
  std::vector<Sample> samples;
  LineReader reader(text);
  std::vector<std::string_view> tok;
  if (!reader.next(tok)) {
    return samples;
  }
  expect(tok.size() == 2 && tok[0] == "pbev", reader.line(), "missing 'pbev' header");
  expect(tok[1] == "1", reader.line(), "unsupported pbev version '" + std::string(tok[1]) + "'");

  while (reader.next(tok)) {
    expect(tok.size() == 3 && tok[0] == "sample", reader.line(), "expected 'sample <id> <class>'");
    Sample s;
    s.id = std::string(tok[1]);
    try {
      s.label = parse_object_class(tok[2]);
    } catch (const InvalidArgument & e) {
      throw ParseError(reader.line(), e.what());
    }

    expect(reader.next(tok), reader.line(), "unexpected end of file, expected 'box'");
    expect(tok.size() == 6 && tok[0] == "box", reader.line(), "expected 'box <cx> <cy> <w> <l> <theta>'");
    const std::size_t box_line = reader.line();
    s.gt = {to_double(tok[1], box_line), to_double(tok[2], box_line), to_double(tok[3], box_line),
            to_double(tok[4], box_line), to_double(tok[5], box_line)};
    expect(s.gt.w > 0.0 && s.gt.l > 0.0, box_line, "box width and length must be positive");
    expect(s.gt.theta > -kHalfPi && s.gt.theta <= kHalfPi, box_line, "theta outside (-pi/2, pi/2]");

    expect(reader.next(tok), reader.line(), "unexpected end of file, expected 'points'");
    expect(tok.size() == 2 && tok[0] == "points", reader.line(), "expected 'points <n>'");
    const std::size_t n = to_count(tok[1], reader.line());
    s.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      expect(reader.next(tok), reader.line(), "unexpected end of file inside point list");
      expect(tok.size() == 2, reader.line(), "expected '<x> <y>'");
      s.points.push_back({to_double(tok[0], reader.line()), to_double(tok[1], reader.line())});
    }
    expect(reader.next(tok), reader.line(), "unexpected end of file, expected 'end'");
    expect(tok.size() == 1 && tok[0] == "end", reader.line(), "expected 'end'");
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> read_pbev(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_pbev(buffer.str());
}

void write_pbev(const std::filesystem::path & path, std::span<const Sample> samples)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << format_pbev(samples);
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

}  // namespace bevbox
