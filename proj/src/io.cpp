// Copyright 2026 The Corporea Authors
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

#include "corporea/io.hpp"

#include "corporea/errors.hpp"

#include <fmt/core.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace corporea::io
{

std::string format_double(double x)
{
  if (std::isnan(x)) return "nan";
  return fmt::format("{}", x);
}

std::string read_text(const fs::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open for reading", path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) {
    throw IoError("read failed", path.string());
  }
  return ss.str();
}

void write_text(const fs::path & path, const std::string & content)
{
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory", path.parent_path().string());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing", path.string());
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw IoError("write failed", path.string());
  }
}

namespace
{

std::vector<std::string> dataset_header(Eigen::Index taxels)
{
  std::vector<std::string> h{"theta0", "theta1", "theta2", "proprio0", "proprio1", "proprio2",
                             "u_self", "v_self", "u_other", "v_other"};
  for (Eigen::Index t = 0; t < taxels; ++t) {
    h.push_back(fmt::format("taxel{}", t));
  }
  return h;
}

std::vector<std::string_view> split(std::string_view line, char sep)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string cell(double x) { return std::isnan(x) ? std::string() : format_double(x); }

}  // namespace

std::string dataset_to_csv(const Dataset & data)
{
  data.validate();
  std::string out;
  const auto header = dataset_header(data.tactile.cols());
  for (std::size_t i = 0; i < header.size(); ++i) {
    out += (i ? "," : "") + header[i];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < 3; ++c) row.push_back(data.inputs(r, c));
    for (Eigen::Index c = 0; c < 3; ++c) row.push_back(data.proprio(r, c));
    for (Eigen::Index c = 0; c < 2; ++c) row.push_back(data.visual_self(r, c));
    for (Eigen::Index c = 0; c < 2; ++c) row.push_back(data.visual_other(r, c));
    for (Eigen::Index c = 0; c < data.tactile.cols(); ++c) row.push_back(data.tactile(r, c));
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += cell(row[i]);
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string & text)
{
  std::vector<std::string_view> lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) {
    lines.pop_back();
  }
  if (lines.empty()) {
    throw DomainError("dataset CSV is empty");
  }
  auto strip_cr = [](std::string_view s) {
    return !s.empty() && s.back() == '\r' ? s.substr(0, s.size() - 1) : s;
  };
  const auto header = split(strip_cr(lines[0]), ',');
  Eigen::Index taxels = 0;
  while (std::find(header.begin(), header.end(), fmt::format("taxel{}", taxels)) != header.end()) {
    ++taxels;
  }
  const auto expected = dataset_header(taxels);
  for (const auto & name : expected) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw DomainError(fmt::format("dataset CSV is missing column '{}'", name));
    }
  }
  if (taxels == 0) {
    throw DomainError("dataset CSV is missing column 'taxel0'");
  }
  if (header.size() != expected.size()) {
    throw DomainError(fmt::format(
      "dataset CSV header has {} columns, expected {}", header.size(), expected.size()));
  }
  std::vector<std::size_t> column(expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    column[i] = static_cast<std::size_t>(std::find(header.begin(), header.end(), expected[i]) - header.begin());
  }

  const auto n = static_cast<Eigen::Index>(lines.size() - 1);
  if (n < 1) {
    throw DomainError("dataset CSV has no data rows");
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Dataset data;
  data.inputs.resize(n, 3);
  data.proprio.resize(n, 3);
  data.visual_self.resize(n, 2);
  data.visual_other.resize(n, 2);
  data.tactile.resize(n, taxels);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t line_no = static_cast<std::size_t>(r) + 2;
    const auto cells = split(strip_cr(lines[static_cast<std::size_t>(r) + 1]), ',');
    if (cells.size() != expected.size()) {
      throw DomainError(fmt::format(
        "dataset CSV line {}: {} cells, expected {}", line_no, cells.size(), expected.size()));
    }
    std::vector<double> v(expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      std::string_view s = cells[column[i]];
      const bool optional_cell = i >= 6 && i < 10;
      if (s.empty()) {
        if (!optional_cell) {
          throw DomainError(fmt::format("dataset CSV line {}: empty '{}'", line_no, expected[i]));
        }
        v[i] = nan;
        continue;
      }
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v[i]);
      if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v[i])) {
        throw DomainError(fmt::format(
          "dataset CSV line {}: cannot parse '{}' in column '{}'", line_no, s, expected[i]));
      }
      if (i >= 10 && v[i] != 0.0 && v[i] != 1.0) {
        throw DomainError(fmt::format(
          "dataset CSV line {}: tactile value {} is not 0 or 1", line_no, v[i]));
      }
    }
    for (Eigen::Index c = 0; c < 3; ++c) data.inputs(r, c) = v[static_cast<std::size_t>(c)];
    for (Eigen::Index c = 0; c < 3; ++c) data.proprio(r, c) = v[static_cast<std::size_t>(3 + c)];
    for (Eigen::Index c = 0; c < 2; ++c) data.visual_self(r, c) = v[static_cast<std::size_t>(6 + c)];
    for (Eigen::Index c = 0; c < 2; ++c) data.visual_other(r, c) = v[static_cast<std::size_t>(8 + c)];
    for (Eigen::Index c = 0; c < taxels; ++c) data.tactile(r, c) = v[static_cast<std::size_t>(10 + c)];
  }
  return data;
}

namespace
{

void reject_unknown(const json & j, std::initializer_list<const char *> allowed, std::string_view where)
{
  if (!j.is_object()) {
    throw DomainError(fmt::format("{} must be a JSON object", where));
  }
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto & item : j.items()) {
    if (!keys.count(item.key())) {
      throw DomainError(fmt::format("unknown key '{}' in {}", item.key(), where));
    }
  }
}

template<class T>
void read_opt(const json & j, const char * key, T & out)
{
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception & e) {
      throw DomainError(fmt::format("invalid value for '{}': {}", key, e.what()));
    }
  }
}

json matrix_to_json(const Eigen::MatrixXd & m)
{
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json & j, std::string_view what)
{
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw DomainError(fmt::format("'{}' must be a non-empty array of rows", what));
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json & row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw DomainError(fmt::format("'{}' row {} has the wrong length", what, r));
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) {
        throw DomainError(fmt::format("'{}' row {} holds a non-number", what, r));
      }
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

Eigen::RowVectorXd row_from_json(const json & j, std::string_view what)
{
  if (!j.is_array()) {
    throw DomainError(fmt::format("'{}' must be an array", what));
  }
  Eigen::RowVectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace

json arm_config_to_json(const ArmConfig & c)
{
  json limits = json::array();
  for (const auto & l : c.joint_limits) limits.push_back({l.lo, l.hi});
  return {
    {"link_lengths", c.link_lengths},
    {"joint_limits", limits},
    {"sigma_proprio", c.sigma_proprio},
    {"sigma_visual", c.sigma_visual},
    {"camera",
     {{"center", {c.camera.center.x(), c.camera.center.y()}},
      {"scale", c.camera.scale},
      {"image_size", {c.camera.width, c.camera.height}}}},
    {"taxel_layout", c.taxel_layout},
    {"contact_radius", c.contact_radius},
  };
}

ArmConfig arm_config_from_json(const json & j)
{
  reject_unknown(
    j, {"link_lengths", "joint_limits", "sigma_proprio", "sigma_visual", "camera", "taxel_layout", "contact_radius"},
    "arm");
  ArmConfig c;
  read_opt(j, "link_lengths", c.link_lengths);
  if (j.contains("joint_limits")) {
    std::array<std::array<double, 2>, kJointCount> lim{};
    read_opt(j, "joint_limits", lim);
    for (std::size_t i = 0; i < kJointCount; ++i) c.joint_limits[i] = {lim[i][0], lim[i][1]};
  }
  read_opt(j, "sigma_proprio", c.sigma_proprio);
  read_opt(j, "sigma_visual", c.sigma_visual);
  if (j.contains("camera")) {
    const json & cam = j.at("camera");
    reject_unknown(cam, {"center", "scale", "image_size"}, "arm.camera");
    std::array<double, 2> center{c.camera.center.x(), c.camera.center.y()};
    std::array<int, 2> size{c.camera.width, c.camera.height};
    read_opt(cam, "center", center);
    read_opt(cam, "scale", c.camera.scale);
    read_opt(cam, "image_size", size);
    c.camera.center = {center[0], center[1]};
    c.camera.width = size[0];
    c.camera.height = size[1];
  }
  read_opt(j, "taxel_layout", c.taxel_layout);
  read_opt(j, "contact_radius", c.contact_radius);
  c.validate();
  return c;
}

json kernel_params_to_json(const KernelParams & p)
{
  return {{"lengthscale", p.lengthscale}, {"signal_variance", p.signal_variance}, {"noise_variance", p.noise_variance}};
}

KernelParams kernel_params_from_json(const json & j)
{
  reject_unknown(j, {"lengthscale", "signal_variance", "noise_variance"}, "kernel params");
  KernelParams p;
  read_opt(j, "lengthscale", p.lengthscale);
  read_opt(j, "signal_variance", p.signal_variance);
  read_opt(j, "noise_variance", p.noise_variance);
  p.validate();
  return p;
}

json model_to_json(const GpSensoryModel & model, Modality modality)
{
  return {
    {"modality", std::string(to_string(modality))},
    {"transform", model.transform() == OutputTransform::logistic ? "logistic" : "identity"},
    {"params", kernel_params_to_json(model.gp().params())},
    {"inputs", matrix_to_json(model.gp().inputs())},
    {"targets", matrix_to_json(model.raw_targets())},
    {"standardization",
     {{"mean", std::vector<double>(model.standardization().mean.data(),
                                   model.standardization().mean.data() + model.standardization().mean.size())},
      {"scale", std::vector<double>(model.standardization().scale.data(),
                                    model.standardization().scale.data() + model.standardization().scale.size())}}},
  };
}

GpSensoryModel model_from_json(const json & j)
{
  reject_unknown(j, {"modality", "transform", "params", "inputs", "targets", "standardization"}, "model");
  for (const char * key : {"transform", "params", "inputs", "targets", "standardization"}) {
    if (!j.contains(key)) {
      throw DomainError(fmt::format("model JSON is missing '{}'", key));
    }
  }
  const std::string transform = j.at("transform").get<std::string>();
  if (transform != "identity" && transform != "logistic") {
    throw DomainError(fmt::format("unknown output transform '{}'", transform));
  }
  const json & st = j.at("standardization");
  reject_unknown(st, {"mean", "scale"}, "model.standardization");
  Standardization s{row_from_json(st.at("mean"), "mean"), row_from_json(st.at("scale"), "scale")};
  Eigen::MatrixXd inputs = matrix_from_json(j.at("inputs"), "inputs");
  Eigen::MatrixXd targets = matrix_from_json(j.at("targets"), "targets");
  return GpSensoryModel::restore(
    std::move(inputs), std::move(targets), kernel_params_from_json(j.at("params")), std::move(s),
    transform == "logistic" ? OutputTransform::logistic : OutputTransform::identity);
}

std::string grid_to_pgm(const BeliefGrid & grid)
{
  const Eigen::MatrixXd p = grid.probabilities();
  std::string out = fmt::format("P5\n{} {}\n255\n", p.cols(), p.rows());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * p(r, c)))));
    }
  }
  return out;
}

std::string mask_to_pbm(const Mask & mask)
{
  std::string out = fmt::format("P4\n{} {}\n", mask.cols(), mask.rows());
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    unsigned char byte = 0;
    int bit = 0;
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      if (mask(r, c)) byte |= static_cast<unsigned char>(0x80u >> bit);
      if (++bit == 8) {
        out.push_back(static_cast<char>(byte));
        byte = 0;
        bit = 0;
      }
    }
    if (bit) out.push_back(static_cast<char>(byte));
  }
  return out;
}

std::string drift_to_csv(const DriftReport & report)
{
  const Eigen::Index d = report.mu_trajectory.empty() ? 0 : report.mu_trajectory.front().size();
  std::string out = "step";
  for (Eigen::Index k = 0; k < d; ++k) out += fmt::format(",mu{}", k);
  out += ",free_energy,ee_u,ee_v\n";
  for (std::size_t i = 0; i < report.mu_trajectory.size(); ++i) {
    out += std::to_string(i);
    for (Eigen::Index k = 0; k < d; ++k) out += "," + format_double(report.mu_trajectory[i][k]);
    out += "," + format_double(report.free_energy[i]);
    out += "," + format_double(report.ee_pixels[i].x()) + "," + format_double(report.ee_pixels[i].y()) + "\n";
  }
  return out;
}

json schedule_to_json(const PerturbationSchedule & s)
{
  return {
    {"visual_offset", {s.visual_offset.x(), s.visual_offset.y()}},
    {"stimulation", std::string(to_string(s.stimulation))},
    {"precision_gain", s.precision_gain},
    {"n_steps", s.n_steps},
    {"step_size", s.step_size},
    {"stimulation_period", s.stimulation_period},
    {"stimulated_taxel", s.stimulated_taxel},
  };
}

PerturbationSchedule schedule_from_json(const json & j, PerturbationSchedule s)
{
  reject_unknown(
    j, {"visual_offset", "stimulation", "precision_gain", "n_steps", "step_size", "stimulation_period",
        "stimulated_taxel"},
    "rhi schedule");
  std::array<double, 2> offset{s.visual_offset.x(), s.visual_offset.y()};
  read_opt(j, "visual_offset", offset);
  s.visual_offset = {offset[0], offset[1]};
  if (j.contains("stimulation")) {
    s.stimulation = parse_stimulation(j.at("stimulation").get<std::string>());
  }
  read_opt(j, "precision_gain", s.precision_gain);
  read_opt(j, "n_steps", s.n_steps);
  read_opt(j, "step_size", s.step_size);
  read_opt(j, "stimulation_period", s.stimulation_period);
  read_opt(j, "stimulated_taxel", s.stimulated_taxel);
  s.validate();
  return s;
}

json drift_summary(const DriftReport & report, const PerturbationSchedule & schedule)
{
  std::vector<double> mu(report.final_mu.data(), report.final_mu.data() + report.final_mu.size());
  return {
    {"drift_px", report.drift},
    {"converged", report.converged},
    {"step_size", report.step_size},
    {"final_mu", mu},
    {"schedule", schedule_to_json(schedule)},
  };
}

}  // namespace corporea::io
