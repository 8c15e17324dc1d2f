// CSV persistence for trajectories: header `t,x0,...,x{d-1},label`, one row
// per step, 17 significant digits.
#pragma once

#include "stochastic_processes.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace replaylab {

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t";
  for (Eigen::Index j = 0; j < traj.dim(); ++j) os << ",x" << j;
  os << ",label\n";
  const std::string label = traj.label ? std::to_string(*traj.label) : "";
  for (Eigen::Index t = 0; t < traj.steps(); ++t) {
    os << sig17(static_cast<double>(t) * traj.dt);
    for (Eigen::Index j = 0; j < traj.dim(); ++j)
      os << ',' << sig17(traj.states(t, j));
    os << ',' << label << '\n';
  }
}

inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::io,
          "cannot open " + path.string() + " for writing");
  write_trajectory_csv(os, traj);
  require(static_cast<bool>(os), ErrorKind::io, "write failed: " + path.string());
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline double parse_double(const std::string& s) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  require(ec == std::errc{} && ptr == s.data() + s.size(), ErrorKind::parameter,
          "malformed number '" + s + "'");
  return value;
}

}  // namespace detail

inline Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::io,
          "empty trajectory file");
  const auto header = detail::split_csv(line);
  require(header.size() >= 3 && header.front() == "t" && header.back() == "label",
          ErrorKind::parameter, "bad trajectory header");
  const std::size_t d = header.size() - 2;
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::optional<int> label;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    require(fields.size() == d + 2, ErrorKind::parameter,
            "bad trajectory row: " + line);
    times.push_back(detail::parse_double(fields[0]));
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j)
      row[j] = detail::parse_double(fields[j + 1]);
    rows.push_back(std::move(row));
    if (!fields.back().empty()) label = std::stoi(fields.back());
  }
  require(!rows.empty(), ErrorKind::parameter, "trajectory has no rows");
  Trajectory traj;
  traj.states.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(d));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t j = 0; j < d; ++j)
      traj.states(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
          rows[t][j];
  traj.dt = times.size() >= 2 ? times[1] - times[0] : 1.0;
  traj.label = label;
  return traj;
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
  return read_trajectory_csv(is);
}

}  // namespace replaylab
