#pragma once

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sagwave {

struct TrajectorySample {
  double t = 0.0;  // s
  double x = 0.0;  // m along corridor
  double v = 0.0;  // m/s
};

struct Trajectory {
  int vehicle_id = 0;
  std::vector<TrajectorySample> samples;
};

// CSV layout: vehicle_id,t,x,v (SI units, 4 decimal places).
inline void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  out << "vehicle_id,t,x,v\n";
  char buf[128];
  for (const auto& traj : trajectories) {
    for (const auto& s : traj.samples) {
      std::snprintf(buf, sizeof(buf), "%d,%.4f,%.4f,%.4f\n", traj.vehicle_id, s.t, s.x, s.v);
      out << buf;
    }
  }
}

inline std::vector<Trajectory> read_trajectories_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "vehicle_id,t,x,v")
    throw std::runtime_error("trajectory csv: bad header");
  std::vector<Trajectory> result;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    TrajectorySample s;
    int id = 0;
    if (!std::getline(row, field, ',')) throw std::runtime_error("trajectory csv: short row");
    id = std::stoi(field);
    if (!std::getline(row, field, ',')) throw std::runtime_error("trajectory csv: short row");
    s.t = std::stod(field);
    if (!std::getline(row, field, ',')) throw std::runtime_error("trajectory csv: short row");
    s.x = std::stod(field);
    if (!std::getline(row, field, ',')) throw std::runtime_error("trajectory csv: short row");
    s.v = std::stod(field);
    if (result.empty() || result.back().vehicle_id != id) {
      result.push_back(Trajectory{id, {}});
    }
    result.back().samples.push_back(s);
  }
  return result;
}

}  // namespace sagwave
