#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sagwave/trajectory.hpp"

namespace sagwave {

struct GridSpec {
  double t0 = 0.0;  // s, start of window
  double x0 = 0.0;  // m, upstream segment start
  double dt = 1.0;  // s per column
  double dx = 10.0; // m per row
  std::size_t n_t = 900;
  std::size_t n_x = 50;

  std::size_t cells() const { return n_t * n_x; }

  void validate() const {
    if (dt <= 0.0 || dx <= 0.0) throw std::invalid_argument("grid spec: dt and dx must be positive");
    if (n_t < 1 || n_x < 1) throw std::invalid_argument("degenerate grid");
  }

  bool operator==(const GridSpec& o) const {
    return t0 == o.t0 && x0 == o.x0 && dt == o.dt && dx == o.dx && n_t == o.n_t && n_x == o.n_x;
  }
};

// Time-space diagram: row index = space (row 0 most upstream), column = time.
struct TimeSpaceGrid {
  GridSpec spec;
  std::vector<double> speeds;       // n_x rows of n_t values, m/s
  std::vector<std::uint8_t> mask;   // 1 = at least one sample contributed

  double speed(std::size_t row, std::size_t col) const { return speeds[row * spec.n_t + col]; }
  double& speed(std::size_t row, std::size_t col) { return speeds[row * spec.n_t + col]; }
  bool masked(std::size_t row, std::size_t col) const { return mask[row * spec.n_t + col] != 0; }
};

struct Neighborhood {
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  std::size_t half_time = 0;   // m: columns either side
  std::size_t half_space = 0;  // n: rows either side
  std::vector<double> values;  // (2n+1) rows x (2m+1) cols, row-major

  std::size_t rows() const { return 2 * half_space + 1; }
  std::size_t cols() const { return 2 * half_time + 1; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
};

// Bins every in-window trajectory sample into half-open cells
// [k*dt, (k+1)*dt) x [k*dx, (k+1)*dx) and stores the arithmetic mean speed.
inline TimeSpaceGrid aggregate_trajectories(const std::vector<Trajectory>& trajectories,
                                            const GridSpec& spec) {
  if (trajectories.empty()) throw std::invalid_argument("no input trajectories");
  spec.validate();

  TimeSpaceGrid grid;
  grid.spec = spec;
  grid.speeds.assign(spec.cells(), 0.0);
  grid.mask.assign(spec.cells(), 0);
  std::vector<std::vector<double>> cell_samples(spec.cells());

  const double t_end = spec.t0 + spec.dt * static_cast<double>(spec.n_t);
  const double x_end = spec.x0 + spec.dx * static_cast<double>(spec.n_x);
  for (const auto& traj : trajectories) {
    for (const auto& s : traj.samples) {
      if (s.t < spec.t0 || s.t >= t_end || s.x < spec.x0 || s.x >= x_end) continue;
      const auto col = static_cast<std::size_t>(std::floor((s.t - spec.t0) / spec.dt));
      const auto row = static_cast<std::size_t>(std::floor((s.x - spec.x0) / spec.dx));
      if (col >= spec.n_t || row >= spec.n_x) continue;  // floating-point edge
      cell_samples[row * spec.n_t + col].push_back(s.v);
    }
  }
  for (std::size_t i = 0; i < cell_samples.size(); ++i) {
    auto& samples = cell_samples[i];
    if (samples.empty()) continue;
    // Summation in sorted order so the mean is independent of input order.
    std::sort(samples.begin(), samples.end());
    double sum = 0.0;
    for (double v : samples) sum += v;
    grid.speeds[i] = sum / static_cast<double>(samples.size());
    grid.mask[i] = 1;
  }
  return grid;
}

// Replaces unmasked cells with the nearest masked cell in the same row by
// time distance (ties to earlier time); fully empty rows fall back to the
// free-flow speed. The mask is left unchanged.
inline TimeSpaceGrid fill_gaps(const TimeSpaceGrid& grid, double free_flow_speed) {
  TimeSpaceGrid out = grid;
  const std::size_t n_t = grid.spec.n_t;
  std::vector<std::size_t> masked_cols;
  for (std::size_t row = 0; row < grid.spec.n_x; ++row) {
    masked_cols.clear();
    for (std::size_t col = 0; col < n_t; ++col)
      if (grid.masked(row, col)) masked_cols.push_back(col);
    if (masked_cols.empty()) {
      for (std::size_t col = 0; col < n_t; ++col) out.speed(row, col) = free_flow_speed;
      continue;
    }
    for (std::size_t col = 0; col < n_t; ++col) {
      if (grid.masked(row, col)) continue;
      std::size_t best = masked_cols.front();
      std::size_t best_dist = std::numeric_limits<std::size_t>::max();
      for (std::size_t mc : masked_cols) {
        const std::size_t dist = mc > col ? mc - col : col - mc;
        if (dist < best_dist) {  // strict: earlier column wins ties
          best_dist = dist;
          best = mc;
        }
      }
      out.speed(row, col) = grid.speed(row, best);
    }
  }
  return out;
}

inline Neighborhood extract_neighborhood(const TimeSpaceGrid& grid,
                                         std::size_t center_row, std::size_t center_col,
                                         std::size_t half_time, std::size_t half_space) {
  if (center_row < half_space || center_row + half_space >= grid.spec.n_x ||
      center_col < half_time || center_col + half_time >= grid.spec.n_t)
    throw std::out_of_range("boundary");
  Neighborhood nb;
  nb.center_row = center_row;
  nb.center_col = center_col;
  nb.half_time = half_time;
  nb.half_space = half_space;
  nb.values.reserve(nb.rows() * nb.cols());
  for (std::size_t r = center_row - half_space; r <= center_row + half_space; ++r)
    for (std::size_t c = center_col - half_time; c <= center_col + half_time; ++c)
      nb.values.push_back(grid.speed(r, c));
  return nb;
}

// ---------------------------------------------------------------------------
// Framed CSV: `# <tag> v1, t0=..., x0=..., dt=..., dx=..., n_t=..., n_x=...`
// then n_x rows of n_t values (6 decimal places), then n_x rows of flag bits.
// Shared by grid, activation, binary and probability maps.
// ---------------------------------------------------------------------------

inline void write_framed_csv(std::ostream& out, const std::string& tag, const GridSpec& spec,
                             const std::vector<double>& values,
                             const std::vector<std::uint8_t>& flags) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "# %s v1, t0=%.6f, x0=%.6f, dt=%.6f, dx=%.6f, n_t=%zu, n_x=%zu\n",
                tag.c_str(), spec.t0, spec.x0, spec.dt, spec.dx, spec.n_t, spec.n_x);
  out << buf;
  for (std::size_t row = 0; row < spec.n_x; ++row) {
    for (std::size_t col = 0; col < spec.n_t; ++col) {
      std::snprintf(buf, sizeof(buf), "%.6f", values[row * spec.n_t + col]);
      out << (col ? "," : "") << buf;
    }
    out << '\n';
  }
  for (std::size_t row = 0; row < spec.n_x; ++row) {
    for (std::size_t col = 0; col < spec.n_t; ++col)
      out << (col ? "," : "") << int(flags[row * spec.n_t + col]);
    out << '\n';
  }
}

struct FramedCsv {
  GridSpec spec;
  std::vector<double> values;
  std::vector<std::uint8_t> flags;
};

inline FramedCsv read_framed_csv(std::istream& in, const std::string& expected_tag) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("bad header: empty input");
  const std::string prefix = "# " + expected_tag + " v1, ";
  if (header.rfind(prefix, 0) != 0)
    throw std::runtime_error("bad header: expected tag '" + expected_tag + "'");

  FramedCsv result;
  GridSpec& spec = result.spec;
  std::istringstream fields(header.substr(prefix.size()));
  std::string field;
  while (std::getline(fields, field, ',')) {
    std::istringstream kv(field);
    std::string key, value;
    std::getline(kv, key, '=');
    std::getline(kv, value);
    key.erase(0, key.find_first_not_of(' '));
    if (key == "t0") spec.t0 = std::stod(value);
    else if (key == "x0") spec.x0 = std::stod(value);
    else if (key == "dt") spec.dt = std::stod(value);
    else if (key == "dx") spec.dx = std::stod(value);
    else if (key == "n_t") spec.n_t = std::stoul(value);
    else if (key == "n_x") spec.n_x = std::stoul(value);
    else throw std::runtime_error("bad header: unknown field '" + key + "'");
  }
  spec.validate();

  result.values.reserve(spec.cells());
  result.flags.reserve(spec.cells());
  std::string line;
  for (std::size_t row = 0; row < spec.n_x; ++row) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated value rows");
    std::istringstream cells(line);
    while (std::getline(cells, field, ',')) result.values.push_back(std::stod(field));
  }
  if (result.values.size() != spec.cells()) throw std::runtime_error("value cell count mismatch");
  for (std::size_t row = 0; row < spec.n_x; ++row) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated flag rows");
    std::istringstream cells(line);
    while (std::getline(cells, field, ','))
      result.flags.push_back(static_cast<std::uint8_t>(std::stoi(field) != 0));
  }
  if (result.flags.size() != spec.cells()) throw std::runtime_error("flag cell count mismatch");
  return result;
}

inline void write_grid_csv(std::ostream& out, const TimeSpaceGrid& grid) {
  write_framed_csv(out, "sagwave-grid", grid.spec, grid.speeds, grid.mask);
}

inline TimeSpaceGrid read_grid_csv(std::istream& in) {
  FramedCsv f = read_framed_csv(in, "sagwave-grid");
  return TimeSpaceGrid{f.spec, std::move(f.values), std::move(f.flags)};
}

}  // namespace sagwave
