#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sagwave/grid.hpp"
#include "sagwave/trajectory.hpp"

namespace sagwave {

struct DetectorBin {
  double t_start = 0.0;               // s, multiple of bin_duration
  int flow = 0;                       // vehicles per bin
  double occupancy = 0.0;             // fraction of bin in [0, 1]
  std::optional<double> mean_speed;   // m/s, missing iff flow == 0
};

// PeMS-style 30-second aggregates at a fixed station.
struct DetectorSeries {
  std::string station_id;
  double position = 0.0;      // m along corridor
  double bin_duration = 30.0; // s
  std::vector<DetectorBin> bins;
};

inline bool operator==(const DetectorBin& a, const DetectorBin& b) {
  return a.t_start == b.t_start && a.flow == b.flow && a.occupancy == b.occupancy &&
         a.mean_speed == b.mean_speed;
}

inline bool operator==(const DetectorSeries& a, const DetectorSeries& b) {
  return a.station_id == b.station_id && a.position == b.position &&
         a.bin_duration == b.bin_duration && a.bins == b.bins;
}

struct RejectedRow {
  std::size_t line_number = 0;
  std::string text;
  std::string reason;
};

struct DetectorParseResult {
  std::vector<DetectorSeries> series;
  std::vector<RejectedRow> rejects;
};

inline const char* kDetectorCsvHeader = "station_id,position_m,t_start_s,flow_veh,occupancy,speed_mps";

inline void write_detector_csv(std::ostream& out, const std::vector<DetectorSeries>& series) {
  out << kDetectorCsvHeader << '\n';
  char buf[256];
  for (const auto& s : series) {
    for (const auto& b : s.bins) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%d,%.6f,", s.station_id.c_str(), s.position,
                    b.t_start, b.flow, b.occupancy);
      out << buf;
      if (b.mean_speed) {
        std::snprintf(buf, sizeof(buf), "%.6f", *b.mean_speed);
        out << buf;
      }
      out << '\n';
    }
  }
}

// Malformed rows land in the rejects report instead of being dropped.
// Structural problems (bad header, unsorted timestamps) are errors.
inline DetectorParseResult parse_detector_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kDetectorCsvHeader)
    throw std::runtime_error("bad header");

  DetectorParseResult result;
  std::map<std::string, std::size_t> index;  // station_id -> series slot
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string station, pos_s, t_s, flow_s, occ_s, speed_s;
    const bool shaped = std::getline(row, station, ',') && std::getline(row, pos_s, ',') &&
                        std::getline(row, t_s, ',') && std::getline(row, flow_s, ',') &&
                        std::getline(row, occ_s, ',');
    std::getline(row, speed_s);  // may legitimately be empty
    if (!shaped || station.empty()) {
      result.rejects.push_back({line_number, line, "short row"});
      continue;
    }
    DetectorBin bin;
    double position = 0.0;
    try {
      position = std::stod(pos_s);
      bin.t_start = std::stod(t_s);
      bin.flow = std::stoi(flow_s);
      bin.occupancy = std::stod(occ_s);
      if (!speed_s.empty()) bin.mean_speed = std::stod(speed_s);
    } catch (const std::exception&) {
      result.rejects.push_back({line_number, line, "unparseable field"});
      continue;
    }
    if (bin.flow < 0 || bin.occupancy < 0.0 || bin.occupancy > 1.0) {
      result.rejects.push_back({line_number, line, "out-of-range field"});
      continue;
    }
    if ((bin.flow == 0) != !bin.mean_speed) {
      result.rejects.push_back({line_number, line, "speed/flow mismatch"});
      continue;
    }
    auto it = index.find(station);
    if (it == index.end()) {
      index.emplace(station, result.series.size());
      result.series.push_back(DetectorSeries{station, position, 30.0, {}});
      it = index.find(station);
    }
    DetectorSeries& series = result.series[it->second];
    if (!series.bins.empty() && bin.t_start <= series.bins.back().t_start)
      throw std::runtime_error("unsorted input");
    series.bins.push_back(bin);
  }
  for (auto& s : result.series)
    if (s.bins.size() >= 2) s.bin_duration = s.bins[1].t_start - s.bins[0].t_start;
  return result;
}

// Emits PeMS-like readings from simulated trajectories. A vehicle is counted
// when its position crosses the station between consecutive samples; the
// crossing speed is the arriving sample's speed. Per bin: flow = crossing
// count, mean speed = harmonic mean (space-mean), occupancy =
// sum(vehicle_length / crossing_speed) / bin_duration capped at 1.
inline std::vector<DetectorSeries> virtual_detectors(const std::vector<Trajectory>& trajectories,
                                                     const std::vector<double>& positions,
                                                     double bin_duration = 30.0,
                                                     double vehicle_length = 5.0,
                                                     std::optional<double> ring_length = {}) {
  double t_min = 0.0, t_max = 0.0;
  bool any = false;
  for (const auto& traj : trajectories) {
    if (traj.samples.empty()) continue;
    if (!any) {
      t_min = traj.samples.front().t;
      t_max = traj.samples.back().t;
      any = true;
    } else {
      t_min = std::min(t_min, traj.samples.front().t);
      t_max = std::max(t_max, traj.samples.back().t);
    }
  }
  const long first_bin = any ? static_cast<long>(std::floor(t_min / bin_duration)) : 0;
  const long last_bin = any ? static_cast<long>(std::floor(t_max / bin_duration)) : -1;
  const std::size_t n_bins = static_cast<std::size_t>(std::max<long>(0, last_bin - first_bin + 1));

  std::vector<DetectorSeries> out;
  for (std::size_t si = 0; si < positions.size(); ++si) {
    DetectorSeries series;
    series.station_id = "vd" + std::to_string(si);
    series.position = positions[si];
    series.bin_duration = bin_duration;
    series.bins.resize(n_bins);
    std::vector<double> inv_speed_sum(n_bins, 0.0);
    for (std::size_t b = 0; b < n_bins; ++b)
      series.bins[b].t_start = static_cast<double>(first_bin + static_cast<long>(b)) * bin_duration;

    const double p = positions[si];
    for (const auto& traj : trajectories) {
      for (std::size_t k = 1; k < traj.samples.size(); ++k) {
        const auto& a = traj.samples[k - 1];
        const auto& b = traj.samples[k];
        bool crossed;
        if (ring_length && b.x < a.x) {
          crossed = p > a.x || p <= b.x;  // segment wraps around the ring
        } else {
          crossed = a.x < p && p <= b.x;
        }
        if (!crossed || b.v <= 0.0) continue;
        const long bin = static_cast<long>(std::floor(b.t / bin_duration)) - first_bin;
        if (bin < 0 || bin >= static_cast<long>(n_bins)) continue;
        series.bins[bin].flow += 1;
        inv_speed_sum[bin] += 1.0 / b.v;
      }
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
      auto& bin = series.bins[b];
      if (bin.flow > 0) {
        bin.mean_speed = static_cast<double>(bin.flow) / inv_speed_sum[b];
        bin.occupancy = std::min(1.0, vehicle_length * inv_speed_sum[b] / bin_duration);
      }
    }
    out.push_back(std::move(series));
  }
  return out;
}

// Coarse comparison grid: every cell copies the nearest station's containing
// bin speed; only rows that physically contain a station are masked.
inline TimeSpaceGrid series_to_grid(const std::vector<DetectorSeries>& series,
                                    const GridSpec& spec) {
  if (series.empty()) throw std::invalid_argument("no detector series");
  spec.validate();
  TimeSpaceGrid grid;
  grid.spec = spec;
  grid.speeds.assign(spec.cells(), 0.0);
  grid.mask.assign(spec.cells(), 0);

  for (std::size_t row = 0; row < spec.n_x; ++row) {
    const double x_center = spec.x0 + (static_cast<double>(row) + 0.5) * spec.dx;
    std::size_t nearest = 0;
    double best = std::abs(series[0].position - x_center);
    for (std::size_t si = 1; si < series.size(); ++si) {
      const double dist = std::abs(series[si].position - x_center);
      if (dist < best || (dist == best && series[si].position > series[nearest].position)) {
        best = dist;
        nearest = si;
      }
    }
    const DetectorSeries& s = series[nearest];
    bool row_has_station = false;
    for (const auto& st : series) {
      if (st.position >= spec.x0 + static_cast<double>(row) * spec.dx &&
          st.position < spec.x0 + (static_cast<double>(row) + 1) * spec.dx)
        row_has_station = true;
    }
    for (std::size_t col = 0; col < spec.n_t; ++col) {
      const double t = spec.t0 + (static_cast<double>(col) + 0.5) * spec.dt;
      double speed = 0.0;
      for (const auto& bin : s.bins) {
        if (t >= bin.t_start && t < bin.t_start + s.bin_duration) {
          speed = bin.mean_speed.value_or(0.0);
          break;
        }
      }
      grid.speed(row, col) = speed;
      if (row_has_station) grid.mask[row * spec.n_t + col] = 1;
    }
  }
  return grid;
}

inline void write_rejects_report(std::ostream& out, const std::vector<RejectedRow>& rejects) {
  out << "line,reason,text\n";
  for (const auto& r : rejects) out << r.line_number << ',' << r.reason << ",\"" << r.text << "\"\n";
}

}  // namespace sagwave
