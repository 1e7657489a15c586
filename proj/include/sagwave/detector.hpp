#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "sagwave/grid.hpp"

namespace sagwave {

// Diagonal edge kernel for upstream-propagating speed-dip waves.
// 3 rows (space, row 0 = most downstream) x (w+4) columns (time).
struct Kernel {
  int width = 4;                 // seconds, at 1 s per grid column
  std::vector<double> weights;   // 3 x (width+4), row-major

  int cols() const { return width + 4; }
  double at(int row, int col) const { return weights[row * cols() + col]; }
};

// Base row [0, -1 x w, 0, +w/2, +w/2]; rows 1 and 2 are circular right
// shifts. Every row sums to zero, so constant speed fields never fire.
inline Kernel build_kernel(int width) {
  if (width < 2 || width % 2 != 0) throw std::invalid_argument("unsupported width");
  Kernel k;
  k.width = width;
  const int n = k.cols();
  std::vector<double> base(n, 0.0);
  for (int c = 1; c <= width; ++c) base[c] = -1.0;
  base[width + 2] = base[width + 3] = width / 2.0;
  k.weights.resize(3 * n);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < n; ++col)
      k.weights[row * n + col] = base[(col - row + n) % n];
  return k;
}

struct DetectorConfig {
  int width = 4;
  double epsilon = 0.30;
  double v_ref = 33.3;  // m/s; normalization reference, free-flow speed by default

  void validate() const {
    if (epsilon <= 0.0 || epsilon >= 1.0) throw std::invalid_argument("epsilon must be in (0, 1)");
    if (v_ref <= 0.0) throw std::invalid_argument("v_ref must be positive");
  }
};

struct ActivationMap {
  GridSpec spec;
  std::vector<double> values;       // in [-1, 1] where valid
  std::vector<std::uint8_t> valid;  // 0 where window crosses boundary or unmasked cells
  std::size_t clamp_warnings = 0;   // cells clamped because speeds exceeded v_ref

  double at(std::size_t row, std::size_t col) const { return values[row * spec.n_t + col]; }
  bool is_valid(std::size_t row, std::size_t col) const { return valid[row * spec.n_t + col] != 0; }
};

struct BinaryMap {
  GridSpec spec;
  std::vector<std::uint8_t> indicators;
  std::vector<std::uint8_t> valid;

  bool flagged(std::size_t row, std::size_t col) const { return indicators[row * spec.n_t + col] != 0; }
};

// Normalized cross-correlation of the kernel with each fully masked window.
// Windows span 3 rows centered on the target row and w+4 columns with the
// extra column on the earlier-time side. Kernel row 0 is the most downstream
// row of the window (larger row index), encoding the negative-slope wave.
// Normalizer is the theoretical maximum response 3*w*v_ref.
inline ActivationMap kernel_activation(const TimeSpaceGrid& grid, const DetectorConfig& config) {
  config.validate();
  const Kernel kernel = build_kernel(config.width);
  const std::size_t w_cols = static_cast<std::size_t>(kernel.cols());
  const std::size_t half = w_cols / 2;
  if (grid.spec.n_x < 3 || grid.spec.n_t < w_cols) throw std::invalid_argument("grid too small");

  ActivationMap map;
  map.spec = grid.spec;
  map.values.assign(grid.spec.cells(), 0.0);
  map.valid.assign(grid.spec.cells(), 0);
  const double norm = 3.0 * config.width * config.v_ref;

  for (std::size_t row = 1; row + 1 < grid.spec.n_x; ++row) {
    for (std::size_t col = half; col + half - 1 < grid.spec.n_t; ++col) {
      bool covered = true;
      for (std::size_t r = row - 1; r <= row + 1 && covered; ++r)
        for (std::size_t c = col - half; c < col + half && covered; ++c)
          covered = grid.masked(r, c);
      if (!covered) continue;

      double response = 0.0;
      for (int kr = 0; kr < 3; ++kr) {
        const std::size_t grid_row = row + 1 - static_cast<std::size_t>(kr);
        for (std::size_t kc = 0; kc < w_cols; ++kc)
          response += kernel.at(kr, static_cast<int>(kc)) * grid.speed(grid_row, col - half + kc);
      }
      double value = response / norm;
      if (value > 1.0) { value = 1.0; ++map.clamp_warnings; }
      if (value < -1.0) { value = -1.0; ++map.clamp_warnings; }
      map.values[row * grid.spec.n_t + col] = value;
      map.valid[row * grid.spec.n_t + col] = 1;
    }
  }
  return map;
}

// C_{t,x} = 1 where the valid activation is >= epsilon.
inline BinaryMap classify(const ActivationMap& activation, double epsilon) {
  BinaryMap out;
  out.spec = activation.spec;
  out.valid = activation.valid;
  out.indicators.assign(activation.values.size(), 0);
  for (std::size_t i = 0; i < activation.values.size(); ++i)
    if (activation.valid[i] && activation.values[i] >= epsilon) out.indicators[i] = 1;
  return out;
}

inline void write_activation_csv(std::ostream& out, const ActivationMap& map) {
  write_framed_csv(out, "sagwave-activation", map.spec, map.values, map.valid);
}

inline ActivationMap read_activation_csv(std::istream& in) {
  FramedCsv f = read_framed_csv(in, "sagwave-activation");
  return ActivationMap{f.spec, std::move(f.values), std::move(f.flags), 0};
}

inline void write_binary_csv(std::ostream& out, const BinaryMap& map) {
  std::vector<double> values(map.indicators.begin(), map.indicators.end());
  write_framed_csv(out, "sagwave-binary", map.spec, values, map.valid);
}

inline BinaryMap read_binary_csv(std::istream& in) {
  FramedCsv f = read_framed_csv(in, "sagwave-binary");
  BinaryMap map;
  map.spec = f.spec;
  map.valid = std::move(f.flags);
  map.indicators.resize(f.values.size());
  for (std::size_t i = 0; i < f.values.size(); ++i)
    map.indicators[i] = static_cast<std::uint8_t>(f.values[i] != 0.0);
  return map;
}

}  // namespace sagwave
