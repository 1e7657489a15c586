#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "sagwave/detector.hpp"
#include "sagwave/grid.hpp"
#include "sagwave/uq.hpp"

namespace sagwave {

enum class ScaleKind { grayscale, diverging, sequential };

struct ColorScale {
  ScaleKind kind = ScaleKind::grayscale;
  double min = 0.0;
  double max = 1.0;

  void validate() const {
    if (!(min < max)) throw std::invalid_argument("color scale: min must be < max");
  }
};

namespace detail {

inline const char* scale_name(ScaleKind kind) {
  switch (kind) {
    case ScaleKind::grayscale: return "grayscale";
    case ScaleKind::diverging: return "diverging";
    case ScaleKind::sequential: return "sequential";
  }
  return "?";
}

struct Rgb { std::uint8_t r, g, b; };

inline std::uint8_t lerp8(int a, int b, double u) {
  return static_cast<std::uint8_t>(std::lround(a + (b - a) * u));
}

// diverging: blue -> white -> red; sequential: white -> dark blue.
inline Rgb color_for(ScaleKind kind, double u) {
  if (kind == ScaleKind::diverging) {
    if (u < 0.5) {
      const double s = u / 0.5;
      return {lerp8(0, 255, s), lerp8(0, 255, s), 255};
    }
    const double s = (u - 0.5) / 0.5;
    return {255, lerp8(255, 0, s), lerp8(255, 0, s)};
  }
  return {lerp8(255, 0, u), lerp8(255, 0, u), lerp8(255, 128, u)};
}

// P5/P6 with a comment line recording scale and sentinel. Image row 0 is the
// most downstream grid row (space increases upward, as in time-space plots).
inline std::string render_values(const GridSpec& spec, const std::vector<double>& values,
                                 const std::vector<std::uint8_t>& valid, const ColorScale& scale) {
  scale.validate();
  if (spec.n_t == 0 || spec.n_x == 0 || values.empty()) throw std::invalid_argument("empty map");
  const bool gray = scale.kind == ScaleKind::grayscale;

  char header[256];
  std::snprintf(header, sizeof(header), "%s\n# scale=%s domain=[%g,%g] sentinel=%s\n%zu %zu\n255\n",
                gray ? "P5" : "P6", scale_name(scale.kind), scale.min, scale.max,
                gray ? "0" : "255,0,255", spec.n_t, spec.n_x);
  std::string out = header;
  out.reserve(out.size() + spec.cells() * (gray ? 1 : 3));

  for (std::size_t img_row = 0; img_row < spec.n_x; ++img_row) {
    const std::size_t grid_row = spec.n_x - 1 - img_row;
    for (std::size_t col = 0; col < spec.n_t; ++col) {
      const std::size_t idx = grid_row * spec.n_t + col;
      if (!valid[idx]) {
        if (gray) out.push_back('\0');
        else { out.push_back(char(255)); out.push_back('\0'); out.push_back(char(255)); }
        continue;
      }
      double u = (values[idx] - scale.min) / (scale.max - scale.min);
      u = std::clamp(u, 0.0, 1.0);
      if (gray) {
        out.push_back(static_cast<char>(std::lround(u * 255.0)));
      } else {
        const Rgb c = color_for(scale.kind, u);
        out.push_back(static_cast<char>(c.r));
        out.push_back(static_cast<char>(c.g));
        out.push_back(static_cast<char>(c.b));
      }
    }
  }
  return out;
}

}  // namespace detail

inline std::string render_grid(const TimeSpaceGrid& grid, const ColorScale& scale) {
  return detail::render_values(grid.spec, grid.speeds, grid.mask, scale);
}

inline std::string render_activation(const ActivationMap& map,
                                     ColorScale scale = {ScaleKind::diverging, -1.0, 1.0}) {
  return detail::render_values(map.spec, map.values, map.valid, scale);
}

inline std::string render_probability(const ProbabilityMap& pm,
                                      ColorScale scale = {ScaleKind::sequential, 0.0, 1.0}) {
  return detail::render_values(pm.spec, pm.probs, pm.valid, scale);
}

// Activation rendering with SAG-classified cells at full saturation and all
// other valid cells dimmed by the documented factor 0.4.
inline std::string boost_overlay(const ActivationMap& map, double epsilon) {
  const ColorScale scale{ScaleKind::diverging, -1.0, 1.0};
  std::string img = detail::render_values(map.spec, map.values, map.valid, scale);
  const std::size_t pixel_start = img.size() - map.spec.cells() * 3;
  constexpr double kDimFactor = 0.4;

  for (std::size_t img_row = 0; img_row < map.spec.n_x; ++img_row) {
    const std::size_t grid_row = map.spec.n_x - 1 - img_row;
    for (std::size_t col = 0; col < map.spec.n_t; ++col) {
      const std::size_t idx = grid_row * map.spec.n_t + col;
      if (!map.valid[idx]) continue;
      if (map.values[idx] >= epsilon) continue;  // classified as SAG, keep full
      const std::size_t p = pixel_start + (img_row * map.spec.n_t + col) * 3;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const auto v = static_cast<std::uint8_t>(img[p + ch]);
        img[p + ch] = static_cast<char>(std::lround(v * kDimFactor));
      }
    }
  }
  return img;
}

}  // namespace sagwave
