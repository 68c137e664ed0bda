#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "affordance/image.hpp"
#include "affordance/types.hpp"

namespace affordance {

struct GaussianSpec {
  double sigma = 10.0;  // pixels at native resolution
  double amplitude = 1.0;

  bool valid() const {
    return std::isfinite(sigma) && std::isfinite(amplitude) && sigma > 0.0 && amplitude > 0.0;
  }
};

/// Maps with more pixels than this use a truncated evaluation window.
inline constexpr long kExactRenderPixels = 1024L * 1024L;
inline constexpr double kTruncationSigmas = 4.0;

/// Max-composed isotropic Gaussians centred on `points`, evaluated at integer
/// pixel positions.
inline Heatmap render_gaussian(std::span<const Point2D> points, const GaussianSpec& spec, int width,
                               int height) {
  if (!spec.valid()) throw Error(Errc::invalid_argument, "invalid Gaussian spec");
  if (width < 1 || height < 1) throw Error(Errc::invalid_argument, "invalid map size");
  if (points.empty()) throw Error(Errc::invalid_argument, "empty points");
  for (const auto& p : points) {
    if (!p.inside(width, height)) throw Error(Errc::invalid_argument, "point out of bounds");
  }

  Heatmap map(width, height, 0.0);
  const double inv_two_var = 1.0 / (2.0 * spec.sigma * spec.sigma);
  const bool truncate = static_cast<long>(width) * height > kExactRenderPixels;
  const double reach = kTruncationSigmas * spec.sigma;

  for (const auto& p : points) {
    int u0 = 0, u1 = width - 1, v0 = 0, v1 = height - 1;
    if (truncate) {
      u0 = std::max(0, static_cast<int>(std::floor(p.u - reach)));
      u1 = std::min(width - 1, static_cast<int>(std::ceil(p.u + reach)));
      v0 = std::max(0, static_cast<int>(std::floor(p.v - reach)));
      v1 = std::min(height - 1, static_cast<int>(std::ceil(p.v + reach)));
    }
    for (int v = v0; v <= v1; ++v) {
      const double dv = v - p.v;
      for (int u = u0; u <= u1; ++u) {
        const double du = u - p.u;
        const double value = spec.amplitude * std::exp(-(du * du + dv * dv) * inv_two_var);
        double& cell = map.at(u, v);
        cell = std::max(cell, value);
      }
    }
  }
  return map;
}

inline Heatmap render_gaussian(const std::vector<Point2D>& points, const GaussianSpec& spec, int width,
                               int height) {
  return render_gaussian(std::span<const Point2D>(points), spec, width, height);
}

/// Divides by the total mass. The largest cell absorbs the rounding residual,
/// computed below one ulp of 1, so the result sums to 1 to within ~1e-19.
inline ProbabilityMap normalize(const Heatmap& map) {
  check_heatmap(map);
  const double total = detail::compensated_sum(map.values());
  if (!(total > 0.0)) throw Error(Errc::degenerate, "zero-mass map");

  Heatmap out = map;
  for (double& x : out.values()) x /= total;

  // Raising goes to the first tied maximum and lowering to the last one, so the
  // smallest-index argmax is unchanged.
  const auto values = out.values();
  const auto first = std::max_element(values.begin(), values.end());
  const auto last = std::max_element(values.rbegin(), values.rend());
  for (int pass = 0; pass < 2; ++pass) {
    detail::CompensatedAccumulator acc;
    acc.add(1.0);
    for (double x : out.values()) acc.add(-x);
    const double residual = acc.value();
    if (residual == 0.0) break;
    double& peak = residual > 0.0 ? *first : *last;
    peak = std::max(0.0, peak + residual);
  }
  return ProbabilityMap(std::move(out));
}

/// Pixel of the maximum value; ties go to the smallest row-major index.
inline Point2D argmax_point(const Heatmap& map) {
  if (map.empty()) throw Error(Errc::invalid_argument, "empty map");
  std::size_t best = 0;
  for (std::size_t i = 1; i < map.size(); ++i) {
    if (map[i] > map[best]) best = i;
  }
  const auto w = static_cast<std::size_t>(map.width());
  return {static_cast<double>(best % w), static_cast<double>(best / w)};
}

inline Point2D argmax_point(const ProbabilityMap& map) { return argmax_point(map.map()); }

/// Corner-aligned bilinear resampling: output corners coincide with input corners.
inline Heatmap resample_bilinear(const Heatmap& map, int new_width, int new_height) {
  if (new_width < 1 || new_height < 1) throw Error(Errc::invalid_argument, "invalid resample size");
  if (new_width == map.width() && new_height == map.height()) return map;

  auto source_coord = [](int i, int n_out, int n_in) {
    if (n_out == 1) return 0.5 * (n_in - 1);
    return static_cast<double>(i) * (n_in - 1) / (n_out - 1);
  };

  Heatmap out(new_width, new_height, 0.0);
  for (int v = 0; v < new_height; ++v) {
    const double sv = source_coord(v, new_height, map.height());
    const int v0 = std::min(static_cast<int>(std::floor(sv)), map.height() - 1);
    const int v1 = std::min(v0 + 1, map.height() - 1);
    const double fv = sv - v0;
    for (int u = 0; u < new_width; ++u) {
      const double su = source_coord(u, new_width, map.width());
      const int u0 = std::min(static_cast<int>(std::floor(su)), map.width() - 1);
      const int u1 = std::min(u0 + 1, map.width() - 1);
      const double fu = su - u0;
      const double top = (1.0 - fu) * map.at(u0, v0) + fu * map.at(u1, v0);
      const double bottom = (1.0 - fu) * map.at(u0, v1) + fu * map.at(u1, v1);
      // Clamp guards the last-bit overshoot of the convex combination.
      const double lo = std::min({map.at(u0, v0), map.at(u1, v0), map.at(u0, v1), map.at(u1, v1)});
      const double hi = std::max({map.at(u0, v0), map.at(u1, v0), map.at(u0, v1), map.at(u1, v1)});
      out.at(u, v) = std::clamp((1.0 - fv) * top + fv * bottom, lo, hi);
    }
  }
  return out;
}

/// 8-bit grayscale view, min-max scaled. A constant map renders black.
inline Image to_grayscale(const Heatmap& map) {
  const auto [lo_it, hi_it] = std::minmax_element(map.values().begin(), map.values().end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  Image image(map.width(), map.height(), 1);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double t = range > 0.0 ? (map[i] - lo) / range : 0.0;
    image.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
  }
  return image;
}

/// Blends a red heat layer over `photo`. Opacity follows the min-max scaled map.
inline Image overlay(const Image& photo, const Heatmap& map, double max_opacity = 0.65) {
  check_same_shape(map, Grid<std::uint8_t>(photo.width, photo.height), "overlay");
  const Image heat = to_grayscale(map);
  Image out(photo.width, photo.height, 3);
  for (int v = 0; v < photo.height; ++v) {
    for (int u = 0; u < photo.width; ++u) {
      const auto rgb = photo.rgb(u, v);
      const double a = max_opacity * heat.at(u, v) / 255.0;
      const double tint[3] = {255.0, 32.0 * heat.at(u, v) / 255.0, 0.0};
      for (int c = 0; c < 3; ++c) {
        out.at(u, v, c) = static_cast<std::uint8_t>(std::lround((1.0 - a) * rgb[c] + a * tint[c]));
      }
    }
  }
  return out;
}

}  // namespace affordance
