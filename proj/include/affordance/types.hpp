#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace affordance {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  degenerate,
  io,
  parse,
  not_found,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

struct Point2D {
  double u = 0.0;  // column
  double v = 0.0;  // row

  bool finite() const { return std::isfinite(u) && std::isfinite(v); }
  bool inside(int width, int height) const {
    return finite() && u >= 0.0 && v >= 0.0 && u < width && v < height;
  }
  friend bool operator==(const Point2D&, const Point2D&) = default;
};

struct Point3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Point3D&, const Point3D&) = default;
};

struct ImageSize {
  int width = 0;
  int height = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

struct BBox {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;

  bool valid() const {
    return std::isfinite(u_min) && std::isfinite(v_min) && std::isfinite(u_max) &&
           std::isfinite(v_max) && u_min < u_max && v_min < v_max;
  }
  bool within(ImageSize size) const {
    return u_min >= 0.0 && v_min >= 0.0 && u_max <= size.width && v_max <= size.height;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Intersection of two boxes; the result is invalid() when they do not overlap.
inline BBox intersect(const BBox& a, const BBox& b) {
  return {std::max(a.u_min, b.u_min), std::max(a.v_min, b.v_min), std::min(a.u_max, b.u_max),
          std::min(a.v_max, b.v_max)};
}

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  bool valid() const {
    return std::isfinite(fx) && std::isfinite(fy) && fx > 0.0 && fy > 0.0 && std::isfinite(cx) &&
           std::isfinite(cy);
  }
};

/// Dense row-major 2D grid. Index (u, v) addresses column u of row v.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw Error(Errc::invalid_argument, "grid dimensions must be positive");
    }
    values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }
  Grid(int width, int height, std::vector<T> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (width < 1 || height < 1) {
      throw Error(Errc::invalid_argument, "grid dimensions must be positive");
    }
    if (values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(Errc::dimension_mismatch, "grid value count does not match width*height");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  ImageSize size2d() const noexcept { return {width_, height_}; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& at(int u, int v) { return values_[index(u, v)]; }
  const T& at(int u, int v) const { return values_[index(u, v)]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  const std::vector<T>& storage() const noexcept { return values_; }

  bool same_shape(const Grid& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  template <typename U>
  Grid<U> cast() const {
    std::vector<U> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = static_cast<U>(values_[i]);
    return Grid<U>(width_, height_, std::move(out));
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

/// Nonnegative finite score map (predictions and targets).
using Heatmap = Grid<double>;
/// Signed per-pixel map, e.g. loss gradients.
using GradientMap = Grid<double>;
/// Values in {0, 1}.
using BinaryMask = Grid<std::uint8_t>;

namespace detail {

/// Neumaier-compensated sum over a range, in index order.
template <typename Range>
double compensated_sum(const Range& values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double x : values) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      carry += (sum - t) + x;
    } else {
      carry += (x - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

class CompensatedAccumulator {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

}  // namespace detail

inline void check_same_shape(const auto& a, const auto& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(Errc::dimension_mismatch, std::string(what) + ": dimension mismatch (" +
                                              std::to_string(a.width()) + "x" +
                                              std::to_string(a.height()) + " vs " +
                                              std::to_string(b.width()) + "x" +
                                              std::to_string(b.height()) + ")");
  }
}

/// Throws unless every value is finite and nonnegative.
inline void check_heatmap(const Heatmap& map) {
  if (map.empty()) throw Error(Errc::invalid_argument, "empty heatmap");
  for (double x : map.values()) {
    if (!std::isfinite(x) || x < 0.0) {
      throw Error(Errc::invalid_argument, "heatmap values must be finite and nonnegative");
    }
  }
}

/// A heatmap whose values sum to one. Only constructible through checked paths.
class ProbabilityMap {
 public:
  static constexpr double kSumTolerance = 1e-9;

  /// Wraps a map that is already a distribution; throws if it is not.
  static ProbabilityMap from_normalized(Heatmap map) {
    check_heatmap(map);
    const double total = detail::compensated_sum(map.values());
    if (std::abs(total - 1.0) > kSumTolerance) {
      throw Error(Errc::invalid_argument, "map is not normalized (sum = " + std::to_string(total) + ")");
    }
    return ProbabilityMap(std::move(map));
  }

  const Heatmap& map() const noexcept { return map_; }
  int width() const noexcept { return map_.width(); }
  int height() const noexcept { return map_.height(); }
  std::span<const double> values() const noexcept { return map_.values(); }
  double operator[](std::size_t i) const { return map_[i]; }
  std::size_t size() const noexcept { return map_.size(); }

 private:
  explicit ProbabilityMap(Heatmap map) : map_(std::move(map)) {}
  friend ProbabilityMap normalize(const Heatmap& map);

  Heatmap map_;
};

}  // namespace affordance
