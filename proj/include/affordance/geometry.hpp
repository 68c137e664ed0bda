#pragma once

// Planar projective geometry: normalized DLT, RANSAC, chaining, point transfer,
// and pinhole back-projection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "affordance/types.hpp"

namespace affordance {

/// 3x3 projective transform, stored with m(2,2) == 1 when that entry is
/// nonzero and unit Frobenius norm otherwise.
class Homography {
 public:
  static constexpr double kSingularTolerance = 1e-12;
  static constexpr double kInfinityTolerance = 1e-12;

  Homography() : m_(Eigen::Matrix3d::Identity()) {}

  explicit Homography(const Eigen::Matrix3d& m) : m_(m) {
    if (!m_.allFinite()) throw Error(Errc::invalid_argument, "homography has non-finite entries");
    const double norm = m_.norm();
    if (!(norm > 0.0)) throw Error(Errc::degenerate, "degenerate homography (zero matrix)");
    if (std::abs((m_ / norm).determinant()) <= kSingularTolerance) {
      throw Error(Errc::degenerate, "degenerate homography (singular matrix)");
    }
    if (std::abs(m_(2, 2)) > kSingularTolerance * norm) {
      m_ /= m_(2, 2);
    } else {
      m_ /= norm;
    }
  }

  static Homography identity() { return Homography(); }

  static Homography translation(double du, double dv) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 2) = du;
    m(1, 2) = dv;
    return Homography(m);
  }

  const Eigen::Matrix3d& matrix() const noexcept { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Homography inverse() const { return Homography(m_.inverse()); }

  std::array<double, 9> row_major() const {
    std::array<double, 9> out{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(3 * r + c)] = m_(r, c);
    return out;
  }

  static Homography from_row_major(std::span<const double> values) {
    if (values.size() != 9) throw Error(Errc::parse, "homography needs 9 values");
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = values[static_cast<std::size_t>(3 * r + c)];
    return Homography(m);
  }

 private:
  Eigen::Matrix3d m_;
};

inline nlohmann::json to_json(const Homography& h) { return h.row_major(); }

inline Homography homography_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 9) throw Error(Errc::parse, "homography must be a 9-number array");
  std::array<double, 9> values{};
  for (std::size_t i = 0; i < 9; ++i) values[i] = j[i].get<double>();
  return Homography::from_row_major(values);
}

/// Maps `p` through `h`; throws when the point maps to infinity.
inline Point2D apply(const Homography& h, const Point2D& p) {
  const Eigen::Vector3d x = h.matrix() * Eigen::Vector3d(p.u, p.v, 1.0);
  if (std::abs(x.z()) <= Homography::kInfinityTolerance) {
    throw Error(Errc::degenerate, "point maps to infinity");
  }
  return {x.x() / x.z(), x.y() / x.z()};
}

/// Transform taking frame a to frame c, given a->b and b->c.
inline Homography compose(const Homography& h_ab, const Homography& h_bc) {
  return Homography(h_bc.matrix() * h_ab.matrix());
}

struct Correspondence {
  Point2D src;
  Point2D dst;
};

namespace detail {

/// Similarity taking points to zero centroid and mean distance sqrt(2).
inline Eigen::Matrix3d hartley_transform(std::span<const Point2D> pts) {
  double cu = 0.0, cv = 0.0;
  for (const auto& p : pts) {
    cu += p.u;
    cv += p.v;
  }
  cu /= static_cast<double>(pts.size());
  cv /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += std::hypot(p.u - cu, p.v - cv);
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 0.0)) throw Error(Errc::degenerate, "degenerate configuration (coincident points)");
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * cu, 0.0, s, -s * cv, 0.0, 0.0, 1.0;
  return t;
}

inline Point2D transform(const Eigen::Matrix3d& t, const Point2D& p) {
  const Eigen::Vector3d x = t * Eigen::Vector3d(p.u, p.v, 1.0);
  return {x.x() / x.z(), x.y() / x.z()};
}

inline bool collinear(const Point2D& a, const Point2D& b, const Point2D& c, double tol) {
  const double cross = (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
  return std::abs(cross) <= tol;
}

/// True when any three of the (normalized) points are collinear.
inline bool has_collinear_triple(std::span<const Point2D> pts, double tol = 1e-9) {
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      for (std::size_t k = j + 1; k < pts.size(); ++k)
        if (collinear(pts[i], pts[j], pts[k], tol)) return true;
  return false;
}

}  // namespace detail

/// Least-squares homography by the normalized direct linear transform.
inline Homography estimate_homography_dlt(std::span<const Correspondence> corrs) {
  if (corrs.size() < 4) throw Error(Errc::invalid_argument, "insufficient correspondences");
  std::vector<Point2D> src, dst;
  src.reserve(corrs.size());
  dst.reserve(corrs.size());
  for (const auto& c : corrs) {
    if (!c.src.finite() || !c.dst.finite()) throw Error(Errc::invalid_argument, "non-finite correspondence");
    src.push_back(c.src);
    dst.push_back(c.dst);
  }
  const Eigen::Matrix3d ts = detail::hartley_transform(src);
  const Eigen::Matrix3d td = detail::hartley_transform(dst);
  for (auto& p : src) p = detail::transform(ts, p);
  for (auto& p : dst) p = detail::transform(td, p);

  if (corrs.size() == 4 && (detail::has_collinear_triple(src) || detail::has_collinear_triple(dst))) {
    throw Error(Errc::degenerate, "degenerate configuration (collinear points)");
  }

  const auto n = static_cast<Eigen::Index>(corrs.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = src[static_cast<std::size_t>(i)].u, y = src[static_cast<std::size_t>(i)].v;
    const double xp = dst[static_cast<std::size_t>(i)].u, yp = dst[static_cast<std::size_t>(i)].v;
    a.row(2 * i) << -x, -y, -1.0, 0.0, 0.0, 0.0, xp * x, xp * y, xp;
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, -x, -y, -1.0, yp * x, yp * y, yp;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // A solution is unique only if the constraint matrix has rank 8.
  if (sv.size() < 8 || sv(7) <= 1e-10 * sv(0)) {
    throw Error(Errc::degenerate, "degenerate configuration (rank deficient)");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(td.inverse() * hn * ts);
}

inline Homography estimate_homography_dlt(const std::vector<Correspondence>& corrs) {
  return estimate_homography_dlt(std::span<const Correspondence>(corrs));
}

struct RansacParams {
  double reproj_threshold = 3.0;
  int max_iterations = 2000;
  double confidence = 0.99;
  int min_inliers = 8;
  std::uint64_t rng_seed = 0;

  void check() const {
    const bool ok = std::isfinite(reproj_threshold) && reproj_threshold > 0.0 && max_iterations >= 1 &&
                    confidence > 0.0 && confidence < 1.0 && min_inliers >= 4;
    if (!ok) throw Error(Errc::invalid_argument, "invalid RANSAC parameters");
  }
};

struct RansacResult {
  Homography homography;
  std::vector<std::size_t> inliers;  // ascending indices into the input
  int iterations = 0;
};

/// Mean of forward and backward transfer distances; infinity if either
/// direction maps to infinity.
inline double symmetric_transfer_error(const Homography& h, const Homography& h_inv, const Correspondence& c) {
  try {
    const Point2D fwd = apply(h, c.src);
    const Point2D bwd = apply(h_inv, c.dst);
    return 0.5 * (std::hypot(fwd.u - c.dst.u, fwd.v - c.dst.v) + std::hypot(bwd.u - c.src.u, bwd.v - c.src.v));
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

namespace detail {

inline std::vector<std::size_t> inliers_of(const Homography& h, std::span<const Correspondence> corrs,
                                           double threshold) {
  std::vector<std::size_t> out;
  const Homography h_inv = h.inverse();
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (symmetric_transfer_error(h, h_inv, corrs[i]) <= threshold) out.push_back(i);
  }
  return out;
}

inline std::vector<Correspondence> select(std::span<const Correspondence> corrs,
                                          const std::vector<std::size_t>& idx) {
  std::vector<Correspondence> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(corrs[i]);
  return out;
}

}  // namespace detail

/// Robust homography: 4-point hypotheses scored by symmetric transfer error,
/// adaptive stopping at `confidence`, final DLT refit on the consensus set.
/// Deterministic for a given rng_seed.
inline RansacResult ransac_homography(std::span<const Correspondence> corrs, const RansacParams& params) {
  params.check();
  if (corrs.size() < 4) throw Error(Errc::invalid_argument, "insufficient correspondences");

  std::mt19937_64 rng(params.rng_seed);
  const std::size_t n = corrs.size();
  std::vector<std::size_t> best;
  std::optional<Homography> best_h;
  double needed = static_cast<double>(params.max_iterations);
  int iter = 0;

  for (; iter < params.max_iterations && iter < needed; ++iter) {
    std::array<std::size_t, 4> sample{};
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        sample[k] = static_cast<std::size_t>(rng() % n);
        fresh = std::find(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(k), sample[k]) ==
                sample.begin() + static_cast<std::ptrdiff_t>(k);
      }
    }
    const std::array<Correspondence, 4> minimal{corrs[sample[0]], corrs[sample[1]], corrs[sample[2]],
                                                corrs[sample[3]]};
    std::optional<Homography> h;
    std::vector<std::size_t> inliers;
    try {
      h = estimate_homography_dlt(std::span<const Correspondence>(minimal));
      inliers = detail::inliers_of(*h, corrs, params.reproj_threshold);
    } catch (const Error&) {
      continue;  // degenerate sample or non-invertible hypothesis
    }
    if (inliers.size() > best.size()) {
      best = std::move(inliers);
      best_h = h;
      const double w = static_cast<double>(best.size()) / static_cast<double>(n);
      const double p_fail = 1.0 - std::pow(w, 4.0);
      if (p_fail <= 0.0) {
        needed = 0.0;
      } else {
        needed = std::min<double>(params.max_iterations, std::log(1.0 - params.confidence) / std::log(p_fail));
      }
    }
  }

  if (!best_h || best.size() < static_cast<std::size_t>(params.min_inliers)) {
    throw Error(Errc::degenerate, "no model with enough inliers (" + std::to_string(best.size()) + " < " +
                                      std::to_string(params.min_inliers) + ")");
  }

  Homography refit = estimate_homography_dlt(detail::select(corrs, best));
  auto refit_inliers = detail::inliers_of(refit, corrs, params.reproj_threshold);
  if (refit_inliers.size() > best.size()) {
    best = std::move(refit_inliers);
    refit = estimate_homography_dlt(detail::select(corrs, best));
  }
  return {refit, std::move(best), iter};
}

inline RansacResult ransac_homography(const std::vector<Correspondence>& corrs, const RansacParams& params) {
  return ransac_homography(std::span<const Correspondence>(corrs), params);
}

// --- Pinhole camera ------------------------------------------------------------

/// Back-projects pixel `p` at metric `depth` along its camera ray.
inline Point3D lift_to_3d(const Point2D& p, double depth, const CameraIntrinsics& k) {
  if (!std::isfinite(depth) || depth <= 0.0) throw Error(Errc::invalid_argument, "invalid depth");
  if (!k.valid()) throw Error(Errc::invalid_argument, "invalid intrinsics");
  if (!p.finite()) throw Error(Errc::invalid_argument, "non-finite pixel");
  return {(p.u - k.cx) * depth / k.fx, (p.v - k.cy) * depth / k.fy, depth};
}

inline Point2D project_to_pixel(const Point3D& x, const CameraIntrinsics& k) {
  if (!(x.z > 0.0)) throw Error(Errc::invalid_argument, "point behind camera");
  return {k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy};
}

}  // namespace affordance
