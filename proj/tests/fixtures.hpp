#pragma once

#include <vector>

#include "affordance/geometry.hpp"
#include "affordance/synthetic.hpp"

namespace fixtures {

using namespace affordance;

/// Mildly projective homography for 640x480-scale images.
inline Homography random_homography(synthetic::Rng& rng) {
  Eigen::Matrix3d m;
  m << 1 + rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-20, 20),  //
      rng.uniform(-0.2, 0.2), 1 + rng.uniform(-0.2, 0.2), rng.uniform(-20, 20),   //
      rng.uniform(-1e-4, 1e-4), rng.uniform(-1e-4, 1e-4), 1.0;
  return Homography(m);
}

inline std::vector<Point2D> random_points(synthetic::Rng& rng, int n) {
  std::vector<Point2D> pts;
  for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(0, 640), rng.uniform(0, 480)});
  return pts;
}

inline std::vector<Correspondence> through(const Homography& h, const std::vector<Point2D>& pts) {
  std::vector<Correspondence> out;
  for (const auto& p : pts) out.push_back({p, apply(h, p)});
  return out;
}

inline double max_reprojection(const Homography& est, const Homography& truth, const std::vector<Point2D>& pts) {
  double worst = 0.0;
  for (const auto& p : pts) {
    const auto a = apply(est, p), b = apply(truth, p);
    worst = std::max(worst, std::hypot(a.u - b.u, a.v - b.v));
  }
  return worst;
}

struct OutlierTrial {
  std::vector<Correspondence> corrs;
  std::vector<Point2D> inlier_src;
  Homography truth;
};

/// `inliers` exact correspondences through a random H followed by `outliers`
/// uniform random pairs, shuffled together.
inline OutlierTrial outlier_trial(synthetic::Rng& rng, int inliers, int outliers, double noise = 0.0) {
  OutlierTrial t;
  t.truth = random_homography(rng);
  t.inlier_src = random_points(rng, inliers);
  for (const auto& p : t.inlier_src) {
    auto q = apply(t.truth, p);
    if (noise > 0) q = {q.u + noise * rng.normal(), q.v + noise * rng.normal()};
    t.corrs.push_back({p, q});
  }
  for (int i = 0; i < outliers; ++i) {
    t.corrs.push_back({{rng.uniform(0, 640), rng.uniform(0, 480)}, {rng.uniform(0, 640), rng.uniform(0, 480)}});
  }
  for (std::size_t i = t.corrs.size(); i > 1; --i) {
    std::swap(t.corrs[i - 1], t.corrs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  }
  return t;
}

}  // namespace fixtures
