#include <cmath>

#include <gtest/gtest.h>

#include "affordance/geometry.hpp"
#include "fixtures.hpp"

using namespace affordance;
using fixtures::random_homography;
using fixtures::random_points;
using fixtures::through;

TEST(Homography, NormalizesScale) {
  Eigen::Matrix3d m;
  m << 2, 0, 4, 0, 2, 6, 0, 0, 2;
  const Homography h(m);
  EXPECT_EQ(h(2, 2), 1.0);
  EXPECT_EQ(h(0, 2), 2.0);
  EXPECT_THROW(Homography(Eigen::Matrix3d::Zero()), Error);
  Eigen::Matrix3d singular;
  singular << 1, 2, 3, 2, 4, 6, 0, 0, 1;
  EXPECT_THROW(Homography{singular}, Error);
}

TEST(Homography, JsonRoundTrip) {
  synthetic::Rng rng(1);
  const auto h = random_homography(rng);
  const auto back = homography_from_json(nlohmann::json::parse(to_json(h).dump()));
  EXPECT_EQ(back.row_major(), h.row_major());
  EXPECT_THROW(homography_from_json(nlohmann::json::array({1, 2})), Error);
}

TEST(Apply, IdentityAndTranslation) {
  EXPECT_EQ(apply(Homography::identity(), {3.5, 9}), (Point2D{3.5, 9}));
  EXPECT_EQ(apply(Homography::translation(5, 7), {1, 1}), (Point2D{6, 8}));
}

TEST(Apply, PointAtInfinity) {
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, 1, 0, 1, 0, 1;
  EXPECT_THROW(apply(Homography(m), {-1, 0}), Error);
}

TEST(Apply, InverseRoundTrip) {
  synthetic::Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto h = random_homography(rng);
    const auto inv = h.inverse();
    for (const auto& p : random_points(rng, 10)) {
      const auto q = apply(inv, apply(h, p));
      EXPECT_NEAR(q.u, p.u, 1e-9);
      EXPECT_NEAR(q.v, p.v, 1e-9);
    }
  }
}

TEST(Compose, AppliesFirstArgumentFirst) {
  const auto a = Homography::translation(1, 0);
  Eigen::Matrix3d s;
  s << 2, 0, 0, 0, 2, 0, 0, 0, 1;
  const Homography scale(s);
  EXPECT_EQ(apply(compose(a, scale), {1, 1}), (Point2D{4, 2}));
  EXPECT_EQ(apply(compose(scale, a), {1, 1}), (Point2D{3, 2}));
}

TEST(Compose, ChainMatchesStepwise) {
  synthetic::Rng rng(3);
  std::vector<Homography> steps;
  for (int i = 0; i < 9; ++i) steps.push_back(random_homography(rng));
  Homography chain = Homography::identity();
  for (const auto& h : steps) chain = compose(chain, h);
  for (const auto& p : random_points(rng, 20)) {
    Point2D q = p;
    for (const auto& h : steps) q = apply(h, q);
    const auto direct = apply(chain, p);
    EXPECT_NEAR(direct.u, q.u, 1e-6);
    EXPECT_NEAR(direct.v, q.v, 1e-6);
  }
}

TEST(Dlt, IdentityFromFourCorners) {
  const std::vector<Correspondence> c{{{0, 0}, {0, 0}}, {{100, 0}, {100, 0}}, {{100, 80}, {100, 80}},
                                      {{0, 80}, {0, 80}}};
  const auto h = estimate_homography_dlt(c);
  EXPECT_LE((h.matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Dlt, PureTranslation) {
  std::vector<Point2D> pts{{3, 4}, {50, 9}, {17, 60}, {80, 75}, {33, 33}, {7, 90}};
  const auto h = estimate_homography_dlt(through(Homography::translation(5, 7), pts));
  Eigen::Matrix3d expected;
  expected << 1, 0, 5, 0, 1, 7, 0, 0, 1;
  EXPECT_LE((h.matrix() - expected).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Dlt, RecoversRandomProjective) {
  synthetic::Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const auto truth = random_homography(rng);
    const auto pts = random_points(rng, 8);
    const auto est = estimate_homography_dlt(through(truth, pts));
    EXPECT_LE(fixtures::max_reprojection(est, truth, random_points(rng, 20)), 1e-6);
  }
}

TEST(Dlt, ScaleInvariance) {
  synthetic::Rng rng(5);
  const auto truth = random_homography(rng);
  const auto pts = random_points(rng, 10);
  auto corrs = through(truth, pts);
  const auto h1 = estimate_homography_dlt(corrs);
  for (auto& c : corrs) {
    c.src = {c.src.u * 3, c.src.v * 3};
    c.dst = {c.dst.u * 3, c.dst.v * 3};
  }
  const auto h3 = estimate_homography_dlt(corrs);
  for (const auto& p : pts) {
    const auto a = apply(h1, p);
    const auto b = apply(h3, {p.u * 3, p.v * 3});
    EXPECT_NEAR(b.u, 3 * a.u, 1e-6);
    EXPECT_NEAR(b.v, 3 * a.v, 1e-6);
  }
}

TEST(Dlt, Degenerate) {
  try {
    estimate_homography_dlt(std::vector<Correspondence>{{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{0, 1}, {0, 1}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "insufficient correspondences");
  }
  // Three of four collinear.
  EXPECT_THROW(estimate_homography_dlt(std::vector<Correspondence>{
                   {{0, 0}, {0, 0}}, {{1, 1}, {1, 1}}, {{2, 2}, {2, 2}}, {{0, 5}, {0, 5}}}),
               Error);
  // All points on one line.
  std::vector<Correspondence> line;
  for (int i = 0; i < 10; ++i) line.push_back({{double(i), 2.0 * i}, {double(i), 2.0 * i}});
  EXPECT_THROW(estimate_homography_dlt(line), Error);
}

TEST(Ransac, AllInliersMatchesDlt) {
  synthetic::Rng rng(6);
  const auto truth = random_homography(rng);
  const auto corrs = through(truth, random_points(rng, 30));
  const auto r = ransac_homography(corrs, {.rng_seed = 1});
  EXPECT_EQ(r.inliers.size(), 30u);
  const auto dlt = estimate_homography_dlt(corrs);
  EXPECT_LE((r.homography.matrix() - dlt.matrix()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ransac, PlantedOutliers) {
  synthetic::Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const auto trial = fixtures::outlier_trial(rng, 60, 40);
    const auto r = ransac_homography(trial.corrs, {.rng_seed = static_cast<std::uint64_t>(t)});
    EXPECT_LE(fixtures::max_reprojection(r.homography, trial.truth, trial.inlier_src), 0.5);
    std::size_t recovered = 0;
    for (auto i : r.inliers) {
      const auto& c = trial.corrs[i];
      const auto q = apply(trial.truth, c.src);
      recovered += std::hypot(q.u - c.dst.u, q.v - c.dst.v) < 1e-9;
    }
    EXPECT_GE(recovered, 58u);
  }
}

TEST(Ransac, NoisyInliers) {
  synthetic::Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto trial = fixtures::outlier_trial(rng, 60, 40, 0.1);
    const auto r = ransac_homography(trial.corrs, {.rng_seed = 99});
    EXPECT_LE(fixtures::max_reprojection(r.homography, trial.truth, trial.inlier_src), 0.5);
  }
}

TEST(Ransac, DeterministicForSeed) {
  synthetic::Rng rng(9);
  const auto trial = fixtures::outlier_trial(rng, 50, 50, 0.2);
  const auto a = ransac_homography(trial.corrs, {.rng_seed = 42});
  const auto b = ransac_homography(trial.corrs, {.rng_seed = 42});
  EXPECT_EQ(a.homography.row_major(), b.homography.row_major());
  EXPECT_EQ(a.inliers, b.inliers);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Ransac, Errors) {
  EXPECT_THROW(ransac_homography(std::vector<Correspondence>(3), {}), Error);
  synthetic::Rng rng(10);
  std::vector<Correspondence> junk;
  for (int i = 0; i < 30; ++i) junk.push_back({{rng.uniform(0, 640), rng.uniform(0, 480)}, {rng.uniform(0, 640), rng.uniform(0, 480)}});
  EXPECT_THROW(ransac_homography(junk, {.reproj_threshold = 0.5, .min_inliers = 12}), Error);
}

TEST(Lift, Examples) {
  const CameraIntrinsics k{500, 520, 320, 240};
  EXPECT_EQ(lift_to_3d({320, 240}, 1.5, k), (Point3D{0, 0, 1.5}));
  const auto x = lift_to_3d({320 + 500, 240}, 2, k);
  EXPECT_NEAR(x.x, 2, 1e-12);
  EXPECT_EQ(x.y, 0);
  EXPECT_EQ(x.z, 2);
  try {
    lift_to_3d({1, 1}, 0, k);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "invalid depth");
  }
  EXPECT_THROW(lift_to_3d({1, 1}, -1, k), Error);
}

TEST(Lift, RoundTrips) {
  synthetic::Rng rng(11);
  for (int t = 0; t < 1000; ++t) {
    const CameraIntrinsics k{rng.uniform(100, 2000), rng.uniform(100, 2000), rng.uniform(0, 1280),
                             rng.uniform(0, 960)};
    const Point2D p{rng.uniform(0, 1280), rng.uniform(0, 960)};
    const double depth = rng.uniform(0.1, 10);
    const auto q = project_to_pixel(lift_to_3d(p, depth, k), k);
    EXPECT_NEAR(q.u, p.u, 1e-9);
    EXPECT_NEAR(q.v, p.v, 1e-9);
    const Point3D x{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.1, 10)};
    const auto y = lift_to_3d(project_to_pixel(x, k), x.z, k);
    EXPECT_NEAR(y.x, x.x, 1e-9);
    EXPECT_NEAR(y.y, x.y, 1e-9);
    EXPECT_EQ(y.z, x.z);
  }
}
