#pragma once

// Semi-automatic affordable-point annotation from a short clip:
//   1. skin pixels inside the hand/object box overlap of the contact frame
//      become contact points (one centroid per connected blob);
//   2. consecutive frames (contact, o_n, ..., o_1) are matched outside the
//      dynamic hand/object regions and linked by RANSAC homographies;
//   3. the composed chain carries the contact points back to o_1, where the
//      hand does not yet occlude the object.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordance/geometry.hpp"
#include "affordance/image.hpp"
#include "affordance/record.hpp"
#include "affordance/types.hpp"

namespace affordance {

// --- Skin classification -------------------------------------------------------

class SkinRule {
 public:
  virtual ~SkinRule() = default;
  virtual bool is_skin(std::uint8_t r, std::uint8_t g, std::uint8_t b) const = 0;
};

/// Box classifier in the YCbCr chroma plane (BT.601, full range).
class YCbCrSkinRule final : public SkinRule {
 public:
  double cb_min = 77.0, cb_max = 127.0;
  double cr_min = 133.0, cr_max = 173.0;

  bool is_skin(std::uint8_t r, std::uint8_t g, std::uint8_t b) const override {
    const double cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    const double cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    return cb >= cb_min && cb <= cb_max && cr >= cr_min && cr <= cr_max;
  }
};

struct SkinConfig {
  /// Components smaller than this many pixels are discarded.
  int min_area = 20;
};

namespace detail {

/// Inclusive integer pixel range covered by [lo, hi], clipped to [0, n).
inline std::pair<int, int> pixel_span(double lo, double hi, int n) {
  const int a = std::max(0, static_cast<int>(std::ceil(lo)));
  const int b = std::min(n - 1, static_cast<int>(std::floor(hi)));
  return {a, b};
}

}  // namespace detail

/// Centroids of 4-connected skin components inside the box overlap, largest
/// component first (ties by first pixel in row-major order).
inline std::vector<Point2D> detect_skin_contact(const Image& contact_image, const BBox& hand_bbox,
                                                const BBox& object_bbox, const SkinRule& rule,
                                                const SkinConfig& cfg = {}) {
  const BBox overlap = intersect(hand_bbox, object_bbox);
  if (!hand_bbox.valid() || !object_bbox.valid() || !overlap.valid()) {
    throw Error(Errc::degenerate, "no overlap region");
  }
  const auto [u0, u1] = detail::pixel_span(overlap.u_min, overlap.u_max, contact_image.width);
  const auto [v0, v1] = detail::pixel_span(overlap.v_min, overlap.v_max, contact_image.height);
  if (u0 > u1 || v0 > v1) throw Error(Errc::degenerate, "no overlap region");

  const int w = u1 - u0 + 1;
  const int h = v1 - v0 + 1;
  std::vector<std::int8_t> skin(static_cast<std::size_t>(w) * h, 0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const auto rgb = contact_image.rgb(u0 + u, v0 + v);
      skin[static_cast<std::size_t>(v) * w + u] = rule.is_skin(rgb[0], rgb[1], rgb[2]) ? 1 : 0;
    }
  }

  struct Blob {
    std::size_t area = 0;
    std::size_t first = 0;
    double sum_u = 0.0, sum_v = 0.0;
  };
  std::vector<Blob> blobs;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < skin.size(); ++start) {
    if (skin[start] != 1) continue;
    Blob blob;
    blob.first = start;
    skin[start] = -1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      const int u = static_cast<int>(idx % static_cast<std::size_t>(w));
      const int v = static_cast<int>(idx / static_cast<std::size_t>(w));
      ++blob.area;
      blob.sum_u += u0 + u;
      blob.sum_v += v0 + v;
      const int nbr[4][2] = {{u - 1, v}, {u + 1, v}, {u, v - 1}, {u, v + 1}};
      for (const auto& n : nbr) {
        if (n[0] < 0 || n[1] < 0 || n[0] >= w || n[1] >= h) continue;
        const std::size_t j = static_cast<std::size_t>(n[1]) * w + n[0];
        if (skin[j] == 1) {
          skin[j] = -1;
          stack.push_back(j);
        }
      }
    }
    if (blob.area >= static_cast<std::size_t>(std::max(cfg.min_area, 1))) blobs.push_back(blob);
  }
  std::stable_sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) { return a.area > b.area; });

  std::vector<Point2D> points;
  for (const auto& b : blobs) {
    points.push_back({b.sum_u / static_cast<double>(b.area), b.sum_v / static_cast<double>(b.area)});
  }
  return points;
}

// --- Dynamic-region mask -------------------------------------------------------

/// 1 where a pixel may be used for matching; 0 inside any box grown by
/// `dilation` pixels on every side (pixel u is covered when
/// u_min - dilation <= u <= u_max + dilation).
inline BinaryMask build_dynamic_mask(ImageSize size, std::span<const BBox> boxes, int dilation) {
  BinaryMask mask(size.width, size.height, 1);
  for (const auto& box : boxes) {
    const auto [u0, u1] = detail::pixel_span(box.u_min - dilation, box.u_max + dilation, size.width);
    const auto [v0, v1] = detail::pixel_span(box.v_min - dilation, box.v_max + dilation, size.height);
    for (int v = v0; v <= v1; ++v)
      for (int u = u0; u <= u1; ++u) mask.at(u, v) = 0;
  }
  return mask;
}

inline BinaryMask build_dynamic_mask(ImageSize size, const std::vector<BBox>& boxes, int dilation) {
  return build_dynamic_mask(size, std::span<const BBox>(boxes), dilation);
}

// --- Feature matching ------------------------------------------------------------

class FeatureMatcher {
 public:
  virtual ~FeatureMatcher() = default;
  /// Correspondences from `frame_a` to `frame_b`, using only features of
  /// `frame_a` that lie where `mask` is 1.
  virtual std::vector<Correspondence> match(const Image& frame_a, const Image& frame_b,
                                            const BinaryMask& mask) const = 0;
};

struct NccMatcherConfig {
  int patch_radius = 7;
  int search_radius = 48;
  double ratio = 0.8;
  double min_correlation = 0.8;
  int max_corners = 100;
  int corner_window = 2;
  int nms_radius = 6;
  /// Corners weaker than this fraction of the strongest response are dropped.
  double min_quality = 0.01;
};

struct Corner {
  int u = 0;
  int v = 0;
  double response = 0.0;
};

namespace detail {

/// Summed-area table with one row/column of zero padding.
class IntegralImage {
 public:
  template <typename F>
  IntegralImage(int w, int h, F&& value) : w_(w), h_(h), sum_(static_cast<std::size_t>(w + 1) * (h + 1), 0.0) {
    for (int v = 0; v < h; ++v) {
      double row = 0.0;
      for (int u = 0; u < w; ++u) {
        row += value(u, v);
        sum_[idx(u + 1, v + 1)] = sum_[idx(u + 1, v)] + row;
      }
    }
  }
  /// Sum over the inclusive rectangle [u0, u1] x [v0, v1].
  double box(int u0, int v0, int u1, int v1) const {
    return sum_[idx(u1 + 1, v1 + 1)] - sum_[idx(u0, v1 + 1)] - sum_[idx(u1 + 1, v0)] + sum_[idx(u0, v0)];
  }

 private:
  std::size_t idx(int u, int v) const { return static_cast<std::size_t>(v) * (w_ + 1) + u; }
  int w_, h_;
  std::vector<double> sum_;
};

}  // namespace detail

/// Minimum-eigenvalue (Shi-Tomasi) corners whose whole matching patch lies in
/// the usable mask, strongest first with greedy non-maximum suppression.
inline std::vector<Corner> detect_corners(const Grid<double>& gray, const BinaryMask& mask,
                                          const NccMatcherConfig& cfg) {
  const int w = gray.width();
  const int h = gray.height();
  Grid<double> ix(w, h, 0.0), iy(w, h, 0.0);
  for (int v = 1; v + 1 < h; ++v) {
    for (int u = 1; u + 1 < w; ++u) {
      ix.at(u, v) = 0.5 * (gray.at(u + 1, v) - gray.at(u - 1, v));
      iy.at(u, v) = 0.5 * (gray.at(u, v + 1) - gray.at(u, v - 1));
    }
  }
  const detail::IntegralImage sxx(w, h, [&](int u, int v) { return ix.at(u, v) * ix.at(u, v); });
  const detail::IntegralImage syy(w, h, [&](int u, int v) { return iy.at(u, v) * iy.at(u, v); });
  const detail::IntegralImage sxy(w, h, [&](int u, int v) { return ix.at(u, v) * iy.at(u, v); });
  const detail::IntegralImage blocked(w, h, [&](int u, int v) { return mask.at(u, v) ? 0.0 : 1.0; });

  const int r = cfg.patch_radius;
  const int k = cfg.corner_window;
  const int margin = std::max(r, k + 1);
  std::vector<Corner> candidates;
  double strongest = 0.0;
  for (int v = margin; v < h - margin; ++v) {
    for (int u = margin; u < w - margin; ++u) {
      if (blocked.box(u - r, v - r, u + r, v + r) > 0.0) continue;
      const double a = sxx.box(u - k, v - k, u + k, v + k);
      const double c = syy.box(u - k, v - k, u + k, v + k);
      const double b = sxy.box(u - k, v - k, u + k, v + k);
      const double response = 0.5 * (a + c) - std::sqrt(0.25 * (a - c) * (a - c) + b * b);
      if (response > 0.0) {
        candidates.push_back({u, v, response});
        strongest = std::max(strongest, response);
      }
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Corner& x, const Corner& y) { return x.response > y.response; });

  std::vector<Corner> kept;
  for (const auto& c : candidates) {
    if (static_cast<int>(kept.size()) >= cfg.max_corners) break;
    if (c.response < cfg.min_quality * strongest) break;
    const bool crowded = std::any_of(kept.begin(), kept.end(), [&](const Corner& o) {
      return std::abs(o.u - c.u) <= cfg.nms_radius && std::abs(o.v - c.v) <= cfg.nms_radius;
    });
    if (!crowded) kept.push_back(c);
  }
  return kept;
}

/// Corner + zero-mean normalized cross-correlation matcher with a ratio test
/// on the patch distance sqrt(2 (1 - ncc)).
class NccMatcher final : public FeatureMatcher {
 public:
  explicit NccMatcher(NccMatcherConfig cfg = {}) : cfg_(cfg) {}

  const NccMatcherConfig& config() const { return cfg_; }

  std::vector<Correspondence> match(const Image& frame_a, const Image& frame_b,
                                    const BinaryMask& mask) const override {
    if (frame_a.width != frame_b.width || frame_a.height != frame_b.height) {
      throw Error(Errc::dimension_mismatch, "image size mismatch");
    }
    check_same_shape(mask, Grid<std::uint8_t>(frame_a.width, frame_a.height), "match_features mask");

    const Grid<double> ga = to_gray(frame_a);
    const Grid<double> gb = to_gray(frame_b);
    const int w = gb.width();
    const int h = gb.height();
    const int r = cfg_.patch_radius;
    const int side = 2 * r + 1;
    const double count = static_cast<double>(side * side);
    const detail::IntegralImage sum_b(w, h, [&](int u, int v) { return gb.at(u, v); });
    const detail::IntegralImage sq_b(w, h, [&](int u, int v) { return gb.at(u, v) * gb.at(u, v); });

    std::vector<Correspondence> out;
    std::vector<double> tmpl(static_cast<std::size_t>(side * side));
    const int exclusion = std::max(2, r / 2);

    for (const Corner& c : detect_corners(ga, mask, cfg_)) {
      double mean = 0.0;
      for (int dv = -r; dv <= r; ++dv)
        for (int du = -r; du <= r; ++du) mean += ga.at(c.u + du, c.v + dv);
      mean /= count;
      double norm_t = 0.0;
      for (int dv = -r, i = 0; dv <= r; ++dv) {
        for (int du = -r; du <= r; ++du, ++i) {
          tmpl[static_cast<std::size_t>(i)] = ga.at(c.u + du, c.v + dv) - mean;
          norm_t += tmpl[static_cast<std::size_t>(i)] * tmpl[static_cast<std::size_t>(i)];
        }
      }
      if (norm_t < 1e-9) continue;
      norm_t = std::sqrt(norm_t);

      const int x0 = std::max(r, c.u - cfg_.search_radius), x1 = std::min(w - 1 - r, c.u + cfg_.search_radius);
      const int y0 = std::max(r, c.v - cfg_.search_radius), y1 = std::min(h - 1 - r, c.v + cfg_.search_radius);
      if (x0 > x1 || y0 > y1) continue;
      const int sw = x1 - x0 + 1;
      std::vector<double> scores(static_cast<std::size_t>(sw) * (y1 - y0 + 1), -1.0);
      int best_x = -1, best_y = -1;
      double best = -2.0;
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double s = sum_b.box(x - r, y - r, x + r, y + r);
          const double var = sq_b.box(x - r, y - r, x + r, y + r) - s * s / count;
          if (var < 1e-9) continue;
          double cross = 0.0;
          for (int dv = -r, i = 0; dv <= r; ++dv) {
            const double* row = &gb.at(x - r, y + dv);
            for (int du = 0; du < side; ++du, ++i) cross += tmpl[static_cast<std::size_t>(i)] * row[du];
          }
          const double ncc = cross / (norm_t * std::sqrt(var));
          scores[static_cast<std::size_t>(y - y0) * sw + (x - x0)] = ncc;
          if (ncc > best) {
            best = ncc;
            best_x = x;
            best_y = y;
          }
        }
      }
      if (best_x < 0 || best < cfg_.min_correlation) continue;

      double second = -1.0;
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (std::abs(x - best_x) <= exclusion && std::abs(y - best_y) <= exclusion) continue;
          second = std::max(second, scores[static_cast<std::size_t>(y - y0) * sw + (x - x0)]);
        }
      }
      const double d_best = std::sqrt(std::max(0.0, 2.0 * (1.0 - best)));
      const double d_second = std::sqrt(std::max(0.0, 2.0 * (1.0 - second)));
      if (!(d_best < cfg_.ratio * d_second)) continue;

      out.push_back({{static_cast<double>(c.u), static_cast<double>(c.v)},
                     {static_cast<double>(best_x), static_cast<double>(best_y)}});
    }
    return out;
  }

 private:
  NccMatcherConfig cfg_;
};

inline std::vector<Correspondence> match_features(const Image& frame_a, const Image& frame_b,
                                                  const BinaryMask& mask, const NccMatcherConfig& cfg = {}) {
  return NccMatcher(cfg).match(frame_a, frame_b, mask);
}

// --- Sequence pipeline -------------------------------------------------------------

struct FrameSequence {
  std::string id;
  std::string contact_frame;
  /// o_1 ... o_n in temporal order; o_n is adjacent to the contact frame.
  std::vector<std::string> observations;
  BBox hand_bbox;
  BBox object_bbox;
};

enum class AnnotationStatus { ok, low_confidence, failed };

inline std::string to_string(AnnotationStatus s) {
  switch (s) {
    case AnnotationStatus::ok: return "ok";
    case AnnotationStatus::low_confidence: return "low_confidence";
    case AnnotationStatus::failed: return "failed";
  }
  return "failed";
}

inline AnnotationStatus parse_status(const std::string& s) {
  if (s == "ok") return AnnotationStatus::ok;
  if (s == "low_confidence") return AnnotationStatus::low_confidence;
  if (s == "failed") return AnnotationStatus::failed;
  throw Error(Errc::parse, "unknown annotation status '" + s + "'");
}

struct AnnotationResult {
  std::string id;
  AnnotationStatus status = AnnotationStatus::failed;
  std::string reason;
  std::vector<Point2D> points_initial;  // in o_1
  std::vector<Point2D> points_contact;  // in the contact frame
  /// Step k maps frame k to frame k+1 along (contact, o_n, ..., o_1).
  std::vector<Homography> per_step_homographies;
  std::vector<int> per_step_inlier_counts;
  /// Contact points carried into each frame after step k (for inspection).
  std::vector<std::vector<Point2D>> per_step_points;
};

struct PipelineConfig {
  YCbCrSkinRule skin_rule;
  SkinConfig skin;
  NccMatcherConfig matcher;
  RansacParams ransac;
  int mask_dilation = 4;
  std::uint64_t rng_seed = 0;
};

using ImageLoader = std::function<Image(const std::string&)>;

inline ImageLoader file_loader(std::filesystem::path base) {
  return [base = std::move(base)](const std::string& ref) { return load_image(base / ref); };
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// RANSAC seed for step `step`, derived from the pipeline seed.
inline std::uint64_t step_seed(std::uint64_t seed, std::size_t step) {
  return detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(step)));
}

/// Runs the full pipeline on one sequence. Problems degrade `status` rather
/// than throw: a failed RANSAC step falls back to identity (low_confidence);
/// load errors, missing contact points or unusable geometry mark it failed.
inline AnnotationResult annotate_sequence(const FrameSequence& seq, const PipelineConfig& cfg,
                                          const ImageLoader& load, const FeatureMatcher& matcher) {
  AnnotationResult result;
  result.id = seq.id;
  const std::size_t n = seq.observations.size();
  auto fail = [&](std::string reason) {
    result.status = AnnotationStatus::failed;
    result.reason = std::move(reason);
    result.per_step_homographies.resize(n, Homography::identity());
    result.per_step_inlier_counts.resize(n, 0);
    result.points_initial.clear();
    return result;
  };
  if (n == 0) return fail("no observation frames");

  std::vector<Image> frames;  // contact, o_n, ..., o_1
  try {
    frames.push_back(load(seq.contact_frame));
    for (std::size_t i = n; i-- > 0;) frames.push_back(load(seq.observations[i]));
  } catch (const std::exception& e) {
    return fail(std::string("image load failure: ") + e.what());
  }

  try {
    result.points_contact =
        detect_skin_contact(frames.front(), seq.hand_bbox, seq.object_bbox, cfg.skin_rule, cfg.skin);
  } catch (const Error& e) {
    return fail(e.what());
  }
  if (result.points_contact.empty()) return fail("no contact points found");

  bool fallback = false;
  const std::vector<BBox> dynamic{seq.hand_bbox, seq.object_bbox};
  for (std::size_t k = 0; k < n; ++k) {
    const Image& a = frames[k];
    const Image& b = frames[k + 1];
    try {
      const BinaryMask mask = build_dynamic_mask(a.size(), dynamic, cfg.mask_dilation);
      const auto corrs = matcher.match(a, b, mask);
      RansacParams params = cfg.ransac;
      params.rng_seed = step_seed(cfg.rng_seed, k);
      try {
        auto fit = ransac_homography(corrs, params);
        result.per_step_homographies.push_back(fit.homography);
        result.per_step_inlier_counts.push_back(static_cast<int>(fit.inliers.size()));
      } catch (const Error&) {
        fallback = true;
        result.per_step_homographies.push_back(Homography::identity());
        result.per_step_inlier_counts.push_back(0);
      }
    } catch (const Error& e) {
      return fail("step " + std::to_string(k) + ": " + e.what());
    }
  }

  try {
    std::vector<Point2D> current = result.points_contact;
    Homography chain = Homography::identity();
    for (const auto& h : result.per_step_homographies) {
      for (auto& p : current) p = apply(h, p);
      result.per_step_points.push_back(current);
      chain = compose(chain, h);
    }
    result.points_initial.clear();
    for (const auto& p : result.points_contact) result.points_initial.push_back(apply(chain, p));
  } catch (const Error& e) {
    return fail(std::string("projection failed: ") + e.what());
  }

  result.status = fallback ? AnnotationStatus::low_confidence : AnnotationStatus::ok;
  if (fallback) result.reason = "RANSAC fell back to identity on at least one step";
  return result;
}

inline AnnotationResult annotate_sequence(const FrameSequence& seq, const PipelineConfig& cfg,
                                          const ImageLoader& load) {
  return annotate_sequence(seq, cfg, load, NccMatcher(cfg.matcher));
}

// --- JSONL interchange ---------------------------------------------------------------

inline nlohmann::json bbox_to_json(const BBox& b) { return {b.u_min, b.v_min, b.u_max, b.v_max}; }

inline BBox bbox_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(Errc::parse, "bbox must be [u_min, v_min, u_max, v_max]");
  BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw Error(Errc::parse, "bbox must satisfy u_min < u_max and v_min < v_max");
  return b;
}

inline nlohmann::json to_json(const FrameSequence& s) {
  return {{"id", s.id},
          {"contact_frame", s.contact_frame},
          {"observations", s.observations},
          {"hand_bbox", bbox_to_json(s.hand_bbox)},
          {"object_bbox", bbox_to_json(s.object_bbox)}};
}

inline FrameSequence sequence_from_json(const nlohmann::json& j) {
  try {
    FrameSequence s;
    s.id = j.at("id").get<std::string>();
    s.contact_frame = j.at("contact_frame").get<std::string>();
    s.observations = j.at("observations").get<std::vector<std::string>>();
    s.hand_bbox = bbox_from_json(j.at("hand_bbox"));
    s.object_bbox = bbox_from_json(j.at("object_bbox"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("malformed sequence: ") + e.what());
  }
}

inline nlohmann::json to_json(const AnnotationResult& r) {
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& h : r.per_step_homographies) hs.push_back(to_json(h));
  return {{"id", r.id},
          {"status", to_string(r.status)},
          {"reason", r.reason},
          {"points_initial", points_to_json(r.points_initial)},
          {"points_contact", points_to_json(r.points_contact)},
          {"homographies", hs},
          {"inlier_counts", r.per_step_inlier_counts}};
}

inline AnnotationResult annotation_from_json(const nlohmann::json& j) {
  try {
    AnnotationResult r;
    r.id = j.at("id").get<std::string>();
    r.status = parse_status(j.at("status").get<std::string>());
    if (j.contains("reason")) r.reason = j.at("reason").get<std::string>();
    r.points_initial = points_from_json(j.at("points_initial"));
    r.points_contact = points_from_json(j.at("points_contact"));
    for (const auto& h : j.at("homographies")) r.per_step_homographies.push_back(homography_from_json(h));
    r.per_step_inlier_counts = j.at("inlier_counts").get<std::vector<int>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("malformed annotation: ") + e.what());
  }
}

}  // namespace affordance
