#pragma once

// Benchmark agreement metrics between a predicted affordance map and ground
// truth: KLD (lower is better), SIM, SIM_part and NSS (higher is better).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "affordance/heatmap.hpp"
#include "affordance/image.hpp"
#include "affordance/record.hpp"
#include "affordance/types.hpp"

namespace affordance {

struct MetricConfig {
  double epsilon = 1e-12;
  /// Mass-normalize maps before KLD / SIM / SIM_part.
  bool normalize_inputs = true;

  void check() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw Error(Errc::invalid_argument, "metric epsilon must be positive");
    }
  }
};

struct MetricScores {
  double kld = 0.0;
  double sim = 0.0;
  std::optional<double> sim_part;
  /// Absent when the prediction has zero variance.
  std::optional<double> nss;
  std::vector<std::string> notes;
};

// --- Single metrics --------------------------------------------------------

/// sum_i gt_i * log(eps + gt_i / (eps + pred_i))
inline double kld(const ProbabilityMap& pred, const ProbabilityMap& gt, const MetricConfig& cfg = {}) {
  cfg.check();
  check_same_shape(pred, gt, "kld");
  detail::CompensatedAccumulator acc;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double g = gt[i];
    acc.add(g * std::log(cfg.epsilon + g / (cfg.epsilon + pred[i])));
  }
  return acc.value();
}

/// Histogram intersection sum_i min(gt_i, pred_i).
inline double sim(const ProbabilityMap& pred, const ProbabilityMap& gt) {
  check_same_shape(pred, gt, "sim");
  detail::CompensatedAccumulator acc;
  for (std::size_t i = 0; i < gt.size(); ++i) acc.add(std::min(gt[i], pred[i]));
  return acc.value();
}

/// Prediction mass inside the binary part mask: sum_i min(pred_i, part_i).
inline double sim_part(const ProbabilityMap& pred, const BinaryMask& part) {
  check_same_shape(pred, part, "sim_part");
  bool any = false;
  detail::CompensatedAccumulator acc;
  for (std::size_t i = 0; i < part.size(); ++i) {
    if (part[i] > 1) throw Error(Errc::invalid_argument, "part mask values must be 0 or 1");
    if (part[i]) {
      any = true;
      acc.add(std::min(pred[i], 1.0));
    }
  }
  if (!any) throw Error(Errc::invalid_argument, "empty mask");
  return acc.value();
}

/// Ground-truth-weighted mean of the prediction's z-scores (population std).
inline double nss(const Heatmap& pred, const Heatmap& gt) {
  check_same_shape(pred, gt, "nss");
  const double n = static_cast<double>(pred.size());
  const double mean = detail::compensated_sum(pred.values()) / n;
  detail::CompensatedAccumulator sq;
  for (double x : pred.values()) sq.add((x - mean) * (x - mean));
  const double sd = std::sqrt(sq.value() / n);
  if (!(sd > 0.0)) throw Error(Errc::degenerate, "zero-variance prediction");

  const double mass = detail::compensated_sum(gt.values());
  if (!(mass > 0.0)) throw Error(Errc::degenerate, "zero-mass ground truth");

  detail::CompensatedAccumulator acc;
  for (std::size_t i = 0; i < pred.size(); ++i) acc.add((pred[i] - mean) / sd * gt[i]);
  return acc.value() / mass;
}

namespace detail {

inline ProbabilityMap as_distribution(const Heatmap& map, const MetricConfig& cfg, const char* what) {
  if (cfg.normalize_inputs) return normalize(map);
  try {
    return ProbabilityMap::from_normalized(map);
  } catch (const Error& e) {
    throw Error(Errc::invalid_argument, std::string(what) + ": non-normalized input (" + e.what() + ")");
  }
}

}  // namespace detail

/// Raw-map overloads: normalize per `cfg`, or require distributions when
/// normalization is disabled.
inline double kld(const Heatmap& pred, const Heatmap& gt, const MetricConfig& cfg = {}) {
  check_same_shape(pred, gt, "kld");
  return kld(detail::as_distribution(pred, cfg, "kld"), detail::as_distribution(gt, cfg, "kld"), cfg);
}

inline double sim(const Heatmap& pred, const Heatmap& gt, const MetricConfig& cfg = {}) {
  check_same_shape(pred, gt, "sim");
  return sim(detail::as_distribution(pred, cfg, "sim"), detail::as_distribution(gt, cfg, "sim"));
}

inline double sim_part(const Heatmap& pred, const BinaryMask& part, const MetricConfig& cfg = {}) {
  check_same_shape(pred, part, "sim_part");
  return sim_part(detail::as_distribution(pred, cfg, "sim_part"), part);
}

// --- Per-sample evaluation ---------------------------------------------------

/// Ground truth is rendered in double precision and rounded to f32, the
/// precision targets have when stored as AHM1.
inline Heatmap render_target(const DatasetRecord& record, ImageSize size, double sigma) {
  return render_gaussian(record.points, GaussianSpec{sigma, 1.0}, size.width, size.height)
      .cast<float>()
      .cast<double>();
}

inline MetricScores evaluate_sample(const Heatmap& pred_map, const DatasetRecord& record, ImageSize image_size,
                                    const BinaryMask* part_mask, double sigma, const MetricConfig& cfg) {
  try {
    check_heatmap(pred_map);
    const Heatmap gt = render_target(record, image_size, sigma);
    const Heatmap pred = resample_bilinear(pred_map, gt.width(), gt.height());

    const ProbabilityMap pred_p = detail::as_distribution(pred, cfg, "prediction");
    const ProbabilityMap gt_p = detail::as_distribution(gt, cfg, "ground truth");

    MetricScores scores;
    scores.kld = kld(pred_p, gt_p, cfg);
    scores.sim = sim(pred_p, gt_p);
    if (part_mask) scores.sim_part = sim_part(pred_p, *part_mask);
    try {
      scores.nss = nss(pred, gt);
    } catch (const Error& e) {
      if (e.code() != Errc::degenerate) throw;
      scores.notes.push_back(std::string("nss undefined: ") + e.what());
    }
    return scores;
  } catch (const Error& e) {
    throw Error(e.code(), "record " + record.id + ": " + e.what());
  }
}

/// Loads the image size and optional part mask relative to the dataset root.
inline MetricScores evaluate_sample(const Heatmap& pred_map, const DatasetRecord& record, const Dataset& dataset,
                                    double sigma, const MetricConfig& cfg) {
  std::optional<BinaryMask> mask;
  ImageSize size;
  try {
    size = image_size(dataset.resolve(record.image_ref));
    if (record.part_mask_ref) mask = load_mask(dataset.resolve(*record.part_mask_ref));
  } catch (const Error& e) {
    throw Error(e.code(), "record " + record.id + ": " + e.what());
  }
  return evaluate_sample(pred_map, record, size, mask ? &*mask : nullptr, sigma, cfg);
}

// --- Aggregation -------------------------------------------------------------

struct MetricSummary {
  std::size_t count = 0;
  std::optional<double> kld, sim, sim_part, nss;
  std::size_t kld_valid = 0, sim_valid = 0, sim_part_valid = 0, nss_valid = 0;
};

/// Arithmetic mean of each metric over the samples where it is defined,
/// summed in list order.
inline MetricSummary aggregate(std::span<const MetricScores> scores) {
  if (scores.empty()) throw Error(Errc::invalid_argument, "cannot aggregate an empty score list");
  MetricSummary out;
  out.count = scores.size();
  detail::CompensatedAccumulator kld_acc, sim_acc, part_acc, nss_acc;
  for (const auto& s : scores) {
    kld_acc.add(s.kld);
    sim_acc.add(s.sim);
    if (s.sim_part) {
      part_acc.add(*s.sim_part);
      ++out.sim_part_valid;
    }
    if (s.nss) {
      nss_acc.add(*s.nss);
      ++out.nss_valid;
    }
  }
  out.kld_valid = out.sim_valid = scores.size();
  const auto n = static_cast<double>(scores.size());
  out.kld = kld_acc.value() / n;
  out.sim = sim_acc.value() / n;
  if (out.sim_part_valid) out.sim_part = part_acc.value() / static_cast<double>(out.sim_part_valid);
  if (out.nss_valid) out.nss = nss_acc.value() / static_cast<double>(out.nss_valid);
  return out;
}

inline MetricSummary aggregate(const std::vector<MetricScores>& scores) {
  return aggregate(std::span<const MetricScores>(scores));
}

}  // namespace affordance
