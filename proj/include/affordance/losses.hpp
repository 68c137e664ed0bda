#pragma once

// Training objective for point-supervised affordance maps: soft-target sigmoid
// focal loss plus a KL term, each with its analytic gradient w.r.t. the
// predicted probabilities.

#include <algorithm>
#include <cmath>
#include <functional>

#include "affordance/types.hpp"

namespace affordance {

struct LossConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  double lambda_focal = 0.1;
  double lambda_kl = 0.1;
  double epsilon = 1e-12;

  void check() const {
    const bool ok = std::isfinite(alpha) && alpha > 0.0 && alpha < 1.0 && std::isfinite(gamma) &&
                    gamma >= 0.0 && std::isfinite(lambda_focal) && lambda_focal >= 0.0 &&
                    std::isfinite(lambda_kl) && lambda_kl >= 0.0 && std::isfinite(epsilon) &&
                    epsilon > 0.0 && epsilon < 0.5;
    if (!ok) throw Error(Errc::invalid_argument, "invalid loss configuration");
  }
};

struct LossResult {
  double value = 0.0;
  GradientMap gradient;  // d value / d pred
};

/// sum_i -alpha_t (1 - p_t)^gamma log(p_t), with soft targets
///   p_t     = p g + (1 - p)(1 - g)
///   alpha_t = alpha g + (1 - alpha)(1 - g)
/// Predictions are clamped to [eps, 1 - eps]; clamped cells get zero gradient.
inline LossResult focal_loss(const Heatmap& pred, const Heatmap& gt, const LossConfig& cfg = {}) {
  cfg.check();
  check_same_shape(pred, gt, "focal_loss");
  LossResult out{0.0, GradientMap(pred.width(), pred.height(), 0.0)};
  detail::CompensatedAccumulator acc;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, cfg.epsilon, 1.0 - cfg.epsilon);
    const double g = gt[i];
    const double p_t = p * g + (1.0 - p) * (1.0 - g);
    const double alpha_t = cfg.alpha * g + (1.0 - cfg.alpha) * (1.0 - g);
    const double one_minus = 1.0 - p_t;
    const double log_pt = std::log(p_t);
    const double modulator = cfg.gamma == 0.0 ? 1.0 : std::pow(one_minus, cfg.gamma);
    acc.add(-alpha_t * modulator * log_pt);

    if (raw != p) continue;
    // d/dp_t of -(1-p_t)^gamma log p_t
    double d_focus = 0.0;
    if (cfg.gamma != 0.0 && one_minus > 0.0) {
      d_focus = cfg.gamma * std::pow(one_minus, cfg.gamma - 1.0) * log_pt;
    }
    const double d_pt = alpha_t * (d_focus - modulator / p_t);
    out.gradient[i] = d_pt * (2.0 * g - 1.0);
  }
  out.value = acc.value();
  return out;
}

/// sum_i g_i log((g_i + eps) / (p_i + eps)); gradient -g_i / (p_i + eps).
/// Inputs are expected to be distributions; predictions below eps are clamped.
inline LossResult kl_loss(const Heatmap& pred, const Heatmap& gt, const LossConfig& cfg = {}) {
  cfg.check();
  check_same_shape(pred, gt, "kl_loss");
  LossResult out{0.0, GradientMap(pred.width(), pred.height(), 0.0)};
  detail::CompensatedAccumulator acc;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::max(raw, cfg.epsilon);
    const double g = gt[i];
    acc.add(g * std::log((g + cfg.epsilon) / (p + cfg.epsilon)));
    if (raw == p) out.gradient[i] = -g / (p + cfg.epsilon);
  }
  out.value = acc.value();
  return out;
}

inline LossResult kl_loss(const ProbabilityMap& pred, const ProbabilityMap& gt, const LossConfig& cfg = {}) {
  return kl_loss(pred.map(), gt.map(), cfg);
}

/// lambda_focal * focal + lambda_kl * kl on the same prediction map.
inline LossResult total_objective(const Heatmap& pred, const Heatmap& gt, const LossConfig& cfg = {}) {
  const LossResult focal = focal_loss(pred, gt, cfg);
  const LossResult kl = kl_loss(pred, gt, cfg);
  LossResult out{cfg.lambda_focal * focal.value + cfg.lambda_kl * kl.value,
                 GradientMap(pred.width(), pred.height(), 0.0)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.gradient[i] = cfg.lambda_focal * focal.gradient[i] + cfg.lambda_kl * kl.gradient[i];
  }
  return out;
}

using LossFn = std::function<LossResult(const Heatmap&, const Heatmap&, const LossConfig&)>;

struct GradientCheck {
  /// max_i |analytic - numeric| / max(|numeric|, 1e-8)
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
};

/// Compares the analytic gradient of `loss` with central differences of step `h`.
inline GradientCheck check_gradient(const LossFn& loss, const Heatmap& pred, const Heatmap& gt,
                                    const LossConfig& cfg, double h) {
  if (!(h > 0.0)) throw Error(Errc::invalid_argument, "finite-difference step must be positive");
  const GradientMap analytic = loss(pred, gt, cfg).gradient;
  GradientCheck out;
  Heatmap probe = pred;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double x = pred[i];
    probe[i] = x + h;
    const double up = loss(probe, gt, cfg).value;
    probe[i] = x - h;
    const double down = loss(probe, gt, cfg).value;
    probe[i] = x;
    const double numeric = (up - down) / (2.0 * h);
    const double abs_err = std::abs(analytic[i] - numeric);
    out.max_absolute_error = std::max(out.max_absolute_error, abs_err);
    out.max_relative_error = std::max(out.max_relative_error, abs_err / std::max(std::abs(numeric), 1e-8));
  }
  return out;
}

}  // namespace affordance
