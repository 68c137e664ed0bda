#pragma once

// JSON run configuration. Every section is optional; absent keys keep their
// defaults, unknown keys are rejected so typos do not silently change a run.

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "affordance/annotation.hpp"
#include "affordance/geometry.hpp"
#include "affordance/losses.hpp"
#include "affordance/metrics.hpp"

namespace affordance {

inline constexpr const char* kToolVersion = "0.3.0";

struct EvaluationConfig {
  double sigma = 10.0;
  MetricConfig metric;
  /// Only "prediction_to_gt" is supported: predictions are resampled to the
  /// ground-truth resolution.
  std::string resample_policy = "prediction_to_gt";
};

struct RunConfig {
  EvaluationConfig evaluation;
  LossConfig loss;
  PipelineConfig pipeline;  // pipeline.ransac holds the RANSAC section
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw Error(Errc::parse, "config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw Error(Errc::parse, "unknown config key '" + section + "." + key + "'");
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& p = c.pipeline;
  return {
      {"evaluation",
       {{"sigma", c.evaluation.sigma},
        {"epsilon", c.evaluation.metric.epsilon},
        {"normalize_inputs", c.evaluation.metric.normalize_inputs},
        {"resample_policy", c.evaluation.resample_policy}}},
      {"loss",
       {{"alpha", c.loss.alpha},
        {"gamma", c.loss.gamma},
        {"lambda_focal", c.loss.lambda_focal},
        {"lambda_kl", c.loss.lambda_kl},
        {"epsilon", c.loss.epsilon}}},
      {"ransac",
       {{"reproj_threshold", p.ransac.reproj_threshold},
        {"max_iterations", p.ransac.max_iterations},
        {"confidence", p.ransac.confidence},
        {"min_inliers", p.ransac.min_inliers}}},
      {"pipeline",
       {{"rng_seed", p.rng_seed},
        {"mask_dilation", p.mask_dilation},
        {"skin",
         {{"cb_min", p.skin_rule.cb_min},
          {"cb_max", p.skin_rule.cb_max},
          {"cr_min", p.skin_rule.cr_min},
          {"cr_max", p.skin_rule.cr_max},
          {"min_area", p.skin.min_area}}},
        {"matcher",
         {{"patch_radius", p.matcher.patch_radius},
          {"search_radius", p.matcher.search_radius},
          {"ratio", p.matcher.ratio},
          {"min_correlation", p.matcher.min_correlation},
          {"max_corners", p.matcher.max_corners},
          {"corner_window", p.matcher.corner_window},
          {"nms_radius", p.matcher.nms_radius},
          {"min_quality", p.matcher.min_quality}}}}},
  };
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  auto& p = c.pipeline;
  try {
    detail::reject_unknown(j, {"evaluation", "loss", "ransac", "pipeline"}, "<root>");
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      detail::reject_unknown(e, {"sigma", "epsilon", "normalize_inputs", "resample_policy"}, "evaluation");
      detail::read_opt(e, "sigma", c.evaluation.sigma);
      detail::read_opt(e, "epsilon", c.evaluation.metric.epsilon);
      detail::read_opt(e, "normalize_inputs", c.evaluation.metric.normalize_inputs);
      detail::read_opt(e, "resample_policy", c.evaluation.resample_policy);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      detail::reject_unknown(l, {"alpha", "gamma", "lambda_focal", "lambda_kl", "epsilon"}, "loss");
      detail::read_opt(l, "alpha", c.loss.alpha);
      detail::read_opt(l, "gamma", c.loss.gamma);
      detail::read_opt(l, "lambda_focal", c.loss.lambda_focal);
      detail::read_opt(l, "lambda_kl", c.loss.lambda_kl);
      detail::read_opt(l, "epsilon", c.loss.epsilon);
    }
    if (j.contains("ransac")) {
      const auto& r = j.at("ransac");
      detail::reject_unknown(r, {"reproj_threshold", "max_iterations", "confidence", "min_inliers"}, "ransac");
      detail::read_opt(r, "reproj_threshold", p.ransac.reproj_threshold);
      detail::read_opt(r, "max_iterations", p.ransac.max_iterations);
      detail::read_opt(r, "confidence", p.ransac.confidence);
      detail::read_opt(r, "min_inliers", p.ransac.min_inliers);
    }
    if (j.contains("pipeline")) {
      const auto& q = j.at("pipeline");
      detail::reject_unknown(q, {"rng_seed", "mask_dilation", "skin", "matcher"}, "pipeline");
      detail::read_opt(q, "rng_seed", p.rng_seed);
      detail::read_opt(q, "mask_dilation", p.mask_dilation);
      if (q.contains("skin")) {
        const auto& s = q.at("skin");
        detail::reject_unknown(s, {"cb_min", "cb_max", "cr_min", "cr_max", "min_area"}, "pipeline.skin");
        detail::read_opt(s, "cb_min", p.skin_rule.cb_min);
        detail::read_opt(s, "cb_max", p.skin_rule.cb_max);
        detail::read_opt(s, "cr_min", p.skin_rule.cr_min);
        detail::read_opt(s, "cr_max", p.skin_rule.cr_max);
        detail::read_opt(s, "min_area", p.skin.min_area);
      }
      if (q.contains("matcher")) {
        const auto& m = q.at("matcher");
        detail::reject_unknown(m,
                               {"patch_radius", "search_radius", "ratio", "min_correlation", "max_corners",
                                "corner_window", "nms_radius", "min_quality"},
                               "pipeline.matcher");
        detail::read_opt(m, "patch_radius", p.matcher.patch_radius);
        detail::read_opt(m, "search_radius", p.matcher.search_radius);
        detail::read_opt(m, "ratio", p.matcher.ratio);
        detail::read_opt(m, "min_correlation", p.matcher.min_correlation);
        detail::read_opt(m, "max_corners", p.matcher.max_corners);
        detail::read_opt(m, "corner_window", p.matcher.corner_window);
        detail::read_opt(m, "nms_radius", p.matcher.nms_radius);
        detail::read_opt(m, "min_quality", p.matcher.min_quality);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("bad config value: ") + e.what());
  }

  if (!(c.evaluation.sigma > 0.0)) throw Error(Errc::invalid_argument, "evaluation.sigma must be positive");
  if (c.evaluation.resample_policy != "prediction_to_gt") {
    throw Error(Errc::invalid_argument, "unsupported resample_policy '" + c.evaluation.resample_policy + "'");
  }
  c.evaluation.metric.check();
  c.loss.check();
  p.ransac.check();
  if (p.matcher.patch_radius < 1 || p.matcher.search_radius < 1 || p.matcher.max_corners < 1 ||
      p.matcher.corner_window < 1 || p.mask_dilation < 0 || p.skin.min_area < 1) {
    throw Error(Errc::invalid_argument, "invalid pipeline configuration");
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot read config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace affordance
