#pragma once

// Batch workflows behind the command-line tool: benchmark evaluation, target
// rendering, annotation batches, and the synthetic mini dataset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordance/ahm.hpp"
#include "affordance/annotation.hpp"
#include "affordance/config.hpp"
#include "affordance/heatmap.hpp"
#include "affordance/metrics.hpp"
#include "affordance/record.hpp"
#include "affordance/synthetic.hpp"

namespace affordance::harness {

namespace fs = std::filesystem;

/// Runs fn(i) for i in [0, n) on `threads` workers. Results must be written to
/// per-index slots by the callee.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// --- evaluate ------------------------------------------------------------------

struct RecordScore {
  std::string id;
  MetricScores scores;
};

struct EvalRunReport {
  nlohmann::json config;
  std::string tool_version = kToolVersion;
  std::vector<RecordScore> per_record;
  std::optional<MetricSummary> summary;
  std::vector<std::string> errors;
  double duration_seconds = 0.0;
};

inline nlohmann::json optional_number(const std::optional<double>& x) {
  return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const MetricSummary& s) {
  return {{"count", s.count},
          {"kld", optional_number(s.kld)},
          {"sim", optional_number(s.sim)},
          {"sim_part", optional_number(s.sim_part)},
          {"nss", optional_number(s.nss)},
          {"valid", {{"kld", s.kld_valid}, {"sim", s.sim_valid}, {"sim_part", s.sim_part_valid}, {"nss", s.nss_valid}}}};
}

inline nlohmann::json to_json(const RecordScore& r) {
  return {{"id", r.id},
          {"kld", r.scores.kld},
          {"sim", r.scores.sim},
          {"sim_part", optional_number(r.scores.sim_part)},
          {"nss", optional_number(r.scores.nss)},
          {"notes", r.scores.notes}};
}

inline MetricScores scores_from_json(const nlohmann::json& j) {
  MetricScores s;
  s.kld = j.at("kld").get<double>();
  s.sim = j.at("sim").get<double>();
  if (!j.at("sim_part").is_null()) s.sim_part = j.at("sim_part").get<double>();
  if (!j.at("nss").is_null()) s.nss = j.at("nss").get<double>();
  return s;
}

inline nlohmann::json to_json(const EvalRunReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& rs : r.per_record) per.push_back(to_json(rs));
  return {{"tool_version", r.tool_version},
          {"config", r.config},
          {"protocol",
           {{"nss_std", "population"},
            {"prediction_values", "scored as stored in the prediction file; no activation applied"},
            {"ground_truth", "max-composed Gaussians at evaluation.sigma, rounded to f32"},
            {"resample", "prediction resampled bilinearly (corner-aligned) to ground-truth size"},
            {"kl_loss_input", "training KL term expects normalized distributions, not per-pixel sigmoid maps"}}},
          {"per_record", per},
          {"aggregate", r.summary ? to_json(*r.summary) : nlohmann::json(nullptr)},
          {"errors", r.errors},
          {"duration_seconds", r.duration_seconds}};
}

inline std::string format_cell(const std::optional<double>& x) {
  if (!x) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << *x;
  return os.str();
}

/// Text table in the benchmark's column order.
inline std::string format_table(const EvalRunReport& r, const std::string& method = "prediction") {
  std::ostringstream os;
  os << std::left << std::setw(16) << "Method" << std::right << std::setw(10) << "KLD↓" << std::setw(10) << "SIM↑"
     << std::setw(12) << "SIM_part↑" << std::setw(10) << "NSS↑" << std::setw(8) << "N" << '\n';
  if (r.summary) {
    const auto& s = *r.summary;
    os << std::left << std::setw(16) << method << std::right << std::setw(8) << format_cell(s.kld) << std::setw(8)
       << format_cell(s.sim) << std::setw(10) << format_cell(s.sim_part) << std::setw(8) << format_cell(s.nss)
       << std::setw(8) << s.count << '\n';
  } else {
    os << std::left << std::setw(16) << method << "  (no scored records)\n";
  }
  if (!r.errors.empty()) os << r.errors.size() << " record error(s); see report JSON\n";
  return os.str();
}

struct EvaluateOptions {
  fs::path dataset_dir;
  fs::path predictions_dir;
  RunConfig config;
  int threads = 1;
};

/// Scores every test-split record against `<predictions_dir>/<id>.ahm`.
/// Unreadable datasets throw; per-record problems are collected in `errors`.
inline EvalRunReport cmd_evaluate(const EvaluateOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  if (!fs::is_directory(opt.predictions_dir)) {
    throw Error(Errc::io, "predictions directory not found: " + opt.predictions_dir.string());
  }
  const Dataset dataset = load_dataset(opt.dataset_dir);

  EvalRunReport report;
  report.config = to_json(opt.config);
  for (const auto& e : dataset.errors) report.errors.push_back("records.jsonl line " + std::to_string(e.line) + ": " + e.message);

  std::vector<const DatasetRecord*> tests;
  for (const auto& r : dataset.records)
    if (r.split == Split::test) tests.push_back(&r);

  std::vector<std::optional<MetricScores>> slots(tests.size());
  std::vector<std::string> slot_errors(tests.size());
  parallel_for(tests.size(), opt.threads, [&](std::size_t i) {
    const DatasetRecord& rec = *tests[i];
    const fs::path pred_path = opt.predictions_dir / (rec.id + ".ahm");
    if (!fs::is_regular_file(pred_path)) {
      slot_errors[i] = "record " + rec.id + ": missing prediction " + pred_path.filename().string();
      return;
    }
    try {
      slots[i] = evaluate_sample(ahm::read(pred_path), rec, dataset, opt.config.evaluation.sigma,
                                 opt.config.evaluation.metric);
    } catch (const std::exception& e) {
      const std::string what = e.what();
      slot_errors[i] = what.rfind("record ", 0) == 0 ? what : "record " + rec.id + ": " + what;
    }
  });

  std::vector<MetricScores> scored;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    if (slots[i]) {
      report.per_record.push_back({tests[i]->id, *slots[i]});
      scored.push_back(*slots[i]);
    } else {
      report.errors.push_back(slot_errors[i]);
    }
  }
  if (!scored.empty()) report.summary = aggregate(scored);
  report.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline fs::path table_path_for(const fs::path& report_path) {
  fs::path p = report_path;
  p.replace_extension(".txt");
  if (p == report_path) p += ".txt";
  return p;
}

inline void write_report(const EvalRunReport& report, const fs::path& out_path) {
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write report: " + out_path.string());
    out << to_json(report).dump(2) << '\n';
  }
  std::ofstream table(table_path_for(out_path), std::ios::trunc);
  table << format_table(report);
}

// --- render ----------------------------------------------------------------------

struct RenderSummary {
  std::size_t written = 0;
  std::vector<std::string> errors;
};

/// One `<id>.ahm` target plus a `<id>.png` preview per record in `records_path`.
/// Image refs resolve relative to the records file's directory.
inline RenderSummary cmd_render(const fs::path& records_path, double sigma, const fs::path& out_dir) {
  if (!(sigma > 0.0)) throw Error(Errc::invalid_argument, "sigma must be positive");
  std::ifstream in(records_path);
  if (!in) throw Error(Errc::io, "cannot read records: " + records_path.string());
  fs::create_directories(out_dir);
  const fs::path root = records_path.parent_path();

  RenderSummary summary;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string id = "line " + std::to_string(line_no);
    try {
      const DatasetRecord rec = record_from_json(nlohmann::json::parse(line));
      id = rec.id;
      const ImageSize size = image_size(root / rec.image_ref);
      const auto report = validate_record(rec, size);
      if (!report.empty()) {
        summary.errors.push_back(id + ": " + report.front().field + ": " + report.front().message);
        continue;
      }
      const Grid<float> target = render_gaussian(rec.points, {sigma, 1.0}, size.width, size.height).cast<float>();
      ahm::write(out_dir / (rec.id + ".ahm"), target);
      save_image(out_dir / (rec.id + ".png"), to_grayscale(target.cast<double>()));
      ++summary.written;
    } catch (const std::exception& e) {
      summary.errors.push_back(id + ": " + e.what());
    }
  }
  return summary;
}

// --- annotate --------------------------------------------------------------------

struct AnnotateSummary {
  std::size_t ok = 0;
  std::size_t low_confidence = 0;
  std::size_t failed = 0;
  std::vector<std::string> errors;
};

/// Runs the pipeline over `sequences_path` (frame refs relative to its
/// directory) and writes one JSON line per parsed sequence, in input order.
inline AnnotateSummary cmd_annotate(const fs::path& sequences_path, const RunConfig& config, const fs::path& out_path,
                                    int threads = 1) {
  std::ifstream in(sequences_path);
  if (!in) throw Error(Errc::io, "cannot read sequences: " + sequences_path.string());
  AnnotateSummary summary;
  std::vector<FrameSequence> seqs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      seqs.push_back(sequence_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      summary.errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  const ImageLoader loader = file_loader(sequences_path.parent_path());
  std::vector<AnnotationResult> results(seqs.size());
  parallel_for(seqs.size(), threads,
               [&](std::size_t i) { results[i] = annotate_sequence(seqs[i], config.pipeline, loader); });

  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write annotations: " + out_path.string());
  for (const auto& r : results) {
    out << to_json(r).dump() << '\n';
    switch (r.status) {
      case AnnotationStatus::ok: ++summary.ok; break;
      case AnnotationStatus::low_confidence: ++summary.low_confidence; break;
      case AnnotationStatus::failed:
        ++summary.failed;
        summary.errors.push_back(r.id + ": " + r.reason);
        break;
    }
  }
  return summary;
}

// --- lift ------------------------------------------------------------------------

inline std::string format_point3d(const Point3D& p) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f", p.x, p.y, p.z);
  return buf;
}

// --- mini dataset ------------------------------------------------------------------

struct MiniOptions {
  std::size_t records = 20;
  int width = 320;
  int height = 240;
  double sigma = 10.0;
  double part_radius = 90.0;
  double noise_amplitude = 0.02;
  std::size_t sequences = 5;
  std::uint64_t seed = 7;
};

struct MiniLayout {
  fs::path dataset;      // records.jsonl, images/, masks/
  fs::path predictions;  // perfect/, noisy/, uniform/
  fs::path sequences;    // sequences.jsonl + frames
  fs::path config;
};

/// Writes a deterministic mini benchmark: textured images, one Gaussian target
/// per record, disk-shaped part masks, three baseline predictors, and a batch
/// of static annotation sequences.
inline MiniLayout generate_mini(const fs::path& out_dir, const MiniOptions& opt = {}) {
  static const char* kObjects[][2] = {{"mug", "grasp"},     {"knife", "cut"},     {"kettle", "pour"},
                                      {"drawer", "pull"},   {"hammer", "hammer"}, {"scissors", "cut"},
                                      {"spatula", "stir"},  {"door", "open"}};
  MiniLayout layout{out_dir / "dataset", out_dir / "predictions", out_dir / "sequences", out_dir / "config.json"};
  fs::create_directories(layout.dataset / "images");
  fs::create_directories(layout.dataset / "masks");
  for (const char* p : {"perfect", "noisy", "uniform"}) fs::create_directories(layout.predictions / p);
  fs::create_directories(layout.sequences);

  synthetic::Rng rng(opt.seed);
  std::vector<DatasetRecord> records;
  for (std::size_t i = 0; i < opt.records; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "mini-%03zu", i);
    const auto& kind = kObjects[i % (sizeof(kObjects) / sizeof(kObjects[0]))];
    Image image = synthetic::textured_background(opt.width, opt.height, rng, 2);
    const Point2D point{static_cast<double>(rng.uniform_int(opt.width / 3, opt.width - opt.width / 3)),
                        static_cast<double>(rng.uniform_int(opt.height / 3, opt.height - opt.height / 3))};

    BinaryMask part(opt.width, opt.height, 0);
    for (int v = 0; v < opt.height; ++v)
      for (int u = 0; u < opt.width; ++u)
        if (std::hypot(u - point.u, v - point.v) <= opt.part_radius) part.at(u, v) = 1;

    DatasetRecord rec;
    rec.id = id;
    rec.image_ref = "images/" + rec.id + ".png";
    rec.object_category = kind[0];
    rec.action = kind[1];
    rec.points = {point};
    rec.part_mask_ref = "masks/" + rec.id + ".png";
    rec.split = Split::test;
    rec.source = "synthetic-mini";
    save_image(layout.dataset / rec.image_ref, image);
    save_image(layout.dataset / *rec.part_mask_ref, mask_to_image(part));

    const Heatmap gt = render_target(rec, {opt.width, opt.height}, opt.sigma);
    Heatmap noisy = gt;
    for (double& x : noisy.values()) x += opt.noise_amplitude * rng.uniform();
    Heatmap uniform(opt.width, opt.height);
    for (double& x : uniform.values()) x = rng.uniform();
    ahm::write(layout.predictions / "perfect" / (rec.id + ".ahm"), gt);
    ahm::write(layout.predictions / "noisy" / (rec.id + ".ahm"), noisy);
    ahm::write(layout.predictions / "uniform" / (rec.id + ".ahm"), uniform);
    records.push_back(std::move(rec));
  }
  write_records(layout.dataset / "records.jsonl", records);

  std::ofstream seq_out(layout.sequences / "sequences.jsonl", std::ios::trunc);
  for (std::size_t s = 0; s < opt.sequences; ++s) {
    synthetic::SequenceSpec spec;
    spec.id = "static-" + std::to_string(s);
    spec.shift_u = 0;
    spec.shift_v = 0;
    spec.seed = opt.seed * 1000 + s;
    const auto seq = synthetic::make_sequence(spec);
    fs::create_directories(layout.sequences / spec.id);
    for (const auto& [ref, frame] : seq.frames) save_image(layout.sequences / ref, frame);
    seq_out << to_json(seq.sequence).dump() << '\n';
  }

  RunConfig config;
  config.evaluation.sigma = opt.sigma;
  std::ofstream cfg_out(layout.config, std::ios::trunc);
  cfg_out << to_json(config).dump(2) << '\n';
  return layout;
}

}  // namespace affordance::harness
