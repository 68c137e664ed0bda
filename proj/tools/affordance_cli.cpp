// affordance: benchmark evaluation, target rendering, annotation batches,
// 2D->3D lifting and the review service.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "affordance/affordance.hpp"

namespace fs = std::filesystem;
using namespace affordance;

namespace {

review::ReviewServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

struct Globals {
  std::string config_path;
  int threads = 1;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  if (g.seed) cfg.pipeline.rng_seed = *g.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affordance benchmark and annotation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--threads", g.threads, "Worker threads for record-level parallelism")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Override pipeline.rng_seed");
  app.add_option("--out", g.out, "Output path (file or directory, per subcommand)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against a dataset's test split");
  std::string eval_dataset, eval_predictions;
  long max_errors = -1;
  evaluate->add_option("--dataset", eval_dataset, "Dataset directory containing records.jsonl")->required();
  evaluate->add_option("--predictions", eval_predictions, "Directory of <id>.ahm prediction maps")->required();
  evaluate->add_option("--max-errors", max_errors, "Fail when more than this many records error (default: never)");

  // render
  auto* render = app.add_subcommand("render", "Render Gaussian targets (AHM1 + PNG preview) per record");
  std::string render_records;
  std::optional<double> render_sigma;
  render->add_option("--records", render_records, "records.jsonl path")->required();
  render->add_option("--sigma", render_sigma, "Gaussian sigma in pixels (default: evaluation.sigma)");

  // annotate
  auto* annotate = app.add_subcommand("annotate", "Run the contact-point pipeline over sequences.jsonl");
  std::string annotate_sequences;
  annotate->add_option("--sequences", annotate_sequences, "sequences.jsonl path")->required();

  // lift
  auto* lift = app.add_subcommand("lift", "Back-project a pixel to camera coordinates");
  double lu = 0, lv = 0, depth = 0, fx = 0, fy = 0, cx = 0, cy = 0;
  lift->add_option("--u", lu)->required();
  lift->add_option("--v", lv)->required();
  lift->add_option("--depth", depth, "Depth in meters")->required();
  lift->add_option("--fx", fx)->required();
  lift->add_option("--fy", fy)->required();
  lift->add_option("--cx", cx)->required();
  lift->add_option("--cy", cy)->required();

  // gen-mini
  auto* gen = app.add_subcommand("gen-mini", "Write the synthetic mini dataset, baselines and sequences");
  harness::MiniOptions mini;
  gen->add_option("--records", mini.records, "Number of records");

  // serve
  auto* serve = app.add_subcommand("serve", "Start the review service");
  review::ServiceOptions svc;
  std::string serve_dataset, serve_log, serve_static, serve_annotations, host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--dataset", serve_dataset)->required();
  serve->add_option("--log", serve_log, "Decision log (JSONL, append-only)")->required();
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--static", serve_static, "Directory with the built review UI");
  serve->add_option("--annotations", serve_annotations, "annotations.jsonl to attach pipeline metadata");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = resolve_config(g);

    if (*evaluate) {
      harness::EvaluateOptions opt{eval_dataset, eval_predictions, cfg, g.threads};
      const auto report = harness::cmd_evaluate(opt);
      const fs::path out = g.out.empty() ? fs::path("report.json") : fs::path(g.out);
      harness::write_report(report, out);
      std::cout << harness::format_table(report);
      for (const auto& e : report.errors) std::cerr << "error: " << e << '\n';
      std::cout << "report: " << out.string() << '\n';
      if (max_errors >= 0 && static_cast<long>(report.errors.size()) > max_errors) return 1;
      return 0;
    }

    if (*render) {
      const fs::path out = g.out.empty() ? fs::path("rendered") : fs::path(g.out);
      const auto summary = harness::cmd_render(render_records, render_sigma.value_or(cfg.evaluation.sigma), out);
      for (const auto& e : summary.errors) std::cerr << "error: " << e << '\n';
      std::cout << summary.written << " heatmap(s) written to " << out.string() << '\n';
      return 0;
    }

    if (*annotate) {
      const fs::path out = g.out.empty() ? fs::path("annotations.jsonl") : fs::path(g.out);
      const auto summary = harness::cmd_annotate(annotate_sequences, cfg, out, g.threads);
      for (const auto& e : summary.errors) std::cerr << "error: " << e << '\n';
      std::cout << "ok " << summary.ok << "  low_confidence " << summary.low_confidence << "  failed "
                << summary.failed << '\n';
      return 0;
    }

    if (*lift) {
      const Point3D p = lift_to_3d({lu, lv}, depth, CameraIntrinsics{fx, fy, cx, cy});
      std::cout << harness::format_point3d(p) << '\n';
      return 0;
    }

    if (*gen) {
      if (g.seed) mini.seed = *g.seed;
      const fs::path out = g.out.empty() ? fs::path("mini") : fs::path(g.out);
      const auto layout = harness::generate_mini(out, mini);
      std::cout << "dataset:     " << layout.dataset.string() << '\n'
                << "predictions: " << layout.predictions.string() << " (perfect, noisy, uniform)\n"
                << "sequences:   " << (layout.sequences / "sequences.jsonl").string() << '\n'
                << "config:      " << layout.config.string() << '\n';
      return 0;
    }

    if (*serve) {
      svc.dataset_dir = serve_dataset;
      svc.log_path = serve_log;
      svc.default_sigma = cfg.evaluation.sigma;
      if (!serve_static.empty()) svc.static_dir = serve_static;
      if (!serve_annotations.empty()) svc.annotations_path = serve_annotations;
      review::ReviewServer server(svc);
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cout << "review service on http://" << host << ':' << port << '\n' << std::flush;
      const bool ok = server.listen(host, port);
      g_server = nullptr;
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
