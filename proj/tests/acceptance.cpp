// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "affordance/affordance.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace affordance;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed sub-checks; the first few go into the report line.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (ok) return;
    ++failed_;
    if (failed_ <= 3) failures_ += (failures_.empty() ? "" : "; ") + what;
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }
  Outcome outcome() const {
    if (failed_ == 0) return {true, notes_};
    return {false, std::to_string(failed_) + "/" + std::to_string(total_) + " checks failed: " + failures_};
  }

 private:
  int total_ = 0, failed_ = 0;
  std::string failures_, notes_;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

Heatmap random_map(synthetic::Rng& rng, int w, int h, double lo = 0.0, double hi = 1.0) {
  Heatmap m(w, h);
  for (double& x : m.values()) x = rng.uniform(lo, hi);
  return m;
}

oracle::Map to_oracle(const Heatmap& m) { return {m.width(), m.height(), m.storage()}; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// --- criteria ------------------------------------------------------------------

Outcome metric_oracle_equivalence() {
  Checks c;
  synthetic::Rng rng(1001);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto a = random_map(rng, 16, 16), b = random_map(rng, 16, 16);
    BinaryMask mask(16, 16, 0);
    std::vector<int> omask(256, 0);
    for (std::size_t i = 0; i < 256; ++i) omask[i] = mask[i] = (i == 0 || rng.uniform() < 0.4);
    const auto pa = normalize(a), pb = normalize(b);
    const auto oa = oracle::normalized(to_oracle(a)), ob = oracle::normalized(to_oracle(b));
    worst = std::max({worst, rel_err(kld(pa, pb), oracle::kld(oa, ob, 1e-12)), rel_err(sim(pa, pb), oracle::sim(oa, ob)),
                      rel_err(nss(a, b), oracle::nss(to_oracle(a), to_oracle(b))),
                      rel_err(sim_part(pa, mask), oracle::masked_mass(oa, omask))});
  }
  const double elapsed = seconds_since(t0);
  c.expect(worst <= 1e-12, "max relative error " + fmt("%.3g", worst));
  c.expect(elapsed < 1.0, "runtime " + fmt("%.3f s", elapsed));
  c.note("200 pairs, max rel err " + fmt("%.2g", worst) + ", " + fmt("%.3f s", elapsed));
  return c.outcome();
}

Outcome metric_degenerate_suite() {
  Checks c;
  synthetic::Rng rng(1002);
  for (int t = 0; t < 50; ++t) {
    const auto p = normalize(random_map(rng, rng.uniform_int(1, 32), rng.uniform_int(1, 32)));
    c.expect(sim(p, p) == 1.0, "SIM(p,p) != 1.0 exactly");
    c.expect(std::abs(kld(p, p)) <= 1e-6, "|KLD(p,p)| > 1e-6");
  }
  try {
    nss(Heatmap(4, 4, 0.5), Heatmap(4, 4, 1.0));
    c.expect(false, "constant prediction accepted by NSS");
  } catch (const Error& e) {
    c.expect(std::string(e.what()) == "zero-variance prediction", std::string("wrong NSS error: ") + e.what());
  }
  const auto a = ProbabilityMap::from_normalized(Heatmap(2, 2, std::vector<double>{0.5, 0.5, 0, 0}));
  const auto b = ProbabilityMap::from_normalized(Heatmap(2, 2, std::vector<double>{0, 0, 0.25, 0.75}));
  c.expect(sim(a, b) == 0.0, "disjoint SIM != 0");
  return c.outcome();
}

Outcome hand_computed_anchors() {
  Checks c;
  const double k = kld(ProbabilityMap::from_normalized(Heatmap(2, 1, std::vector<double>{0.5, 0.5})),
                       ProbabilityMap::from_normalized(Heatmap(2, 1, std::vector<double>{1, 0})));
  const Heatmap delta(2, 2, std::vector<double>{1, 0, 0, 0});
  const double n = nss(delta, delta);
  const double f = focal_loss(Heatmap(1, 1, 0.5), Heatmap(1, 1, 1.0), {.alpha = 0.25, .gamma = 2}).value;
  c.expect(std::abs(k - 0.693147) <= 1e-6, "KLD " + fmt("%.9f", k));
  c.expect(std::abs(n - 1.73205) <= 1e-5, "NSS " + fmt("%.9f", n));
  c.expect(std::abs(f - 0.043322) <= 1e-6, "focal " + fmt("%.9f", f));
  c.note("KLD " + fmt("%.6f", k) + ", NSS " + fmt("%.5f", n) + ", focal " + fmt("%.6f", f));
  return c.outcome();
}

Outcome gradient_checks() {
  Checks c;
  synthetic::Rng rng(1004);
  const LossFn focal = [](const Heatmap& p, const Heatmap& g, const LossConfig& cfg) { return focal_loss(p, g, cfg); };
  const LossFn kl = [](const Heatmap& p, const Heatmap& g, const LossConfig& cfg) { return kl_loss(p, g, cfg); };
  const LossFn total = [](const Heatmap& p, const Heatmap& g, const LossConfig& cfg) {
    return total_objective(p, g, cfg);
  };
  const auto t0 = std::chrono::steady_clock::now();
  double worst_f = 0, worst_k = 0, worst_t = 0;
  for (int t = 0; t < 100; ++t) {
    const auto p = random_map(rng, 8, 8, 0.05, 0.95), g = random_map(rng, 8, 8);
    worst_f = std::max(worst_f, check_gradient(focal, p, g, {}, 1e-5).max_relative_error);
    worst_t = std::max(worst_t, check_gradient(total, p, g, {}, 1e-5).max_relative_error);
    const auto pd = normalize(p).map(), gd = normalize(g).map();
    worst_k = std::max(worst_k, check_gradient(kl, pd, gd, {}, 1e-5).max_relative_error);
  }
  const double elapsed = seconds_since(t0);
  c.expect(worst_f <= 1e-4, "focal rel err " + fmt("%.3g", worst_f));
  c.expect(worst_k <= 1e-4, "KL rel err " + fmt("%.3g", worst_k));
  c.expect(worst_t <= 1e-4, "total rel err " + fmt("%.3g", worst_t));
  c.expect(elapsed < 5.0, "runtime " + fmt("%.3f s", elapsed));
  c.note("max rel err focal " + fmt("%.2g", worst_f) + " / KL " + fmt("%.2g", worst_k) + " / total " +
         fmt("%.2g", worst_t) + ", " + fmt("%.3f s", elapsed));
  return c.outcome();
}

Outcome homography_recovery() {
  Checks c;
  synthetic::Rng rng(1005);
  int dlt_ok = 0;
  double dlt_worst = 0;
  for (int t = 0; t < 100; ++t) {
    const auto truth = fixtures::random_homography(rng);
    const auto est = estimate_homography_dlt(fixtures::through(truth, fixtures::random_points(rng, 8)));
    const double err = fixtures::max_reprojection(est, truth, fixtures::random_points(rng, 50));
    dlt_worst = std::max(dlt_worst, err);
    dlt_ok += err <= 1e-6;
  }
  c.expect(dlt_ok == 100, "DLT recovered " + std::to_string(dlt_ok) + "/100");

  int ransac_ok = 0;
  bool deterministic = true;
  for (int t = 0; t < 100; ++t) {
    const auto trial = fixtures::outlier_trial(rng, 60, 40);  // 40% outliers
    const RansacParams params{.rng_seed = 7000 + static_cast<std::uint64_t>(t)};
    try {
      const auto r = ransac_homography(trial.corrs, params);
      ransac_ok += fixtures::max_reprojection(r.homography, trial.truth, trial.inlier_src) <= 0.5;
      const auto again = ransac_homography(trial.corrs, params);
      deterministic = deterministic && again.homography.row_major() == r.homography.row_major() &&
                      again.inliers == r.inliers && again.iterations == r.iterations;
    } catch (const Error&) {
    }
  }
  c.expect(ransac_ok >= 95, "RANSAC recovered " + std::to_string(ransac_ok) + "/100");
  c.expect(deterministic, "fixed-seed RANSAC runs differ");
  c.note("DLT " + std::to_string(dlt_ok) + "/100 (max " + fmt("%.2g", dlt_worst) + " px), RANSAC " +
         std::to_string(ransac_ok) + "/100 at 40% outliers, bitwise deterministic");
  return c.outcome();
}

Outcome annotation_end_to_end() {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto moving = synthetic::make_sequence({});
  const auto r = annotate_sequence(moving.sequence, {}, moving.loader());
  double err = std::numeric_limits<double>::infinity();
  if (r.points_initial.size() == 1) {
    err = std::hypot(r.points_initial[0].u - moving.planted_initial.u, r.points_initial[0].v - moving.planted_initial.v);
  }
  c.expect(r.status == AnnotationStatus::ok, "planted sequence status " + to_string(r.status) + " " + r.reason);
  c.expect(r.per_step_homographies.size() == 10, "expected 10 steps");
  c.expect(err <= 2.0, "planted error " + fmt("%.3f px", err));

  synthetic::SequenceSpec still;
  still.shift_u = 0;
  still.seed = 2;
  const auto fixed = synthetic::make_sequence(still);
  const auto s = annotate_sequence(fixed.sequence, {}, fixed.loader());
  double static_err = std::numeric_limits<double>::infinity();
  if (s.points_initial.size() == 1) {
    static_err = std::hypot(s.points_initial[0].u - s.points_contact[0].u, s.points_initial[0].v - s.points_contact[0].v);
  }
  c.expect(s.status == AnnotationStatus::ok, "static sequence status " + to_string(s.status));
  c.expect(static_err <= 1e-6, "static error " + fmt("%.3g px", static_err));
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < 10.0, "runtime " + fmt("%.3f s", elapsed));
  c.note("planted error " + fmt("%.3f px", err) + ", static error " + fmt("%.2g px", static_err) + ", " +
         fmt("%.2f s", elapsed));
  return c.outcome();
}

Outcome lifting_round_trip() {
  Checks c;
  synthetic::Rng rng(1007);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const CameraIntrinsics k{rng.uniform(100, 2000), rng.uniform(100, 2000), rng.uniform(0, 1920), rng.uniform(0, 1080)};
    const Point2D p{rng.uniform(0, 1920), rng.uniform(0, 1080)};
    const double depth = rng.uniform(0.05, 20);
    const auto q = project_to_pixel(lift_to_3d(p, depth, k), k);
    worst = std::max({worst, std::abs(q.u - p.u), std::abs(q.v - p.v)});
    const Point3D x = lift_to_3d(p, depth, k);
    const auto y = lift_to_3d(project_to_pixel(x, k), x.z, k);
    worst = std::max({worst, std::abs(y.x - x.x), std::abs(y.y - x.y), std::abs(y.z - x.z)});
  }
  c.expect(worst <= 1e-9, "max error " + fmt("%.3g", worst));
  c.note("1000 triples, max error " + fmt("%.2g", worst));
  return c.outcome();
}

Outcome harness_ordering(const harness::MiniLayout& mini, double gen_seconds) {
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  auto eval = [&](const char* method) {
    return harness::cmd_evaluate({mini.dataset, mini.predictions / method, load_config(mini.config), 1});
  };
  const auto perfect = eval("perfect"), noisy = eval("noisy"), uniform = eval("uniform");
  const double elapsed = seconds_since(t0) + gen_seconds;
  for (const auto* r : {&perfect, &noisy, &uniform}) {
    c.expect(r->errors.empty() && r->summary && r->summary->count == 20, "run did not score all 20 records");
  }
  if (perfect.summary && noisy.summary && uniform.summary) {
    const auto &p = *perfect.summary, &n = *noisy.summary, &u = *uniform.summary;
    c.expect(p.sim == 1.0, "perfect SIM " + fmt("%.17g", p.sim.value_or(-1)));
    c.expect(p.sim_part == 1.0, "perfect SIM_part " + fmt("%.17g", p.sim_part.value_or(-1)));
    c.expect(n.kld && u.kld && *n.kld < *u.kld, "KLD ordering");
    c.expect(n.sim && u.sim && *n.sim > *u.sim, "SIM ordering");
    c.expect(n.sim_part && u.sim_part && *n.sim_part > *u.sim_part, "SIM_part ordering");
    c.expect(n.nss && u.nss && *n.nss > *u.nss, "NSS ordering");
    c.note("noisy KLD " + fmt("%.3f", *n.kld) + " < " + fmt("%.3f", *u.kld) + ", SIM " + fmt("%.3f", *n.sim) + " > " +
           fmt("%.3f", *u.sim) + ", SIM_part " + fmt("%.3f", n.sim_part.value_or(0)) + " > " +
           fmt("%.3f", u.sim_part.value_or(0)) + ", NSS " + fmt("%.3f", n.nss.value_or(0)) + " > " +
           fmt("%.3f", u.nss.value_or(0)));
  }
  c.expect(elapsed < 5.0, "runtime " + fmt("%.3f s", elapsed));
  c.note(fmt("%.2f s incl. generation", elapsed));
  return c.outcome();
}

Outcome io_bit_exactness(const harness::MiniLayout& mini) {
  Checks c;
  testutil::TempDir dir("accept-io");
  synthetic::Rng rng(1009);
  for (int t = 0; t < 20; ++t) {
    Grid<float> map(rng.uniform_int(1, 64), rng.uniform_int(1, 64));
    for (float& x : map.values()) x = static_cast<float>(rng.uniform(0, 10));
    ahm::write(dir / "m.ahm", map);
    const auto bytes = slurp(dir / "m.ahm");
    const auto back = ahm::read_raw(dir / "m.ahm");
    c.expect(back == map, "AHM1 values differ");
    ahm::write(dir / "m2.ahm", back);
    c.expect(slurp(dir / "m2.ahm") == bytes, "AHM1 bytes differ");
  }

  const Dataset ds = load_dataset(mini.dataset);
  write_records(dir / "records.jsonl", ds.records);
  std::ifstream in(dir / "records.jsonl");
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    c.expect(i < ds.records.size() && record_from_json(nlohmann::json::parse(line)) == ds.records[i], "record differs");
    ++i;
  }
  c.expect(i == ds.records.size(), "record count differs");

  RunConfig cfg = load_config(mini.config);
  cfg.pipeline.rng_seed = 4242;
  const auto seqs = mini.sequences / "sequences.jsonl";
  const auto a = harness::cmd_annotate(seqs, cfg, dir / "a.jsonl");
  harness::cmd_annotate(seqs, cfg, dir / "b.jsonl", 2);
  c.expect(a.ok == 5, "annotate ok count " + std::to_string(a.ok));
  c.expect(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"), "annotate outputs differ");
  c.note("20 AHM1 maps, " + std::to_string(i) + " records, annotate re-run identical");
  return c.outcome();
}

Outcome review_service() {
  Checks c;
  testutil::TempDir dir("accept-review");
  const auto mini = harness::generate_mini(dir / "mini", {.records = 50, .width = 64, .height = 48, .sequences = 0});
  const review::ServiceOptions opt{mini.dataset, dir / "decisions.jsonl", std::nullopt, std::nullopt, 10.0};
  auto post = [](httplib::Client& cl, const std::string& id, const nlohmann::json& body) {
    auto res = cl.Post("/api/records/" + id + "/decision", body.dump(), "application/json");
    if (!res) std::fprintf(stderr, "post %s: %s\n", id.c_str(), httplib::to_string(res.error()).c_str());
    return res ? res->status : -1;
  };
  auto progress = [](httplib::Client& cl) {
    auto res = cl.Get("/api/progress");
    return res ? nlohmann::json::parse(res->body) : nlohmann::json();
  };

  nlohmann::json before;
  {
    review::ReviewServer server(opt);
    httplib::Client cl("127.0.0.1", server.start("127.0.0.1", 0));
    const auto fresh = progress(cl);
    c.expect(fresh.value("pending", -1) == 50 && fresh.value("total", -1) == 50, "fresh log not all pending");
    c.expect(post(cl, "mini-000", {{"verdict", "accept"}, {"reviewer", "qa"}}) == 200, "accept rejected");
    c.expect(post(cl, "mini-001", {{"verdict", "adjust"}, {"reviewer", "qa"}, {"adjusted_points", {{12.5, 40.0}}}}) ==
                 200,
             "adjust rejected");
    c.expect(post(cl, "mini-002", {{"verdict", "adjust"}, {"reviewer", "qa"}, {"adjusted_points", nlohmann::json::array()}}) ==
                 422,
             "empty adjust not 422");
    c.expect(post(cl, "mini-002", {{"verdict", "adjust"}, {"reviewer", "qa"}}) == 422, "adjust without points not 422");
    before = progress(cl);
  }
  {
    review::ReviewServer server(opt);
    httplib::Client cl("127.0.0.1", server.start("127.0.0.1", 0));
    c.expect(progress(cl) == before, "counters changed across restart");
    auto rec = cl.Get("/api/records/mini-001");
    c.expect(rec && nlohmann::json::parse(rec->body).value("status", "") == "adjusted", "adjust lost on restart");
  }

  // 50 concurrent decisions against a fresh log.
  const review::ServiceOptions opt2{mini.dataset, dir / "concurrent.jsonl", std::nullopt, std::nullopt, 10.0};
  review::ReviewServer server(opt2);
  const int port = server.start("127.0.0.1", 0);
  std::vector<std::thread> workers;
  std::atomic<int> ok{0};
  for (int i = 0; i < 50; ++i) {
    workers.emplace_back([&, i] {
      httplib::Client cl("127.0.0.1", port);
      char id[32];
      std::snprintf(id, sizeof(id), "mini-%03d", i);
      if (post(cl, id, {{"verdict", "accept"}, {"reviewer", "qa"}}) == 200) ++ok;
    });
  }
  for (auto& t : workers) t.join();
  const auto log = review::DecisionLog::replay(opt2.log_path);
  std::set<std::string> ids;
  for (const auto& d : log) ids.insert(d.record_id);
  c.expect(ok == 50, std::to_string(ok.load()) + "/50 POSTs acknowledged");
  c.expect(log.size() == 50 && ids.size() == 50, std::to_string(ids.size()) + " distinct records in log");
  c.note("restart replay identical, 50/50 concurrent decisions logged");
  return c.outcome();
}

}  // namespace

int main() {
  int failures = 0;
  auto run = [&](const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %-34s %7.3fs  %s\n", o.pass ? "PASS" : "FAIL", name, seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  };

  run("metric oracle equivalence", metric_oracle_equivalence);
  run("metric degenerate suite", metric_degenerate_suite);
  run("hand-computed anchors", hand_computed_anchors);
  run("gradient checks", gradient_checks);
  run("homography recovery", homography_recovery);
  run("annotation pipeline end-to-end", annotation_end_to_end);
  run("lifting round trip", lifting_round_trip);

  testutil::TempDir work("acceptance");
  const auto t0 = std::chrono::steady_clock::now();
  harness::MiniOptions opt;
  opt.sequences = 0;
  const auto mini = harness::generate_mini(work / "mini", opt);
  const double gen_seconds = seconds_since(t0);
  run("harness ordering check", [&] { return harness_ordering(mini, gen_seconds); });

  harness::MiniOptions with_sequences;
  const auto full = harness::generate_mini(work / "full", with_sequences);
  run("I/O bit-exactness", [&] { return io_bit_exactness(full); });
  run("review service", review_service);

  std::printf("%s: %d failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
