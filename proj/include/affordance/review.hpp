#pragma once

// Human verification service. Decisions are appended to a JSONL log; the
// review state is a fold over that log, so a restart replays to the same
// state.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "affordance/annotation.hpp"
#include "affordance/heatmap.hpp"
#include "affordance/image.hpp"
#include "affordance/record.hpp"

// After the Eigen-based headers: <resolv.h>, pulled in by httplib, defines a
// `_res` macro that collides with Eigen parameter names.
#include <httplib.h>

namespace affordance::review {

namespace fs = std::filesystem;

enum class Verdict { accept, reject, adjust };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::accept: return "accept";
    case Verdict::reject: return "reject";
    case Verdict::adjust: return "adjust";
  }
  return "accept";
}

inline std::optional<Verdict> parse_verdict(const std::string& s) {
  if (s == "accept") return Verdict::accept;
  if (s == "reject") return Verdict::reject;
  if (s == "adjust") return Verdict::adjust;
  return std::nullopt;
}

/// Status label a record shows once `v` is its latest decision.
inline std::string status_label(Verdict v) {
  switch (v) {
    case Verdict::accept: return "accepted";
    case Verdict::reject: return "rejected";
    case Verdict::adjust: return "adjusted";
  }
  return "pending";
}

struct ReviewDecision {
  std::string record_id;
  Verdict verdict = Verdict::accept;
  std::vector<Point2D> adjusted_points;
  std::string reviewer;
  std::int64_t timestamp = 0;  // UTC seconds
  std::optional<std::string> notes;

  friend bool operator==(const ReviewDecision&, const ReviewDecision&) = default;
};

inline nlohmann::json to_json(const ReviewDecision& d) {
  return {{"record_id", d.record_id},
          {"verdict", to_string(d.verdict)},
          {"adjusted_points", points_to_json(d.adjusted_points)},
          {"reviewer", d.reviewer},
          {"timestamp", d.timestamp},
          {"notes", d.notes ? nlohmann::json(*d.notes) : nlohmann::json(nullptr)}};
}

inline ReviewDecision decision_from_json(const nlohmann::json& j) {
  try {
    ReviewDecision d;
    d.record_id = j.at("record_id").get<std::string>();
    const auto verdict = parse_verdict(j.at("verdict").get<std::string>());
    if (!verdict) throw Error(Errc::parse, "unknown verdict");
    d.verdict = *verdict;
    d.adjusted_points = points_from_json(j.at("adjusted_points"));
    d.reviewer = j.at("reviewer").get<std::string>();
    d.timestamp = j.at("timestamp").get<std::int64_t>();
    if (j.contains("notes") && !j.at("notes").is_null()) d.notes = j.at("notes").get<std::string>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("malformed decision: ") + e.what());
  }
}

// --- Log ------------------------------------------------------------------------

/// Append-only JSONL decision log. Each append is flushed and fsync'd before
/// returning.
class DecisionLog {
 public:
  explicit DecisionLog(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    drop_unterminated_tail();
    file_ = std::fopen(path_.c_str(), "ab");
    if (!file_) throw Error(Errc::io, "cannot open decision log: " + path_.string());
  }
  DecisionLog(const DecisionLog&) = delete;
  DecisionLog& operator=(const DecisionLog&) = delete;
  ~DecisionLog() {
    if (file_) std::fclose(file_);
  }

  const fs::path& path() const { return path_; }

  void append(const ReviewDecision& d) {
    const std::string line = to_json(d).dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0 ||
        ::fsync(::fileno(file_)) != 0) {
      throw Error(Errc::io, "decision log append failed");
    }
  }

  /// All complete entries in log order. A torn final line (crash mid-write)
  /// is ignored.
  static std::vector<ReviewDecision> replay(const fs::path& path) {
    std::vector<ReviewDecision> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        out.push_back(decision_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception&) {
        if (in.peek() != std::char_traits<char>::eof()) throw Error(Errc::parse, "corrupt decision log: " + path.string());
      }
    }
    return out;
  }

 private:
  /// A crash mid-append leaves a partial last line that was never
  /// acknowledged. Cut it so the next entry starts on a fresh line.
  void drop_unterminated_tail() {
    std::error_code ec;
    if (!fs::is_regular_file(path_, ec)) return;
    std::ifstream in(path_, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.back() == '\n') return;
    const auto keep = bytes.find_last_of('\n');
    fs::resize_file(path_, keep == std::string::npos ? 0 : keep + 1);
  }

  fs::path path_;
  std::FILE* file_ = nullptr;
};

// --- State ------------------------------------------------------------------------

struct Progress {
  std::size_t total = 0, accepted = 0, rejected = 0, adjusted = 0, pending = 0;
  friend bool operator==(const Progress&, const Progress&) = default;
};

inline nlohmann::json to_json(const Progress& p) {
  return {{"total", p.total}, {"accepted", p.accepted}, {"rejected", p.rejected}, {"adjusted", p.adjusted},
          {"pending", p.pending}};
}

/// Latest decision per record (last write wins) plus full history.
class ReviewState {
 public:
  explicit ReviewState(std::vector<std::string> record_ids) : ids_(std::move(record_ids)) {
    std::sort(ids_.begin(), ids_.end());
  }

  void apply(const ReviewDecision& d) {
    history_[d.record_id].push_back(d);
    last_timestamp_ = std::max(last_timestamp_, d.timestamp);
  }

  static ReviewState fold(std::vector<std::string> ids, const std::vector<ReviewDecision>& log) {
    ReviewState s(std::move(ids));
    for (const auto& d : log) s.apply(d);
    return s;
  }

  const std::vector<std::string>& ids() const { return ids_; }

  std::string status(const std::string& id) const {
    auto it = history_.find(id);
    if (it == history_.end() || it->second.empty()) return "pending";
    return status_label(it->second.back().verdict);
  }

  const std::vector<ReviewDecision>& history(const std::string& id) const {
    static const std::vector<ReviewDecision> kEmpty;
    auto it = history_.find(id);
    return it == history_.end() ? kEmpty : it->second;
  }

  Progress progress() const {
    Progress p;
    p.total = ids_.size();
    for (const auto& id : ids_) {
      const std::string s = status(id);
      if (s == "accepted") ++p.accepted;
      else if (s == "rejected") ++p.rejected;
      else if (s == "adjusted") ++p.adjusted;
      else ++p.pending;
    }
    return p;
  }

  std::int64_t last_timestamp() const { return last_timestamp_; }

 private:
  std::vector<std::string> ids_;
  std::map<std::string, std::vector<ReviewDecision>> history_;
  std::int64_t last_timestamp_ = 0;
};

// --- Service ------------------------------------------------------------------------

struct ServiceOptions {
  fs::path dataset_dir;
  fs::path log_path;
  std::optional<fs::path> static_dir;
  std::optional<fs::path> annotations_path;
  double default_sigma = 10.0;
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Request handling, independent of the HTTP transport.
class ReviewService {
 public:
  explicit ReviewService(const ServiceOptions& opt)
      : opt_(opt),
        dataset_(load_dataset(opt.dataset_dir)),
        state_(ReviewState::fold(record_ids(dataset_), DecisionLog::replay(opt.log_path))),
        log_(opt.log_path) {
    for (const auto& r : dataset_.records) index_[r.id] = &r;
    if (opt.annotations_path) {
      std::ifstream in(*opt.annotations_path);
      if (!in) throw Error(Errc::io, "cannot read annotations: " + opt.annotations_path->string());
      std::string line;
      while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = nlohmann::json::parse(line);
        annotations_[j.at("id").get<std::string>()] = j;
      }
    }
  }

  const Dataset& dataset() const { return dataset_; }

  Progress progress() const {
    std::shared_lock lock(mutex_);
    return state_.progress();
  }

  ApiResponse list_records(const std::string& status, const std::string& offset_s, const std::string& limit_s) const {
    static const std::vector<std::string> kStatuses{"", "all", "pending", "accepted", "rejected", "adjusted"};
    if (std::find(kStatuses.begin(), kStatuses.end(), status) == kStatuses.end()) {
      return error(400, "unknown status filter '" + status + "'");
    }
    const auto offset = parse_count(offset_s, 0);
    const auto limit = parse_count(limit_s, 50);
    if (!offset || !limit || *limit < 1 || *limit > 1000) return error(400, "bad paging parameters");

    std::shared_lock lock(mutex_);
    nlohmann::json items = nlohmann::json::array();
    std::size_t matched = 0;
    for (const auto& id : state_.ids()) {
      const std::string s = state_.status(id);
      if (!status.empty() && status != "all" && s != status) continue;
      if (matched >= *offset && items.size() < *limit) {
        const DatasetRecord& r = *index_.at(id);
        items.push_back({{"id", id},
                         {"object_category", r.object_category},
                         {"action", r.action},
                         {"status", s},
                         {"points", points_to_json(r.points)}});
      }
      ++matched;
    }
    return ok({{"total", matched}, {"offset", *offset}, {"limit", *limit}, {"items", items}});
  }

  ApiResponse get_record(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return error(404, "unknown record '" + id + "'");
    std::shared_lock lock(mutex_);
    nlohmann::json history = nlohmann::json::array();
    for (const auto& d : state_.history(id)) history.push_back(to_json(d));
    nlohmann::json body{{"record", to_json(*it->second)},
                        {"status", state_.status(id)},
                        {"history", history},
                        {"annotation", nullptr}};
    if (const auto& h = state_.history(id); !h.empty() && h.back().verdict == Verdict::adjust) {
      body["adjusted_points"] = points_to_json(h.back().adjusted_points);
    }
    if (auto a = annotations_.find(id); a != annotations_.end()) body["annotation"] = a->second;
    return ok(body);
  }

  /// PNG of the target heatmap over the record image; a pure function of
  /// (image, points, sigma).
  ApiResponse overlay(const std::string& id, const std::string& sigma_s) const {
    auto it = index_.find(id);
    if (it == index_.end()) return error(404, "unknown record '" + id + "'");
    double sigma = opt_.default_sigma;
    if (!sigma_s.empty()) {
      try {
        std::size_t used = 0;
        sigma = std::stod(sigma_s, &used);
        if (used != sigma_s.size()) return error(400, "bad sigma");
      } catch (const std::exception&) {
        return error(400, "bad sigma");
      }
    }
    if (!std::isfinite(sigma) || sigma <= 0.0) return error(400, "sigma must be positive");
    try {
      const Image photo = load_image(dataset_.resolve(it->second->image_ref));
      const Heatmap map = render_gaussian(it->second->points, {sigma, 1.0}, photo.width, photo.height);
      const auto png = encode_png(affordance::overlay(photo, map));
      return {200, std::string(png.begin(), png.end()), "image/png"};
    } catch (const Error& e) {
      return error(500, e.what());
    }
  }

  ApiResponse post_decision(const std::string& id, const std::string& body) {
    auto it = index_.find(id);
    if (it == index_.end()) return error(404, "unknown record '" + id + "'");

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      return error(422, "body is not valid JSON");
    }
    if (!j.is_object()) return error(422, "body must be a JSON object");

    ReviewDecision d;
    d.record_id = id;
    if (!j.contains("verdict") || !j.at("verdict").is_string()) return error(422, "verdict required");
    const auto verdict = parse_verdict(j.at("verdict").get<std::string>());
    if (!verdict) return error(422, "verdict must be accept, reject or adjust");
    d.verdict = *verdict;
    if (!j.contains("reviewer") || !j.at("reviewer").is_string() || j.at("reviewer").get<std::string>().empty()) {
      return error(422, "reviewer required");
    }
    d.reviewer = j.at("reviewer").get<std::string>();
    if (j.contains("notes") && !j.at("notes").is_null()) {
      if (!j.at("notes").is_string()) return error(422, "notes must be a string");
      d.notes = j.at("notes").get<std::string>();
    }
    if (j.contains("adjusted_points") && !j.at("adjusted_points").is_null()) {
      try {
        d.adjusted_points = points_from_json(j.at("adjusted_points"));
      } catch (const Error& e) {
        return error(422, e.what());
      }
    }
    if (d.verdict == Verdict::adjust) {
      if (d.adjusted_points.empty()) return error(422, "adjust requires adjusted_points");
      ImageSize size;
      try {
        size = image_size_of(*it->second);
      } catch (const Error& e) {
        return error(500, e.what());
      }
      for (const auto& p : d.adjusted_points) {
        if (!p.inside(size.width, size.height)) return error(422, "adjusted point out of bounds");
      }
    } else if (!d.adjusted_points.empty()) {
      return error(422, "adjusted_points only allowed with verdict adjust");
    }

    std::unique_lock lock(mutex_);
    d.timestamp = std::max(now_seconds(), state_.last_timestamp());
    try {
      log_.append(d);
    } catch (const Error& e) {
      return error(500, e.what());
    }
    state_.apply(d);
    return ok(to_json(d));
  }

 private:
  static std::vector<std::string> record_ids(const Dataset& ds) {
    std::vector<std::string> ids;
    for (const auto& r : ds.records) ids.push_back(r.id);
    return ids;
  }

  static std::optional<std::size_t> parse_count(const std::string& s, std::size_t fallback) {
    if (s.empty()) return fallback;
    if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 9) return std::nullopt;
    return static_cast<std::size_t>(std::stoul(s));
  }

  static std::int64_t now_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  static ApiResponse ok(const nlohmann::json& j) { return {200, j.dump(), "application/json"}; }
  static ApiResponse error(int status, const std::string& message) {
    return {status, nlohmann::json{{"error", message}}.dump(), "application/json"};
  }

  ImageSize image_size_of(const DatasetRecord& r) {
    std::lock_guard lock(size_mutex_);
    auto it = sizes_.find(r.id);
    if (it != sizes_.end()) return it->second;
    const ImageSize size = image_size(dataset_.resolve(r.image_ref));
    sizes_[r.id] = size;
    return size;
  }

  ServiceOptions opt_;
  Dataset dataset_;
  std::map<std::string, const DatasetRecord*> index_;
  std::map<std::string, nlohmann::json> annotations_;
  mutable std::shared_mutex mutex_;
  ReviewState state_;
  DecisionLog log_;
  std::mutex size_mutex_;
  std::map<std::string, ImageSize> sizes_;
};

/// HTTP front end for ReviewService.
class ReviewServer {
 public:
  explicit ReviewServer(const ServiceOptions& opt) : service_(opt) {
    auto send = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server_.Get("/api/progress", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, {200, to_json(service_.progress()).dump()});
    });
    server_.Get("/api/records", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service_.list_records(req.get_param_value("status"), req.get_param_value("offset"),
                                      req.get_param_value("limit")));
    });
    server_.Get(R"(/api/records/([^/]+)/overlay)", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service_.overlay(req.matches[1], req.get_param_value("sigma")));
    });
    server_.Get(R"(/api/records/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service_.get_record(req.matches[1]));
    });
    server_.Post(R"(/api/records/([^/]+)/decision)",
                 [this, send](const httplib::Request& req, httplib::Response& res) {
                   send(res, service_.post_decision(req.matches[1], req.body));
                 });
    if (opt.static_dir && !server_.set_mount_point("/", opt.static_dir->string())) {
      throw Error(Errc::io, "static directory not found: " + opt.static_dir->string());
    }
  }

  ~ReviewServer() { stop(); }

  ReviewService& service() { return service_; }

  /// Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::io, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  /// Serves on the calling thread until stop() is called elsewhere.
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  ReviewService service_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace affordance::review
