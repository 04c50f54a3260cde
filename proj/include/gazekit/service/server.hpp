#pragma once

#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gazekit/gesture/classifier.hpp"
#include "gazekit/gesture/synth.hpp"
#include "gazekit/harness/io.hpp"

namespace gazekit::service {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

/// Status code plus JSON body; handlers are plain functions of the request so
/// they can be tested without sockets.
struct Reply {
  int status = 200;
  ojson body = ojson::object();
};

inline Reply error_reply(int status, const std::string& reason) { return {status, {{"error", reason}}}; }

/// One submitted trial.
struct SessionEvent {
  double t_ms = 0.0;
  int pattern_id = 0;
  double duration_ms = 0.0;
  std::vector<std::array<double, 3>> points;  // (t_ms, x, y) pointer samples
  int predicted = 0;                          // 0 when no classification ran
  bool correct = false;
};

struct Session {
  std::string id;
  std::string user;
  int batch = 1;
  int index = 0;
  std::mutex lock;
  std::vector<SessionEvent> events;
};

/// Pointer samples -> gaze trajectory under the pointer-as-gaze proxy.
inline gesture::GazeTrajectory trajectory_from_points(const std::vector<std::array<double, 3>>& pts) {
  gesture::GazeTrajectory t;
  for (const auto& p : pts) t.samples.push_back({p[0], gesture::gaze_from_pointer(p[1], p[2])});
  return t;
}

/// Reads [[t, x, y], ...]; nullopt with a reason when malformed.
inline std::optional<std::vector<std::array<double, 3>>> parse_points(const json& j, std::string& reason) {
  if (!j.is_array()) {
    reason = "points must be an array of [t_ms, x, y]";
    return std::nullopt;
  }
  std::vector<std::array<double, 3>> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 3) {
      reason = "each point must be [t_ms, x, y]";
      return std::nullopt;
    }
    std::array<double, 3> v{};
    for (std::size_t k = 0; k < 3; ++k) {
      if (!p[k].is_number() || !std::isfinite(p[k].get<double>())) {
        reason = "point coordinates must be finite numbers";
        return std::nullopt;
      }
      v[k] = p[k].get<double>();
    }
    out.push_back(v);
  }
  return out;
}

class InteractionService {
 public:
  /// `classifier` must already carry trained weights; it is never modified.
  InteractionService(gesture::Catalog catalog, std::optional<gesture::GestureClassifier> classifier)
      : catalog_(std::move(catalog)), classifier_(std::move(classifier)) {
    gesture::validate_catalog(catalog_);
    require(!classifier_ || classifier_->trained(), ErrorKind::State, "service classifier has no trained weights");
    routes();
  }

  InteractionService(const InteractionService&) = delete;
  InteractionService& operator=(const InteractionService&) = delete;

  // ------------------------------------------------------------ handlers

  Reply health() const {
    return {200, {{"status", "ok"}, {"patterns", catalog_.size()}, {"classifier", classifier_.has_value()}}};
  }

  Reply patterns() const { return {200, ojson(gesture::catalog_to_json(catalog_))}; }

  Reply classify(const std::string& body) {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception&) {
      return error_reply(422, "body is not JSON");
    }
    if (!j.is_object() || !j.contains("points")) return error_reply(422, "missing points");
    std::string reason;
    const auto pts = parse_points(j["points"], reason);
    if (!pts) return error_reply(422, reason);
    if (pts->size() < 2) return error_reply(422, "a gesture needs at least 2 points");
    if (!classifier_) return error_reply(503, "no classifier loaded");
    try {
      const auto raster = gesture::rasterize(trajectory_from_points(*pts));
      gesture::Classification c;
      {
        // Layers cache activations during forward passes.
        std::lock_guard g(classify_lock_);
        c = gesture::classify(*classifier_, raster, catalog_);
      }
      ojson grid = ojson::array();
      for (std::size_t r = 0; r < gesture::kRasterSize; ++r) {
        ojson row = ojson::array();
        for (std::size_t col = 0; col < gesture::kRasterSize; ++col) row.push_back(raster(r, col));
        grid.push_back(row);
      }
      return {200,
              {{"pattern_id", c.pattern_id},
               {"category", c.category},
               {"probabilities", c.probabilities},
               {"raster", grid}}};
    } catch (const Error& e) {
      return error_reply(422, e.what());
    }
  }

  Reply indicator(const std::string& pattern, const std::string& seed) const {
    int id = 0;
    std::uint64_t s = 0;
    try {
      std::size_t used = 0;
      id = std::stoi(pattern, &used);
      if (used != pattern.size()) throw std::invalid_argument(pattern);
      if (!seed.empty()) {
        s = std::stoull(seed, &used);
        if (used != seed.size()) throw std::invalid_argument(seed);
      }
    } catch (const std::logic_error&) {
      return error_reply(404, "unknown pattern '" + pattern + "'");
    }
    const auto it = std::find_if(catalog_.begin(), catalog_.end(), [&](const auto& t) { return t.id == id; });
    if (it == catalog_.end()) return error_reply(404, "unknown pattern '" + pattern + "'");
    ojson wp = ojson::array();
    for (const auto& p : gesture::indicator_waypoints(*it, s)) wp.push_back({p.x(), p.y()});
    return {200, {{"pattern_id", id}, {"seed", s}, {"closed", it->closed}, {"waypoints", wp}}};
  }

  Reply create_session(const std::string& body) {
    json j;
    try {
      j = body.empty() ? json::object() : json::parse(body);
    } catch (const json::exception&) {
      return error_reply(422, "body is not JSON");
    }
    if (!j.is_object()) return error_reply(422, "body must be an object");
    auto s = std::make_shared<Session>();
    s->user = j.value("user", std::string("anonymous"));
    if (j.contains("batch") && !j["batch"].is_number_integer()) return error_reply(422, "batch must be 1 or 2");
    s->batch = j.value("batch", 1);
    if (s->batch != 1 && s->batch != 2) return error_reply(422, "batch must be 1 or 2");
    {
      std::unique_lock g(sessions_lock_);
      s->index = static_cast<int>(sessions_.size()) + 1;
      s->id = "s" + std::to_string(s->index);
      sessions_[s->id] = s;
    }
    return {201, {{"session", s->id}, {"user", s->user}, {"batch", s->batch}}};
  }

  Reply append_event(const std::string& id, const std::string& body) {
    auto s = find_session(id);
    if (!s) return error_reply(404, "unknown session '" + id + "'");
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception&) {
      return error_reply(422, "body is not JSON");
    }
    if (!j.is_object()) return error_reply(422, "event must be an object");
    SessionEvent e;
    if (!j.contains("t_ms") || !j["t_ms"].is_number()) return error_reply(422, "event needs numeric t_ms");
    if (!j.contains("pattern_id") || !j["pattern_id"].is_number_integer())
      return error_reply(422, "event needs integer pattern_id");
    e.t_ms = j["t_ms"].get<double>();
    e.pattern_id = j["pattern_id"].get<int>();
    if (!std::isfinite(e.t_ms)) return error_reply(422, "t_ms must be finite");
    if (e.pattern_id < 1 || e.pattern_id > gesture::kPatternCount) return error_reply(422, "pattern_id outside 1..17");
    if (j.contains("duration_ms")) {
      if (!j["duration_ms"].is_number() || !(j["duration_ms"].get<double>() >= 0.0))
        return error_reply(422, "duration_ms must be a number >= 0");
      e.duration_ms = j["duration_ms"].get<double>();
    }
    if (j.contains("points")) {
      std::string reason;
      auto pts = parse_points(j["points"], reason);
      if (!pts) return error_reply(422, reason);
      e.points = std::move(*pts);
    }
    if (j.contains("correct")) {
      if (!j["correct"].is_boolean()) return error_reply(422, "correct must be a boolean");
      e.correct = j["correct"].get<bool>();
      if (j.contains("predicted") && j["predicted"].is_number_integer()) e.predicted = j["predicted"].get<int>();
    } else {
      if (e.points.empty()) return error_reply(422, "event needs points or a correct flag");
      json req = {{"points", json::array()}};
      for (const auto& p : e.points) req["points"].push_back({p[0], p[1], p[2]});
      const Reply r = classify(req.dump());
      if (r.status != 200) return r;
      e.predicted = r.body["pattern_id"].get<int>();
      e.correct = e.predicted == e.pattern_id;
    }
    std::lock_guard g(s->lock);
    if (!s->events.empty() && e.t_ms < s->events.back().t_ms)
      return error_reply(422, "event t_ms is earlier than the previous event");
    s->events.push_back(std::move(e));
    const auto& back = s->events.back();
    return {200, {{"session", s->id}, {"events", s->events.size()}, {"predicted", back.predicted}, {"correct", back.correct}}};
  }

  /// Timing log (format=timing) or gesture-dataset fragment (format=gestures), as JSONL text.
  std::pair<int, std::string> export_session(const std::string& id, const std::string& format) {
    auto s = find_session(id);
    if (!s) return {404, error_reply(404, "unknown session '" + id + "'").body.dump()};
    std::lock_guard g(s->lock);
    std::string out;
    if (format.empty() || format == "timing") {
      for (const auto& e : s->events) {
        harness::TimingEvent t{s->user, s->id, s->batch, e.t_ms, e.pattern_id, e.duration_ms, e.correct};
        out += harness::timing_event_json(t).dump() + "\n";
      }
      return {200, out};
    }
    if (format == "gestures") {
      for (const auto& e : s->events) {
        if (e.points.size() < 2) continue;
        gesture::GestureRecord r;
        r.pattern_id = e.pattern_id;
        r.category = gesture::find_pattern(catalog_, e.pattern_id).category;
        r.subject = s->index;
        r.trajectory = trajectory_from_points(e.points);
        out += harness::gesture_record_json(r).dump() + "\n";
      }
      return {200, out};
    }
    return {422, error_reply(422, "format must be timing or gestures").body.dump()};
  }

  // ------------------------------------------------------------- network

  httplib::Server& http() { return server_; }

  /// Binds and serves until stop(); returns false when the port is unavailable.
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  /// Binds an ephemeral port for tests; call serve() on another thread.
  int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool serve() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  std::shared_ptr<Session> find_session(const std::string& id) {
    std::shared_lock g(sessions_lock_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  static void send(httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  void routes() {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                 {"Access-Control-Allow-Headers", "Content-Type"}});
    server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server_.Get("/health", [this](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server_.Get("/patterns", [this](const httplib::Request&, httplib::Response& res) { send(res, patterns()); });
    server_.Post("/classify",
                 [this](const httplib::Request& req, httplib::Response& res) { send(res, classify(req.body)); });
    server_.Get("/indicator", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, indicator(req.get_param_value("pattern"), req.get_param_value("seed")));
    });
    server_.Post("/sessions",
                 [this](const httplib::Request& req, httplib::Response& res) { send(res, create_session(req.body)); });
    server_.Post(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, append_event(req.matches[1], req.body));
    });
    server_.Get(R"(/sessions/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto [status, text] = export_session(req.matches[1], req.get_param_value("format"));
      res.status = status;
      res.set_content(text, status == 200 ? "application/x-ndjson" : "application/json");
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
      send(res, error_reply(500, "internal error"));
    });
  }

  gesture::Catalog catalog_;
  std::optional<gesture::GestureClassifier> classifier_;
  std::mutex classify_lock_;
  std::shared_mutex sessions_lock_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  httplib::Server server_;
};

}  // namespace gazekit::service
