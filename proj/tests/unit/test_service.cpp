#include <gtest/gtest.h>

#include <chrono>
#include <numeric>
#include <sstream>
#include <thread>

#include "gazekit/harness/cli.hpp"
#include "gazekit/service/server.hpp"

using namespace gazekit;
using namespace gazekit::service;

namespace {

// A classifier trained once on a small synthetic corpus.
const gesture::GestureClassifier& trained_classifier() {
  static const gesture::GestureClassifier net = [] {
    gesture::CorpusConfig cfg;
    cfg.subjects = 3;
    cfg.repetitions = 8;
    const auto recs = gesture::generate_corpus(cfg);
    const auto rasters = gesture::rasterize_records(recs, models::index_range(0, recs.size()));
    std::vector<int> labels;
    for (const auto& r : recs) labels.push_back(r.pattern_id);
    gesture::GestureClassifier n(1);
    nn::TrainingConfig tc;
    tc.epochs = 8;
    tc.batch_size = 16;
    tc.learning_rate = 1e-3;
    gesture::train_gestures(n, rasters, labels, tc);
    return n;
  }();
  return net;
}

std::unique_ptr<InteractionService> make_service(bool with_classifier = true) {
  std::optional<gesture::GestureClassifier> net;
  if (with_classifier) net = trained_classifier();
  return std::make_unique<InteractionService>(gesture::default_catalog(), std::move(net));
}

std::string stroke_json(const std::vector<std::array<double, 3>>& pts) {
  json j = {{"points", json::array()}};
  for (const auto& p : pts) j["points"].push_back({p[0], p[1], p[2]});
  return j.dump();
}

std::vector<std::array<double, 3>> horizontal_stroke() {
  std::vector<std::array<double, 3>> pts;
  for (int i = 0; i <= 30; ++i) pts.push_back({16.0 * i, 0.1 + 0.8 * i / 30.0, 0.5});
  return pts;
}

std::string event_json(double t, int pattern, double duration, bool correct) {
  return json{{"t_ms", t}, {"pattern_id", pattern}, {"duration_ms", duration}, {"correct", correct}}.dump();
}

class LiveServer {
 public:
  explicit LiveServer(InteractionService& svc) : svc_(svc) {
    port_ = svc_.bind_any();
    thread_ = std::thread([this] { svc_.serve(); });
    svc_.wait_until_ready();
  }
  ~LiveServer() {
    svc_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }
  int port() const { return port_; }

 private:
  InteractionService& svc_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(ServiceHandlers, HealthAndPatterns) {
  auto svc = make_service(false);
  const auto h = svc->health();
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(h.body["patterns"], 17);
  EXPECT_EQ(h.body["classifier"], false);
  const auto p = svc->patterns();
  const auto back = gesture::catalog_from_json(json::parse(p.body.dump()));
  EXPECT_EQ(back.size(), 17u);
}

TEST(ServiceHandlers, RejectsUntrainedClassifier) {
  EXPECT_THROW(InteractionService(gesture::default_catalog(), gesture::GestureClassifier(3)), Error);
}

TEST(ServiceHandlers, ClassifyValidation) {
  auto svc = make_service();
  EXPECT_EQ(svc->classify(stroke_json({{0, 0.5, 0.5}})).status, 422);
  EXPECT_EQ(svc->classify("not json").status, 422);
  EXPECT_EQ(svc->classify("{}").status, 422);
  EXPECT_EQ(svc->classify(R"({"points": [[0, 0.1], [1, 0.2]]})").status, 422);
  EXPECT_EQ(svc->classify(R"({"points": [[0, 0.1, "a"], [1, 0.2, 0.3]]})").status, 422);
  const auto degenerate = svc->classify(stroke_json({{0, 0.3, 0.3}, {10, 0.3, 0.3}, {20, 0.3, 0.3}}));
  EXPECT_EQ(degenerate.status, 422);
  EXPECT_NE(degenerate.body["error"].get<std::string>().find("extent"), std::string::npos);
  const auto backwards = svc->classify(stroke_json({{10, 0.1, 0.3}, {0, 0.6, 0.3}}));
  EXPECT_EQ(backwards.status, 422);

  auto bare = make_service(false);
  EXPECT_EQ(bare->classify(stroke_json(horizontal_stroke())).status, 503);
}

TEST(ServiceHandlers, HorizontalStrokeIsAStraightStroke) {
  auto svc = make_service();
  const auto r = svc->classify(stroke_json(horizontal_stroke()));
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body["category"], 1);
  const auto probs = r.body["probabilities"].get<std::vector<double>>();
  ASSERT_EQ(probs.size(), 17u);
  EXPECT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), 1.0, 1e-9);
  ASSERT_EQ(r.body["raster"].size(), 32u);
  EXPECT_EQ(r.body["raster"][0].size(), 32u);
  EXPECT_EQ(svc->classify(stroke_json(horizontal_stroke())).body.dump(), r.body.dump());
}

TEST(ServiceHandlers, ClassifyDoesNotTouchSessions) {
  auto svc = make_service();
  for (int i = 0; i < 3; ++i) svc->classify(stroke_json(horizontal_stroke()));
  EXPECT_EQ(svc->create_session("{}").body["session"], "s1");
}

TEST(ServiceHandlers, Indicator) {
  auto svc = make_service(false);
  const auto a = svc->indicator("12", "5"), b = svc->indicator("12", "5");
  ASSERT_EQ(a.status, 200);
  EXPECT_EQ(a.body.dump(), b.body.dump());
  for (const auto& p : a.body["waypoints"]) {
    EXPECT_GE(p[0].get<double>(), -1e-12);
    EXPECT_LE(p[0].get<double>(), 1.0 + 1e-12);
    EXPECT_GE(p[1].get<double>(), -1e-12);
    EXPECT_LE(p[1].get<double>(), 1.0 + 1e-12);
  }
  std::set<std::string> seen;
  for (int s = 0; s < 10; ++s) seen.insert(svc->indicator("3", std::to_string(s)).body["waypoints"].dump());
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(svc->indicator("18", "1").status, 404);
  EXPECT_EQ(svc->indicator("0", "1").status, 404);
  EXPECT_EQ(svc->indicator("abc", "1").status, 404);
  EXPECT_EQ(svc->indicator("", "").status, 404);
  EXPECT_EQ(svc->indicator("17", "").body["closed"], true);
}

TEST(ServiceHandlers, SessionLifecycleAndExport) {
  auto svc = make_service();
  const auto created = svc->create_session(R"({"user": "bo", "batch": 2})");
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body["session"];
  EXPECT_EQ(svc->append_event(id, event_json(10, 4, 900, true)).status, 200);
  EXPECT_EQ(svc->append_event(id, event_json(20, 5, 800, false)).status, 200);
  json ev = {{"t_ms", 30}, {"pattern_id", 1}, {"duration_ms", 700}, {"points", json::parse(stroke_json(horizontal_stroke()))["points"]}};
  const auto classified = svc->append_event(id, ev.dump());
  ASSERT_EQ(classified.status, 200);
  EXPECT_EQ(classified.body["events"], 3);
  EXPECT_EQ(classified.body["predicted"].get<int>() == 1, classified.body["correct"].get<bool>());

  const auto [status, text] = svc->export_session(id, "timing");
  ASSERT_EQ(status, 200);
  const auto events = harness::parse_timing_log(text);
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[0].pattern_id, 4);
  EXPECT_EQ(events[1].pattern_id, 5);
  EXPECT_EQ(events[2].pattern_id, 1);
  EXPECT_EQ(events[0].user, "bo");
  EXPECT_EQ(events[0].batch, 2);
  EXPECT_EQ(events[1].correct, false);

  // Only events with a stroke go into the gesture fragment.
  const auto [gstatus, gtext] = svc->export_session(id, "gestures");
  ASSERT_EQ(gstatus, 200);
  const auto dir = std::filesystem::temp_directory_path() / "gazekit_service_export";
  std::filesystem::create_directories(dir);
  harness::write_text(dir / "g.jsonl", gtext);
  const auto recs = harness::read_gesture_dataset(dir / "g.jsonl");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].pattern_id, 1);
  EXPECT_EQ(gesture::rasterize(recs[0].trajectory),
            gesture::rasterize(trajectory_from_points(horizontal_stroke())));

  // The CLI timing report consumes the export without losing entries.
  harness::write_text(dir / "log.jsonl", text);
  std::ostringstream out, err;
  ASSERT_EQ(harness::run_cli({"timing-report", "--log", (dir / "log.jsonl").string(), "--out", (dir / "r").string()},
                             out, err),
            0)
      << err.str();
  EXPECT_EQ(json::parse(harness::read_text(dir / "r/report.json"))["metrics"]["events"], 3.0);
  std::filesystem::remove_all(dir);

  EXPECT_EQ(svc->export_session(id, "xml").first, 422);
  EXPECT_EQ(svc->export_session("s99", "timing").first, 404);
}

TEST(ServiceHandlers, SessionErrors) {
  auto svc = make_service(false);
  EXPECT_EQ(svc->create_session(R"({"batch": 3})").status, 422);
  EXPECT_EQ(svc->create_session(R"({"batch": "1"})").status, 422);
  EXPECT_EQ(svc->create_session("[1]").status, 422);
  EXPECT_EQ(svc->create_session("{").status, 422);
  const std::string id = svc->create_session("").body["session"];
  EXPECT_EQ(svc->append_event("nope", event_json(1, 1, 1, true)).status, 404);
  EXPECT_EQ(svc->append_event(id, "{").status, 422);
  EXPECT_EQ(svc->append_event(id, R"({"pattern_id": 1, "correct": true})").status, 422);
  EXPECT_EQ(svc->append_event(id, event_json(1, 18, 1, true)).status, 422);
  EXPECT_EQ(svc->append_event(id, event_json(1, 1, -5, true)).status, 422);
  EXPECT_EQ(svc->append_event(id, R"({"t_ms": 1, "pattern_id": 1})").status, 422);
  // Without a classifier an uncorrected stroke event cannot be scored.
  json ev = {{"t_ms", 1}, {"pattern_id", 1}, {"points", json::parse(stroke_json(horizontal_stroke()))["points"]}};
  EXPECT_EQ(svc->append_event(id, ev.dump()).status, 503);
  EXPECT_EQ(svc->append_event(id, event_json(50, 1, 1, true)).status, 200);
  EXPECT_EQ(svc->append_event(id, event_json(40, 1, 1, true)).status, 422);
  EXPECT_EQ(svc->export_session(id, "").second, svc->export_session(id, "timing").second);
}

TEST(ServiceHttp, EndpointsAndCors) {
  auto svc = make_service();
  LiveServer live(*svc);
  auto c = live.client();
  const auto h = c.Get("/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  EXPECT_EQ(h->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(json::parse(h->body)["classifier"], true);

  const auto opt = c.Options("/classify");
  ASSERT_TRUE(opt);
  EXPECT_EQ(opt->status, 204);
  EXPECT_NE(opt->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);

  ASSERT_EQ(c.Get("/patterns")->status, 200);
  const auto ind = c.Get("/indicator?pattern=7&seed=3");
  ASSERT_EQ(ind->status, 200);
  EXPECT_EQ(ind->body, svc->indicator("7", "3").body.dump());
  EXPECT_EQ(c.Get("/indicator?pattern=99")->status, 404);

  const auto body = stroke_json(horizontal_stroke());
  const auto r1 = c.Post("/classify", body, "application/json");
  const auto r2 = c.Post("/classify", body, "application/json");
  ASSERT_EQ(r1->status, 200);
  EXPECT_EQ(r1->body, r2->body);
  EXPECT_EQ(c.Post("/classify", stroke_json({{0, 0.5, 0.5}}), "application/json")->status, 422);

  const auto s = c.Post("/sessions", R"({"user": "kim"})", "application/json");
  ASSERT_EQ(s->status, 201);
  const std::string id = json::parse(s->body)["session"];
  for (int k = 0; k < 3; ++k)
    ASSERT_EQ(c.Post("/sessions/" + id + "/events", event_json(100.0 * k, k + 1, 50, true), "application/json")->status,
              200);
  const auto ex = c.Get("/sessions/" + id + "/export?format=timing");
  ASSERT_EQ(ex->status, 200);
  const auto events = harness::parse_timing_log(ex->body);
  ASSERT_EQ(events.size(), 3u);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(events[static_cast<std::size_t>(k)].pattern_id, k + 1);
  EXPECT_EQ(c.Post("/sessions/zz/events", event_json(0, 1, 1, true), "application/json")->status, 404);
  EXPECT_EQ(c.Get("/sessions/zz/export")->status, 404);
  EXPECT_EQ(c.Get("/no/such/route")->status, 404);
}

TEST(ServiceHttp, ClassifyLatencyIsInteractive) {
  auto svc = make_service();
  LiveServer live(*svc);
  auto c = live.client();
  const auto body = stroke_json(horizontal_stroke());
  std::vector<double> ms;
  for (int i = 0; i < 10; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    ASSERT_EQ(c.Post("/classify", body, "application/json")->status, 200);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  EXPECT_LT(ms[5], 100.0);
}

TEST(ServiceHttp, ConcurrentPostsKeepPerSessionOrder) {
  auto svc = make_service();
  LiveServer live(*svc);
  constexpr int kSessions = 6, kEvents = 40;
  std::vector<std::string> ids;
  {
    auto c = live.client();
    for (int s = 0; s < kSessions; ++s)
      ids.push_back(json::parse(c.Post("/sessions", "{\"user\": \"u" + std::to_string(s) + "\"}", "application/json")->body)["session"]);
  }
  std::vector<std::thread> workers;
  std::atomic<int> failures{0};
  for (int s = 0; s < kSessions; ++s)
    workers.emplace_back([&, s] {
      auto c = live.client();
      for (int k = 0; k < kEvents; ++k) {
        const auto r = c.Post("/sessions/" + ids[static_cast<std::size_t>(s)] + "/events",
                              event_json(k, 1 + (k + s) % 17, 10.0 * s + k, k % 3 == 0), "application/json");
        if (!r || r->status != 200) ++failures;
      }
    });
  // Classification keeps working while sessions are written.
  workers.emplace_back([&] {
    auto c = live.client();
    for (int k = 0; k < 10; ++k)
      if (c.Post("/classify", stroke_json(horizontal_stroke()), "application/json")->status != 200) ++failures;
  });
  for (auto& w : workers) w.join();
  EXPECT_EQ(failures.load(), 0);
  for (int s = 0; s < kSessions; ++s) {
    const auto events = harness::parse_timing_log(svc->export_session(ids[static_cast<std::size_t>(s)], "timing").second);
    ASSERT_EQ(events.size(), static_cast<std::size_t>(kEvents));
    for (int k = 0; k < kEvents; ++k) {
      const auto& e = events[static_cast<std::size_t>(k)];
      EXPECT_EQ(e.t_ms, k);
      EXPECT_EQ(e.duration_ms, 10.0 * s + k);
      EXPECT_EQ(e.user, "u" + std::to_string(s));
    }
  }
}
