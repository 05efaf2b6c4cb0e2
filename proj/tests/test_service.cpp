#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "splitsr/service.hpp"
#include "support.hpp"

using namespace splitsr;
using namespace splitsr::test;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
protected:
  void SetUp() override {
    NetworkConfig c;
    c.feature_maps = 4;
    c.groups = 1;
    c.blocks_per_group = 1;
    c.hybrid_index = 1;
    c.alpha = 0.5;
    sched_ = std::make_shared<ZoomScheduler>(std::make_shared<const Network<float>>(build(c, 3)));
    // Smooth ramp with detail, 4×4 grid of 256 tiles at the service tile size.
    TensorF img({1, 3, 1024, 1024});
    std::mt19937_64 rng(5);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t i = 0; i < 1024; ++i)
        for (std::size_t j = 0; j < 1024; ++j)
          img(0, ch, i, j) = static_cast<float>(((i / 3 + j / 5 + ch * 40) % 7) * 30 + (rng() % 10));
    sched_->add_image("grid", img);
    sched_->add_image("small", quantize(random_tensor<float>({1, 3, 40, 60}, rng, 0, 255)));
    ratings_ = fs::temp_directory_path() / ("splitsr_ratings_" + std::to_string(std::random_device{}()) + ".jsonl");
    service_ = std::make_unique<TileService>(sched_, ratings_.string());
    service_->install(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }

  void TearDown() override {
    server_.stop();
    thread_.join();
    sched_->stop();
    fs::remove(ratings_);
  }

  static void expect_error(const httplib::Result& r, int status, const std::string& code) {
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, status);
    const auto j = json::parse(r->body);
    EXPECT_EQ(j["error"]["code"], code) << r->body;
    EXPECT_FALSE(j["error"]["message"].get<std::string>().empty());
    EXPECT_EQ(j["error"]["request_id"], r->get_header_value("X-Request-Id"));
  }

  std::shared_ptr<ZoomScheduler> sched_;
  fs::path ratings_;
  std::unique_ptr<TileService> service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (static_cast<double>(i + j)) / 2.0;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_F(ServiceTest, ListsImages) {
  auto r = client_->Get("/images");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["id"], "grid");
  EXPECT_EQ(j[0]["width"], 1024);
  EXPECT_EQ(j[0]["cols"], 4);
  EXPECT_EQ(j[1]["id"], "small");
  EXPECT_EQ(j[1]["height"], 40);
}

TEST_F(ServiceTest, TileFetchIsPngAndRepeatable) {
  auto a = client_->Get("/images/small/tile?x=0&y=0&zoom=2.5&method=splitsr");
  ASSERT_TRUE(a);
  ASSERT_EQ(a->status, 200);
  EXPECT_EQ(a->get_header_value("Content-Type"), "image/png");
  const auto img = decode_png(std::span(reinterpret_cast<const unsigned char*>(a->body.data()), a->body.size()));
  EXPECT_EQ(img.shape(), (Shape{1, 3, 100, 150}));
  auto b = client_->Get("/images/small/tile?x=0&y=0&zoom=2.5&method=splitsr");
  EXPECT_EQ(a->body, b->body);
  auto bil = client_->Get("/images/small/tile?x=0&y=0&zoom=2.5&method=bilinear");
  ASSERT_EQ(bil->status, 200);
  EXPECT_NE(bil->body, a->body);
  EXPECT_EQ(bil->get_header_value("X-Strategy"), "bilinear_only");
  EXPECT_EQ(a->get_header_value("X-Strategy"), "model_then_downsample");
}

TEST_F(ServiceTest, TileErrors) {
  expect_error(client_->Get("/images/nope/tile?x=0&y=0&zoom=2"), 404, "unknown_image");
  expect_error(client_->Get("/images/grid/tile?x=4&y=0&zoom=2"), 409, "tile_out_of_grid");
  expect_error(client_->Get("/images/grid/tile?x=-1&y=0&zoom=2"), 409, "tile_out_of_grid");
  expect_error(client_->Get("/images/grid/tile?x=0&y=0&zoom=abc"), 400, "malformed_parameter");
  expect_error(client_->Get("/images/grid/tile?x=0&y=0"), 400, "missing_parameter");
  expect_error(client_->Get("/images/grid/tile?x=0&y=0&zoom=2&method=nearest"), 400, "malformed_parameter");
  expect_error(client_->Get("/nowhere"), 404, "not_found");
}

TEST_F(ServiceTest, ZoomIsClampedAndEchoed) {
  auto r = client_->Post("/images/small/zoom", R"({"focus_x": 3, "focus_y": 4, "zoom": 9.5})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 202);
  const auto j = json::parse(r->body);
  EXPECT_EQ(j["zoom"], 5.0);
  EXPECT_EQ(j["requested_zoom"], 9.5);
  EXPECT_EQ(j["clamped"], true);
  EXPECT_EQ(j["total"], 1);
  expect_error(client_->Post("/images/small/zoom", R"({"focus_x": 3, "zoom": 2})", "application/json"), 400,
               "malformed_body");
  expect_error(client_->Post("/images/small/zoom", "zoom=2", "text/plain"), 400, "malformed_body");
  expect_error(client_->Post("/images/small/zoom", R"({"focus_x": 0, "focus_y": 0, "zoom": "big"})", "application/json"),
               400, "malformed_body");
  expect_error(client_->Post("/images/none/zoom", R"({"focus_x": 0, "focus_y": 0, "zoom": 2})", "application/json"), 404,
               "unknown_image");
  expect_error(client_->Get("/requests/12345/progress"), 404, "unknown_request");
  expect_error(client_->Get("/requests/abc/progress"), 404, "unknown_request");
}

TEST_F(ServiceTest, GestureCompletionOrderFollowsDistance) {
  // Simulated scheduler: nothing runs until the request is queued, then the
  // single worker drains it in priority order.
  const double fx = 900, fy = 120;
  auto r = client_->Post("/images/grid/zoom", json{{"focus_x", fx}, {"focus_y", fy}, {"zoom", 2.0}}.dump(),
                         "application/json");
  ASSERT_EQ(r->status, 202);
  const auto rid = json::parse(r->body)["request_id"].get<std::uint64_t>();
  sched_->start(1);
  sched_->wait(rid);
  auto p = client_->Get("/requests/" + std::to_string(rid) + "/progress");
  ASSERT_EQ(p->status, 200);
  const auto j = json::parse(p->body);
  EXPECT_EQ(j["done"], 16);
  EXPECT_EQ(j["total"], 16);
  std::vector<double> dist, order, latency;
  for (const auto& t : j["tiles"]) {
    const double cx = t["x"].get<double>() * 256 + 128, cy = t["y"].get<double>() * 256 + 128;
    dist.push_back(std::hypot(cx - fx, cy - fy));
    order.push_back(t["order"].get<double>());
    latency.push_back(t["latency_ms"].get<double>());
  }
  EXPECT_GT(spearman(dist, order), 0.8);
  EXPECT_GT(spearman(dist, latency), 0.8);
  EXPECT_TRUE(std::is_sorted(latency.begin(), latency.end()));
}

TEST_F(ServiceTest, RatingsAreAppended) {
  auto r = client_->Post("/ratings", R"({"image_id": "grid", "method": "splitsr", "score": 6})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  client_->Post("/ratings", R"({"image_id": "small", "method": "bilinear", "score": 2})", "application/json");
  expect_error(client_->Post("/ratings", R"({"image_id": "grid", "method": "splitsr", "score": 8})", "application/json"),
               400, "malformed_body");
  expect_error(client_->Post("/ratings", R"({"image_id": "grid", "method": "splitsr", "score": 2.5})", "application/json"),
               400, "malformed_body");
  expect_error(client_->Post("/ratings", R"({"image_id": "zzz", "method": "splitsr", "score": 3})", "application/json"),
               404, "unknown_image");
  std::ifstream in(ratings_);
  std::vector<json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(json::parse(line));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0]["image_id"], "grid");
  EXPECT_EQ(lines[0]["score"], 6);
  EXPECT_EQ(lines[1]["method"], "bilinear");
}

TEST(ServiceNoModel, BilinearStillWorks) {
  auto sched = std::make_shared<ZoomScheduler>();
  std::mt19937_64 rng(1);
  sched->add_image("a", quantize(random_tensor<float>({1, 3, 20, 20}, rng, 0, 255)));
  TileService svc(sched, (fs::temp_directory_path() / "splitsr_unused.jsonl").string());
  httplib::Server srv;
  svc.install(srv);
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  auto ok = cli.Get("/images/a/tile?x=0&y=0&zoom=3&method=bilinear");
  EXPECT_EQ(ok->status, 200);
  auto no = cli.Get("/images/a/tile?x=0&y=0&zoom=3&method=splitsr");
  EXPECT_EQ(no->status, 503);
  auto low = cli.Get("/images/a/tile?x=0&y=0&zoom=1.5&method=splitsr");
  EXPECT_EQ(low->status, 200);
  srv.stop();
  t.join();
}
