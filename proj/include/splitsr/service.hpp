#pragma once

#include <atomic>
#include <ctime>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "splitsr/image_io.hpp"
#include "splitsr/zoom.hpp"

namespace splitsr {

// Error body for every non-2xx response:
//   {"error": {"code": "...", "message": "...", "request_id": "..."}}
struct ApiError {
  int status = 500;
  std::string code;
  std::string message;
};

// HTTP front end for the zoom scheduler. Routes:
//   GET  /images
//   GET  /images/:id/tile?x=&y=&zoom=&method=splitsr|bilinear   (PNG)
//   POST /images/:id/zoom      {"focus_x", "focus_y", "zoom", "method"?}
//   GET  /requests/:rid/progress
//   POST /ratings              {"image_id", "method", "score"}
class TileService {
public:
  TileService(std::shared_ptr<ZoomScheduler> scheduler, std::string ratings_path)
      : sched_(std::move(scheduler)), ratings_path_(std::move(ratings_path)) {}

  void install(httplib::Server& srv) {
    srv.set_pre_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      res.set_header("X-Request-Id", "req-" + std::to_string(++counter_));
      res.set_header("Access-Control-Allow-Origin", "*");
      return httplib::Server::HandlerResponse::Unhandled;
    });
    srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    srv.Get("/images", wrap([this](const httplib::Request& q, httplib::Response& r) { list_images(q, r); }));
    srv.Get("/images/:id/tile", wrap([this](const httplib::Request& q, httplib::Response& r) { get_tile(q, r); }));
    srv.Post("/images/:id/zoom", wrap([this](const httplib::Request& q, httplib::Response& r) { post_zoom(q, r); }));
    srv.Get("/requests/:rid/progress",
            wrap([this](const httplib::Request& q, httplib::Response& r) { get_progress(q, r); }));
    srv.Post("/ratings", wrap([this](const httplib::Request& q, httplib::Response& r) { post_rating(q, r); }));
    srv.set_error_handler([](const httplib::Request& q, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 404) write_error(res, {404, "not_found", "no route for " + q.method + " " + q.path});
      else if (res.status >= 400) write_error(res, {res.status, "http_error", "request failed"});
    });
  }

  static void write_error(httplib::Response& res, const ApiError& e) {
    res.status = e.status;
    nlohmann::json j{{"error", {{"code", e.code}, {"message", e.message}, {"request_id", res.get_header_value("X-Request-Id")}}}};
    res.set_content(j.dump(), "application/json");
  }

private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& q, httplib::Response& r) {
      try {
        h(q, r);
      } catch (const ApiError& e) {
        write_error(r, e);
      } catch (const UnknownImage& e) {
        write_error(r, {404, "unknown_image", e.what()});
      } catch (const UnknownRequest& e) {
        write_error(r, {404, "unknown_request", e.what()});
      } catch (const std::exception& e) {
        write_error(r, {500, "internal", e.what()});
      }
    };
  }

  static double number_param(const httplib::Request& q, const std::string& name) {
    if (!q.has_param(name)) throw ApiError{400, "missing_parameter", "missing query parameter '" + name + "'"};
    const auto v = q.get_param_value(name);
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ApiError{400, "malformed_parameter", "query parameter '" + name + "' is not a number: " + v};
    }
  }

  static Method method_param(const std::string& v) {
    try {
      return parse_method(v);
    } catch (const std::invalid_argument& e) {
      throw ApiError{400, "malformed_parameter", e.what()};
    }
  }

  static nlohmann::json json_body(const httplib::Request& q) {
    try {
      auto j = nlohmann::json::parse(q.body);
      if (!j.is_object()) throw std::invalid_argument("not an object");
      return j;
    } catch (const std::exception&) {
      throw ApiError{400, "malformed_body", "request body must be a JSON object"};
    }
  }

  static double json_number(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number())
      throw ApiError{400, "malformed_body", std::string("field '") + key + "' must be a number"};
    const double d = j[key].get<double>();
    if (!std::isfinite(d)) throw ApiError{400, "malformed_body", std::string("field '") + key + "' must be finite"};
    return d;
  }

  void require_model(Method m, double zoom) const {
    if (strategy_for(m, zoom).kind != Strategy::BilinearOnly && !sched_->has_model())
      throw ApiError{503, "model_unavailable", "no model loaded; use method=bilinear"};
  }

  void list_images(const httplib::Request&, httplib::Response& res) {
    auto arr = nlohmann::json::array();
    for (const auto& im : sched_->images())
      arr.push_back({{"id", im.id}, {"width", im.width}, {"height", im.height}, {"cols", im.cols}, {"rows", im.rows},
                     {"tile_size", kTileSize}});
    res.set_content(arr.dump(), "application/json");
  }

  void get_tile(const httplib::Request& q, httplib::Response& res) {
    const std::string id = q.path_params.at("id");
    const auto& grid = sched_->grid(id);
    const double x = number_param(q, "x"), y = number_param(q, "y");
    const double raw_zoom = number_param(q, "zoom");
    const Method method = method_param(q.has_param("method") ? q.get_param_value("method") : "splitsr");
    if (x != std::floor(x) || y != std::floor(y))
      throw ApiError{400, "malformed_parameter", "tile coordinates must be integers"};
    if (x < 0 || y < 0 || x >= static_cast<double>(grid.cols) || y >= static_cast<double>(grid.rows))
      throw ApiError{409, "tile_out_of_grid", "tile (" + std::to_string(static_cast<long long>(x)) + "," +
                                                  std::to_string(static_cast<long long>(y)) + ") is outside the " +
                                                  std::to_string(grid.cols) + "x" + std::to_string(grid.rows) + " grid"};
    const double zoom = clamp_zoom(raw_zoom);
    require_model(method, zoom);
    const auto index = static_cast<std::size_t>(y) * grid.cols + static_cast<std::size_t>(x);
    const auto tile = sched_->tile_result(id, index, zoom, method);
    const auto png = encode_png(*tile);
    const auto r = scaled_rect(grid.tiles[index], zoom);
    res.set_header("X-Zoom", std::to_string(zoom));
    res.set_header("X-Tile-Origin", std::to_string(r.x0) + "," + std::to_string(r.y0));
    res.set_header("X-Strategy", std::string(to_string(strategy_for(method, zoom).kind)));
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }

  void post_zoom(const httplib::Request& q, httplib::Response& res) {
    const std::string id = q.path_params.at("id");
    sched_->grid(id);  // 404 before body validation
    const auto body = json_body(q);
    const double fx = json_number(body, "focus_x"), fy = json_number(body, "focus_y");
    const double raw_zoom = json_number(body, "zoom");
    Method method = Method::SplitSR;
    if (body.contains("method")) {
      if (!body["method"].is_string()) throw ApiError{400, "malformed_body", "field 'method' must be a string"};
      method = method_param(body["method"].get<std::string>());
    }
    require_model(method, clamp_zoom(raw_zoom));
    const auto r = sched_->submit(id, fx, fy, raw_zoom, method);
    const auto p = sched_->progress(r.id);
    nlohmann::json j{{"request_id", r.id}, {"zoom", r.zoom},         {"requested_zoom", raw_zoom},
                     {"clamped", r.zoom != raw_zoom}, {"total", p.total}, {"method", std::string(to_string(method))}};
    res.status = 202;
    res.set_content(j.dump(), "application/json");
  }

  void get_progress(const httplib::Request& q, httplib::Response& res) {
    const std::string raw = q.path_params.at("rid");
    std::uint64_t rid = 0;
    try {
      std::size_t pos = 0;
      rid = std::stoull(raw, &pos);
      if (pos != raw.size()) throw std::invalid_argument(raw);
    } catch (const std::exception&) {
      throw ApiError{404, "unknown_request", "unknown request '" + raw + "'"};
    }
    const auto p = sched_->progress(rid);
    const auto& grid = sched_->grid(p.image);
    auto tiles = nlohmann::json::array();
    for (const auto& c : p.completions)
      tiles.push_back({{"tile", c.tile},
                       {"x", grid.tiles[c.tile].col},
                       {"y", grid.tiles[c.tile].row},
                       {"latency_ms", c.latency_ms},
                       {"order", c.sequence},
                       {"cached", c.cached}});
    nlohmann::json j{{"request_id", p.request}, {"image_id", p.image}, {"zoom", p.zoom},
                     {"method", std::string(to_string(p.method))}, {"done", p.done}, {"total", p.total},
                     {"cancelled", p.cancelled}, {"tiles", tiles}};
    res.set_content(j.dump(), "application/json");
  }

  void post_rating(const httplib::Request& q, httplib::Response& res) {
    const auto body = json_body(q);
    if (!body.contains("image_id") || !body["image_id"].is_string())
      throw ApiError{400, "malformed_body", "field 'image_id' must be a string"};
    if (!body.contains("method") || !body["method"].is_string())
      throw ApiError{400, "malformed_body", "field 'method' must be a string"};
    if (!body.contains("score") || !body["score"].is_number_integer())
      throw ApiError{400, "malformed_body", "field 'score' must be an integer"};
    const auto image = body["image_id"].get<std::string>();
    const auto method = method_param(body["method"].get<std::string>());
    const auto score = body["score"].get<long long>();
    if (score < 1 || score > 7) throw ApiError{400, "malformed_body", "score must be between 1 and 7"};
    sched_->grid(image);
    nlohmann::json line{{"image_id", image},
                        {"method", std::string(to_string(method))},
                        {"score", score},
                        {"time", static_cast<long long>(std::time(nullptr))}};
    {
      std::lock_guard lk(ratings_mu_);
      std::ofstream os(ratings_path_, std::ios::app);
      if (!os) throw ApiError{500, "ratings_log", "cannot open ratings log"};
      os << line.dump() << "\n";
    }
    res.status = 201;
    res.set_content(line.dump(), "application/json");
  }

  std::shared_ptr<ZoomScheduler> sched_;
  std::string ratings_path_;
  std::mutex ratings_mu_;
  std::atomic<std::uint64_t> counter_{0};
};

}  // namespace splitsr
