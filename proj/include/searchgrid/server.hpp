#pragma once

#include "searchgrid/session.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <string>
#include <thread>

namespace searchgrid
{

/// HTTP front end for a SessionRegistry.
///
///   POST /sessions                              scenario document -> {id, revision}
///   GET  /sessions/{id}/grid                    grid, layers, sketches, starts
///   GET  /sessions/{id}/reward-map              rasters + manifest (?format=csv&layer=mean|variance)
///   POST /sessions/{id}/inputs                  input delta -> new map summary
///   POST /sessions/{id}/episode:{start|step|pause|reset}
///   GET  /sessions/{id}/stream?from=N&follow=0|1   newline-delimited JSON frames
class MissionServer
{
public:
    explicit MissionServer(SessionRegistry& registry) : registry_(registry) { routes(); }

    ~MissionServer() { stop(); }

    MissionServer(const MissionServer&) = delete;
    MissionServer& operator=(const MissionServer&) = delete;

    /// Blocks serving on host:port.
    bool listen(const std::string& host, int port) { return http_.listen(host, port); }

    /// Binds an ephemeral port and serves on a background thread.
    int start_background(const std::string& host = "127.0.0.1")
    {
        const int port = http_.bind_to_any_port(host);
        if (port < 0)
            throw std::runtime_error("could not bind " + host);
        thread_ = std::thread([this] { http_.listen_after_bind(); });
        http_.wait_until_ready();
        return port;
    }

    void stop()
    {
        stopping_ = true;
        registry_.shutdown();
        http_.stop();
        if (thread_.joinable())
            thread_.join();
    }

private:
    static void send_json(httplib::Response& res, const json& body, int status = 200)
    {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <class F>
    auto guarded(F&& f)
    {
        return [this, f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
            try
            {
                f(req, res);
            }
            catch (const BadRequest& e)
            {
                json body{{"error", e.what()}};
                if (!e.diagnostics().empty())
                    body["diagnostics"] = e.diagnostics();
                send_json(res, body, 400);
            }
            catch (const NotFound& e)
            {
                send_json(res, {{"error", e.what()}}, 404);
            }
            catch (const Conflict& e)
            {
                send_json(res, {{"error", e.what()}}, 409);
            }
            catch (const json::exception& e)
            {
                send_json(res, {{"error", std::string("malformed JSON: ") + e.what()}}, 400);
            }
            catch (const std::exception& e)
            {
                send_json(res, {{"error", e.what()}}, 500);
            }
        };
    }

    static json body_of(const httplib::Request& req)
    {
        if (req.body.empty())
            return json::object();
        return json::parse(req.body);
    }

    static json map_summary(const FusionSnapshot& snap)
    {
        const auto& fr = snap.fusion;
        return {{"revision", snap.revision},
                {"n_phi", fr.features.n_phi()},
                {"n_obs", fr.features.n_obs()},
                {"feature_columns", fr.features.column_names()},
                {"mean_min", fr.map.mean.minCoeff()},
                {"mean_max", fr.map.mean.maxCoeff()},
                {"variance_max", fr.map.variance.maxCoeff()},
                {"warnings", fr.warnings}};
    }

    static json grid_document(const FusionSnapshot& snap)
    {
        const auto& sc = snap.scenario;
        json doc = to_json(sc);
        json out{{"revision", snap.revision},
                 {"rows", sc.grid.n_rows},
                 {"cols", sc.grid.n_cols},
                 {"resolution", sc.grid.resolution},
                 {"origin", {sc.grid.origin.x, sc.grid.origin.y}},
                 {"features", sc.vocabulary},
                 {"layers", doc["layers"]},
                 {"starts", doc["simulation"]["starts"]}};
        json sketches = json::array();
        for (const auto& [name, sm] : snap.fusion.sketches)
        {
            json v = json::array();
            for (auto p : sm.sketch.vertices)
                v.push_back({p.x, p.y});
            sketches.push_back({{"name", name}, {"vertices", v}});
        }
        out["sketches"] = sketches;
        return out;
    }

    static json raster_rows(const Eigen::VectorXd& v, int rows, int cols)
    {
        json out = json::array();
        for (int r = 0; r < rows; ++r)
        {
            json row = json::array();
            for (int c = 0; c < cols; ++c)
                row.push_back(v(r * cols + c));
            out.push_back(row);
        }
        return out;
    }

    void routes()
    {
        http_.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = registry_.create(body_of(req));
                       const auto snap = s->snapshot();
                       json body = map_summary(*snap);
                       body["id"] = s->id();
                       body["cache_hit"] = snap->fusion.cache_hit;
                       send_json(res, body, 201);
                   }));

        http_.Get(R"(/sessions/([^/]+)/grid)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                      send_json(res, grid_document(*registry_.get(req.matches[1])->snapshot()));
                  }));

        http_.Get(R"(/sessions/([^/]+)/reward-map)",
                  guarded([this](const httplib::Request& req, httplib::Response& res) {
                      const auto snap = registry_.get(req.matches[1])->snapshot();
                      const auto& m = snap->fusion.map;
                      res.set_header("X-Revision", std::to_string(snap->revision));
                      if (req.get_param_value("format") == "csv")
                      {
                          const auto layer = req.get_param_value("layer");
                          if (layer != "mean" && layer != "variance")
                              throw BadRequest("layer must be mean or variance");
                          res.set_content(raster_csv(layer == "mean" ? m.mean : m.variance, m.n_rows, m.n_cols),
                                          "text/csv");
                          return;
                      }
                      send_json(res, {{"revision", snap->revision},
                                      {"rows", m.n_rows},
                                      {"cols", m.n_cols},
                                      {"mean", raster_rows(m.mean, m.n_rows, m.n_cols)},
                                      {"variance", raster_rows(m.variance, m.n_rows, m.n_cols)},
                                      {"manifest", reward_map_manifest(snap->scenario, snap->fusion, "reward")}});
                  }));

        http_.Post(R"(/sessions/([^/]+)/inputs)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto snap = registry_.submit_inputs(req.matches[1], body_of(req));
                       send_json(res, map_summary(*snap));
                   }));

        http_.Post(R"(/sessions/([^/]+)/episode:(start|step|pause|reset))",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = registry_.get(req.matches[1]);
                       const std::string cmd = req.matches[2];
                       const json body = body_of(req);
                       if (cmd == "start")
                           send_json(res, s->start(body));
                       else if (cmd == "step")
                           send_json(res, s->step());
                       else if (cmd == "pause")
                           send_json(res, s->pause());
                       else
                           send_json(res, s->reset(body));
                   }));

        http_.Get(R"(/sessions/([^/]+)/stream)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                      auto s = registry_.get(req.matches[1]);
                      std::size_t from = 0;
                      if (req.has_param("from"))
                      {
                          try
                          {
                              from = std::stoull(req.get_param_value("from"));
                          }
                          catch (const std::exception&)
                          {
                              throw BadRequest("from must be a non-negative integer");
                          }
                      }
                      const bool follow = req.get_param_value("follow") != "0";
                      auto next = std::make_shared<std::size_t>(from);
                      res.set_chunked_content_provider(
                          "application/x-ndjson", [this, s, next, follow](std::size_t, httplib::DataSink& sink) {
                              const auto lines =
                                  s->frames_since(*next, follow ? std::chrono::milliseconds(250) : std::chrono::milliseconds(0));
                              for (const auto& line : lines)
                              {
                                  const std::string chunk = line + "\n";
                                  if (!sink.write(chunk.data(), chunk.size()))
                                      return false;
                                  ++*next;
                              }
                              if (!follow || stopping_ || s->closed())
                                  sink.done();
                              return true;
                          });
                  }));
    }

    SessionRegistry& registry_;
    httplib::Server http_;
    std::thread thread_;
    std::atomic<bool> stopping_{false};
};

} // namespace searchgrid
