#include "searchgrid/server.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

using namespace searchgrid;
namespace fs = std::filesystem;

namespace
{

json minimal_doc()
{
    return json::parse(R"({"id": "minimal", "grid": {"rows": 4, "cols": 5, "resolution": 10},
                           "pomdp": {"b_max": 30}, "planner": {"n_simulations": 40}})");
}

json sample_doc()
{
    std::ifstream in(fs::path(SEARCHGRID_TEST_DATA) / "scenarios" / "creek_valley.json");
    auto doc = json::parse(in);
    doc["planner"]["n_simulations"] = 60;
    return doc;
}

struct TempDir
{
    fs::path path;
    TempDir()
    {
        path = fs::temp_directory_path() / ("searchgrid-service-" +
                                            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

class Service
{
public:
    explicit Service(std::optional<fs::path> state_dir = std::nullopt)
        : registry(std::move(state_dir), std::nullopt), server(registry)
    {
        port = server.start_background();
    }

    ~Service() { server.stop(); }

    httplib::Client client() const
    {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(30, 0);
        return c;
    }

    std::pair<int, json> post(const std::string& path, const json& body) const
    {
        auto c = client();
        auto res = c.Post(path, body.dump(), "application/json");
        if (!res)
            throw std::runtime_error("no response from " + path);
        return {res->status, res->body.empty() ? json() : json::parse(res->body)};
    }

    std::pair<int, std::string> get(const std::string& path) const
    {
        auto c = client();
        auto res = c.Get(path);
        if (!res)
            throw std::runtime_error("no response from " + path);
        return {res->status, res->body};
    }

    std::string create(const json& doc) const
    {
        auto [status, body] = post("/sessions", doc);
        EXPECT_EQ(status, 201) << body.dump();
        return body.at("id").get<std::string>();
    }

    json reward_map(const std::string& id) const
    {
        auto [status, body] = get("/sessions/" + id + "/reward-map");
        EXPECT_EQ(status, 200);
        return json::parse(body);
    }

    std::vector<json> stream(const std::string& id, std::size_t from) const
    {
        auto [status, body] = get("/sessions/" + id + "/stream?follow=0&from=" + std::to_string(from));
        EXPECT_EQ(status, 200);
        std::vector<json> frames;
        std::istringstream in(body);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty())
                frames.push_back(json::parse(line));
        return frames;
    }

    SessionRegistry registry;
    MissionServer server;
    int port = 0;
};

double at(const json& raster, Cell c) { return raster[static_cast<std::size_t>(c.row)][static_cast<std::size_t>(c.col)]; }

// frame content without its position in the stream
json body_of(json f)
{
    f.erase("event");
    f.erase("seq");
    return f;
}

} // namespace

TEST(Service, MinimalScenarioGivesZeroMap)
{
    Service svc;
    const auto id = svc.create(minimal_doc());
    const auto map = svc.reward_map(id);
    EXPECT_EQ(map["rows"], 4);
    for (const auto& row : map["mean"])
        for (const auto& v : row)
            EXPECT_EQ(v.get<double>(), 0.0);
    EXPECT_EQ(map["revision"], 1);
}

TEST(Service, ValidationErrorsAre400WithDiagnostics)
{
    Service svc;
    auto doc = minimal_doc();
    doc["priorities"] = {"rivers"};
    auto [status, body] = svc.post("/sessions", doc);
    EXPECT_EQ(status, 400);
    ASSERT_TRUE(body.contains("diagnostics"));
    EXPECT_EQ(body["diagnostics"][0].get<std::string>().rfind("$.priorities[0]:", 0), 0u) << body.dump();

    const auto id = svc.create(minimal_doc());
    EXPECT_EQ(svc.post("/sessions/" + id + "/inputs", {{"colour", 1}}).first, 400);
    auto c = svc.client();
    auto res = c.Post("/sessions", "{ not json", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
}

TEST(Service, UnknownSessionIs404)
{
    Service svc;
    EXPECT_EQ(svc.get("/sessions/s99/grid").first, 404);
    EXPECT_EQ(svc.post("/sessions/s99/episode:step", json::object()).first, 404);
}

TEST(Service, GridDocumentListsLayersSketchesAndStarts)
{
    Service svc;
    const auto id = svc.create(sample_doc());
    auto [status, body] = svc.get("/sessions/" + id + "/grid");
    ASSERT_EQ(status, 200);
    const auto g = json::parse(body);
    EXPECT_EQ(g["rows"], 20);
    EXPECT_EQ(g["layers"].size(), 6u);
    EXPECT_EQ(g["sketches"].size(), 2u);
    EXPECT_EQ(g["starts"].size(), 4u);
}

TEST(Service, ObservationAddsSemanticColumn)
{
    Service svc;
    const auto id = svc.create(sample_doc());
    const auto before = svc.reward_map(id);
    auto [status, body] = svc.post("/sessions/" + id + "/inputs",
                                   {{"observations", {{{"sketch_name", "Creek Bend"}, {"label", "NE"}}}}});
    ASSERT_EQ(status, 200) << body.dump();
    EXPECT_EQ(body["n_obs"], 3);
    EXPECT_EQ(body["revision"], 2);
    EXPECT_EQ(before["manifest"]["feature_columns"].size() + 1, body["feature_columns"].size());
}

TEST(Service, EmptyDeltaBumpsRevisionAndKeepsMap)
{
    Service svc;
    const auto id = svc.create(sample_doc());
    const auto before = svc.reward_map(id);
    auto [status, body] = svc.post("/sessions/" + id + "/inputs", json::object());
    ASSERT_EQ(status, 200);
    EXPECT_EQ(body["revision"], 2);
    const auto after = svc.reward_map(id);
    EXPECT_EQ(after["mean"], before["mean"]);
    EXPECT_EQ(after["variance"], before["variance"]);
}

TEST(Service, AvoidWaypointLowersRewardAtThatCell)
{
    Service svc;
    const auto doc = sample_doc();
    const auto id = svc.create(doc);
    const auto before = svc.reward_map(id);
    const auto sc = parse_scenario(doc);
    std::set<int> visit;
    for (auto p : sc.visit)
        visit.insert(sc.grid.index(sc.grid.snap(p)));
    Cell best{0, 0};
    double best_v = -1e300;
    for (int r = 0; r < 20; ++r)
        for (int c = 0; c < 20; ++c)
            if (!visit.count(sc.grid.index({r, c})) && at(before["mean"], {r, c}) > best_v)
            {
                best = {r, c};
                best_v = at(before["mean"], {r, c});
            }
    const Vec2 centre = sc.grid.center(best);
    auto [status, body] = svc.post("/sessions/" + id + "/inputs",
                                   {{"waypoints", {{"avoid", {{centre.x, centre.y}}}}}});
    ASSERT_EQ(status, 200) << body.dump();
    EXPECT_LT(at(svc.reward_map(id)["mean"], best), best_v);
}

TEST(Service, RewardMapCsvCarriesRevisionHeader)
{
    Service svc;
    const auto id = svc.create(sample_doc());
    auto c = svc.client();
    auto res = c.Get("/sessions/" + id + "/reward-map?format=csv&layer=mean");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("X-Revision"), "1");
    const auto json_map = svc.reward_map(id);
    std::istringstream in(res->body);
    std::string line;
    int rows = 0;
    while (std::getline(in, line))
    {
        std::istringstream ls(line);
        std::string cell;
        int col = 0;
        while (std::getline(ls, cell, ','))
        {
            EXPECT_EQ(std::stod(cell), json_map["mean"][static_cast<std::size_t>(rows)][static_cast<std::size_t>(col)]);
            ++col;
        }
        EXPECT_EQ(col, 20);
        ++rows;
    }
    EXPECT_EQ(rows, 20);
    EXPECT_EQ(svc.get("/sessions/" + id + "/reward-map?format=csv&layer=bogus").first, 400);
}

TEST(Service, EpisodeControlErrorsAre409)
{
    Service svc;
    const auto id = svc.create(minimal_doc());
    EXPECT_EQ(svc.post("/sessions/" + id + "/episode:step", json::object()).first, 409);
    EXPECT_EQ(svc.post("/sessions/" + id + "/episode:reset", json::object()).first, 409);
    EXPECT_EQ(svc.post("/sessions/" + id + "/episode:start", {{"seed", 2}, {"target", {3, 4}}}).first, 200);
    EXPECT_EQ(svc.post("/sessions/" + id + "/episode:start", {{"seed", 2}}).first, 409);
    EXPECT_EQ(svc.post("/sessions/" + id + "/episode:start", {{"agent", "greedy"}}).first, 409);
    const auto other = svc.create(minimal_doc());
    EXPECT_EQ(svc.post("/sessions/" + other + "/episode:start", {{"agent", "greedy"}}).first, 400);
    EXPECT_EQ(svc.post("/sessions/" + other + "/episode:start", {{"start", {9, 9}}}).first, 400);
}

TEST(Service, TenStepsGiveTenFramesAndStreamResumes)
{
    Service svc;
    const auto id = svc.create(sample_doc());
    ASSERT_EQ(svc.post("/sessions/" + id + "/episode:start", {{"seed", 3}, {"target", {19, 19}}, {"start", {0, 0}}}).first,
              200);
    std::vector<json> replies;
    for (int k = 0; k < 10; ++k)
    {
        auto [status, f] = svc.post("/sessions/" + id + "/episode:step", json::object());
        ASSERT_EQ(status, 200) << f.dump();
        replies.push_back(f);
    }
    const auto all = svc.stream(id, 0);
    ASSERT_EQ(all.size(), 11u);
    EXPECT_EQ(all[0]["event"], "start");
    for (int k = 0; k < 10; ++k)
    {
        EXPECT_EQ(all[static_cast<std::size_t>(k + 1)], replies[static_cast<std::size_t>(k)]);
        EXPECT_EQ(all[static_cast<std::size_t>(k + 1)]["t"], k + 1);
    }
    EXPECT_TRUE(replies.back().contains("root_visits"));
    EXPECT_TRUE(replies.back().contains("belief"));

    const auto tail = svc.stream(id, 6);
    ASSERT_EQ(tail.size(), 5u);
    EXPECT_EQ(tail.front(), all[6]);
    EXPECT_TRUE(svc.stream(id, 50).empty());
    EXPECT_EQ(svc.get("/sessions/" + id + "/stream?follow=0&from=x").first, 400);
}

TEST(Service, FollowStreamDeliversLiveFrames)
{
    Service svc;
    const auto id = svc.create(minimal_doc());
    ASSERT_EQ(svc.post("/sessions/" + id + "/episode:start", {{"seed", 1}, {"target", {3, 4}}}).first, 200);
    std::vector<std::string> lines;
    std::thread reader([&] {
        auto c = svc.client();
        std::string buffer;
        c.Get("/sessions/" + id + "/stream?from=0", [&](const char* data, std::size_t n) {
            buffer.append(data, n);
            std::size_t pos;
            while ((pos = buffer.find('\n')) != std::string::npos)
            {
                lines.push_back(buffer.substr(0, pos));
                buffer.erase(0, pos + 1);
            }
            return lines.size() < 4;
        });
    });
    for (int k = 0; k < 3; ++k)
    {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        svc.post("/sessions/" + id + "/episode:step", json::object());
    }
    reader.join();
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(json::parse(lines[3])["event"], "step");
}

TEST(Service, ResetReproducesAFreshEpisode)
{
    Service svc;
    const auto id = svc.create(sample_doc());
    const json cfg{{"seed", 11}, {"start", {0, 19}}, {"target", {10, 3}}};
    const auto start = svc.post("/sessions/" + id + "/episode:start", cfg).second;
    std::vector<json> first;
    for (int k = 0; k < 6; ++k)
        first.push_back(svc.post("/sessions/" + id + "/episode:step", json::object()).second);
    const auto reset = svc.post("/sessions/" + id + "/episode:reset", json::object()).second;
    EXPECT_EQ(body_of(reset), body_of(start));
    for (int k = 0; k < 6; ++k)
        EXPECT_EQ(body_of(svc.post("/sessions/" + id + "/episode:step", json::object()).second),
                  body_of(first[static_cast<std::size_t>(k)]));
}

TEST(Service, SameSeedSessionsProduceIdenticalFrames)
{
    Service svc;
    const auto a = svc.create(sample_doc());
    const auto b = svc.create(sample_doc());
    for (const auto& id : {a, b})
    {
        svc.post("/sessions/" + id + "/episode:start", {{"seed", 5}});
        for (int k = 0; k < 5; ++k)
            svc.post("/sessions/" + id + "/episode:step", json::object());
    }
    EXPECT_EQ(svc.stream(a, 0), svc.stream(b, 0));
}

TEST(Service, StepOnFinishedEpisodeChangesNothing)
{
    Service svc;
    const auto id = svc.create(minimal_doc());
    const auto f0 = svc.post("/sessions/" + id + "/episode:start", {{"seed", 1}, {"start", {1, 1}}, {"target", {1, 1}}});
    ASSERT_EQ(f0.first, 200);
    const auto s1 = svc.post("/sessions/" + id + "/episode:step", json::object()).second;
    EXPECT_TRUE(s1["terminal"].get<bool>());
    EXPECT_EQ(s1["outcome"], "found");
    const auto s2 = svc.post("/sessions/" + id + "/episode:step", json::object()).second;
    EXPECT_EQ(body_of(s1), body_of(s2));
    EXPECT_EQ(s2["t"], 0);
    EXPECT_EQ(s2["seq"], s1["seq"].get<int>() + 1);
}

TEST(Service, InputsDuringEpisodeEmitFrameAndKeepRunning)
{
    Service svc;
    const auto id = svc.create(sample_doc());
    svc.post("/sessions/" + id + "/episode:start", {{"seed", 2}, {"target", {19, 19}}});
    svc.post("/sessions/" + id + "/episode:step", json::object());
    svc.post("/sessions/" + id + "/inputs", {{"priorities", {"trails"}}});
    const auto f = svc.post("/sessions/" + id + "/episode:step", json::object()).second;
    EXPECT_EQ(f["revision"], 2);
    EXPECT_EQ(f["t"], 2);
    const auto frames = svc.stream(id, 0);
    ASSERT_EQ(frames.size(), 4u);
    EXPECT_EQ(frames[2]["event"], "inputs");
}

TEST(Service, RestartFromStateDirReproducesMaps)
{
    TempDir tmp;
    std::string id;
    json before;
    {
        Service svc(tmp.path);
        id = svc.create(sample_doc());
        svc.post("/sessions/" + id + "/inputs", {{"observations", {{{"sketch_name", "Upper Trail"}, {"label", "S"}}}}});
        before = svc.reward_map(id);
    }
    Service again(tmp.path);
    const auto after = again.reward_map(id);
    EXPECT_EQ(after["revision"], 2);
    EXPECT_EQ(after["mean"], before["mean"]);
    EXPECT_EQ(after["variance"], before["variance"]);
    // new sessions do not reuse ids
    EXPECT_NE(again.create(minimal_doc()), id);
}

TEST(Service, ConcurrentSubmitsSerialize)
{
    TempDir tmp;
    Service svc(tmp.path);
    const auto id = svc.create(sample_doc());
    constexpr int n = 6;
    std::vector<std::thread> workers;
    std::atomic<int> ok{0};
    for (int k = 0; k < n; ++k)
        workers.emplace_back([&, k] {
            const double x = 12.5 + 25.0 * k;
            if (svc.post("/sessions/" + id + "/inputs", {{"waypoints", {{"visit", {{x, 487.5}}}}}}).first == 200)
                ++ok;
        });
    for (auto& w : workers)
        w.join();
    EXPECT_EQ(ok.load(), n);
    const auto map = svc.reward_map(id);
    EXPECT_EQ(map["revision"], 1 + n);
    std::set<std::uint64_t> revisions;
    for (const auto& f : svc.stream(id, 0))
        revisions.insert(f["revision"].get<std::uint64_t>());
    EXPECT_EQ(revisions.size(), static_cast<std::size_t>(n));

    std::ifstream in(tmp.path / (id + ".json"));
    const auto saved = json::parse(in);
    EXPECT_EQ(saved["revision"], 1 + n);
    EXPECT_EQ(saved["scenario"]["waypoints"]["visit"].size(), 2u + n);
}
