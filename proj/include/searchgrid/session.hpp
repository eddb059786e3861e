#pragma once

#include "searchgrid/scenario.hpp"
#include "searchgrid/simulation.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace searchgrid
{

/// Request rejected for a reason the client can fix (maps to HTTP 400).
class BadRequest : public std::invalid_argument
{
public:
    explicit BadRequest(const std::string& what, std::vector<std::string> diagnostics = {})
        : std::invalid_argument(what), diagnostics_(std::move(diagnostics))
    {
    }
    [[nodiscard]] const std::vector<std::string>& diagnostics() const { return diagnostics_; }

private:
    std::vector<std::string> diagnostics_;
};

/// Request conflicts with the current session state (maps to HTTP 409).
class Conflict : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Applies an input delta {priorities?, sketches?, observations?,
/// waypoints?}. Priorities replace the current list; the rest are appended.
/// The delta is spliced into a copy of the scenario document and the whole
/// document revalidated, so errors carry the same paths.
inline Scenario apply_delta(const Scenario& current, const json& delta)
{
    if (!delta.is_object())
        throw BadRequest("input delta must be a JSON object");
    for (const auto& [key, _] : delta.items())
        if (key != "priorities" && key != "sketches" && key != "observations" && key != "waypoints")
            throw BadRequest("unknown input field '" + key + "'");
    json doc = to_json(current);
    auto append = [&](const char* key, const json& items) {
        if (!items.is_array())
            throw BadRequest(std::string("$.") + key + ": expected a list");
        for (const auto& it : items)
            doc[key].push_back(it);
    };
    if (delta.contains("priorities"))
        doc["priorities"] = delta["priorities"];
    if (delta.contains("sketches"))
        append("sketches", delta["sketches"]);
    if (delta.contains("observations"))
        append("observations", delta["observations"]);
    if (delta.contains("waypoints"))
    {
        const json& wp = delta["waypoints"];
        if (!wp.is_object())
            throw BadRequest("$.waypoints: expected an object");
        for (const char* k : {"visit", "avoid"})
            if (wp.contains(k))
            {
                if (!wp[k].is_array())
                    throw BadRequest(std::string("$.waypoints.") + k + ": expected a list");
                for (const auto& p : wp[k])
                    doc["waypoints"][k].push_back(p);
            }
    }
    try
    {
        return parse_scenario(doc);
    }
    catch (const ScenarioError& e)
    {
        throw BadRequest(e.what(), e.diagnostics());
    }
}

struct EpisodeConfig
{
    AgentKind agent = AgentKind::pomcp;
    std::uint64_t seed = 1;
    int start = 0;
    int target = 0;
};

/// Immutable view of one committed input revision.
struct FusionSnapshot
{
    std::uint64_t revision = 0;
    Scenario scenario;
    FusionResult fusion;
};

/// A mission: scenario, fused reward map at the latest revision, and at most
/// one live episode. Input submissions serialize on one writer lock; readers
/// take the current snapshot without waiting for the fit.
class MissionSession
{
public:
    MissionSession(std::string id, Scenario scenario, std::optional<std::filesystem::path> cache_dir,
                   std::uint64_t revision = 1)
        : id_(std::move(id)), cache_dir_(std::move(cache_dir))
    {
        auto snap = std::make_shared<FusionSnapshot>();
        snap->revision = revision;
        snap->fusion = fuse(scenario, cache_dir_);
        check_reward_bound(scenario, snap->fusion);
        snap->scenario = std::move(scenario);
        snapshot_ = std::move(snap);
    }

    ~MissionSession() { shutdown(); }

    MissionSession(const MissionSession&) = delete;
    MissionSession& operator=(const MissionSession&) = delete;

    [[nodiscard]] const std::string& id() const { return id_; }

    [[nodiscard]] std::shared_ptr<const FusionSnapshot> snapshot() const
    {
        std::shared_lock lock(snap_mu_);
        return snapshot_;
    }

    /// Full refit on the merged inputs; bumps the revision. A live episode
    /// picks up the new map at its next decision.
    std::shared_ptr<const FusionSnapshot> submit_inputs(const json& delta)
    {
        std::lock_guard writer(input_mu_);
        const auto current = snapshot();
        Scenario next = apply_delta(current->scenario, delta);
        auto snap = std::make_shared<FusionSnapshot>();
        try
        {
            snap->fusion = fuse(next, cache_dir_);
        }
        catch (const std::invalid_argument& e)
        {
            throw BadRequest(e.what());
        }
        check_reward_bound(next, snap->fusion);
        snap->scenario = std::move(next);
        snap->revision = current->revision + 1;
        {
            std::unique_lock lock(snap_mu_);
            snapshot_ = snap;
        }
        {
            std::lock_guard ep(episode_mu_);
            if (episode_)
                episode_->runner->set_operator_reward(
                    {snap->fusion.map.mean.data(), snap->fusion.map.mean.data() + snap->fusion.map.mean.size()});
            auto f = frame_locked("inputs", snap->revision);
            push_frame(f);
        }
        return snap;
    }

    // -- episode control ----------------------------------------------------

    /// Starts an episode. Body fields: agent, seed, start [r, c], target
    /// [r, c], auto_interval_ms. Missing target is drawn from the truth model.
    json start(const json& body)
    {
        std::unique_lock lock(episode_mu_);
        if (episode_ && !episode_->runner->done())
            throw Conflict("an episode is already running; reset it first");
        stop_auto(lock);
        const auto snap = snapshot();
        EpisodeConfig cfg = parse_episode_config(body, *snap, std::nullopt);
        create_episode(cfg, *snap);
        auto f = frame_locked("start", snap->revision);
        push_frame(f);
        const int interval = body.is_object() ? body.value("auto_interval_ms", -1) : -1;
        if (interval >= 0)
            start_auto(lock, interval);
        return f;
    }

    /// One decision. On a finished episode returns the unchanged status.
    json step()
    {
        std::lock_guard lock(episode_mu_);
        return step_locked();
    }

    json pause()
    {
        std::unique_lock lock(episode_mu_);
        if (!episode_)
            throw Conflict("no episode to pause; start one first");
        stop_auto(lock);
        auto f = frame_locked("pause", snapshot()->revision);
        push_frame(f);
        return f;
    }

    /// Recreates the episode at t = 0 with the same configuration (fields in
    /// the body override it).
    json reset(const json& body)
    {
        std::unique_lock lock(episode_mu_);
        if (!episode_)
            throw Conflict("no episode to reset; start one first");
        stop_auto(lock);
        const auto snap = snapshot();
        EpisodeConfig cfg = parse_episode_config(body, *snap, episode_->config);
        create_episode(cfg, *snap);
        auto f = frame_locked("reset", snap->revision);
        push_frame(f);
        return f;
    }

    [[nodiscard]] json status() const
    {
        std::lock_guard lock(episode_mu_);
        return frame_locked("status", snapshot()->revision);
    }

    // -- frames -------------------------------------------------------------

    [[nodiscard]] std::size_t frame_count() const
    {
        std::lock_guard lock(frame_mu_);
        return frames_.size();
    }

    /// Frames with sequence number >= from. Blocks up to `wait` for at least
    /// one when none are available yet.
    std::vector<std::string> frames_since(std::size_t from, std::chrono::milliseconds wait = {}) const
    {
        std::unique_lock lock(frame_mu_);
        if (wait.count() > 0)
            frame_cv_.wait_for(lock, wait, [&] { return frames_.size() > from || closed_; });
        if (from >= frames_.size())
            return {};
        return {frames_.begin() + static_cast<std::ptrdiff_t>(from), frames_.end()};
    }

    [[nodiscard]] bool closed() const
    {
        std::lock_guard lock(frame_mu_);
        return closed_;
    }

    void shutdown()
    {
        {
            std::unique_lock lock(episode_mu_);
            stop_auto(lock);
        }
        std::lock_guard lock(frame_mu_);
        closed_ = true;
        frame_cv_.notify_all();
    }

    // -- persistence --------------------------------------------------------

    [[nodiscard]] json persisted() const
    {
        const auto snap = snapshot();
        return {{"id", id_}, {"revision", snap->revision}, {"scenario", to_json(snap->scenario)}};
    }

private:
    struct Episode
    {
        EpisodeConfig config;
        std::unique_ptr<MissionModel> mission;
        std::unique_ptr<EpisodeRunner> runner;
        double cumulative_reward = 0.0;
    };

    static void check_reward_bound(const Scenario& sc, const FusionResult& fr)
    {
        if (fr.map.mean.size() > 0 && !(fr.map.mean.maxCoeff() < sc.reward.r_target))
            throw BadRequest("reward map exceeds r_target; raise pomdp.r_target above the largest cell reward");
    }

    static Cell parse_cell(const json& v, const GridSpec& grid, const char* what)
    {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
            throw BadRequest(std::string(what) + ": expected [row, col]");
        const Cell c{v[0].get<int>(), v[1].get<int>()};
        if (!grid.contains(c))
            throw BadRequest(std::string(what) + ": outside grid");
        return c;
    }

    static EpisodeConfig parse_episode_config(const json& body, const FusionSnapshot& snap,
                                              std::optional<EpisodeConfig> base)
    {
        const auto& sc = snap.scenario;
        const json b = body.is_object() ? body : json::object();
        EpisodeConfig cfg = base.value_or(EpisodeConfig{});
        if (!base)
        {
            cfg.seed = sc.simulation.seed;
            cfg.start = sc.grid.index(sc.simulation.starts.front());
        }
        if (b.contains("agent"))
        {
            const auto a = b["agent"].is_string() ? parse_agent(b["agent"].get<std::string>()) : std::nullopt;
            if (!a)
                throw BadRequest("agent: expected pomcp or baseline");
            cfg.agent = *a;
        }
        if (b.contains("seed"))
        {
            if (!b["seed"].is_number_unsigned())
                throw BadRequest("seed: expected a non-negative integer");
            cfg.seed = b["seed"].get<std::uint64_t>();
        }
        if (b.contains("start"))
            cfg.start = sc.grid.index(parse_cell(b["start"], sc.grid, "start"));
        if (b.contains("target"))
        {
            cfg.target = sc.grid.index(parse_cell(b["target"], sc.grid, "target"));
        }
        else if (!base || b.contains("seed"))
        {
            TruthModel truth = sc.simulation.truth_weights.empty()
                                   ? synth_truth_model(std::vector<double>(static_cast<std::size_t>(sc.grid.cell_count()), 0.0), 0.0)
                                   : scenario_truth(sc, snap.fusion.features);
            std::mt19937_64 rng(mix_seed(cfg.seed, 99));
            cfg.target = truth.sample(rng);
        }
        return cfg;
    }

    void create_episode(const EpisodeConfig& cfg, const FusionSnapshot& snap)
    {
        auto ep = std::make_unique<Episode>();
        ep->config = cfg;
        ep->mission = std::make_unique<MissionModel>(mission_model(snap.scenario, snap.fusion));
        try
        {
            ep->runner = std::make_unique<EpisodeRunner>(*ep->mission, cfg.agent, cfg.start, cfg.target, cfg.seed);
        }
        catch (const std::length_error& e)
        {
            throw BadRequest(e.what());
        }
        episode_ = std::move(ep);
    }

    json step_locked()
    {
        if (!episode_)
            throw Conflict("no episode; start one first");
        if (auto rec = episode_->runner->step())
        {
            episode_->cumulative_reward += rec->reward;
        }
        auto f = frame_locked("step", snapshot()->revision);
        push_frame(f);
        return f;
    }

    [[nodiscard]] json frame_locked(const char* event, std::uint64_t revision) const
    {
        json f;
        f["event"] = event;
        f["revision"] = revision;
        if (!episode_)
        {
            f["episode"] = nullptr;
            return f;
        }
        const auto& runner = *episode_->runner;
        const auto& grid = runner.model().grid();
        const auto& st = runner.state();
        const auto& log = runner.log();
        const Cell robot = grid.cell(st.robot);
        f["agent"] = std::string(to_string(episode_->config.agent));
        f["seed"] = episode_->config.seed;
        f["t"] = log.step_count();
        f["robot"] = {robot.row, robot.col};
        f["battery"] = st.battery;
        f["cumulative_reward"] = episode_->cumulative_reward;
        f["discounted_return"] = log.discounted_return;
        f["outcome"] = std::string(to_string(log.outcome));
        f["terminal"] = runner.done();
        if (!log.steps.empty())
        {
            const auto& last = log.steps.back();
            f["action"] = std::string(to_string(last.action));
            f["observation"] = last.observation;
            f["reward"] = last.reward;
        }
        if (runner.last_plan())
            f["root_visits"] = runner.last_plan()->visits;
        f["belief"] = belief_summary(runner.belief(), grid);
        return f;
    }

    static json belief_summary(const Belief& b, const GridSpec& grid, int top = 5)
    {
        const auto h = b.histogram(grid.cell_count());
        std::vector<int> order(h.size());
        std::iota(order.begin(), order.end(), 0);
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(top), order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](int a, int c) { return h[a] > h[c] || (h[a] == h[c] && a < c); });
        json cells = json::array();
        for (std::size_t i = 0; i < k && h[static_cast<std::size_t>(order[i])] > 0.0; ++i)
        {
            const Cell c = grid.cell(order[i]);
            cells.push_back({{"cell", {c.row, c.col}}, {"p", h[static_cast<std::size_t>(order[i])]}});
        }
        double entropy = 0.0;
        int support = 0;
        for (double p : h)
            if (p > 0.0)
            {
                entropy -= p * std::log(p);
                ++support;
            }
        return {{"particles", b.size()}, {"support", support}, {"entropy", entropy}, {"top", cells}};
    }

    void push_frame(json& f)
    {
        std::lock_guard lock(frame_mu_);
        f["seq"] = frames_.size();
        frames_.push_back(f.dump());
        frame_cv_.notify_all();
    }

    void start_auto(std::unique_lock<std::mutex>& lock, int interval_ms)
    {
        stop_auto(lock);
        auto_stop_ = false;
        auto_ = std::thread([this, interval_ms] {
            std::unique_lock l(episode_mu_);
            while (!auto_stop_ && episode_ && !episode_->runner->done())
            {
                step_locked();
                auto_cv_.wait_for(l, std::chrono::milliseconds(interval_ms), [&] { return auto_stop_; });
            }
        });
    }

    void stop_auto(std::unique_lock<std::mutex>& lock)
    {
        if (!auto_.joinable())
            return;
        auto_stop_ = true;
        auto_cv_.notify_all();
        lock.unlock();
        auto_.join();
        lock.lock();
    }

    std::string id_;
    std::optional<std::filesystem::path> cache_dir_;

    mutable std::shared_mutex snap_mu_;
    std::shared_ptr<const FusionSnapshot> snapshot_;
    std::mutex input_mu_;

    mutable std::mutex episode_mu_;
    std::unique_ptr<Episode> episode_;
    std::thread auto_;
    bool auto_stop_ = false;
    std::condition_variable auto_cv_;

    mutable std::mutex frame_mu_;
    mutable std::condition_variable frame_cv_;
    std::vector<std::string> frames_;
    bool closed_ = false;
};

/// All sessions of one service instance, optionally persisted as one JSON file
/// per session under a state directory.
class SessionRegistry
{
public:
    explicit SessionRegistry(std::optional<std::filesystem::path> state_dir = std::nullopt,
                             std::optional<std::filesystem::path> cache_dir = cache_dir_from_env())
        : state_dir_(std::move(state_dir)), cache_dir_(std::move(cache_dir))
    {
        if (state_dir_)
            restore();
    }

    ~SessionRegistry() { shutdown(); }

    /// Validates and fuses a scenario document; returns the new session.
    std::shared_ptr<MissionSession> create(const json& doc)
    {
        Scenario sc;
        try
        {
            sc = parse_scenario(doc);
        }
        catch (const ScenarioError& e)
        {
            throw BadRequest(e.what(), e.diagnostics());
        }
        std::string id;
        {
            std::lock_guard lock(mu_);
            id = "s" + std::to_string(++counter_);
        }
        auto s = std::make_shared<MissionSession>(id, std::move(sc), cache_dir_);
        {
            std::lock_guard lock(mu_);
            sessions_[id] = s;
        }
        persist(*s);
        return s;
    }

    std::shared_ptr<MissionSession> get(const std::string& id) const
    {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end())
            throw NotFound("no session '" + id + "'");
        return it->second;
    }

    std::shared_ptr<const FusionSnapshot> submit_inputs(const std::string& id, const json& delta)
    {
        auto s = get(id);
        auto snap = s->submit_inputs(delta);
        persist(*s);
        return snap;
    }

    [[nodiscard]] std::vector<std::string> ids() const
    {
        std::lock_guard lock(mu_);
        std::vector<std::string> out;
        for (const auto& [id, _] : sessions_)
            out.push_back(id);
        return out;
    }

    void shutdown()
    {
        std::lock_guard lock(mu_);
        for (auto& [_, s] : sessions_)
            s->shutdown();
    }

private:
    void persist(const MissionSession& s) const
    {
        if (!state_dir_)
            return;
        // persisted() reads the newest snapshot, so the last writer wins with it
        std::lock_guard lock(persist_mu_);
        std::filesystem::create_directories(*state_dir_);
        const auto path = *state_dir_ / (s.id() + ".json");
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << s.persisted().dump(2) << "\n";
            if (!out)
                throw std::runtime_error("failed writing session file " + tmp);
        }
        std::filesystem::rename(tmp, path);
    }

    void restore()
    {
        if (!std::filesystem::exists(*state_dir_))
            return;
        for (const auto& entry : std::filesystem::directory_iterator(*state_dir_))
        {
            if (entry.path().extension() != ".json")
                continue;
            std::shared_ptr<MissionSession> s;
            std::string id;
            try
            {
                std::ifstream in(entry.path());
                const json doc = json::parse(in);
                id = doc.at("id").get<std::string>();
                s = std::make_shared<MissionSession>(id, parse_scenario(doc.at("scenario")), cache_dir_,
                                                     doc.at("revision").get<std::uint64_t>());
            }
            catch (const std::exception& e)
            {
                throw std::runtime_error("cannot restore session file " + entry.path().string() + ": " + e.what());
            }
            sessions_[id] = s;
            if (id.size() > 1 && id[0] == 's')
                counter_ = std::max(counter_, std::stoull(id.substr(1)));
        }
    }

    std::optional<std::filesystem::path> state_dir_;
    std::optional<std::filesystem::path> cache_dir_;
    mutable std::mutex mu_;
    mutable std::mutex persist_mu_;
    std::map<std::string, std::shared_ptr<MissionSession>> sessions_;
    unsigned long long counter_ = 0;
};

} // namespace searchgrid
