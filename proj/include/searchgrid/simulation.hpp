#pragma once

#include "searchgrid/baseline.hpp"
#include "searchgrid/metrics.hpp"
#include "searchgrid/pomcp.hpp"
#include "searchgrid/rollout.hpp"
#include "searchgrid/scenario.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace searchgrid
{

/// splitmix64 step, used to derive independent seeds from one master seed.
inline std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(mix_seed(a) ^ b); }

// ---------------------------------------------------------------------------
// Ground truth

/// Distribution of the true target location over cells.
struct TruthModel
{
    std::vector<double> p;

    template <class Rng>
    int sample(Rng& rng) const
    {
        std::discrete_distribution<int> d(p.begin(), p.end());
        return d(rng);
    }
};

/// p(cell) proportional to exp(concentration * score(cell)); concentration 0
/// is uniform.
inline TruthModel synth_truth_model(std::span<const double> scores, double concentration)
{
    if (scores.empty())
        throw std::invalid_argument("truth model needs at least one cell");
    if (!(concentration >= 0.0))
        throw std::invalid_argument("truth concentration must be non-negative");
    const double hi = *std::max_element(scores.begin(), scores.end());
    TruthModel t;
    t.p.resize(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        total += t.p[i] = std::exp(concentration * (scores[i] - hi));
    for (auto& v : t.p)
        v /= total;
    return t;
}

/// Truth scores from the scenario's truth weights on geographic columns.
inline TruthModel scenario_truth(const Scenario& sc, const FeatureMatrix& fm)
{
    Eigen::VectorXd score = Eigen::VectorXd::Zero(fm.phi.rows());
    for (const auto& [name, w] : sc.simulation.truth_weights)
    {
        const auto it = std::find(fm.phi_names.begin(), fm.phi_names.end(), name);
        if (it == fm.phi_names.end())
            throw std::invalid_argument("truth weight names unknown feature '" + name + "'");
        score += w * fm.phi.col(it - fm.phi_names.begin());
    }
    return synth_truth_model(std::span<const double>(score.data(), static_cast<std::size_t>(score.size())),
                             sc.simulation.truth_concentration);
}

// ---------------------------------------------------------------------------
// Episodes

enum class AgentKind
{
    pomcp,
    baseline
};

inline std::string_view to_string(AgentKind a) { return a == AgentKind::pomcp ? "pomcp" : "baseline"; }

inline std::optional<AgentKind> parse_agent(std::string_view s)
{
    if (s == "pomcp")
        return AgentKind::pomcp;
    if (s == "baseline")
        return AgentKind::baseline;
    return std::nullopt;
}

enum class Outcome
{
    running,
    found,
    battery_exhausted
};

inline std::string_view to_string(Outcome o)
{
    switch (o)
    {
    case Outcome::running: return "running";
    case Outcome::found: return "found";
    case Outcome::battery_exhausted: return "battery_exhausted";
    }
    return "?";
}

/// Fixed inputs shared by every episode of a mission.
struct MissionModel
{
    GridSpec grid;
    ObsParams obs;
    RewardParams reward;
    std::vector<double> operator_reward; ///< r_hat mean per cell
    SolverConfig solver;
    RolloutConfig rollout;
    int n_particles = 10000;
    std::vector<Cell> visit_waypoints;   ///< for the baseline route
    std::vector<Sketch> positive_sketches;
};

/// Builds the mission model for a fused scenario. Positive sketches are those
/// with an Inside or Near observation.
inline MissionModel mission_model(const Scenario& sc, const FusionResult& fr)
{
    MissionModel mm;
    mm.grid = sc.grid;
    mm.obs = sc.obs;
    mm.reward = sc.reward;
    mm.operator_reward.assign(fr.map.mean.data(), fr.map.mean.data() + fr.map.mean.size());
    mm.solver = sc.planner;
    mm.rollout = sc.rollout;
    mm.n_particles = sc.n_particles;
    for (int idx : fr.waypoints.visit)
        mm.visit_waypoints.push_back(sc.grid.cell(idx));
    for (const auto& o : sc.observations)
        if (const auto l = parse_label(o.label); l == SemanticLabel::inside || l == SemanticLabel::near)
            if (auto it = fr.sketches.find(o.sketch_name); it != fr.sketches.end())
                if (std::none_of(mm.positive_sketches.begin(), mm.positive_sketches.end(),
                                 [&](const Sketch& s) { return s.name == o.sketch_name; }))
                    mm.positive_sketches.push_back(it->second.sketch);
    return mm;
}

struct StepRecord
{
    int t = 0;
    Action action = Action::stay;
    int robot = 0; ///< cell after the move
    int battery = 0;
    int observation = 0;
    double reward = 0.0;
};

struct EpisodeLog
{
    AgentKind agent = AgentKind::pomcp;
    std::uint64_t seed = 0;
    int start = 0;
    int target = 0;
    std::vector<StepRecord> steps;
    Outcome outcome = Outcome::running;
    double discounted_return = 0.0;
    double undiscounted_return = 0.0;

    [[nodiscard]] int step_count() const { return static_cast<int>(steps.size()); }
    /// Discounted return per step taken.
    [[nodiscard]] double reward_per_timestep() const
    {
        return discounted_return / std::max(1, step_count());
    }
};

/// Shared rollout tables keyed by start cell (the abstraction depends on the
/// start through the return-budget check).
class RolloutCache
{
public:
    std::shared_ptr<const RolloutValueTable> get(const SearchModel& model, const RolloutConfig& cfg)
    {
        std::lock_guard lock(mu_);
        auto& slot = tables_[model.start()];
        if (!slot)
            slot = solve_rollout_mdp(model, cfg);
        return slot;
    }

private:
    std::mutex mu_;
    std::map<int, std::shared_ptr<const RolloutValueTable>> tables_;
};

/// One search episode driven one decision at a time.
class EpisodeRunner
{
public:
    EpisodeRunner(const MissionModel& mm, AgentKind agent, int start, int target, std::uint64_t seed,
                  std::shared_ptr<const RolloutValueTable> rollout = nullptr, bool track_belief = true)
        : mm_(mm),
          model_(mm.grid, mm.obs, mm.reward, mm.operator_reward, start),
          agent_(agent),
          env_rng_(mix_seed(seed, 1)),
          filter_rng_(mix_seed(seed, 2)),
          seed_(seed),
          rollout_(std::move(rollout)),
          track_belief_(track_belief || agent == AgentKind::pomcp)
    {
        if (target < 0 || target >= mm.grid.cell_count())
            throw std::invalid_argument("target cell outside grid");
        state_ = model_.initial_state(target);
        log_.agent = agent;
        log_.seed = seed;
        log_.start = start;
        log_.target = target;
        if (agent == AgentKind::pomcp && !rollout_)
            rollout_ = solve_rollout_mdp(model_, mm.rollout);
        if (agent == AgentKind::baseline)
            executor_.emplace(model_, plan_baseline(mm.grid.cell(start), mm.visit_waypoints, mm.positive_sketches,
                                                    mm.grid));
        if (track_belief_)
            belief_ = initial_belief(mm.grid, mm.n_particles, mix_seed(seed, 3));
        update_outcome();
    }

    EpisodeRunner(const EpisodeRunner&) = delete;
    EpisodeRunner& operator=(const EpisodeRunner&) = delete;

    [[nodiscard]] bool done() const { return log_.outcome != Outcome::running; }
    [[nodiscard]] const EpisodeLog& log() const { return log_; }
    [[nodiscard]] const SearchState& state() const { return state_; }
    [[nodiscard]] const Belief& belief() const { return belief_; }
    [[nodiscard]] const SearchModel& model() const { return model_; }
    [[nodiscard]] const std::optional<PlanResult>& last_plan() const { return last_plan_; }

    /// Swaps the operator map used for future decisions and rewards.
    void set_operator_reward(std::vector<double> op) { model_.set_operator_reward(std::move(op)); }

    /// Plan, act, observe, update. Returns nullopt once the episode is over.
    std::optional<StepRecord> step()
    {
        if (done())
            return std::nullopt;
        const int t = log_.step_count();
        Action a;
        if (agent_ == AgentKind::pomcp)
        {
            SolverConfig cfg = mm_.solver;
            cfg.seed = mix_seed(seed_, 1000 + static_cast<std::uint64_t>(t));
            Pomcp solver(model_, *rollout_, cfg);
            last_plan_ = solver.plan(belief_, {state_.robot, state_.battery, state_.visited});
            a = last_plan_->action;
        }
        else
        {
            a = executor_->next_action(state_.robot);
        }

        StepRecord rec;
        rec.t = t;
        rec.action = a;
        rec.reward = model_.apply(state_, a);
        rec.robot = state_.robot;
        rec.battery = state_.battery;
        rec.observation = model_.sample_observation(state_.robot, state_.target, env_rng_);
        if (track_belief_)
            belief_ = belief_update(belief_, state_.robot, rec.observation, model_, mm_.solver.reinvigoration_fraction,
                                    filter_rng_);
        if (executor_)
            executor_->observe(state_.robot, rec.observation);

        log_.discounted_return += std::pow(model_.reward_params().gamma, t) * rec.reward;
        log_.undiscounted_return += rec.reward;
        log_.steps.push_back(rec);
        update_outcome();
        return rec;
    }

    const EpisodeLog& run()
    {
        while (step())
        {
        }
        return log_;
    }

private:
    void update_outcome()
    {
        if (state_.robot == state_.target)
            log_.outcome = Outcome::found;
        else if (model_.is_terminal(state_))
            log_.outcome = Outcome::battery_exhausted;
    }

    const MissionModel& mm_;
    SearchModel model_;
    AgentKind agent_;
    std::mt19937_64 env_rng_;
    std::mt19937_64 filter_rng_;
    std::uint64_t seed_;
    std::shared_ptr<const RolloutValueTable> rollout_;
    bool track_belief_;
    SearchState state_;
    Belief belief_;
    std::optional<BaselineExecutor> executor_;
    std::optional<PlanResult> last_plan_;
    EpisodeLog log_;
};

inline EpisodeLog run_episode(const MissionModel& mm, AgentKind agent, int start, int target, std::uint64_t seed,
                              std::shared_ptr<const RolloutValueTable> rollout = nullptr)
{
    EpisodeRunner runner(mm, agent, start, target, seed, std::move(rollout), false);
    return runner.run();
}

// ---------------------------------------------------------------------------
// Monte Carlo evaluation

struct EvalRow
{
    AgentKind agent = AgentKind::pomcp;
    int start = 0;
    int run = 0;
    std::uint64_t seed = 0;
    int target = 0;
    bool found = false;
    int steps = 0;
    double reward_per_timestep = 0.0;
    double discounted_return = 0.0;
};

struct AgentSummary
{
    int runs = 0;
    int found = 0;
    SampleSummary reward_per_timestep;
    SampleSummary steps;

    [[nodiscard]] double localization_ratio() const { return runs ? static_cast<double>(found) / runs : 0.0; }
};

struct Significance
{
    double ratio_binomial_p = 1.0;              ///< POMCP found count against the baseline's rate
    std::optional<double> reward_z_p;           ///< two-sample Z on reward per timestep
};

struct EvalResult
{
    std::vector<EvalRow> rows;
    std::map<AgentKind, AgentSummary> summary;
    std::optional<Significance> significance; ///< present when both agents ran
};

struct EvalConfig
{
    std::vector<Cell> starts;
    int runs_per_start = 100;
    std::uint64_t seed = 1;
    std::vector<AgentKind> agents{AgentKind::pomcp, AgentKind::baseline};
    int workers = 1;
    std::function<void(const EvalRow&)> on_row; ///< called under a lock as rows complete
};

inline std::map<AgentKind, AgentSummary> summarize_rows(const std::vector<EvalRow>& rows)
{
    std::map<AgentKind, AgentSummary> out;
    std::map<AgentKind, std::vector<double>> rpt, steps;
    for (const auto& r : rows)
    {
        auto& s = out[r.agent];
        s.runs += 1;
        s.found += r.found ? 1 : 0;
        rpt[r.agent].push_back(r.reward_per_timestep);
        steps[r.agent].push_back(r.steps);
    }
    for (auto& [a, s] : out)
    {
        s.reward_per_timestep = summarize(rpt[a]);
        s.steps = summarize(steps[a]);
    }
    return out;
}

/// Runs every agent on the same (start, run) targets and seeds. Targets are
/// drawn from the truth model.
inline EvalResult monte_carlo_eval(const MissionModel& mm, const TruthModel& truth, const EvalConfig& cfg)
{
    if (cfg.starts.empty())
        throw std::invalid_argument("evaluation needs at least one start cell");
    if (cfg.runs_per_start < 1)
        throw std::invalid_argument("runs_per_start must be at least 1");
    if (static_cast<int>(truth.p.size()) != mm.grid.cell_count())
        throw std::invalid_argument("truth model does not match grid");

    struct Job
    {
        std::size_t start_idx;
        int run;
        AgentKind agent;
        int target;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t si = 0; si < cfg.starts.size(); ++si)
    {
        if (!mm.grid.contains(cfg.starts[si]))
            throw std::invalid_argument("start cell outside grid");
        for (int run = 0; run < cfg.runs_per_start; ++run)
        {
            const auto seed = mix_seed(cfg.seed, (static_cast<std::uint64_t>(si) << 32) | static_cast<std::uint64_t>(run));
            std::mt19937_64 rng(seed);
            const int target = truth.sample(rng);
            for (AgentKind a : cfg.agents)
                jobs.push_back({si, run, a, target, seed});
        }
    }

    std::vector<EvalRow> rows(jobs.size());
    RolloutCache cache;
    std::atomic<std::size_t> next{0};
    std::mutex report;
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();)
        {
            try
            {
                const auto& job = jobs[j];
                const int start = mm.grid.index(cfg.starts[job.start_idx]);
                std::shared_ptr<const RolloutValueTable> table;
                if (job.agent == AgentKind::pomcp)
                {
                    SearchModel probe(mm.grid, mm.obs, mm.reward, mm.operator_reward, start);
                    table = cache.get(probe, mm.rollout);
                }
                const auto log = run_episode(mm, job.agent, start, job.target, job.seed, table);
                EvalRow& row = rows[j];
                row.agent = job.agent;
                row.start = start;
                row.run = job.run;
                row.seed = job.seed;
                row.target = job.target;
                row.found = log.outcome == Outcome::found;
                row.steps = log.step_count();
                row.reward_per_timestep = log.reward_per_timestep();
                row.discounted_return = log.discounted_return;
                if (cfg.on_row)
                {
                    std::lock_guard lock(report);
                    cfg.on_row(row);
                }
            }
            catch (...)
            {
                std::lock_guard lock(report);
                if (!failure)
                    failure = std::current_exception();
                next = jobs.size();
            }
        }
    };
    const int n_workers = std::max(1, cfg.workers);
    if (n_workers == 1)
    {
        worker();
    }
    else
    {
        std::vector<std::jthread> pool;
        for (int i = 0; i < n_workers; ++i)
            pool.emplace_back(worker);
    }
    if (failure)
        std::rethrow_exception(failure);

    EvalResult out;
    out.rows = std::move(rows);
    out.summary = summarize_rows(out.rows);
    if (out.summary.count(AgentKind::pomcp) && out.summary.count(AgentKind::baseline))
    {
        const auto& p = out.summary.at(AgentKind::pomcp);
        const auto& b = out.summary.at(AgentKind::baseline);
        Significance sig;
        sig.ratio_binomial_p = binomial_two_tailed(p.found, p.runs, b.localization_ratio());
        sig.reward_z_p = two_sample_z_test(p.reward_per_timestep.mean, p.reward_per_timestep.sem,
                                           b.reward_per_timestep.mean, b.reward_per_timestep.sem);
        out.significance = sig;
    }
    return out;
}

/// One row per agent x start x run.
inline std::string eval_rows_csv(const GridSpec& grid, const EvalResult& res)
{
    std::ostringstream out;
    out.precision(17);
    out << "agent,start_row,start_col,run,seed,target_row,target_col,found,steps,reward_per_timestep,discounted_return\n";
    for (const auto& r : res.rows)
    {
        const Cell s = grid.cell(r.start), t = grid.cell(r.target);
        out << to_string(r.agent) << ',' << s.row << ',' << s.col << ',' << r.run << ',' << r.seed << ',' << t.row << ','
            << t.col << ',' << (r.found ? 1 : 0) << ',' << r.steps << ',' << r.reward_per_timestep << ','
            << r.discounted_return << '\n';
    }
    return out.str();
}

inline json eval_summary_json(const EvalResult& res)
{
    json doc = json::object();
    json agents = json::object();
    for (const auto& [agent, s] : res.summary)
        agents[std::string(to_string(agent))] = {
            {"runs", s.runs},
            {"found", s.found},
            {"localization_ratio", s.localization_ratio()},
            {"reward_per_timestep", {{"mean", s.reward_per_timestep.mean}, {"sem", s.reward_per_timestep.sem}}},
            {"steps", {{"mean", s.steps.mean}, {"sem", s.steps.sem}}}};
    doc["agents"] = agents;
    if (res.significance)
    {
        doc["significance"] = {{"localization_binomial_p", res.significance->ratio_binomial_p},
                               {"reward_z_p", res.significance->reward_z_p ? json(*res.significance->reward_z_p)
                                                                           : json(nullptr)}};
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Synthetic operator

/// `count` of the candidate cells by farthest-point sampling (Manhattan),
/// starting from a candidate chosen by `seed`. Ties go to the lowest index.
inline std::vector<int> farthest_point_cells(const GridSpec& grid, std::span<const int> candidates, int count,
                                             std::uint64_t seed)
{
    const int n = static_cast<int>(candidates.size());
    if (count < 1 || count > n)
        throw std::invalid_argument("cannot pick " + std::to_string(count) + " distinct cells from " +
                                    std::to_string(n));
    std::vector<int> chosen{candidates[mix_seed(seed) % static_cast<std::uint64_t>(n)]};
    std::vector<int> dist(static_cast<std::size_t>(n), std::numeric_limits<int>::max());
    while (static_cast<int>(chosen.size()) < count)
    {
        const Cell last = grid.cell(chosen.back());
        int best = -1;
        for (int i = 0; i < n; ++i)
        {
            auto& d = dist[static_cast<std::size_t>(i)];
            d = std::min(d, manhattan(grid.cell(candidates[static_cast<std::size_t>(i)]), last));
            if (best < 0 || d > dist[static_cast<std::size_t>(best)])
                best = i;
        }
        chosen.push_back(candidates[static_cast<std::size_t>(best)]);
    }
    return chosen;
}

inline std::vector<int> farthest_point_cells(const GridSpec& grid, int count, std::uint64_t seed)
{
    std::vector<int> all(static_cast<std::size_t>(grid.cell_count()));
    std::iota(all.begin(), all.end(), 0);
    return farthest_point_cells(grid, all, count, seed);
}

/// Inputs of a simulated operator whose preferences are a known weight vector.
struct SyntheticOperator
{
    std::vector<std::string> priorities;
    std::vector<int> visit; ///< cell indices
    std::vector<int> avoid;
    std::vector<CellRating> ratings;
    std::vector<double> relevances; ///< one per feature column
    Eigen::VectorXd true_reward;
};

/// Waypoints: half visits where r_true is high, half avoids where it is low
/// (distinct cells). Priorities: the two columns with the largest
/// positive weight. Ratings: quartiles of r_true at 21 farthest-point cells
/// among those near a mapped feature.
/// Relevances: weights scaled to the integer range [-7, 7].
inline SyntheticOperator synth_operator(const Eigen::VectorXd& true_weights, const FeatureMatrix& fm,
                                        const GridSpec& grid, int n_waypoints, std::uint64_t seed)
{
    if (true_weights.size() != fm.width())
        throw std::invalid_argument("true weights must cover every feature column");
    SyntheticOperator op;
    op.true_reward = fm.design() * true_weights;
    const int n = grid.cell_count();
    if (n_waypoints < 0 || n_waypoints > n)
        throw std::invalid_argument("n_waypoints must lie in [0, cells]");

    // Visits go to random cells in the top quarter by true reward, avoids to
    // the bottom quarter. Shuffling first breaks ties randomly.
    std::mt19937_64 rng(mix_seed(seed, 11));
    std::vector<int> cells(static_cast<std::size_t>(n));
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), rng);
    std::stable_sort(cells.begin(), cells.end(), [&](int a, int b) { return op.true_reward(a) > op.true_reward(b); });
    const int n_visit = (n_waypoints + 1) / 2;
    const int n_avoid = n_waypoints - n_visit;
    int pool_visit = std::max(n / 4, n_visit);
    int pool_avoid = std::max(n / 4, n_avoid);
    if (pool_visit + pool_avoid > n)
    {
        pool_visit = n_visit;
        pool_avoid = n_avoid;
    }
    std::vector<int> top(cells.begin(), cells.begin() + pool_visit);
    std::vector<int> bottom(cells.end() - pool_avoid, cells.end());
    std::shuffle(top.begin(), top.end(), rng);
    std::shuffle(bottom.begin(), bottom.end(), rng);
    op.visit.assign(top.begin(), top.begin() + n_visit);
    op.avoid.assign(bottom.begin(), bottom.begin() + n_avoid);

    const auto names = fm.column_names();
    std::vector<int> order(static_cast<std::size_t>(true_weights.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return true_weights(a) > true_weights(b); });
    for (std::size_t i = 0; i < order.size() && i < 2; ++i)
        if (true_weights(order[i]) > 0.0)
            op.priorities.push_back(names[static_cast<std::size_t>(order[i])]);

    const auto levels = quartile_levels(
        std::span<const double>(op.true_reward.data(), static_cast<std::size_t>(op.true_reward.size())));
    // Rated cells sit on mapped features: within one cell of something, so
    // phi >= e^-1 in some column. Bare ground has r_hat ~ 0 with var ~ 0.
    std::vector<int> featured;
    for (int g = 0; g < n; ++g)
        if (fm.width() > 0 && fm.stacked(g).maxCoeff() >= std::exp(-1.0))
            featured.push_back(g);
    if (static_cast<int>(featured.size()) < kRatedCellCount)
    {
        featured.resize(static_cast<std::size_t>(n));
        std::iota(featured.begin(), featured.end(), 0);
    }
    for (int g : farthest_point_cells(grid, featured, std::min(kRatedCellCount, n), mix_seed(seed, 12)))
        op.ratings.push_back({g, levels[static_cast<std::size_t>(g)]});

    const double scale = true_weights.cwiseAbs().maxCoeff();
    op.relevances.resize(static_cast<std::size_t>(true_weights.size()));
    for (Eigen::Index i = 0; i < true_weights.size(); ++i)
        op.relevances[static_cast<std::size_t>(i)] = scale > 0.0 ? std::round(7.0 * true_weights(i) / scale) : 0.0;
    return op;
}

// ---------------------------------------------------------------------------
// Synthetic scenario

/// Replaces the scenario's priorities and waypoints with the synthetic
/// operator's. With column names, also stores its ratings and relevances as
/// the alignment block.
inline void apply_operator(Scenario& sc, const SyntheticOperator& op, const std::vector<std::string>& columns = {})
{
    sc.priorities = op.priorities;
    sc.visit.clear();
    sc.avoid.clear();
    for (int g : op.visit)
        sc.visit.push_back(sc.grid.center(sc.grid.cell(g)));
    for (int g : op.avoid)
        sc.avoid.push_back(sc.grid.center(sc.grid.cell(g)));
    if (columns.empty())
        return;
    if (columns.size() != op.relevances.size())
        throw std::invalid_argument("column names do not match the operator's relevances");
    AlignmentInput al;
    for (const auto& r : op.ratings)
        al.ratings.emplace_back(sc.grid.cell(r.cell), r.value);
    for (std::size_t i = 0; i < columns.size(); ++i)
        al.relevances[columns[i]] = op.relevances[i];
    sc.alignment = al;
}

/// Random but plausible wilderness: a road along the south edge, trails from
/// it, a meandering stream with a pond, scattered structures and canopy. One
/// sketch ("Section A") around a stream bend carries an Inside observation.
inline Scenario synthetic_scenario(int rows, int cols, double resolution, std::uint64_t seed,
                                   std::string id = "synthetic")
{
    Scenario sc;
    sc.id = std::move(id);
    sc.grid = {rows, cols, resolution, {0.0, 0.0}};
    sc.grid.validate();
    sc.semantics = SemanticConfig::for_resolution(resolution);
    std::mt19937_64 rng(mix_seed(seed, 21));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double W = cols * resolution;
    const double H = rows * resolution;
    auto layer = [&](const std::string& name) -> GeoLayer& {
        sc.layers.push_back({name, {}});
        return sc.layers.back();
    };

    const double road_y = (0.05 + 0.1 * u(rng)) * H;
    layer("roads").geometries.push_back({GeometryKind::polyline, {{0.0, road_y}, {W, road_y + 0.05 * H * (u(rng) - 0.5)}}});

    std::vector<Vec2> stream;
    const double sx = (0.3 + 0.4 * u(rng)) * W;
    for (int k = 0; k <= 6; ++k)
    {
        const double y = H * k / 6.0;
        stream.push_back({std::clamp(sx + 0.15 * W * std::sin(k * 1.3 + 6.0 * u(rng)), 0.0, W), y});
    }
    layer("stream_lines").geometries.push_back({GeometryKind::polyline, stream});

    const Vec2 pond = stream[4];
    const double pr = 0.06 * std::min(W, H);
    layer("water_bodies")
        .geometries.push_back({GeometryKind::polygon,
                               {{pond.x - pr, pond.y - pr}, {pond.x + pr, pond.y - pr}, {pond.x + pr, pond.y + pr},
                                {pond.x - pr, pond.y + pr}}});

    auto& trails = layer("trails");
    for (int k = 0; k < 2; ++k)
    {
        std::vector<Vec2> trail{{(0.15 + 0.6 * u(rng)) * W, road_y}};
        for (int j = 1; j <= 4; ++j)
            trail.push_back({std::clamp(trail.back().x + 0.2 * W * (u(rng) - 0.5), 0.0, W), road_y + (H - road_y) * j / 4.5});
        trails.geometries.push_back({GeometryKind::polyline, trail});
    }

    auto& structures = layer("structures");
    for (int k = 0; k < 3; ++k)
        structures.geometries.push_back({GeometryKind::point, {{u(rng) * W, road_y + 0.1 * H * u(rng)}}});

    auto& canopy = layer("tree_canopy");
    for (int k = 0; k < 2; ++k)
    {
        const Vec2 c{(0.2 + 0.6 * u(rng)) * W, (0.4 + 0.5 * u(rng)) * H};
        const double a = (0.08 + 0.1 * u(rng)) * W;
        const double b = (0.08 + 0.1 * u(rng)) * H;
        canopy.geometries.push_back(
            {GeometryKind::polygon, {{c.x - a, c.y - b}, {c.x + a, c.y - 0.5 * b}, {c.x + 0.7 * a, c.y + b}, {c.x - a, c.y + 0.8 * b}}});
    }

    const Vec2 bend = stream[3];
    const double sr = 0.12 * std::min(W, H);
    sc.sketches.push_back({"Section A",
                           {{bend.x - sr, bend.y - sr}, {bend.x + sr, bend.y - 0.8 * sr}, {bend.x + sr, bend.y + sr},
                            {bend.x - 0.8 * sr, bend.y + sr}}});
    sc.observations.push_back({"Section A", "Inside"});
    sc.priorities = {"stream_lines"};

    const int start_row = std::clamp(static_cast<int>(road_y / resolution), 0, rows - 1);
    for (int k = 0; k < 4; ++k)
        sc.simulation.starts.push_back({start_row, std::clamp((2 * k + 1) * cols / 8, 0, cols - 1)});
    sc.simulation.seed = seed;
    sc.simulation.truth_weights = {{"stream_lines", 2.0}, {"trails", 1.0}, {"water_bodies", 1.0}};
    sc.reward.b_max = static_cast<int>(std::lround(0.385 * rows * cols));
    return sc;
}

} // namespace searchgrid
