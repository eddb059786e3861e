#pragma once

#include "searchgrid/pomdp.hpp"
#include "searchgrid/rollout.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace searchgrid
{

struct SolverConfig
{
    int n_simulations = 1000;
    int max_depth = 50;
    double ucb_exploration = 100.0;
    std::uint64_t seed = 1;
    double reinvigoration_fraction = 0.1;

    void validate() const
    {
        if (n_simulations < 1)
            throw std::invalid_argument("n_simulations must be at least 1");
        if (max_depth < 1)
            throw std::invalid_argument("max_depth must be at least 1");
        if (!(ucb_exploration > 0.0))
            throw std::invalid_argument("ucb_exploration must be positive");
        if (!(reinvigoration_fraction >= 0.0 && reinvigoration_fraction <= 1.0))
            throw std::invalid_argument("reinvigoration_fraction must lie in [0, 1]");
    }
};

/// What the agent knows for certain about the current state.
struct KnownState
{
    int robot = 0;
    int battery = 0;
    std::vector<bool> visited;
};

struct PlanResult
{
    Action action = Action::stay;
    std::array<int, kActionCount> visits{};
    std::array<double, kActionCount> values{};
};

/// UCT search over action/observation histories with root particle sampling.
/// Leaves are evaluated by running the rollout table's greedy policy while
/// accumulating the full model reward (operator map and visited gating
/// included).
class Pomcp
{
public:
    Pomcp(const SearchModel& model, const RolloutValueTable& rollout, SolverConfig cfg)
        : model_(model), rollout_(rollout), cfg_(cfg), rng_(cfg.seed), n_obs_(model.observation_count())
    {
        cfg_.validate();
    }

    PlanResult plan(const Belief& belief, const KnownState& known)
    {
        if (belief.empty())
            throw std::invalid_argument("cannot plan from an empty belief; reinvigorate first");
        if (model_.out_of_battery(known.robot, known.battery))
            throw std::invalid_argument("cannot plan from a terminal state");
        nodes_.clear();
        children_.clear();
        const int root = new_node();

        std::uniform_int_distribution<std::size_t> pick(0, belief.size() - 1);
        SearchState s;
        for (int i = 0; i < cfg_.n_simulations; ++i)
        {
            s.robot = known.robot;
            s.battery = known.battery;
            s.visited = known.visited;
            s.target = belief.particles[pick(rng_)];
            if (s.robot == s.target)
            {
                // A particle on the robot cell is already contradicted; it
                // contributes only the immediate terminal outcome.
                continue;
            }
            simulate(s, root, 0);
        }

        PlanResult out;
        const auto& r = nodes_[static_cast<std::size_t>(root)];
        int best = -1;
        for (int a = 0; a < kActionCount; ++a)
        {
            out.visits[static_cast<std::size_t>(a)] = r.visits[static_cast<std::size_t>(a)];
            out.values[static_cast<std::size_t>(a)] = r.values[static_cast<std::size_t>(a)];
            if (best < 0 || r.visits[static_cast<std::size_t>(a)] > r.visits[static_cast<std::size_t>(best)])
                best = a;
        }
        out.action = kActions[static_cast<std::size_t>(best)];
        return out;
    }

    [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node
    {
        int total = 0;
        std::array<int, kActionCount> visits{};
        std::array<double, kActionCount> values{};
    };

    int new_node()
    {
        nodes_.emplace_back();
        children_.resize(children_.size() + static_cast<std::size_t>(kActionCount * n_obs_), -1);
        return static_cast<int>(nodes_.size()) - 1;
    }

    int& child(int node, int action, int obs)
    {
        return children_[(static_cast<std::size_t>(node) * kActionCount + static_cast<std::size_t>(action)) *
                             static_cast<std::size_t>(n_obs_) +
                         static_cast<std::size_t>(obs)];
    }

    int select(int node) const
    {
        const auto& n = nodes_[static_cast<std::size_t>(node)];
        for (int a = 0; a < kActionCount; ++a)
            if (n.visits[static_cast<std::size_t>(a)] == 0)
                return a;
        const double log_n = std::log(static_cast<double>(n.total));
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < kActionCount; ++a)
        {
            const auto na = static_cast<double>(n.visits[static_cast<std::size_t>(a)]);
            const double score = n.values[static_cast<std::size_t>(a)] + cfg_.ucb_exploration * std::sqrt(log_n / na);
            if (score > best_score)
            {
                best_score = score;
                best = a;
            }
        }
        return best;
    }

    double simulate(SearchState& s, int node, int depth)
    {
        if (depth >= cfg_.max_depth || model_.is_terminal(s))
            return 0.0;
        const int a = select(node);
        const double r = model_.apply(s, kActions[static_cast<std::size_t>(a)]);
        double ret = r;
        if (!model_.is_terminal(s))
        {
            const int o = model_.sample_observation(s.robot, s.target, rng_);
            int next = child(node, a, o);
            if (next < 0)
            {
                next = new_node();
                child(node, a, o) = next;
                ret += model_.reward_params().gamma * rollout(s, depth + 1);
            }
            else
            {
                ret += model_.reward_params().gamma * simulate(s, next, depth + 1);
            }
        }
        auto& n = nodes_[static_cast<std::size_t>(node)];
        n.total += 1;
        auto& na = n.visits[static_cast<std::size_t>(a)];
        auto& q = n.values[static_cast<std::size_t>(a)];
        na += 1;
        q += (ret - q) / na;
        return ret;
    }

    double rollout(SearchState& s, int depth)
    {
        double total = 0.0;
        double discount = 1.0;
        const double gamma = model_.reward_params().gamma;
        for (int d = depth; d < cfg_.max_depth && !model_.is_terminal(s); ++d)
        {
            const Action a = rollout_.greedy_action(s.robot, s.target, s.battery);
            total += discount * model_.apply(s, a);
            discount *= gamma;
        }
        return total;
    }

    const SearchModel& model_;
    const RolloutValueTable& rollout_;
    SolverConfig cfg_;
    std::mt19937_64 rng_;
    int n_obs_;
    std::vector<Node> nodes_;
    std::vector<int> children_;
};

inline PlanResult pomcp_plan(const Belief& belief, const KnownState& known, const SearchModel& model,
                             const RolloutValueTable& rollout, const SolverConfig& cfg)
{
    Pomcp solver(model, rollout, cfg);
    return solver.plan(belief, known);
}

// ---------------------------------------------------------------------------
// Particle filter

/// Reweights particles by the observation likelihood from the robot's new
/// cell and resamples (systematic) back to the original count. When no
/// particle survives, a fraction is redrawn uniformly and the rest among the
/// observed cell and its neighbors (or, for code 0, among cells consistent
/// with the observation).
template <class Rng>
Belief belief_update(const Belief& belief, int robot_after, int code, const SearchModel& model,
                     double reinvigoration_fraction, Rng& rng)
{
    const std::size_t n = belief.size();
    if (n == 0)
        return belief;
    const int cells = model.grid().cell_count();

    // Likelihood depends only on the particle's cell; evaluate once per cell.
    std::vector<double> cell_lik(static_cast<std::size_t>(cells), -1.0);
    std::vector<double> w(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const int t = belief.particles[i];
        auto& l = cell_lik[static_cast<std::size_t>(t)];
        if (l < 0.0)
            l = model.observation_likelihood(robot_after, t, code);
        w[i] = l;
        total += l;
    }

    Belief out;
    out.particles.reserve(n);
    if (total > 0.0)
    {
        const double step = total / static_cast<double>(n);
        double u = std::uniform_real_distribution<double>(0.0, step)(rng);
        double cum = w[0];
        std::size_t i = 0;
        for (std::size_t k = 0; k < n; ++k)
        {
            while (u > cum && i + 1 < n)
                cum += w[++i];
            out.particles.push_back(belief.particles[i]);
            u += step;
        }
        return out;
    }

    // Particle depletion.
    std::vector<int> candidates;
    const int observed = model.cell_of_code(robot_after, code);
    if (observed >= 0)
    {
        const Cell c = model.grid().cell(observed);
        for (Cell d : {Cell{0, 0}, Cell{1, 0}, Cell{0, 1}, Cell{-1, 0}, Cell{0, -1}})
        {
            const Cell nb{c.row + d.row, c.col + d.col};
            if (model.grid().contains(nb) && model.observation_likelihood(robot_after, model.grid().index(nb), code) > 0.0)
                candidates.push_back(model.grid().index(nb));
        }
    }
    else
    {
        for (int t = 0; t < cells; ++t)
            if (model.observation_likelihood(robot_after, t, code) > 0.0)
                candidates.push_back(t);
    }
    std::uniform_int_distribution<int> any(0, cells - 1);
    const auto n_uniform = candidates.empty()
                               ? n
                               : static_cast<std::size_t>(std::floor(reinvigoration_fraction * static_cast<double>(n)));
    for (std::size_t k = 0; k < n_uniform; ++k)
        out.particles.push_back(any(rng));
    if (!candidates.empty())
    {
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        while (out.particles.size() < n)
            out.particles.push_back(candidates[pick(rng)]);
    }
    return out;
}

} // namespace searchgrid
