#pragma once

#include "searchgrid/geogrid.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace searchgrid
{

enum class Action : std::uint8_t
{
    up,
    down,
    left,
    right,
    stay
};

inline constexpr int kActionCount = 5;
inline constexpr std::array<Action, kActionCount> kActions{Action::up, Action::down, Action::left, Action::right,
                                                           Action::stay};

inline std::string_view to_string(Action a)
{
    static constexpr std::array<std::string_view, kActionCount> names{"up", "down", "left", "right", "stay"};
    return names[static_cast<std::size_t>(a)];
}

/// Cell offset (rows north, cols east) of an action. "up" is north.
inline constexpr Cell action_offset(Action a)
{
    switch (a)
    {
    case Action::up: return {1, 0};
    case Action::down: return {-1, 0};
    case Action::left: return {0, -1};
    case Action::right: return {0, 1};
    case Action::stay: return {0, 0};
    }
    return {0, 0};
}

/// Full POMDP state. Cells are row-major indices.
struct SearchState
{
    int robot = 0;
    int target = 0;
    int battery = 0;
    std::vector<bool> visited;
};

struct ObsParams
{
    int d_obs = 1;                ///< Manhattan detection radius
    double z_true = 0.8;
    double z_prox = 0.1;
    int neighborhood_radius = 1;  ///< coded cells: Manhattan ball around the robot (radius 1 gives M = 5)

    [[nodiscard]] double z_neg() const { return 1.0 - z_true - 2.0 * z_prox; }

    void validate() const
    {
        if (d_obs < 0 || neighborhood_radius < 0)
            throw std::invalid_argument("observation radii must be non-negative");
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!prob(z_true) || !prob(z_prox) || z_neg() < -1e-12)
            throw std::invalid_argument("observation probabilities must satisfy z_true + 2 z_prox <= 1");
    }
};

struct RewardParams
{
    double r_time = -1.0;
    double r_target = 1000.0;
    int b_cost = 1;
    int b_max = 1000;
    double gamma = 0.95;

    void validate() const
    {
        if (b_cost < 1)
            throw std::invalid_argument("b_cost must be at least 1");
        if (b_max < 0)
            throw std::invalid_argument("b_max must be non-negative");
        if (!(gamma >= 0.0 && gamma < 1.0))
            throw std::invalid_argument("gamma must lie in [0, 1)");
    }
};

/// Observation probabilities over codes 0..M for one (robot, target) pair.
using ObservationDistribution = std::vector<double>;

/// Target-search POMDP with adaptive operator reward. Holds everything that
/// stays fixed for an episode except the operator map, which may be swapped
/// between decisions.
class SearchModel
{
public:
    SearchModel(GridSpec grid, ObsParams obs, RewardParams reward, std::vector<double> op_reward, int start)
        : grid_(grid), obs_(obs), reward_(reward), start_(start)
    {
        grid_.validate();
        obs_.validate();
        reward_.validate();
        if (start < 0 || start >= grid_.cell_count())
            throw std::invalid_argument("start cell outside grid");
        set_operator_reward(std::move(op_reward));

        // Coded neighborhood: center, then rings of growing Manhattan radius,
        // each ring clockwise from north (N, E, S, W for radius 1).
        offsets_.push_back({0, 0});
        for (int r = 1; r <= obs_.neighborhood_radius; ++r)
        {
            for (int k = 0; k < r; ++k)
                offsets_.push_back({r - k, k}); // north to east
            for (int k = 0; k < r; ++k)
                offsets_.push_back({-k, r - k}); // east to south
            for (int k = 0; k < r; ++k)
                offsets_.push_back({-(r - k), -k}); // south to west
            for (int k = 0; k < r; ++k)
                offsets_.push_back({k, -(r - k)}); // west to north
        }
    }

    [[nodiscard]] const GridSpec& grid() const { return grid_; }
    [[nodiscard]] const ObsParams& obs_params() const { return obs_; }
    [[nodiscard]] const RewardParams& reward_params() const { return reward_; }
    [[nodiscard]] int start() const { return start_; }
    [[nodiscard]] int observation_count() const { return static_cast<int>(offsets_.size()) + 1; }
    [[nodiscard]] std::span<const Cell> neighborhood() const { return offsets_; }
    [[nodiscard]] const std::vector<double>& operator_reward() const { return op_reward_; }

    /// Replaces the operator map. Requires R_target above every cell reward.
    void set_operator_reward(std::vector<double> op)
    {
        if (op.empty())
            op.assign(static_cast<std::size_t>(grid_.cell_count()), 0.0);
        if (static_cast<int>(op.size()) != grid_.cell_count())
            throw std::invalid_argument("operator reward map does not match grid");
        for (double v : op)
            if (!(v < reward_.r_target))
                throw std::invalid_argument("r_target must exceed every operator reward value");
        op_reward_ = std::move(op);
    }

    [[nodiscard]] SearchState initial_state(int target) const
    {
        SearchState s{start_, target, reward_.b_max, std::vector<bool>(static_cast<std::size_t>(grid_.cell_count()))};
        s.visited[static_cast<std::size_t>(start_)] = true;
        return s;
    }

    /// Neighbor cell under an action; moves off the grid leave the robot in place.
    [[nodiscard]] int move(int cell, Action a) const
    {
        const Cell c = grid_.cell(cell);
        const Cell d = action_offset(a);
        const Cell n{c.row + d.row, c.col + d.col};
        return grid_.contains(n) ? grid_.index(n) : cell;
    }

    [[nodiscard]] SearchState transition(const SearchState& s, Action a) const
    {
        SearchState next = s;
        apply(next, a);
        return next;
    }

    /// In-place transition; returns the reward of the step.
    double apply(SearchState& s, Action a) const
    {
        const int cell = move(s.robot, a);
        const bool fresh = !s.visited[static_cast<std::size_t>(cell)];
        s.robot = cell;
        s.battery -= reward_.b_cost;
        s.visited[static_cast<std::size_t>(cell)] = true;
        return step_reward(cell, s.target, fresh);
    }

    [[nodiscard]] double step_reward(int robot_after, int target, bool unvisited_before) const
    {
        double r = reward_.r_time;
        if (robot_after == target)
            r += reward_.r_target;
        if (unvisited_before)
            r += op_reward_[static_cast<std::size_t>(robot_after)];
        return r;
    }

    /// R_time + R_target [found] + r_hat(cell') [cell' unvisited in s].
    [[nodiscard]] double reward(const SearchState& s, Action /*a*/, const SearchState& next) const
    {
        return step_reward(next.robot, next.target, !s.visited[static_cast<std::size_t>(next.robot)]);
    }

    [[nodiscard]] int return_cost(int robot) const
    {
        return reward_.b_cost * manhattan(grid_.cell(robot), grid_.cell(start_));
    }

    /// No budget for another step, or only just enough to fly home. The first
    /// clause matters when B_max is not a multiple of B_cost.
    [[nodiscard]] bool out_of_battery(int robot, int battery) const
    {
        return battery < reward_.b_cost || battery <= return_cost(robot);
    }

    [[nodiscard]] bool is_terminal(int robot, int target, int battery) const
    {
        return robot == target || out_of_battery(robot, battery);
    }

    [[nodiscard]] bool is_terminal(const SearchState& s) const { return is_terminal(s.robot, s.target, s.battery); }

    /// Observation code of an absolute cell relative to the robot, or 0 when
    /// the cell is off-grid or outside the coded neighborhood.
    [[nodiscard]] int code_of(int robot, Cell cell) const
    {
        if (!grid_.contains(cell))
            return 0;
        const Cell r = grid_.cell(robot);
        const Cell d{cell.row - r.row, cell.col - r.col};
        for (std::size_t i = 0; i < offsets_.size(); ++i)
            if (offsets_[i] == d)
                return static_cast<int>(i) + 1;
        return 0;
    }

    /// Absolute cell a positive code refers to, or -1 when off-grid.
    [[nodiscard]] int cell_of_code(int robot, int code) const
    {
        if (code <= 0 || code > static_cast<int>(offsets_.size()))
            return -1;
        const Cell r = grid_.cell(robot);
        const Cell d = offsets_[static_cast<std::size_t>(code - 1)];
        const Cell c{r.row + d.row, r.col + d.col};
        return grid_.contains(c) ? grid_.index(c) : -1;
    }

    /// The two cells adjacent to the target perpendicular to the robot-to-target
    /// axis. Vertical axis when |d_row| >= |d_col|; north/south when robot and
    /// target coincide.
    [[nodiscard]] std::array<Cell, 2> proximal_cells(int robot, int target) const
    {
        const Cell r = grid_.cell(robot);
        const Cell t = grid_.cell(target);
        const int dr = t.row - r.row;
        const int dc = t.col - r.col;
        if (dr == 0 && dc == 0)
            return {Cell{t.row + 1, t.col}, Cell{t.row - 1, t.col}};
        if (std::abs(dr) >= std::abs(dc))
            return {Cell{t.row, t.col + 1}, Cell{t.row, t.col - 1}};
        return {Cell{t.row + 1, t.col}, Cell{t.row - 1, t.col}};
    }

    [[nodiscard]] ObservationDistribution observation_distribution(int robot, int target) const
    {
        ObservationDistribution p(static_cast<std::size_t>(observation_count()), 0.0);
        if (manhattan(grid_.cell(robot), grid_.cell(target)) > obs_.d_obs)
        {
            p[0] = 1.0;
            return p;
        }
        p[static_cast<std::size_t>(code_of(robot, grid_.cell(target)))] += obs_.z_true;
        for (Cell c : proximal_cells(robot, target))
            p[static_cast<std::size_t>(code_of(robot, c))] += obs_.z_prox;
        p[0] += std::max(0.0, obs_.z_neg());
        return p;
    }

    [[nodiscard]] ObservationDistribution observation_distribution(const SearchState& s, Action /*a*/) const
    {
        return observation_distribution(s.robot, s.target);
    }

    /// P(code | robot, target) without materializing the full vector.
    [[nodiscard]] double observation_likelihood(int robot, int target, int code) const
    {
        const Cell rc = grid_.cell(robot);
        const Cell tc = grid_.cell(target);
        if (manhattan(rc, tc) > obs_.d_obs)
            return code == 0 ? 1.0 : 0.0;
        double p = code == 0 ? std::max(0.0, obs_.z_neg()) : 0.0;
        if (code_of(robot, tc) == code)
            p += obs_.z_true;
        for (Cell c : proximal_cells(robot, target))
            if (code_of(robot, c) == code)
                p += obs_.z_prox;
        return p;
    }

    template <class Rng>
    int sample_observation(int robot, int target, Rng& rng) const
    {
        const auto p = observation_distribution(robot, target);
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        for (std::size_t i = 0; i < p.size(); ++i)
        {
            if (u < p[i])
                return static_cast<int>(i);
            u -= p[i];
        }
        // Rounding residue: return the last code with mass.
        for (std::size_t i = p.size(); i-- > 0;)
            if (p[i] > 0.0)
                return static_cast<int>(i);
        return 0;
    }

private:
    GridSpec grid_;
    ObsParams obs_;
    RewardParams reward_;
    int start_ = 0;
    std::vector<double> op_reward_;
    std::vector<Cell> offsets_;
};

/// Number of states of the full model, B_max * (n m)^2 * 2^(n m), as log2.
inline double log2_state_count(const GridSpec& grid, const RewardParams& r)
{
    const double cells = grid.cell_count();
    return std::log2(static_cast<double>(r.b_max)) + 2.0 * std::log2(cells) + cells;
}

// ---------------------------------------------------------------------------
// Belief

/// Particle belief over the target cell.
struct Belief
{
    std::vector<int> particles;

    [[nodiscard]] bool empty() const { return particles.empty(); }
    [[nodiscard]] std::size_t size() const { return particles.size(); }

    /// Normalized particle histogram over `cells` cells.
    [[nodiscard]] std::vector<double> histogram(int cells) const
    {
        std::vector<double> h(static_cast<std::size_t>(cells), 0.0);
        for (int p : particles)
            h[static_cast<std::size_t>(p)] += 1.0;
        if (!particles.empty())
            for (auto& v : h)
                v /= static_cast<double>(particles.size());
        return h;
    }
};

/// Uniform particle belief over all cells.
inline Belief initial_belief(const GridSpec& grid, int n_particles, std::uint64_t seed)
{
    if (n_particles < 1)
        throw std::invalid_argument("n_particles must be at least 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> cell(0, grid.cell_count() - 1);
    Belief b;
    b.particles.resize(static_cast<std::size_t>(n_particles));
    for (auto& p : b.particles)
        p = cell(rng);
    return b;
}

} // namespace searchgrid
