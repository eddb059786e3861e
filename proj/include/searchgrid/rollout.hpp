#pragma once

#include "searchgrid/pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace searchgrid
{

struct RolloutConfig
{
    int bucket_steps = 10;                          ///< battery steps per bucket
    double tolerance = 1e-6;                        ///< Bellman residual stopping threshold
    std::uint64_t memory_budget = 1ull << 30;       ///< bytes for the full (target, bucket, robot) table
    int max_sweeps = 100000;
};

/// Value of the observation-free abstraction over (robot cell, target cell,
/// battery bucket). Ignores the visited set and the operator map.
///
/// Reaching the target is worth R_target on arrival (the target cell is an
/// absorbing state with that value); battery-terminal states are worth 0.
/// Battery is bucketed: each step leaves the bucket with probability
/// 1 / bucket_steps, so the expected dwell time matches the real battery and
/// a bucket's return-budget check uses its lowest battery level. With
/// bucket_steps = 1 the abstraction is exact.
///
/// Per-target tables are solved on first use and cached; lookups are
/// thread-safe.
class RolloutValueTable
{
public:
    RolloutValueTable(const SearchModel& model, RolloutConfig cfg = {})
        : grid_(model.grid()), reward_(model.reward_params()), start_(model.start()), cfg_(cfg)
    {
        if (cfg_.bucket_steps < 1)
            throw std::invalid_argument("bucket_steps must be at least 1");
        cells_ = grid_.cell_count();
        bucket_battery_ = cfg_.bucket_steps * reward_.b_cost;
        buckets_ = reward_.b_max / bucket_battery_ + 1;
        const auto bytes = static_cast<std::uint64_t>(cells_) * static_cast<std::uint64_t>(cells_) *
                           static_cast<std::uint64_t>(buckets_) * sizeof(float);
        if (bytes > cfg_.memory_budget)
            throw std::length_error("rollout value table needs " + std::to_string(bytes >> 20) + " MiB (budget " +
                                    std::to_string(cfg_.memory_budget >> 20) +
                                    " MiB); increase planner.battery_bucket for coarser battery bucketing");
        tables_.resize(static_cast<std::size_t>(cells_));
        residuals_.assign(static_cast<std::size_t>(cells_), 0.0);
        once_ = std::make_unique<std::once_flag[]>(static_cast<std::size_t>(cells_));
    }

    RolloutValueTable(const RolloutValueTable&) = delete;
    RolloutValueTable& operator=(const RolloutValueTable&) = delete;

    [[nodiscard]] int bucket_count() const { return buckets_; }
    [[nodiscard]] int bucket_of(int battery) const { return std::clamp(battery / bucket_battery_, 0, buckets_ - 1); }
    [[nodiscard]] int bucket_battery(int bucket) const { return bucket * bucket_battery_; }
    [[nodiscard]] double drop_probability() const { return 1.0 / cfg_.bucket_steps; }

    /// V(robot, bucket) for one target; target cell value is R_target.
    [[nodiscard]] double value(int robot, int target, int bucket) const
    {
        if (robot == target)
            return reward_.r_target;
        const auto& t = table(target);
        return t[index(bucket, robot)];
    }

    [[nodiscard]] double value_at_battery(int robot, int target, int battery) const
    {
        return value(robot, target, bucket_of(battery));
    }

    /// Final Bellman residual of a solved target table.
    [[nodiscard]] double residual(int target) const
    {
        (void)table(target);
        return residuals_[static_cast<std::size_t>(target)];
    }

    /// One-step lookahead Q-value under the abstraction.
    [[nodiscard]] double q_value(int robot, int target, int bucket, Action a) const
    {
        const int next = move(robot, a);
        if (next == target)
            return reward_.r_time + reward_.gamma * reward_.r_target;
        const auto& t = table(target);
        return reward_.r_time + reward_.gamma * continuation(t, next, bucket);
    }

    /// Greedy action; ties go to the lowest action index.
    [[nodiscard]] Action greedy_action(int robot, int target, int battery) const
    {
        const int bucket = bucket_of(battery);
        Action best = Action::up;
        double best_q = -std::numeric_limits<double>::infinity();
        for (Action a : kActions)
        {
            const double q = q_value(robot, target, bucket, a);
            if (q > best_q + 1e-9)
            {
                best_q = q;
                best = a;
            }
        }
        return best;
    }

    /// Solves every target table up front.
    void solve_all() const
    {
        for (int t = 0; t < cells_; ++t)
            (void)table(t);
    }

private:
    [[nodiscard]] std::size_t index(int bucket, int robot) const
    {
        return static_cast<std::size_t>(bucket) * static_cast<std::size_t>(cells_) + static_cast<std::size_t>(robot);
    }

    [[nodiscard]] int move(int cell, Action a) const
    {
        const Cell c = grid_.cell(cell);
        const Cell d = action_offset(a);
        const Cell n{c.row + d.row, c.col + d.col};
        return grid_.contains(n) ? grid_.index(n) : cell;
    }

    [[nodiscard]] bool terminal(int robot, int bucket) const
    {
        const int battery = bucket_battery(bucket);
        return battery < reward_.b_cost || battery <= reward_.b_cost * manhattan(grid_.cell(robot), grid_.cell(start_));
    }

    /// Expected value after one step that lands on non-target cell `next`.
    [[nodiscard]] double continuation(const std::vector<float>& t, int next, int bucket) const
    {
        const double p = drop_probability();
        const double stay = t[index(bucket, next)];
        const double drop = bucket > 0 ? static_cast<double>(t[index(bucket - 1, next)]) : 0.0;
        return (1.0 - p) * stay + p * drop;
    }

    const std::vector<float>& table(int target) const
    {
        if (target < 0 || target >= cells_)
            throw std::out_of_range("target cell outside grid");
        std::call_once(once_[static_cast<std::size_t>(target)], [&] { solve(target); });
        return tables_[static_cast<std::size_t>(target)];
    }

    /// Buckets are solved in increasing order; each depends only on itself and
    /// the bucket below. Within a bucket, Gauss-Seidel sweeps run until the
    /// largest update falls below tolerance.
    void solve(int target) const
    {
        std::vector<double> v(static_cast<std::size_t>(cells_) * static_cast<std::size_t>(buckets_), 0.0);
        const double gamma = reward_.gamma;
        const double p = drop_probability();
        double worst_residual = 0.0;
        for (int b = 0; b < buckets_; ++b)
        {
            if (b > 0)
                for (int x = 0; x < cells_; ++x)
                    v[index(b, x)] = v[index(b - 1, x)];
            double delta = 0.0;
            for (int sweep = 0; sweep < cfg_.max_sweeps; ++sweep)
            {
                delta = 0.0;
                for (int x = 0; x < cells_; ++x)
                {
                    if (x == target || terminal(x, b))
                        continue;
                    double best = -std::numeric_limits<double>::infinity();
                    for (Action a : kActions)
                    {
                        const int nx = move(x, a);
                        double q;
                        if (nx == target)
                            q = reward_.r_time + gamma * reward_.r_target;
                        else
                        {
                            const double stay = v[index(b, nx)];
                            const double drop = b > 0 ? v[index(b - 1, nx)] : 0.0;
                            q = reward_.r_time + gamma * ((1.0 - p) * stay + p * drop);
                        }
                        best = std::max(best, q);
                    }
                    delta = std::max(delta, std::abs(best - v[index(b, x)]));
                    v[index(b, x)] = best;
                }
                if (delta < cfg_.tolerance)
                    break;
            }
            worst_residual = std::max(worst_residual, delta);
        }
        auto& out = tables_[static_cast<std::size_t>(target)];
        out.assign(v.begin(), v.end());
        residuals_[static_cast<std::size_t>(target)] = worst_residual;
    }

    GridSpec grid_;
    RewardParams reward_;
    int start_;
    RolloutConfig cfg_;
    int cells_ = 0;
    int bucket_battery_ = 1;
    int buckets_ = 1;
    mutable std::vector<std::vector<float>> tables_;
    mutable std::vector<double> residuals_;
    std::unique_ptr<std::once_flag[]> once_;
};

inline std::shared_ptr<const RolloutValueTable> solve_rollout_mdp(const SearchModel& model, RolloutConfig cfg = {})
{
    return std::make_shared<const RolloutValueTable>(model, cfg);
}

} // namespace searchgrid
