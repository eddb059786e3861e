#pragma once

#include "searchgrid/geogrid.hpp"
#include "searchgrid/pomdp.hpp"
#include "searchgrid/sketch.hpp"

#include <optional>
#include <set>
#include <string_view>
#include <vector>

namespace searchgrid
{

enum class RoutePhase
{
    waypoints,
    sketch_lawnmower,
    exhaustive
};

inline std::string_view to_string(RoutePhase p)
{
    switch (p)
    {
    case RoutePhase::waypoints: return "waypoints";
    case RoutePhase::sketch_lawnmower: return "sketch_lawnmower";
    case RoutePhase::exhaustive: return "exhaustive";
    }
    return "?";
}

struct RouteStep
{
    Cell cell;
    RoutePhase phase = RoutePhase::exhaustive;
    bool transit = false; ///< connecting move rather than a sweep or waypoint cell
};

/// Operational baseline route, starting at the start cell. Consecutive cells
/// are 4-adjacent or equal.
struct BaselineRoute
{
    std::vector<RouteStep> steps;

    [[nodiscard]] std::size_t size() const { return steps.size(); }
};

namespace detail
{
class RouteBuilder
{
public:
    RouteBuilder(const GridSpec& grid, Cell start) : grid_(grid), at_(start)
    {
        route_.steps.push_back({start, RoutePhase::waypoints, true});
        covered_.insert(grid.index(start));
    }

    /// Walks rows first, then columns; every intermediate cell is recorded as transit.
    void go_to(Cell target, RoutePhase phase, bool mark_goal_transit)
    {
        while (at_.row != target.row)
        {
            at_.row += target.row > at_.row ? 1 : -1;
            push(phase, at_ != target || mark_goal_transit);
        }
        while (at_.col != target.col)
        {
            at_.col += target.col > at_.col ? 1 : -1;
            push(phase, at_ != target || mark_goal_transit);
        }
    }

    void visit(Cell target, RoutePhase phase)
    {
        if (at_ == target)
        {
            // Already here: the cell still counts as swept in this phase.
            route_.steps.push_back({at_, phase, false});
            covered_.insert(grid_.index(at_));
            return;
        }
        go_to(target, phase, false);
    }

    [[nodiscard]] Cell position() const { return at_; }
    [[nodiscard]] bool covered(Cell c) const { return covered_.count(grid_.index(c)) > 0; }
    BaselineRoute take() { return std::move(route_); }

private:
    void push(RoutePhase phase, bool transit)
    {
        route_.steps.push_back({at_, phase, transit});
        covered_.insert(grid_.index(at_));
    }

    const GridSpec& grid_;
    Cell at_;
    BaselineRoute route_;
    std::set<int> covered_;
};

/// Serpentine order over `rows` (each a sorted list of columns), starting
/// from whichever corner is nearest to `from`.
inline std::vector<Cell> serpentine(std::vector<std::pair<int, std::vector<int>>> rows, Cell from)
{
    std::vector<Cell> order;
    if (rows.empty())
        return order;
    const auto& first = rows.front();
    const auto& last = rows.back();
    const int d_first = std::min(manhattan(from, {first.first, first.second.front()}),
                                 manhattan(from, {first.first, first.second.back()}));
    const int d_last = std::min(manhattan(from, {last.first, last.second.front()}),
                                manhattan(from, {last.first, last.second.back()}));
    if (d_last < d_first)
        std::reverse(rows.begin(), rows.end());
    const auto& r0 = rows.front();
    bool ascending = manhattan(from, {r0.first, r0.second.front()}) <= manhattan(from, {r0.first, r0.second.back()});
    for (const auto& [row, cols] : rows)
    {
        if (ascending)
            for (int c : cols)
                order.push_back({row, c});
        else
            for (auto it = cols.rbegin(); it != cols.rend(); ++it)
                order.push_back({row, *it});
        ascending = !ascending;
    }
    return order;
}
} // namespace detail

/// Waypoints in nearest-neighbor order, then a lawnmower over each sketch with
/// a positive observation (cells whose centers lie inside), then a lawnmower
/// over the whole grid skipping cells already on the route.
inline BaselineRoute plan_baseline(Cell start, const std::vector<Cell>& visit_waypoints,
                                   const std::vector<Sketch>& positive_sketches, const GridSpec& grid)
{
    grid.validate();
    if (!grid.contains(start))
        throw std::invalid_argument("baseline start outside grid");
    detail::RouteBuilder builder(grid, start);

    std::vector<Cell> pending = visit_waypoints;
    while (!pending.empty())
    {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pending.size(); ++i)
            if (manhattan(builder.position(), pending[i]) < manhattan(builder.position(), pending[best]))
                best = i;
        builder.visit(pending[best], RoutePhase::waypoints);
        pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(best));
    }

    for (const auto& sketch : positive_sketches)
    {
        std::vector<std::pair<int, std::vector<int>>> rows;
        for (int r = 0; r < grid.n_rows; ++r)
        {
            std::vector<int> cols;
            for (int c = 0; c < grid.n_cols; ++c)
                if (point_in_polygon(grid.center({r, c}), sketch.vertices))
                    cols.push_back(c);
            if (!cols.empty())
                rows.emplace_back(r, std::move(cols));
        }
        for (Cell c : detail::serpentine(std::move(rows), builder.position()))
            builder.visit(c, RoutePhase::sketch_lawnmower);
    }

    std::vector<std::pair<int, std::vector<int>>> rows;
    for (int r = 0; r < grid.n_rows; ++r)
    {
        std::vector<int> cols(static_cast<std::size_t>(grid.n_cols));
        for (int c = 0; c < grid.n_cols; ++c)
            cols[static_cast<std::size_t>(c)] = c;
        rows.emplace_back(r, std::move(cols));
    }
    for (Cell c : detail::serpentine(std::move(rows), builder.position()))
        if (!builder.covered(c))
            builder.visit(c, RoutePhase::exhaustive);
    return builder.take();
}

/// Executes a baseline route step by step. A positive observation diverts the
/// agent to the reported cell for confirmation, after which it rejoins the
/// route.
class BaselineExecutor
{
public:
    BaselineExecutor(const SearchModel& model, BaselineRoute route) : model_(model), route_(std::move(route)) {}

    /// Reports the observation received after the last move.
    void observe(int robot, int code)
    {
        if (code == 0)
            return;
        const int cell = model_.cell_of_code(robot, code);
        if (cell >= 0 && cell != robot)
            confirm_ = cell;
    }

    Action next_action(int robot)
    {
        if (confirm_ && *confirm_ == robot)
            confirm_.reset();
        if (confirm_)
            return toward(robot, *confirm_);
        const GridSpec& g = model_.grid();
        while (next_ < route_.steps.size() && g.index(route_.steps[next_].cell) == robot)
            ++next_;
        if (next_ >= route_.steps.size())
            return Action::stay;
        return toward(robot, g.index(route_.steps[next_].cell));
    }

    [[nodiscard]] const BaselineRoute& route() const { return route_; }
    [[nodiscard]] std::size_t progress() const { return next_; }

private:
    [[nodiscard]] Action toward(int from, int to) const
    {
        const Cell a = model_.grid().cell(from);
        const Cell b = model_.grid().cell(to);
        if (b.row > a.row)
            return Action::up;
        if (b.row < a.row)
            return Action::down;
        if (b.col > a.col)
            return Action::right;
        if (b.col < a.col)
            return Action::left;
        return Action::stay;
    }

    const SearchModel& model_;
    BaselineRoute route_;
    std::size_t next_ = 0;
    std::optional<int> confirm_;
};

} // namespace searchgrid
