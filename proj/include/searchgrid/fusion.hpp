#pragma once

#include "searchgrid/geogrid.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace searchgrid
{

// ---------------------------------------------------------------------------
// Operator inputs

struct WaypointSet
{
    std::vector<int> visit; ///< cell indices with S = 1
    std::vector<int> avoid; ///< cell indices with S = 0

    [[nodiscard]] bool empty() const { return visit.empty() && avoid.empty(); }
    [[nodiscard]] std::size_t size() const { return visit.size() + avoid.size(); }
};

/// Snaps coordinates to their containing cells and deduplicates. A cell that
/// ends up in both lists is rejected.
inline WaypointSet snap_waypoints(const GridSpec& grid, std::span<const Vec2> visit, std::span<const Vec2> avoid)
{
    auto snap_all = [&](std::span<const Vec2> pts, const char* what) {
        std::vector<int> cells;
        std::set<int> seen;
        for (auto p : pts)
        {
            if (!grid.covers(p))
                throw std::invalid_argument(std::string(what) + " waypoint (" + std::to_string(p.x) + ", " +
                                            std::to_string(p.y) + ") lies outside the grid");
            const int c = grid.index(grid.snap(p));
            if (seen.insert(c).second)
                cells.push_back(c);
        }
        return cells;
    };
    WaypointSet w{snap_all(visit, "visit"), snap_all(avoid, "avoid")};
    for (int c : w.visit)
        if (std::find(w.avoid.begin(), w.avoid.end(), c) != w.avoid.end())
        {
            const Cell cell = grid.cell(c);
            throw std::invalid_argument("cell (" + std::to_string(cell.row) + ", " + std::to_string(cell.col) +
                                        ") is marked both visit and avoid");
        }
    return w;
}

// ---------------------------------------------------------------------------
// Prior

struct GaussianPrior
{
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

struct PriorConfig
{
    double mean_boost = 1.0;
    double sd = 1.0;
};

namespace detail
{
inline std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

/// Sketch part of a semantic column name "<sketch>:<label>".
inline std::string sketch_of(const std::string& column)
{
    const auto pos = column.rfind(':');
    return pos == std::string::npos ? column : column.substr(0, pos);
}
} // namespace detail

/// Column indices a priority name refers to. Names match geographic columns
/// and full semantic column names case-insensitively; a bare sketch name
/// matches every semantic column of that sketch.
inline std::vector<int> resolve_priority(const std::string& name, const std::vector<std::string>& phi_names,
                                         const std::vector<std::string>& psi_names)
{
    const auto key = detail::lower(name);
    std::vector<int> cols;
    for (std::size_t i = 0; i < phi_names.size(); ++i)
        if (detail::lower(phi_names[i]) == key)
            cols.push_back(static_cast<int>(i));
    for (std::size_t i = 0; i < psi_names.size(); ++i)
        if (detail::lower(psi_names[i]) == key || detail::lower(detail::sketch_of(psi_names[i])) == key)
            cols.push_back(static_cast<int>(phi_names.size() + i));
    return cols;
}

/// Equal positive mean on every prioritized weight, isotropic covariance.
inline GaussianPrior build_prior(const std::vector<std::string>& priorities, const std::vector<std::string>& phi_names,
                                 const std::vector<std::string>& psi_names, const PriorConfig& cfg = {})
{
    if (!(cfg.mean_boost > 0.0) || !(cfg.sd > 0.0))
        throw std::invalid_argument("prior hyperparameters must be positive");
    const auto d = static_cast<Eigen::Index>(phi_names.size() + psi_names.size());
    GaussianPrior prior{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d) * (cfg.sd * cfg.sd)};
    for (const auto& name : priorities)
    {
        const auto cols = resolve_priority(name, phi_names, psi_names);
        if (cols.empty())
        {
            std::string valid;
            for (const auto& n : phi_names)
                valid += (valid.empty() ? "" : ", ") + n;
            for (const auto& n : psi_names)
                valid += (valid.empty() ? "" : ", ") + n;
            throw std::invalid_argument("unknown priority '" + name + "'; valid names: " + valid);
        }
        for (int c : cols)
            prior.mean(c) = cfg.mean_boost;
    }
    return prior;
}

inline GaussianPrior build_prior(const std::vector<std::string>& priorities, const FeatureMatrix& fm,
                                 const PriorConfig& cfg = {})
{
    return build_prior(priorities, fm.phi_names, fm.psi_names, cfg);
}

// ---------------------------------------------------------------------------
// Objective

/// Negative log posterior over the stacked weights (theta, delta) with its
/// exact gradient and Hessian.
struct Objective
{
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

/// Waypoint rows of the design matrix plus their labels, precomputed once per fit.
class FusionProblem
{
public:
    FusionProblem(GaussianPrior prior, const WaypointSet& waypoints, const FeatureMatrix& features)
        : prior_(std::move(prior))
    {
        const auto d = static_cast<Eigen::Index>(features.width());
        if (prior_.mean.size() != d || prior_.covariance.rows() != d || prior_.covariance.cols() != d)
            throw std::invalid_argument("prior dimension " + std::to_string(prior_.mean.size()) +
                                        " does not match feature width " + std::to_string(d));
        const auto k = static_cast<Eigen::Index>(waypoints.size());
        rows_.resize(k, d);
        labels_.resize(k);
        Eigen::Index i = 0;
        auto add = [&](int cell, double label) {
            if (cell < 0 || cell >= features.cell_count())
                throw std::invalid_argument("waypoint cell " + std::to_string(cell) + " outside grid");
            rows_.row(i) = features.stacked(cell).transpose();
            labels_(i++) = label;
        };
        for (int c : waypoints.visit)
            add(c, 1.0);
        for (int c : waypoints.avoid)
            add(c, 0.0);
        if (!rows_.allFinite())
            throw std::invalid_argument("feature columns must be finite");
        precision_ = prior_.covariance.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
        precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
    }

    [[nodiscard]] Eigen::Index dimension() const { return prior_.mean.size(); }
    [[nodiscard]] const GaussianPrior& prior() const { return prior_; }
    [[nodiscard]] const Eigen::MatrixXd& precision() const { return precision_; }
    [[nodiscard]] Eigen::Index waypoint_count() const { return rows_.rows(); }

    /// value = 1/2 (w - m)' P (w - m) + sum_visit softplus(-r) + sum_avoid softplus(r)
    [[nodiscard]] Objective evaluate(const Eigen::VectorXd& w, bool with_hessian = true) const
    {
        if (w.size() != dimension())
            throw std::invalid_argument("weight vector has dimension " + std::to_string(w.size()) + ", expected " +
                                        std::to_string(dimension()));
        Objective out;
        const Eigen::VectorXd dev = w - prior_.mean;
        const Eigen::VectorXd pdev = precision_ * dev;
        out.value = 0.5 * dev.dot(pdev);
        out.gradient = pdev;
        if (with_hessian)
            out.hessian = precision_;
        const Eigen::VectorXd r = rows_ * w;
        for (Eigen::Index i = 0; i < r.size(); ++i)
        {
            const double s = sigmoid(r(i));
            out.value += labels_(i) > 0.5 ? softplus(-r(i)) : softplus(r(i));
            out.gradient += (s - labels_(i)) * rows_.row(i).transpose();
            if (with_hessian)
                out.hessian.noalias() += (s * (1.0 - s)) * rows_.row(i).transpose() * rows_.row(i);
        }
        return out;
    }

    static double sigmoid(double r)
    {
        if (r >= 0.0)
            return 1.0 / (1.0 + std::exp(-r));
        const double e = std::exp(r);
        return e / (1.0 + e);
    }

    /// log(1 + exp(x)) without overflow.
    static double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

private:
    GaussianPrior prior_;
    Eigen::MatrixXd rows_;
    Eigen::VectorXd labels_;
    Eigen::MatrixXd precision_;
};

inline Objective neg_log_posterior(const Eigen::VectorXd& weights, const GaussianPrior& prior,
                                   const WaypointSet& waypoints, const FeatureMatrix& features)
{
    return FusionProblem(prior, waypoints, features).evaluate(weights);
}

// ---------------------------------------------------------------------------
// Laplace approximation

enum class OptimizerKind
{
    bfgs,
    newton
};

struct OptimizerConfig
{
    OptimizerKind kind = OptimizerKind::bfgs;
    int max_iterations = 200;
    double gradient_tolerance = 1e-8;
};

struct WeightPosterior
{
    Eigen::VectorXd mean;       ///< theta block, then delta block
    Eigen::MatrixXd covariance; ///< inverse Hessian at the mode
    int iterations = 0;
    double gradient_norm = 0.0;
    OptimizerKind method = OptimizerKind::bfgs;
};

class ConvergenceError : public std::runtime_error
{
public:
    ConvergenceError(const std::string& what, double grad_norm) : std::runtime_error(what), gradient_norm(grad_norm) {}
    double gradient_norm;
};

namespace detail
{
struct MinimizeResult
{
    Eigen::VectorXd x;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Backtracking Armijo search along a descent direction.
inline double backtrack(const FusionProblem& p, const Eigen::VectorXd& x, double fx, const Eigen::VectorXd& g,
                        const Eigen::VectorXd& dir)
{
    const double slope = g.dot(dir);
    double step = 1.0;
    for (int i = 0; i < 60; ++i, step *= 0.5)
    {
        const double f_new = p.evaluate(x + step * dir, false).value;
        if (f_new <= fx + 1e-4 * step * slope)
            return step;
    }
    return step;
}

inline MinimizeResult minimize_bfgs(const FusionProblem& p, Eigen::VectorXd x, const OptimizerConfig& cfg)
{
    auto obj = p.evaluate(x, false);
    // Prior covariance is the natural scaling for the initial inverse Hessian.
    Eigen::MatrixXd inv_h = p.prior().covariance;
    MinimizeResult res;
    for (res.iterations = 0; res.iterations < cfg.max_iterations; ++res.iterations)
    {
        res.gradient_norm = obj.gradient.lpNorm<Eigen::Infinity>();
        if (res.gradient_norm < cfg.gradient_tolerance)
        {
            res.converged = true;
            break;
        }
        Eigen::VectorXd dir = -inv_h * obj.gradient;
        if (obj.gradient.dot(dir) >= 0.0)
        {
            inv_h = p.prior().covariance;
            dir = -inv_h * obj.gradient;
        }
        const double step = backtrack(p, x, obj.value, obj.gradient, dir);
        const Eigen::VectorXd s = step * dir;
        auto next = p.evaluate(x + s, false);
        const Eigen::VectorXd y = next.gradient - obj.gradient;
        const double sy = s.dot(y);
        if (sy > 1e-300)
        {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(x.size(), x.size());
            inv_h = (eye - rho * s * y.transpose()) * inv_h * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        x += s;
        obj = std::move(next);
    }
    res.gradient_norm = obj.gradient.lpNorm<Eigen::Infinity>();
    res.converged = res.converged || res.gradient_norm < cfg.gradient_tolerance;
    res.x = std::move(x);
    return res;
}

inline MinimizeResult minimize_newton(const FusionProblem& p, Eigen::VectorXd x, const OptimizerConfig& cfg)
{
    MinimizeResult res;
    auto obj = p.evaluate(x);
    for (res.iterations = 0; res.iterations < cfg.max_iterations; ++res.iterations)
    {
        res.gradient_norm = obj.gradient.lpNorm<Eigen::Infinity>();
        if (res.gradient_norm < cfg.gradient_tolerance)
        {
            res.converged = true;
            break;
        }
        const Eigen::VectorXd dir = -obj.hessian.ldlt().solve(obj.gradient);
        // Newton decrement below rounding of the objective: nothing left to gain
        if (-obj.gradient.dot(dir) <= 1e-14 * std::max(1.0, std::abs(obj.value)))
        {
            res.converged = true;
            break;
        }
        const double step = backtrack(p, x, obj.value, obj.gradient, dir);
        x += step * dir;
        obj = p.evaluate(x);
    }
    res.gradient_norm = obj.gradient.lpNorm<Eigen::Infinity>();
    res.converged = res.converged || res.gradient_norm < cfg.gradient_tolerance;
    res.x = std::move(x);
    return res;
}
} // namespace detail

/// MAP estimate of the weights and the inverse Hessian there. Quasi-Newton by
/// default, falling back to Newton with the exact Hessian if BFGS stalls.
inline WeightPosterior laplace_fit(const FusionProblem& problem, const OptimizerConfig& cfg = {})
{
    const auto& prior = problem.prior();
    if (problem.waypoint_count() == 0)
        return {prior.mean, prior.covariance, 0, 0.0, cfg.kind};

    detail::MinimizeResult res;
    OptimizerKind used = cfg.kind;
    if (cfg.kind == OptimizerKind::bfgs)
    {
        res = detail::minimize_bfgs(problem, prior.mean, cfg);
        if (!res.converged)
        {
            const int spent = res.iterations;
            res = detail::minimize_newton(problem, res.x, cfg);
            res.iterations += spent;
            used = OptimizerKind::newton;
        }
    }
    else
    {
        res = detail::minimize_newton(problem, prior.mean, cfg);
    }
    if (!res.converged)
    {
        std::ostringstream msg;
        msg << "Laplace fit did not converge; final gradient inf-norm " << std::scientific << res.gradient_norm;
        throw ConvergenceError(msg.str(), res.gradient_norm);
    }

    const auto at_mode = problem.evaluate(res.x);
    const auto d = problem.dimension();
    Eigen::MatrixXd cov = at_mode.hessian.ldlt().solve(Eigen::MatrixXd::Identity(d, d));
    cov = 0.5 * (cov + cov.transpose()).eval();
    return {std::move(res.x), std::move(cov), res.iterations, at_mode.gradient.lpNorm<Eigen::Infinity>(), used};
}

inline WeightPosterior laplace_fit(const GaussianPrior& prior, const WaypointSet& waypoints,
                                   const FeatureMatrix& features, const OptimizerConfig& cfg = {})
{
    return laplace_fit(FusionProblem(prior, waypoints, features), cfg);
}

// ---------------------------------------------------------------------------
// Reward map

/// Posterior reward mean and variance per cell, row-major.
struct RewardMap
{
    int n_rows = 0;
    int n_cols = 0;
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;

    [[nodiscard]] int cell_count() const { return n_rows * n_cols; }
};

/// mean_g = mu' x_g, variance_g = x_g' Sigma x_g with the full joint covariance.
inline RewardMap reward_map(const WeightPosterior& posterior, const FeatureMatrix& features)
{
    if (posterior.mean.size() != features.width())
        throw std::invalid_argument("posterior dimension does not match feature columns");
    const Eigen::MatrixXd x = features.design();
    RewardMap map;
    map.n_rows = features.n_rows;
    map.n_cols = features.n_cols;
    map.mean = x * posterior.mean;
    map.variance = (x * posterior.covariance).cwiseProduct(x).rowwise().sum().cwiseMax(0.0);
    return map;
}

} // namespace searchgrid
