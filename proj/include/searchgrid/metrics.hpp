#pragma once

#include "searchgrid/fusion.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace searchgrid
{

// ---------------------------------------------------------------------------
// Alignment error

/// Operator rating of one cell on the {-1, 0, 1, 2} scale.
struct CellRating
{
    int cell = 0;
    int value = 0;
};

inline constexpr int kRatedCellCount = 21;

/// Maps each value to {-1, 0, 1, 2} by splitting [min, max] into four
/// equal-width bins. A zero range maps everything to 0 and sets `degenerate`.
inline std::vector<int> quartile_levels(std::span<const double> values, bool* degenerate = nullptr)
{
    std::vector<int> out(values.size(), 0);
    if (values.empty())
        return out;
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    if (degenerate)
        *degenerate = !(range > 0.0);
    if (!(range > 0.0))
        return out;
    for (std::size_t i = 0; i < values.size(); ++i)
    {
        const int bin = std::clamp(static_cast<int>(std::floor(4.0 * (values[i] - lo) / range)), 0, 3);
        out[i] = bin - 1;
    }
    return out;
}

struct AlignmentResult
{
    double error = 0.0;
    bool degenerate_range = false;
};

/// e = sum over rated cells of (quartile(r_hat_g) - rating_g)^2 / var(r_hat_g).
inline AlignmentResult alignment_error(std::span<const double> mean, std::span<const double> variance,
                                       std::span<const CellRating> ratings)
{
    if (ratings.size() != static_cast<std::size_t>(kRatedCellCount))
        throw std::invalid_argument("alignment error needs exactly 21 rated cells, got " +
                                    std::to_string(ratings.size()));
    AlignmentResult res;
    const auto levels = quartile_levels(mean, &res.degenerate_range);
    for (const auto& r : ratings)
    {
        if (r.cell < 0 || static_cast<std::size_t>(r.cell) >= mean.size())
            throw std::invalid_argument("rated cell outside grid");
        if (r.value < -1 || r.value > 2)
            throw std::invalid_argument("ratings must lie in {-1, 0, 1, 2}");
        const double diff = levels[static_cast<std::size_t>(r.cell)] - r.value;
        const double var = variance[static_cast<std::size_t>(r.cell)];
        if (diff != 0.0)
            res.error += diff * diff / var;
    }
    return res;
}

inline AlignmentResult alignment_error(const RewardMap& map, std::span<const CellRating> ratings)
{
    return alignment_error(std::span<const double>(map.mean.data(), static_cast<std::size_t>(map.mean.size())),
                           std::span<const double>(map.variance.data(), static_cast<std::size_t>(map.variance.size())),
                           ratings);
}

/// Random reference: uniformly random r_hat over the grid with unit variance.
inline double random_alignment_error(int cells, std::span<const CellRating> ratings, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> mean(static_cast<std::size_t>(cells));
    for (auto& m : mean)
        m = u(rng);
    const std::vector<double> var(static_cast<std::size_t>(cells), 1.0);
    return alignment_error(mean, var, ratings).error;
}

// ---------------------------------------------------------------------------
// Rank metrics

enum class RankSign
{
    positive,
    negative
};

namespace detail
{
/// DCG of gains taken in the order of `order`, discount log2(rank + 1).
inline double dcg(std::span<const double> gains, std::span<const int> order)
{
    double total = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i)
        total += gains[static_cast<std::size_t>(order[i])] / std::log2(static_cast<double>(i) + 2.0);
    return total;
}

/// Indices sorted by score, descending for positive and ascending for negative.
/// Stable, so ties keep column order.
inline std::vector<int> rank_by(std::span<const double> score, RankSign sign)
{
    std::vector<int> idx(score.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double sa = score[static_cast<std::size_t>(a)];
        const double sb = score[static_cast<std::size_t>(b)];
        return sign == RankSign::positive ? sa > sb : sa < sb;
    });
    return idx;
}
} // namespace detail

/// nDCG of one weight vector against operator relevances. The positive rank
/// scores only features the operator wants visited (gain rel_i > 0), the
/// negative rank only those to avoid (gain -rel_i > 0), so the score lies in
/// [0, 1].
inline double ndcg(std::span<const double> weights, std::span<const double> relevances, RankSign sign)
{
    if (weights.size() != relevances.size())
        throw std::invalid_argument("relevances must cover every feature column");
    std::vector<double> gains(relevances.size());
    for (std::size_t i = 0; i < gains.size(); ++i)
        gains[i] = std::max(0.0, sign == RankSign::positive ? relevances[i] : -relevances[i]);
    const double ideal = detail::dcg(gains, detail::rank_by(relevances, sign));
    if (ideal == 0.0)
        throw std::invalid_argument(sign == RankSign::positive ? "no positive relevances to rank"
                                                               : "no negative relevances to rank");
    return detail::dcg(gains, detail::rank_by(weights, sign)) / ideal;
}

/// Mean nDCG over `n` weight vectors drawn from the posterior.
inline double mc_ndcg(const WeightPosterior& posterior, std::span<const double> relevances, RankSign sign, int n,
                      std::uint64_t seed)
{
    if (n < 1)
        throw std::invalid_argument("mc_ndcg needs at least one sample");
    const auto d = posterior.mean.size();
    if (static_cast<std::size_t>(d) != relevances.size())
        throw std::invalid_argument("relevances must cover every feature column");
    // Symmetric square root tolerates singular (point-mass) covariances.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(posterior.covariance);
    const Eigen::MatrixXd root =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd draw(d);
    Eigen::VectorXd w(d);
    double total = 0.0;
    for (int s = 0; s < n; ++s)
    {
        for (Eigen::Index i = 0; i < d; ++i)
            draw(i) = z(rng);
        w = posterior.mean + root * draw;
        total += ndcg(std::span<const double>(w.data(), static_cast<std::size_t>(d)), relevances, sign);
    }
    return total / n;
}

/// Reference score of uniformly random feature rankings.
inline double random_ndcg(std::span<const double> relevances, RankSign sign, int n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> w(relevances.size());
    double total = 0.0;
    for (int s = 0; s < n; ++s)
    {
        for (auto& v : w)
            v = u(rng);
        total += ndcg(w, relevances, sign);
    }
    return total / n;
}

// ---------------------------------------------------------------------------
// Statistics

struct SampleSummary
{
    std::size_t count = 0;
    double mean = 0.0;
    double sem = 0.0; ///< standard error of the mean
};

inline SampleSummary summarize(std::span<const double> xs)
{
    SampleSummary s;
    s.count = xs.size();
    if (xs.empty())
        return s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() > 1)
    {
        double ss = 0.0;
        for (double x : xs)
            ss += (x - s.mean) * (x - s.mean);
        const double var = ss / static_cast<double>(xs.size() - 1);
        s.sem = std::sqrt(var / static_cast<double>(xs.size()));
    }
    return s;
}

inline double binomial_log_pmf(int k, int n, double p)
{
    if (p <= 0.0)
        return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    if (p >= 1.0)
        return k == n ? 0.0 : -std::numeric_limits<double>::infinity();
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
           (n - k) * std::log1p(-p);
}

/// Exact two-tailed binomial test: total probability of outcomes no more
/// likely than the observed count under rate `p0`.
inline double binomial_two_tailed(int successes, int trials, double p0)
{
    if (trials < 0 || successes < 0 || successes > trials)
        throw std::invalid_argument("binomial test needs 0 <= successes <= trials");
    if (!(p0 >= 0.0 && p0 <= 1.0))
        throw std::invalid_argument("binomial null rate must lie in [0, 1]");
    const double observed = binomial_log_pmf(successes, trials, p0);
    const double slack = 1e-7; // relative, for ties in floating point
    double p = 0.0;
    for (int k = 0; k <= trials; ++k)
    {
        const double lp = binomial_log_pmf(k, trials, p0);
        if (lp <= observed + slack)
            p += std::exp(lp);
    }
    return std::min(1.0, p);
}

/// Two-sample Z test on means with known standard errors. Undefined (nullopt)
/// when both standard errors are zero.
inline std::optional<double> two_sample_z_test(double mean_a, double sem_a, double mean_b, double sem_b)
{
    const double se = std::sqrt(sem_a * sem_a + sem_b * sem_b);
    if (!(se > 0.0))
        return std::nullopt;
    const double z = (mean_a - mean_b) / se;
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

} // namespace searchgrid
