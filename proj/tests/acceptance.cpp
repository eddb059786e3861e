// Acceptance run: one PASS/FAIL line per criterion.
#include "searchgrid/searchgrid.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>

using namespace searchgrid;

namespace
{

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------
// shared helpers

FeatureMatrix random_features(int rows, int cols, int n_phi, int n_psi, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    FeatureMatrix fm;
    fm.n_rows = rows;
    fm.n_cols = cols;
    fm.phi.resize(rows * cols, n_phi);
    fm.psi.resize(rows * cols, n_psi);
    for (Eigen::Index i = 0; i < fm.phi.size(); ++i)
        fm.phi.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < fm.psi.size(); ++i)
        fm.psi.data()[i] = u(rng);
    for (int f = 0; f < n_phi; ++f)
        fm.phi_names.push_back("f" + std::to_string(f));
    for (int f = 0; f < n_psi; ++f)
        fm.psi_names.push_back("S" + std::to_string(f) + ":Inside");
    return fm;
}

WaypointSet random_waypoints(int cells, int count, std::mt19937_64& rng)
{
    std::vector<int> idx(static_cast<std::size_t>(cells));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    WaypointSet w;
    for (int i = 0; i < count; ++i)
        (i % 3 == 0 ? w.avoid : w.visit).push_back(idx[static_cast<std::size_t>(i)]);
    return w;
}

// Unnormalized log posterior, written out directly for the quadrature oracle.
double log_post(const Eigen::VectorXd& w, const GaussianPrior& prior, const WaypointSet& wp, const FeatureMatrix& fm)
{
    const Eigen::VectorXd dev = w - prior.mean;
    double v = -0.5 * dev.dot(prior.covariance.inverse() * dev);
    for (int c : wp.visit)
        v -= std::log1p(std::exp(-fm.stacked(c).dot(w)));
    for (int c : wp.avoid)
        v -= std::log1p(std::exp(fm.stacked(c).dot(w)));
    return v;
}

// ---------------------------------------------------------------------------
// 1. inference correctness

Verdict inference_correctness()
{
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> z(0.0, 1.5);
    const double h = 1e-5;
    double worst = 0.0;
    for (int instance = 0; instance < 50; ++instance)
    {
        const auto fm = random_features(5, 6, 4, 2, rng);
        const int d = fm.width();
        Eigen::MatrixXd a(d, d);
        for (Eigen::Index i = 0; i < a.size(); ++i)
            a.data()[i] = z(rng);
        GaussianPrior prior{Eigen::VectorXd::Zero(d), a * a.transpose() / d + 0.5 * Eigen::MatrixXd::Identity(d, d)};
        for (int i = 0; i < d; ++i)
            prior.mean(i) = z(rng);
        const auto wp = random_waypoints(fm.cell_count(), 12, rng);
        const FusionProblem prob(prior, wp, fm);
        Eigen::VectorXd w(d);
        for (int i = 0; i < d; ++i)
            w(i) = z(rng);
        const auto obj = prob.evaluate(w);
        Eigen::VectorXd g_fd(d);
        Eigen::MatrixXd h_fd(d, d);
        for (int i = 0; i < d; ++i)
        {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
            e(i) = h;
            const auto plus = prob.evaluate(w + e, false);
            const auto minus = prob.evaluate(w - e, false);
            g_fd(i) = (plus.value - minus.value) / (2 * h);
            h_fd.col(i) = (plus.gradient - minus.gradient) / (2 * h);
        }
        worst = std::max(worst, (g_fd - obj.gradient).lpNorm<Eigen::Infinity>() /
                                    std::max(1.0, obj.gradient.lpNorm<Eigen::Infinity>()));
        worst = std::max(worst, (h_fd - obj.hessian).lpNorm<Eigen::Infinity>() /
                                    std::max(1.0, obj.hessian.lpNorm<Eigen::Infinity>()));
    }

    // 1-D: one visit on a unit feature under N(0, 1)
    FeatureMatrix fm1{1, 1, Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Zero(1, 0), {"trails"}, {}};
    const GaussianPrior p1{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
    const WaypointSet wp1{{0}, {}};
    const double fit1 = laplace_fit(p1, wp1, fm1).mean(0);
    double zsum = 0.0, msum = 0.0;
    for (int i = 0; i <= 200000; ++i)
    {
        const double w = -10.0 + 20.0 * i / 200000;
        const double p = std::exp(-0.5 * w * w) / (1.0 + std::exp(-w));
        zsum += p;
        msum += w * p;
    }
    const double gap1 = std::abs(fit1 - msum / zsum);

    // 2-D
    std::mt19937_64 rng2(11);
    const auto fm2 = random_features(3, 3, 2, 0, rng2);
    const GaussianPrior p2{Eigen::Vector2d(0.5, 0.0), Eigen::Matrix2d::Identity()};
    const WaypointSet wp2{{0, 4}, {8}};
    const auto fit2 = laplace_fit(p2, wp2, fm2).mean;
    double z2 = 0.0;
    Eigen::Vector2d m2 = Eigen::Vector2d::Zero();
    for (int i = 0; i <= 800; ++i)
        for (int j = 0; j <= 800; ++j)
        {
            const Eigen::Vector2d w(-10.0 + 20.0 * i / 800, -10.0 + 20.0 * j / 800);
            const double p = std::exp(log_post(w, p2, wp2, fm2));
            z2 += p;
            m2 += p * w;
        }
    const double gap2 = (fit2 - m2 / z2).lpNorm<Eigen::Infinity>();
    return {worst < 1e-5 && gap1 < 0.05 && gap2 < 0.05,
            fmt("max FD rel err %.2e over 50 instances; quadrature gap 1-D %.4f, 2-D %.4f", worst, gap1, gap2)};
}

// ---------------------------------------------------------------------------
// 2. fit timing

Verdict fit_timing()
{
    auto sc = synthetic_scenario(44, 59, 25.0, 3, "timing");
    const double W = 59 * 25.0, H = 44 * 25.0;
    sc.sketches.push_back({"Ridge", {{0.1 * W, 0.6 * H}, {0.3 * W, 0.6 * H}, {0.3 * W, 0.8 * H}, {0.1 * W, 0.8 * H}}});
    sc.sketches.push_back({"Meadow", {{0.6 * W, 0.2 * H}, {0.8 * W, 0.25 * H}, {0.7 * W, 0.4 * H}}});
    sc.observations.push_back({"Ridge", "Near"});
    sc.observations.push_back({"Meadow", "Outside"});
    sc.observations.push_back({"Section A", "N"});
    const auto base = fuse(sc);
    const auto& fm = base.features;

    Eigen::VectorXd w(fm.width());
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int i = 0; i < w.size(); ++i)
        w(i) = z(rng);
    const auto op = synth_operator(w, fm, sc.grid, 30, 8);
    std::vector<Vec2> visit, avoid;
    for (int g : op.visit)
        visit.push_back(sc.grid.center(sc.grid.cell(g)));
    for (int g : op.avoid)
        avoid.push_back(sc.grid.center(sc.grid.cell(g)));

    double slowest = 0.0;
    for (int rep = 0; rep < 3; ++rep)
    {
        const auto t0 = Clock::now();
        const auto wp = snap_waypoints(sc.grid, visit, avoid);
        const auto prior = build_prior(op.priorities, fm);
        const auto post = laplace_fit(prior, wp, fm);
        const auto map = reward_map(post, fm);
        slowest = std::max(slowest, seconds_since(t0));
        if (map.mean.size() != 44 * 59)
            return {false, "reward map has the wrong size"};
    }
    return {slowest < 1.0, fmt("%d x %d grid, %d + %d features, %zu waypoints: slowest of 3 fits %.4f s", 44, 59,
                               fm.n_phi(), fm.n_obs(), op.visit.size() + op.avoid.size(), slowest)};
}

// ---------------------------------------------------------------------------
// 3. alignment trend on synthetic operators

Verdict alignment_trend()
{
    double ndcg_sum = 0.0, err_sum = 0.0, rand_sum = 0.0;
    const int seeds = 10;
    for (int seed = 1; seed <= seeds; ++seed)
    {
        auto sc = synthetic_scenario(20, 20, 25.0, static_cast<std::uint64_t>(seed));
        sc.priorities.clear();
        const auto fm = fuse(sc).features;
        std::mt19937_64 rng(mix_seed(static_cast<std::uint64_t>(seed), 5));
        std::normal_distribution<double> z(0.0, 1.0);
        Eigen::VectorXd w(fm.width());
        for (int i = 0; i < w.size(); ++i)
            w(i) = z(rng);
        const auto op = synth_operator(w, fm, sc.grid, 30, static_cast<std::uint64_t>(seed));
        apply_operator(sc, op);
        const auto fr = fuse(sc);
        ndcg_sum += mc_ndcg(fr.posterior, op.relevances, RankSign::positive, 1000, static_cast<std::uint64_t>(seed));
        err_sum += alignment_error(fr.map, op.ratings).error;
        rand_sum += random_alignment_error(sc.grid.cell_count(), op.ratings, static_cast<std::uint64_t>(seed));
    }
    const double ndcg = ndcg_sum / seeds, err = err_sum / seeds, rnd = rand_sum / seeds;
    return {ndcg >= 0.9 && err * 10.0 <= rnd,
            fmt("mean positive MCnDCG %.3f (need >= 0.9); mean error %.2f vs random %.2f (need <= %.2f)", ndcg, err,
                rnd, rnd / 10.0)};
}

// ---------------------------------------------------------------------------
// 4. POMDP soundness

Verdict pomdp_soundness()
{
    double worst_sum = 0.0;
    long checked = 0;
    for (int rows = 1; rows <= 6; ++rows)
        for (int cols = 1; cols <= 6; ++cols)
            for (int d_obs : {0, 1, 2, 3})
            {
                ObsParams o;
                o.d_obs = d_obs;
                const SearchModel m(GridSpec{rows, cols, 1.0, {}}, o, {}, {}, 0);
                for (int r = 0; r < rows * cols; ++r)
                    for (int t = 0; t < rows * cols; ++t)
                    {
                        const auto p = m.observation_distribution(r, t);
                        double sum = 0.0;
                        for (double v : p)
                        {
                            if (v < 0.0)
                                return {false, "negative observation probability"};
                            sum += v;
                        }
                        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
                        ++checked;
                    }
            }

    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(0.0, 3.0);
    int double_paid = 0, overlong = 0;
    long longest = 0;
    for (int trial = 0; trial < 1000; ++trial)
    {
        const GridSpec g{6, 6, 1.0, {}};
        std::vector<double> op(36);
        for (auto& v : op)
            v = z(rng);
        RewardParams rw;
        rw.b_max = 40 + static_cast<int>(rng() % 80);
        rw.b_cost = 1 + static_cast<int>(rng() % 3);
        const int start = static_cast<int>(rng() % 36);
        const SearchModel m(g, {}, rw, op, start);
        auto s = m.initial_state(static_cast<int>(rng() % 36));
        std::vector<int> paid(36, 0);
        long steps = 0;
        while (!m.is_terminal(s))
        {
            const auto a = kActions[static_cast<std::size_t>(rng() % kActionCount)];
            const int next = m.move(s.robot, a);
            const double r = m.apply(s, a);
            const double operator_part = r - rw.r_time - (next == s.target ? rw.r_target : 0.0);
            if (std::abs(operator_part) > 1e-12)
                ++paid[static_cast<std::size_t>(next)];
            ++steps;
        }
        for (int n : paid)
            double_paid += n > 1;
        longest = std::max(longest, steps);
        overlong += steps > rw.b_max / rw.b_cost;
    }
    return {worst_sum < 1e-12 && double_paid == 0 && overlong == 0,
            fmt("%ld distributions, max |sum - 1| %.1e; 1000 trajectories: %d cells paid twice, %d over budget", checked,
                worst_sum, double_paid, overlong)};
}

// ---------------------------------------------------------------------------
// 5. planner sanity

// Exact finite-horizon optimum over (robot, battery) with the target known
// and no operator reward. Battery strictly drops each step, so one pass in
// battery order is exact.
class ExactValue
{
public:
    ExactValue(const SearchModel& m, int target) : m_(m), target_(target) {}

    std::set<Action> best_actions(int robot, int battery)
    {
        std::set<Action> out;
        double best = -1e300;
        std::vector<double> q;
        for (Action a : kActions)
            q.push_back(q_value(robot, battery, a));
        for (double v : q)
            best = std::max(best, v);
        for (std::size_t i = 0; i < q.size(); ++i)
            if (q[i] >= best - 1e-9 * std::max(1.0, std::abs(best)))
                out.insert(kActions[i]);
        return out;
    }

private:
    SearchState state(int robot, int battery) const
    {
        SearchState s = m_.initial_state(target_);
        s.robot = robot;
        s.battery = battery;
        std::fill(s.visited.begin(), s.visited.end(), true);
        return s;
    }

    double q_value(int robot, int battery, Action a)
    {
        SearchState s = state(robot, battery);
        const double r = m_.apply(s, a);
        return r + m_.reward_params().gamma * value(s.robot, s.battery);
    }

    double value(int robot, int battery)
    {
        if (m_.is_terminal(robot, target_, battery))
            return 0.0;
        const auto key = std::pair{robot, battery};
        if (auto it = memo_.find(key); it != memo_.end())
            return it->second;
        double best = -1e300;
        for (Action a : kActions)
            best = std::max(best, q_value(robot, battery, a));
        return memo_[key] = best;
    }

    const SearchModel& m_;
    int target_;
    std::map<std::pair<int, int>, double> memo_;
};

double oracle_likelihood(const SearchModel& m, int robot, int target, int code)
{
    const auto& g = m.grid();
    const auto& o = m.obs_params();
    const Cell r = g.cell(robot), t = g.cell(target);
    if (manhattan(r, t) > o.d_obs)
        return code == 0 ? 1.0 : 0.0;
    const int dr = t.row - r.row, dc = t.col - r.col;
    const bool vertical = !(dr == 0 && dc == 0) && std::abs(dr) >= std::abs(dc);
    std::vector<std::pair<Cell, double>> placed{{t, o.z_true}};
    if (vertical)
    {
        placed.push_back({{t.row, t.col + 1}, o.z_prox});
        placed.push_back({{t.row, t.col - 1}, o.z_prox});
    }
    else
    {
        placed.push_back({{t.row + 1, t.col}, o.z_prox});
        placed.push_back({{t.row - 1, t.col}, o.z_prox});
    }
    double coded = 0.0, here = 0.0;
    for (auto [c, p] : placed)
    {
        int k = 0;
        for (int code_k = 1; code_k < m.observation_count(); ++code_k)
            if (g.contains(c) && m.cell_of_code(robot, code_k) == g.index(c))
                k = code_k;
        if (k > 0)
        {
            coded += p;
            if (k == code)
                here += p;
        }
    }
    return code == 0 ? 1.0 - coded : here;
}

Verdict planner_sanity()
{
    RewardParams rw;
    rw.b_max = 40;
    const GridSpec g{4, 4, 1.0, {}};
    const SearchModel m(g, {}, rw, {}, 0);
    const RolloutValueTable table(m, {1});
    int probed = 0, matched = 0;
    for (int target = 0; target < 16; ++target)
    {
        ExactValue exact(m, target);
        for (int robot = 0; robot < 16; ++robot)
            for (int battery : {12, 30})
            {
                if (robot == target || m.is_terminal(robot, target, battery))
                    continue;
                SolverConfig cfg;
                cfg.n_simulations = 300;
                cfg.seed = static_cast<std::uint64_t>(1 + probed);
                KnownState known{robot, battery, std::vector<bool>(16, true)};
                const auto plan = pomcp_plan(Belief{std::vector<int>(100, target)}, known, m, table, cfg);
                ++probed;
                matched += exact.best_actions(robot, battery).count(plan.action) > 0;
            }
    }
    const double agree = static_cast<double>(matched) / probed;

    const GridSpec g5{5, 5, 1.0, {}};
    const SearchModel m5(g5, {}, {}, {}, 0);
    std::mt19937_64 rng(99);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial)
    {
        const int target = static_cast<int>(rng() % 25);
        auto belief = initial_belief(g5, 10000, rng());
        std::vector<double> exact(25, 1.0 / 25);
        int robot = 0;
        for (int step = 0; step < 100; ++step)
        {
            int next = m5.move(robot, kActions[static_cast<std::size_t>(rng() % kActionCount)]);
            if (next == target)
                next = robot;
            robot = next;
            const int code = m5.sample_observation(robot, target, rng);
            belief = belief_update(belief, robot, code, m5, 0.1, rng);
            double zsum = 0.0;
            for (int t = 0; t < 25; ++t)
                zsum += exact[static_cast<std::size_t>(t)] *= oracle_likelihood(m5, robot, t, code);
            for (auto& p : exact)
                p /= zsum;
            const auto hist = belief.histogram(25);
            double tv = 0.0;
            for (std::size_t i = 0; i < 25; ++i)
                tv += std::abs(hist[i] - exact[i]);
            worst = std::max(worst, 0.5 * tv);
        }
    }
    return {agree >= 0.9 && worst < 0.05,
            fmt("POMCP agrees with value iteration in %d/%d states (%.1f%%); worst belief TV %.4f over 5 x 100 updates",
                matched, probed, 100.0 * agree, worst)};
}

// ---------------------------------------------------------------------------
// 6. search trend

struct TrendOptions
{
    int runs_per_start = 100;
    int simulations = 0; ///< 0 keeps the scenario default
    std::uint64_t seed = 1;
    bool verbose = false;
};

Verdict search_trend(const TrendOptions& opt)
{
    const auto t0 = Clock::now();
    auto sc = synthetic_scenario(20, 20, 25.0, opt.seed, "trend");
    // Long rollouts let the target term swamp the operator map and the agent
    // parks near the belief centroid. Tuned on seeds 2 and 3, not this one.
    sc.planner.max_depth = 3;
    sc.planner.ucb_exploration = 3.0;
    if (opt.simulations > 0)
        sc.planner.n_simulations = opt.simulations;
    const auto base = fuse(sc);
    const auto& fm = base.features;

    // The operator knows what the truth model rewards, and trusts its own
    // sketch observation.
    Eigen::VectorXd w = Eigen::VectorXd::Zero(fm.width());
    for (const auto& [name, weight] : sc.simulation.truth_weights)
        w(std::find(fm.phi_names.begin(), fm.phi_names.end(), name) - fm.phi_names.begin()) = weight;
    for (int k = 0; k < fm.n_obs(); ++k)
        w(fm.n_phi() + k) = 1.0;
    const auto op = synth_operator(w, fm, sc.grid, 30, opt.seed);
    apply_operator(sc, op);
    const auto fr = fuse(sc);
    const auto mm = mission_model(sc, fr);
    const auto truth = scenario_truth(sc, fr.features);

    EvalConfig cfg;
    cfg.starts = sc.simulation.starts;
    cfg.runs_per_start = opt.runs_per_start;
    cfg.seed = opt.seed;
    int done = 0;
    const int total = static_cast<int>(cfg.starts.size()) * cfg.runs_per_start * 2;
    if (opt.verbose)
        cfg.on_row = [&](const EvalRow&) {
            if (++done % 40 == 0)
                std::fprintf(stderr, "  %d/%d episodes, %.0f s\n", done, total, seconds_since(t0));
        };
    const auto res = monte_carlo_eval(mm, truth, cfg);
    const auto& p = res.summary.at(AgentKind::pomcp);
    const auto& b = res.summary.at(AgentKind::baseline);
    const double elapsed = seconds_since(t0);
    const double gain_pp = 100.0 * (p.localization_ratio() - b.localization_ratio());
    const double rpt_ratio = b.reward_per_timestep.mean > 0.0 ? p.reward_per_timestep.mean / b.reward_per_timestep.mean
                                                              : std::numeric_limits<double>::infinity();
    const bool pass = gain_pp >= 10.0 && res.significance->ratio_binomial_p < 0.05 &&
                      (b.reward_per_timestep.mean > 0.0 ? rpt_ratio >= 5.0
                                                        : p.reward_per_timestep.mean > b.reward_per_timestep.mean) &&
                      elapsed < 900.0;
    return {pass, fmt("%d runs x %zu starts: found %.1f%% vs %.1f%% (%+.1f pp, binomial p %.2g); reward/step %.3f vs "
                      "%.3f (x%.2f); %.0f s",
                      cfg.runs_per_start, cfg.starts.size(), 100.0 * p.localization_ratio(),
                      100.0 * b.localization_ratio(), gain_pp, res.significance->ratio_binomial_p,
                      p.reward_per_timestep.mean, b.reward_per_timestep.mean, rpt_ratio, elapsed)};
}

// ---------------------------------------------------------------------------
// 7. metric identities

Verdict metric_identities()
{
    std::vector<std::string> failures;
    WeightPosterior point;
    point.mean = Eigen::Vector4d(4.0, -1.0, 2.0, 0.5);
    point.covariance = Eigen::Matrix4d::Zero();
    const std::vector<double> rel{7.0, -3.0, 4.0, 1.0};
    if (mc_ndcg(point, rel, RankSign::positive, 200, 1) != 1.0)
        failures.push_back("positive point-mass nDCG");
    if (mc_ndcg(point, rel, RankSign::negative, 200, 1) != 1.0)
        failures.push_back("negative point-mass nDCG");

    std::vector<double> mean(60), var(60, 0.3);
    for (int i = 0; i < 60; ++i)
        mean[static_cast<std::size_t>(i)] = std::sin(0.37 * i);
    const auto levels = quartile_levels(mean);
    std::vector<CellRating> ratings;
    for (int i = 0; i < kRatedCellCount; ++i)
        ratings.push_back({(i * 13) % 60, levels[static_cast<std::size_t>((i * 13) % 60)]});
    if (alignment_error(mean, var, ratings).error != 0.0)
        failures.push_back("alignment error on perfect agreement");

    struct BinomialFixture
    {
        int k, n;
        double p, expected;
    };
    // exact sums of rational pmf terms
    const BinomialFixture binomial[] = {{60, 100, 0.5, 0.05688793364098079},
                                        {231, 400, 0.391, 5.70013300764183e-14},
                                        {3, 20, 0.1, 0.44464984940110325},
                                        {7, 10, 0.5, 0.34375},
                                        {0, 15, 0.2, 0.053243179073536}};
    for (const auto& f : binomial)
        if (std::abs(binomial_two_tailed(f.k, f.n, f.p) - f.expected) > 1e-9 * std::max(1e-3, f.expected))
            failures.push_back(fmt("binomial %d/%d at %.3f", f.k, f.n, f.p));

    struct ZFixture
    {
        double m1, s1, m2, s2, expected;
    };
    // erfc(|z| / sqrt 2)
    const ZFixture ztests[] = {{3.58, 0.4, 0.232, 0.05, 9.951236463165856e-17},
                               {1.0, 0.5, 0.2, 0.3, 0.17006696145390468},
                               {2.0, 1.0, 2.5, 1.0, 0.7236736098317631},
                               {0.1, 0.02, 0.05, 0.02, 0.07709987174354177},
                               {5.0, 2.0, -1.0, 2.5, 0.06091869077971653}};
    for (const auto& f : ztests)
    {
        const auto p = two_sample_z_test(f.m1, f.s1, f.m2, f.s2);
        if (!p || std::abs(*p - f.expected) > 1e-9 * std::max(1e-3, f.expected))
            failures.push_back(fmt("Z test %.3f vs %.3f", f.m1, f.m2));
    }
    std::string detail = "nDCG point mass, zero alignment error, 5 binomial + 5 Z fixtures";
    for (const auto& f : failures)
        detail += "; failed: " + f;
    return {failures.empty(), detail};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance criteria"};
    std::vector<int> only;
    TrendOptions trend;
    app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 7));
    app.add_option("--runs", trend.runs_per_start, "search trend runs per start")->check(CLI::PositiveNumber);
    app.add_option("--simulations", trend.simulations, "search trend POMCP simulations per decision");
    app.add_option("--seed", trend.seed, "search trend scenario seed");
    app.add_flag("--verbose", trend.verbose, "progress on stderr");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"inference correctness", inference_correctness},
        {"fit timing", fit_timing},
        {"alignment trend", alignment_trend},
        {"POMDP soundness", pomdp_soundness},
        {"planner sanity", planner_sanity},
        {"search trend", [&] { return search_trend(trend); }},
        {"metric identities", metric_identities},
    };
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i)
    {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end())
            continue;
        Verdict v;
        try
        {
            v = criteria[i].second();
        }
        catch (const std::exception& e)
        {
            v = {false, std::string("error: ") + e.what()};
        }
        all = all && v.pass;
        std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    v.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
