// searchgrid command line: fuse, simulate, compare, evaluate-alignment,
// make-scenario, serve.
#include "searchgrid/searchgrid.hpp"
#include "searchgrid/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace searchgrid;
namespace fs = std::filesystem;

namespace
{

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

json fusion_summary(const Scenario& sc, const FusionResult& fr)
{
    json weights = json::object();
    const auto names = fr.features.column_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        weights[names[i]] = {{"mean", fr.posterior.mean(static_cast<Eigen::Index>(i))},
                             {"sd", std::sqrt(fr.posterior.covariance(static_cast<Eigen::Index>(i),
                                                                      static_cast<Eigen::Index>(i)))}};
    return {{"scenario", sc.id},
            {"rows", sc.grid.n_rows},
            {"cols", sc.grid.n_cols},
            {"weights", weights},
            {"reward_mean_range", {fr.map.mean.minCoeff(), fr.map.mean.maxCoeff()}},
            {"reward_variance_range", {fr.map.variance.minCoeff(), fr.map.variance.maxCoeff()}},
            {"cache_hit", fr.cache_hit},
            {"warnings", fr.warnings}};
}

struct EvalArgs
{
    std::string scenario;
    int runs = 0; // 0: scenario's runs_per_start
    std::optional<std::uint64_t> seed;
    int workers = 1;
    std::string out;
    bool quiet = false;
};

void add_eval_options(CLI::App* cmd, EvalArgs& a)
{
    cmd->add_option("scenario", a.scenario, "scenario document")->required()->check(CLI::ExistingFile);
    cmd->add_option("--runs", a.runs, "runs per start (default: scenario's runs_per_start)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.seed, "master seed (default: scenario's)");
    cmd->add_option("--workers", a.workers, "episode threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out", a.out, "directory for <id>_runs.csv and <id>_summary.json");
    cmd->add_flag("--quiet", a.quiet, "no progress on stderr");
}

int run_eval(const EvalArgs& a, std::vector<AgentKind> agents)
{
    const auto sc = load_scenario(a.scenario);
    const auto fr = fuse(sc, cache_dir_from_env());
    const auto mm = mission_model(sc, fr);
    const auto truth = scenario_truth(sc, fr.features);
    EvalConfig cfg;
    cfg.starts = sc.simulation.starts;
    cfg.runs_per_start = a.runs > 0 ? a.runs : sc.simulation.runs_per_start;
    cfg.seed = a.seed.value_or(sc.simulation.seed);
    cfg.agents = std::move(agents);
    cfg.workers = a.workers;
    const auto total = cfg.starts.size() * static_cast<std::size_t>(cfg.runs_per_start) * cfg.agents.size();
    std::size_t done = 0;
    if (!a.quiet)
        cfg.on_row = [&](const EvalRow&) {
            if (++done % 10 == 0 || done == total)
                std::fprintf(stderr, "\r%zu/%zu episodes", done, total);
            if (done == total)
                std::fputc('\n', stderr);
        };
    const auto res = monte_carlo_eval(mm, truth, cfg);
    auto summary = eval_summary_json(res);
    summary["scenario"] = sc.id;
    summary["runs_per_start"] = cfg.runs_per_start;
    summary["starts"] = cfg.starts.size();
    summary["seed"] = cfg.seed;
    if (!a.out.empty())
    {
        write_text(fs::path(a.out) / (sc.id + "_runs.csv"), eval_rows_csv(sc.grid, res));
        write_text(fs::path(a.out) / (sc.id + "_summary.json"), summary.dump(2) + "\n");
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int evaluate_alignment(const std::string& path, int samples, std::uint64_t seed)
{
    const auto sc = load_scenario(path);
    if (!sc.alignment)
        throw std::invalid_argument("scenario has no alignment block (ratings and relevances)");
    const auto fr = fuse(sc, cache_dir_from_env());
    std::vector<CellRating> ratings;
    for (const auto& [cell, value] : sc.alignment->ratings)
        ratings.push_back({sc.grid.index(cell), value});
    const auto names = fr.features.column_names();
    std::vector<double> rel;
    std::vector<std::string> missing;
    for (const auto& n : names)
    {
        const auto it = sc.alignment->relevances.find(n);
        if (it == sc.alignment->relevances.end())
            missing.push_back(n);
        else
            rel.push_back(it->second);
    }
    if (!missing.empty())
    {
        std::string list;
        for (const auto& n : missing)
            list += (list.empty() ? "" : ", ") + n;
        throw std::invalid_argument("relevances missing for feature columns: " + list);
    }

    const auto err = alignment_error(fr.map, ratings);
    json out{{"scenario", sc.id},
             {"error", err.error},
             {"random_error", random_alignment_error(sc.grid.cell_count(), ratings, seed)},
             {"degenerate_range", err.degenerate_range}};
    auto rank = [&](RankSign sign, const char* key) {
        try
        {
            out[key] = {{"mc_ndcg", mc_ndcg(fr.posterior, rel, sign, samples, seed)},
                        {"random", random_ndcg(rel, sign, samples, seed)}};
        }
        catch (const std::invalid_argument& e)
        {
            out[key] = {{"skipped", e.what()}};
        }
    };
    rank(RankSign::positive, "positive_rank");
    rank(RankSign::negative, "negative_rank");
    std::cout << out.dump(2) << "\n";
    return 0;
}

MissionServer* g_server = nullptr;

void on_signal(int)
{
    if (g_server)
        g_server->stop();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Operator-informed target search: input fusion, POMDP planning and evaluation"};
    app.require_subcommand(1);

    std::string fuse_path, fuse_out;
    auto* fuse_cmd = app.add_subcommand("fuse", "fuse a scenario's inputs into a reward map");
    fuse_cmd->add_option("scenario", fuse_path, "scenario document")->required()->check(CLI::ExistingFile);
    fuse_cmd->add_option("--out", fuse_out, "directory for <id>_mean.csv, <id>_variance.csv, <id>_manifest.json");

    EvalArgs sim_args;
    std::string agent = "pomcp";
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo episodes for one agent");
    add_eval_options(sim_cmd, sim_args);
    sim_cmd->add_option("--agent", agent, "pomcp or baseline")->check(CLI::IsMember({"pomcp", "baseline"}));

    EvalArgs cmp_args;
    auto* cmp_cmd = app.add_subcommand("compare", "both agents on paired targets, with significance tests");
    add_eval_options(cmp_cmd, cmp_args);

    std::string align_path;
    int align_samples = 1000;
    std::uint64_t align_seed = 1;
    auto* align_cmd = app.add_subcommand("evaluate-alignment", "location error and feature-rank nDCG");
    align_cmd->add_option("scenario", align_path, "scenario document with an alignment block")
        ->required()
        ->check(CLI::ExistingFile);
    align_cmd->add_option("--samples", align_samples, "posterior samples for nDCG")->check(CLI::PositiveNumber);
    align_cmd->add_option("--seed", align_seed, "sampling seed");

    int mk_rows = 20, mk_cols = 20, mk_waypoints = 30;
    double mk_res = 25.0;
    std::uint64_t mk_seed = 1;
    std::string mk_out;
    auto* mk_cmd = app.add_subcommand("make-scenario", "synthetic scenario with a synthetic operator's inputs");
    mk_cmd->add_option("--rows", mk_rows)->check(CLI::PositiveNumber);
    mk_cmd->add_option("--cols", mk_cols)->check(CLI::PositiveNumber);
    mk_cmd->add_option("--resolution", mk_res)->check(CLI::PositiveNumber);
    mk_cmd->add_option("--waypoints", mk_waypoints, "visit + avoid count")->check(CLI::NonNegativeNumber);
    mk_cmd->add_option("--seed", mk_seed);
    mk_cmd->add_option("--out", mk_out, "output file (default stdout)");

    std::string host = "127.0.0.1", state_dir;
    int port = 8080;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP mission service");
    serve_cmd->add_option("--port", port)->check(CLI::Range(1, 65535));
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--state-dir", state_dir, "persist sessions here and restore them on start");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*fuse_cmd)
        {
            const auto sc = load_scenario(fuse_path);
            const auto fr = fuse(sc, cache_dir_from_env());
            if (!fuse_out.empty())
                write_reward_map(fuse_out, sc.id, sc, fr);
            std::cout << fusion_summary(sc, fr).dump(2) << "\n";
            return 0;
        }
        if (*sim_cmd)
            return run_eval(sim_args, {*parse_agent(agent)});
        if (*cmp_cmd)
            return run_eval(cmp_args, {AgentKind::pomcp, AgentKind::baseline});
        if (*align_cmd)
            return evaluate_alignment(align_path, align_samples, align_seed);
        if (*mk_cmd)
        {
            auto sc = synthetic_scenario(mk_rows, mk_cols, mk_res, mk_seed);
            const auto fm = fuse(sc).features;
            // truth weights on their columns, a little noise elsewhere
            Eigen::VectorXd w = Eigen::VectorXd::Zero(fm.width());
            std::mt19937_64 rng(mix_seed(mk_seed, 5));
            std::normal_distribution<double> z(0.0, 0.3);
            for (int i = 0; i < fm.width(); ++i)
                w(i) = z(rng);
            for (const auto& [name, weight] : sc.simulation.truth_weights)
                w(std::find(fm.phi_names.begin(), fm.phi_names.end(), name) - fm.phi_names.begin()) = weight;
            const auto op = synth_operator(w, fm, sc.grid, mk_waypoints, mk_seed);
            apply_operator(sc, op, fm.column_names());
            const auto text = to_json(sc).dump(2) + "\n";
            if (mk_out.empty())
                std::cout << text;
            else
                write_text(mk_out, text);
            return 0;
        }
        if (*serve_cmd)
        {
            SessionRegistry registry(state_dir.empty() ? std::nullopt : std::optional<fs::path>(state_dir));
            MissionServer server(registry);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::fprintf(stderr, "listening on http://%s:%d\n", host.c_str(), port);
            if (!server.listen(host, port))
            {
                std::fprintf(stderr, "error: could not listen on %s:%d\n", host.c_str(), port);
                return 1;
            }
            return 0;
        }
    }
    catch (const ScenarioError& e)
    {
        std::fprintf(stderr, "error: invalid scenario\n");
        for (const auto& d : e.diagnostics())
            std::fprintf(stderr, "  %s\n", d.c_str());
        return 2;
    }
    catch (const std::exception& e)
    {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
