// Loads a scenario, fuses the operator's inputs and flies one POMCP episode
// and one baseline episode toward the same sampled target.
//
//   fuse_and_search [scenario.json] [seed]
#include "searchgrid/searchgrid.hpp"

#include <cstdio>
#include <string>

using namespace searchgrid;

int main(int argc, char** argv)
{
    const std::string path = argc > 1 ? argv[1] : SEARCHGRID_SAMPLE_DIR "/scenarios/creek_valley.json";
    const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 7;

    const auto sc = load_scenario(path);
    const auto fr = fuse(sc);
    std::printf("%s: %d x %d cells, %d features\n", sc.id.c_str(), sc.grid.n_rows, sc.grid.n_cols,
                fr.features.width());
    const auto names = fr.features.column_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        std::printf("  %-24s %+.3f\n", names[i].c_str(), fr.posterior.mean(static_cast<Eigen::Index>(i)));

    // print the reward map, north up
    const char* shades = " .:-=+*#%@";
    const double lo = fr.map.mean.minCoeff(), hi = fr.map.mean.maxCoeff();
    for (int r = sc.grid.n_rows - 1; r >= 0; --r)
    {
        std::printf("  ");
        for (int c = 0; c < sc.grid.n_cols; ++c)
        {
            const double v = (fr.map.mean(sc.grid.index({r, c})) - lo) / std::max(hi - lo, 1e-12);
            std::putchar(shades[std::min(9, static_cast<int>(v * 10.0))]);
        }
        std::putchar('\n');
    }

    const auto mm = mission_model(sc, fr);
    const auto truth = scenario_truth(sc, fr.features);
    std::mt19937_64 rng(seed);
    const int target = truth.sample(rng);
    const int start = sc.grid.index(sc.simulation.starts.front());
    const Cell t = sc.grid.cell(target);
    std::printf("target at (%d, %d)\n", t.row, t.col);
    for (AgentKind agent : {AgentKind::pomcp, AgentKind::baseline})
    {
        const auto log = run_episode(mm, agent, start, target, seed);
        std::printf("  %-8s %-18s %4d steps, discounted return %.1f\n", std::string(to_string(agent)).c_str(),
                    std::string(to_string(log.outcome)).c_str(), log.step_count(), log.discounted_return);
    }
}
