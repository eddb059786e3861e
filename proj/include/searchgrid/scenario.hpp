#pragma once

#include "searchgrid/fusion.hpp"
#include "searchgrid/geogrid.hpp"
#include "searchgrid/metrics.hpp"
#include "searchgrid/pomcp.hpp"
#include "searchgrid/rollout.hpp"
#include "searchgrid/sketch.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace searchgrid
{

using json = nlohmann::json;

struct SketchInput
{
    std::string name;
    std::vector<Vec2> vertices;
};

struct ObservationInput
{
    std::string sketch_name;
    std::string label;
};

struct SimulationSettings
{
    std::vector<Cell> starts;
    int runs_per_start = 100;
    std::uint64_t seed = 1;
    double truth_concentration = 3.0;
    std::map<std::string, double> truth_weights; ///< feature column -> weight of the truth score
};

struct AlignmentInput
{
    std::vector<std::pair<Cell, int>> ratings;
    std::map<std::string, double> relevances;
};

/// Everything needed to reproduce a mission: grid, geography, operator
/// inputs and model/solver parameters.
struct Scenario
{
    std::string id = "scenario";
    GridSpec grid;
    std::vector<std::string> vocabulary = default_feature_vocabulary();
    std::vector<GeoLayer> layers;
    std::vector<SketchInput> sketches;
    std::vector<ObservationInput> observations;
    std::vector<std::string> priorities;
    std::vector<Vec2> visit;
    std::vector<Vec2> avoid;

    SemanticConfig semantics;
    PriorConfig prior;
    OptimizerConfig optimizer;

    ObsParams obs;
    RewardParams reward;
    int n_particles = 10000;

    SolverConfig planner;
    RolloutConfig rollout;

    SimulationSettings simulation;
    std::optional<AlignmentInput> alignment;
};

/// Schema violations, one "path: message" entry each.
class ScenarioError : public std::invalid_argument
{
public:
    explicit ScenarioError(std::vector<std::string> diagnostics)
        : std::invalid_argument(join(diagnostics)), diagnostics_(std::move(diagnostics))
    {
    }
    [[nodiscard]] const std::vector<std::string>& diagnostics() const { return diagnostics_; }

private:
    static std::string join(const std::vector<std::string>& d)
    {
        std::string s = "invalid scenario:";
        for (const auto& line : d)
            s += "\n  " + line;
        return s;
    }
    std::vector<std::string> diagnostics_;
};

namespace detail
{
/// Reads typed fields out of a JSON document, collecting path-level errors
/// instead of stopping at the first one.
class Reader
{
public:
    std::vector<std::string> errors;

    void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

    template <class T>
    bool get(const json& obj, const std::string& key, const std::string& path, T& out, bool required = false)
    {
        const std::string p = path + "." + key;
        if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null())
        {
            if (required)
                fail(p, "required field missing");
            return false;
        }
        const json& v = obj.at(key);
        try
        {
            if constexpr (std::is_same_v<T, bool>)
            {
                if (!v.is_boolean())
                    throw std::runtime_error("expected boolean");
            }
            else if constexpr (std::is_integral_v<T>)
            {
                if (!v.is_number_integer())
                    throw std::runtime_error("expected integer");
            }
            else if constexpr (std::is_floating_point_v<T>)
            {
                if (!v.is_number())
                    throw std::runtime_error("expected number");
            }
            else if constexpr (std::is_same_v<T, std::string>)
            {
                if (!v.is_string())
                    throw std::runtime_error("expected string");
            }
            out = v.get<T>();
            return true;
        }
        catch (const std::exception& e)
        {
            fail(p, e.what());
            return false;
        }
    }

    std::optional<Vec2> point(const json& v, const std::string& path)
    {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        {
            fail(path, "expected [x, y] in meters");
            return std::nullopt;
        }
        return Vec2{v[0].get<double>(), v[1].get<double>()};
    }

    std::optional<Cell> cell(const json& v, const std::string& path)
    {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        {
            fail(path, "expected [row, col]");
            return std::nullopt;
        }
        return Cell{v[0].get<int>(), v[1].get<int>()};
    }

    std::vector<Vec2> points(const json& v, const std::string& path)
    {
        std::vector<Vec2> out;
        if (!v.is_array())
        {
            fail(path, "expected a list of [x, y]");
            return out;
        }
        for (std::size_t i = 0; i < v.size(); ++i)
            if (auto p = point(v[i], path + "[" + std::to_string(i) + "]"))
                out.push_back(*p);
        return out;
    }

    const json* array(const json& obj, const std::string& key, const std::string& path)
    {
        if (!obj.contains(key) || obj.at(key).is_null())
            return nullptr;
        if (!obj.at(key).is_array())
        {
            fail(path + "." + key, "expected a list");
            return nullptr;
        }
        return &obj.at(key);
    }

    const json* object(const json& obj, const std::string& key, const std::string& path)
    {
        if (!obj.contains(key) || obj.at(key).is_null())
            return nullptr;
        if (!obj.at(key).is_object())
        {
            fail(path + "." + key, "expected an object");
            return nullptr;
        }
        return &obj.at(key);
    }
};
} // namespace detail

/// Parses and validates a scenario document. Throws ScenarioError listing
/// every violation with its JSON path.
inline Scenario parse_scenario(const json& doc)
{
    detail::Reader rd;
    Scenario sc;
    if (!doc.is_object())
        throw ScenarioError({"$: scenario document must be an object"});

    rd.get(doc, "id", "$", sc.id);
    if (sc.id.empty())
        rd.fail("$.id", "must be non-empty");

    if (const json* g = rd.object(doc, "grid", "$"))
    {
        rd.get(*g, "rows", "$.grid", sc.grid.n_rows, true);
        rd.get(*g, "cols", "$.grid", sc.grid.n_cols, true);
        rd.get(*g, "resolution", "$.grid", sc.grid.resolution, true);
        if (g->contains("origin"))
            if (auto o = rd.point(g->at("origin"), "$.grid.origin"))
                sc.grid.origin = *o;
        if (sc.grid.n_rows < 1)
            rd.fail("$.grid.rows", "must be >= 1");
        if (sc.grid.n_cols < 1)
            rd.fail("$.grid.cols", "must be >= 1");
        if (!(sc.grid.resolution > 0.0))
            rd.fail("$.grid.resolution", "must be > 0");
    }
    else
    {
        rd.fail("$.grid", "required field missing");
    }
    const bool grid_ok = rd.errors.empty();

    if (const json* v = rd.array(doc, "features", "$"))
    {
        sc.vocabulary.clear();
        for (std::size_t i = 0; i < v->size(); ++i)
        {
            if (!(*v)[i].is_string())
                rd.fail("$.features[" + std::to_string(i) + "]", "expected string");
            else
                sc.vocabulary.push_back((*v)[i].get<std::string>());
        }
    }

    if (const json* layers = rd.array(doc, "layers", "$"))
    {
        for (std::size_t li = 0; li < layers->size(); ++li)
        {
            const std::string lp = "$.layers[" + std::to_string(li) + "]";
            const json& lj = (*layers)[li];
            GeoLayer layer;
            if (!rd.get(lj, "feature_name", lp, layer.feature_name, true))
                continue;
            if (std::find(sc.vocabulary.begin(), sc.vocabulary.end(), layer.feature_name) == sc.vocabulary.end())
                rd.fail(lp + ".feature_name", "'" + layer.feature_name + "' is not in the feature vocabulary");
            if (const json* geoms = rd.array(lj, "geometries", lp))
            {
                for (std::size_t gi = 0; gi < geoms->size(); ++gi)
                {
                    const std::string gp = lp + ".geometries[" + std::to_string(gi) + "]";
                    Geometry geom;
                    std::string kind;
                    if (rd.get((*geoms)[gi], "kind", gp, kind, true))
                    {
                        if (auto k = parse_geometry_kind(kind))
                            geom.kind = *k;
                        else
                            rd.fail(gp + ".kind", "expected one of point|polyline|polygon");
                    }
                    if ((*geoms)[gi].contains("coords"))
                        geom.coords = rd.points((*geoms)[gi]["coords"], gp + ".coords");
                    else
                        rd.fail(gp + ".coords", "required field missing");
                    layer.geometries.push_back(std::move(geom));
                }
            }
            try
            {
                validate_layer(layer);
            }
            catch (const std::invalid_argument& e)
            {
                rd.fail(lp, e.what());
            }
            sc.layers.push_back(std::move(layer));
        }
    }

    if (const json* sk = rd.array(doc, "sketches", "$"))
    {
        for (std::size_t i = 0; i < sk->size(); ++i)
        {
            const std::string p = "$.sketches[" + std::to_string(i) + "]";
            SketchInput s;
            rd.get((*sk)[i], "name", p, s.name, true);
            if ((*sk)[i].contains("vertices"))
                s.vertices = rd.points((*sk)[i]["vertices"], p + ".vertices");
            else
                rd.fail(p + ".vertices", "required field missing");
            for (const auto& other : sc.sketches)
                if (other.name == s.name)
                    rd.fail(p + ".name", "duplicate sketch name '" + s.name + "'");
            try
            {
                (void)normalize_sketch(s.vertices, s.name);
            }
            catch (const std::invalid_argument& e)
            {
                rd.fail(p + ".vertices", e.what());
            }
            sc.sketches.push_back(std::move(s));
        }
    }

    if (const json* ob = rd.array(doc, "observations", "$"))
    {
        for (std::size_t i = 0; i < ob->size(); ++i)
        {
            const std::string p = "$.observations[" + std::to_string(i) + "]";
            ObservationInput o;
            rd.get((*ob)[i], "sketch_name", p, o.sketch_name, true);
            if (rd.get((*ob)[i], "label", p, o.label, true) && !parse_label(o.label))
                rd.fail(p + ".label", "unknown label '" + o.label + "'");
            const bool known = std::any_of(sc.sketches.begin(), sc.sketches.end(),
                                           [&](const SketchInput& s) { return s.name == o.sketch_name; });
            if (!known)
                rd.fail(p + ".sketch_name", "unknown sketch '" + o.sketch_name + "'");
            sc.observations.push_back(std::move(o));
        }
    }

    if (const json* pr = rd.array(doc, "priorities", "$"))
    {
        for (std::size_t i = 0; i < pr->size(); ++i)
        {
            const std::string p = "$.priorities[" + std::to_string(i) + "]";
            if (!(*pr)[i].is_string())
            {
                rd.fail(p, "expected string");
                continue;
            }
            const auto name = (*pr)[i].get<std::string>();
            std::vector<std::string> psi;
            for (const auto& o : sc.observations)
                if (auto l = parse_label(o.label))
                    psi.push_back(semantic_column_name(o.sketch_name, *l));
            if (resolve_priority(name, sc.vocabulary, psi).empty())
                rd.fail(p, "unknown feature or sketch '" + name + "'");
            sc.priorities.push_back(name);
        }
    }

    if (const json* wp = rd.object(doc, "waypoints", "$"))
    {
        if (wp->contains("visit"))
            sc.visit = rd.points((*wp)["visit"], "$.waypoints.visit");
        if (wp->contains("avoid"))
            sc.avoid = rd.points((*wp)["avoid"], "$.waypoints.avoid");
        if (grid_ok)
        {
            try
            {
                (void)snap_waypoints(sc.grid, sc.visit, sc.avoid);
            }
            catch (const std::invalid_argument& e)
            {
                rd.fail("$.waypoints", e.what());
            }
        }
    }

    sc.semantics = SemanticConfig::for_resolution(sc.grid.resolution > 0.0 ? sc.grid.resolution : 1.0);
    if (const json* s = rd.object(doc, "semantics", "$"))
    {
        rd.get(*s, "steepness", "$.semantics", sc.semantics.steepness);
        rd.get(*s, "near_band", "$.semantics", sc.semantics.near_band);
        rd.get(*s, "window_margin", "$.semantics", sc.semantics.window_margin);
        rd.get(*s, "outside_band_offset", "$.semantics", sc.semantics.outside_band_offset);
        rd.get(*s, "samples", "$.semantics", sc.semantics.n_samples);
        rd.get(*s, "seed", "$.semantics", sc.semantics.seed);
        if (!(sc.semantics.steepness > 0.0))
            rd.fail("$.semantics.steepness", "must be > 0");
        if (sc.semantics.n_samples < 1000)
            rd.fail("$.semantics.samples", "must be >= 1000");
    }

    if (const json* p = rd.object(doc, "prior", "$"))
    {
        rd.get(*p, "mean_boost", "$.prior", sc.prior.mean_boost);
        rd.get(*p, "sd", "$.prior", sc.prior.sd);
        if (!(sc.prior.mean_boost > 0.0))
            rd.fail("$.prior.mean_boost", "must be > 0");
        if (!(sc.prior.sd > 0.0))
            rd.fail("$.prior.sd", "must be > 0");
    }

    if (const json* p = rd.object(doc, "pomdp", "$"))
    {
        rd.get(*p, "d_obs", "$.pomdp", sc.obs.d_obs);
        rd.get(*p, "z_true", "$.pomdp", sc.obs.z_true);
        rd.get(*p, "z_prox", "$.pomdp", sc.obs.z_prox);
        rd.get(*p, "neighborhood_radius", "$.pomdp", sc.obs.neighborhood_radius);
        rd.get(*p, "r_time", "$.pomdp", sc.reward.r_time);
        rd.get(*p, "r_target", "$.pomdp", sc.reward.r_target);
        rd.get(*p, "b_max", "$.pomdp", sc.reward.b_max);
        rd.get(*p, "b_cost", "$.pomdp", sc.reward.b_cost);
        rd.get(*p, "gamma", "$.pomdp", sc.reward.gamma);
        rd.get(*p, "n_particles", "$.pomdp", sc.n_particles);
        try
        {
            sc.obs.validate();
            sc.reward.validate();
        }
        catch (const std::invalid_argument& e)
        {
            rd.fail("$.pomdp", e.what());
        }
        if (sc.n_particles < 1)
            rd.fail("$.pomdp.n_particles", "must be >= 1");
    }

    if (const json* p = rd.object(doc, "planner", "$"))
    {
        rd.get(*p, "n_simulations", "$.planner", sc.planner.n_simulations);
        rd.get(*p, "max_depth", "$.planner", sc.planner.max_depth);
        rd.get(*p, "ucb_exploration", "$.planner", sc.planner.ucb_exploration);
        rd.get(*p, "seed", "$.planner", sc.planner.seed);
        rd.get(*p, "reinvigoration_fraction", "$.planner", sc.planner.reinvigoration_fraction);
        rd.get(*p, "battery_bucket", "$.planner", sc.rollout.bucket_steps);
        try
        {
            sc.planner.validate();
        }
        catch (const std::invalid_argument& e)
        {
            rd.fail("$.planner", e.what());
        }
        if (sc.rollout.bucket_steps < 1)
            rd.fail("$.planner.battery_bucket", "must be >= 1");
    }

    if (const json* s = rd.object(doc, "simulation", "$"))
    {
        if (const json* st = rd.array(*s, "starts", "$.simulation"))
            for (std::size_t i = 0; i < st->size(); ++i)
                if (auto c = rd.cell((*st)[i], "$.simulation.starts[" + std::to_string(i) + "]"))
                {
                    if (grid_ok && !sc.grid.contains(*c))
                        rd.fail("$.simulation.starts[" + std::to_string(i) + "]", "outside grid");
                    sc.simulation.starts.push_back(*c);
                }
        rd.get(*s, "runs_per_start", "$.simulation", sc.simulation.runs_per_start);
        rd.get(*s, "seed", "$.simulation", sc.simulation.seed);
        if (const json* t = rd.object(*s, "truth", "$.simulation"))
        {
            rd.get(*t, "concentration", "$.simulation.truth", sc.simulation.truth_concentration);
            if (const json* w = rd.object(*t, "weights", "$.simulation.truth"))
                for (const auto& [k, v] : w->items())
                {
                    if (!v.is_number())
                        rd.fail("$.simulation.truth.weights." + k, "expected number");
                    else if (std::find(sc.vocabulary.begin(), sc.vocabulary.end(), k) == sc.vocabulary.end())
                        rd.fail("$.simulation.truth.weights." + k, "not a geographic feature");
                    else
                        sc.simulation.truth_weights[k] = v.get<double>();
                }
        }
    }
    if (sc.simulation.starts.empty())
        sc.simulation.starts.push_back({0, 0});

    if (const json* a = rd.object(doc, "alignment", "$"))
    {
        AlignmentInput al;
        if (const json* r = rd.array(*a, "ratings", "$.alignment"))
            for (std::size_t i = 0; i < r->size(); ++i)
            {
                const std::string p = "$.alignment.ratings[" + std::to_string(i) + "]";
                int value = 0;
                std::optional<Cell> c;
                if ((*r)[i].contains("cell"))
                    c = rd.cell((*r)[i]["cell"], p + ".cell");
                else
                    rd.fail(p + ".cell", "required field missing");
                rd.get((*r)[i], "value", p, value, true);
                if (value < -1 || value > 2)
                    rd.fail(p + ".value", "must lie in {-1, 0, 1, 2}");
                if (c)
                    al.ratings.emplace_back(*c, value);
            }
        if (const json* rel = rd.object(*a, "relevances", "$.alignment"))
            for (const auto& [k, v] : rel->items())
            {
                if (!v.is_number())
                    rd.fail("$.alignment.relevances." + k, "expected number");
                else
                    al.relevances[k] = v.get<double>();
            }
        sc.alignment = std::move(al);
    }

    if (!rd.errors.empty())
        throw ScenarioError(std::move(rd.errors));
    return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open scenario " + path.string());
    json doc;
    try
    {
        doc = json::parse(in);
    }
    catch (const json::parse_error& e)
    {
        throw ScenarioError({std::string("$: ") + e.what()});
    }
    return parse_scenario(doc);
}

inline json to_json(const Scenario& sc)
{
    auto pt = [](Vec2 p) { return json::array({p.x, p.y}); };
    auto pts = [&](const std::vector<Vec2>& v) {
        json a = json::array();
        for (auto p : v)
            a.push_back(pt(p));
        return a;
    };
    json doc;
    doc["id"] = sc.id;
    doc["grid"] = {{"rows", sc.grid.n_rows},
                   {"cols", sc.grid.n_cols},
                   {"resolution", sc.grid.resolution},
                   {"origin", pt(sc.grid.origin)}};
    doc["features"] = sc.vocabulary;
    doc["layers"] = json::array();
    for (const auto& l : sc.layers)
    {
        json geoms = json::array();
        for (const auto& g : l.geometries)
            geoms.push_back({{"kind", std::string(to_string(g.kind))}, {"coords", pts(g.coords)}});
        doc["layers"].push_back({{"feature_name", l.feature_name}, {"geometries", geoms}});
    }
    doc["sketches"] = json::array();
    for (const auto& s : sc.sketches)
        doc["sketches"].push_back({{"name", s.name}, {"vertices", pts(s.vertices)}});
    doc["observations"] = json::array();
    for (const auto& o : sc.observations)
        doc["observations"].push_back({{"sketch_name", o.sketch_name}, {"label", o.label}});
    doc["priorities"] = sc.priorities;
    doc["waypoints"] = {{"visit", pts(sc.visit)}, {"avoid", pts(sc.avoid)}};
    doc["semantics"] = {{"steepness", sc.semantics.steepness},
                        {"near_band", sc.semantics.near_band},
                        {"window_margin", sc.semantics.window_margin},
                        {"outside_band_offset", sc.semantics.outside_band_offset},
                        {"samples", sc.semantics.n_samples},
                        {"seed", sc.semantics.seed}};
    doc["prior"] = {{"mean_boost", sc.prior.mean_boost}, {"sd", sc.prior.sd}};
    doc["pomdp"] = {{"d_obs", sc.obs.d_obs},
                    {"z_true", sc.obs.z_true},
                    {"z_prox", sc.obs.z_prox},
                    {"neighborhood_radius", sc.obs.neighborhood_radius},
                    {"r_time", sc.reward.r_time},
                    {"r_target", sc.reward.r_target},
                    {"b_max", sc.reward.b_max},
                    {"b_cost", sc.reward.b_cost},
                    {"gamma", sc.reward.gamma},
                    {"n_particles", sc.n_particles}};
    doc["planner"] = {{"n_simulations", sc.planner.n_simulations},
                      {"max_depth", sc.planner.max_depth},
                      {"ucb_exploration", sc.planner.ucb_exploration},
                      {"seed", sc.planner.seed},
                      {"reinvigoration_fraction", sc.planner.reinvigoration_fraction},
                      {"battery_bucket", sc.rollout.bucket_steps}};
    json starts = json::array();
    for (auto c : sc.simulation.starts)
        starts.push_back({c.row, c.col});
    doc["simulation"] = {{"starts", starts},
                         {"runs_per_start", sc.simulation.runs_per_start},
                         {"seed", sc.simulation.seed},
                         {"truth",
                          {{"concentration", sc.simulation.truth_concentration},
                           {"weights", json(sc.simulation.truth_weights)}}}};
    if (sc.alignment)
    {
        json ratings = json::array();
        for (const auto& [c, v] : sc.alignment->ratings)
            ratings.push_back({{"cell", {c.row, c.col}}, {"value", v}});
        doc["alignment"] = {{"ratings", ratings}, {"relevances", json(sc.alignment->relevances)}};
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Fusion pipeline

/// Stable digest of the inputs that determine the geographic features.
inline std::uint64_t geography_fingerprint(const Scenario& sc)
{
    json g;
    g["grid"] = to_json(sc)["grid"];
    g["features"] = sc.vocabulary;
    g["layers"] = to_json(sc)["layers"];
    return fingerprint(g.dump());
}

/// Cache directory from SEARCHGRID_CACHE_DIR, if set.
inline std::optional<std::filesystem::path> cache_dir_from_env()
{
    if (const char* d = std::getenv("SEARCHGRID_CACHE_DIR"); d && *d)
        return std::filesystem::path(d);
    return std::nullopt;
}

/// Geographic feature block, read from or written to the cache when a cache
/// directory is given.
inline FeatureMatrix geographic_features(const Scenario& sc, const std::optional<std::filesystem::path>& cache_dir,
                                         bool* cache_hit = nullptr)
{
    if (cache_hit)
        *cache_hit = false;
    const auto fp = geography_fingerprint(sc);
    if (cache_dir)
    {
        const auto path = feature_cache_path(*cache_dir, sc.id, sc.grid.resolution);
        if (auto cached = read_feature_cache(path, sc.grid, fp); cached && cached->phi_names == sc.vocabulary)
        {
            if (cache_hit)
                *cache_hit = true;
            return *std::move(cached);
        }
        auto fm = adjacency_features(sc.grid, sc.layers, sc.vocabulary);
        write_feature_cache(path, sc.id, sc.grid, fm, fp);
        return fm;
    }
    return adjacency_features(sc.grid, sc.layers, sc.vocabulary);
}

/// Normalized sketch plus its softmax model and label/class table.
struct SketchModel
{
    Sketch sketch;
    SoftmaxModel model;
    LabelClassTable table;
};

inline SketchModel build_sketch_model(const SketchInput& input, const SemanticConfig& cfg)
{
    SketchModel sm;
    sm.sketch = normalize_sketch(input.vertices, input.name);
    sm.model = build_softmax_model(sm.sketch, cfg.steepness, cfg.outside_band_offset);
    SemanticConfig seeded = cfg;
    // Per-sketch stream so columns stay fixed when other sketches are added.
    seeded.seed = cfg.seed ^ fingerprint(input.name);
    sm.table = label_given_class(sm.model, sm.sketch, seeded);
    return sm;
}

struct FusionResult
{
    FeatureMatrix features;
    std::map<std::string, SketchModel> sketches;
    GaussianPrior prior;
    WaypointSet waypoints;
    WeightPosterior posterior;
    RewardMap map;
    bool cache_hit = false;
    std::vector<std::string> warnings;
};

/// Appends one semantic column per observation, in input order.
inline void add_semantic_columns(const Scenario& sc, FeatureMatrix& fm, std::map<std::string, SketchModel>& sketches,
                                 std::vector<std::string>& warnings, std::size_t first_observation = 0)
{
    for (std::size_t i = first_observation; i < sc.observations.size(); ++i)
    {
        const auto& o = sc.observations[i];
        auto it = sketches.find(o.sketch_name);
        if (it == sketches.end())
        {
            const auto in = std::find_if(sc.sketches.begin(), sc.sketches.end(),
                                         [&](const SketchInput& s) { return s.name == o.sketch_name; });
            if (in == sc.sketches.end())
                throw std::invalid_argument("observation references unknown sketch '" + o.sketch_name + "'");
            it = sketches.emplace(o.sketch_name, build_sketch_model(*in, sc.semantics)).first;
            warnings.insert(warnings.end(), it->second.table.warnings.begin(), it->second.table.warnings.end());
        }
        const auto label = parse_label(o.label);
        if (!label)
            throw std::invalid_argument("unknown semantic label '" + o.label + "'");
        fm.add_semantic_column(semantic_column_name(o.sketch_name, *label),
                               semantic_feature(it->second.model, it->second.table, *label, sc.grid));
    }
}

/// Features, prior, Laplace posterior and reward map for a scenario.
inline FusionResult fuse(const Scenario& sc, const std::optional<std::filesystem::path>& cache_dir = std::nullopt)
{
    FusionResult out;
    out.features = geographic_features(sc, cache_dir, &out.cache_hit);
    add_semantic_columns(sc, out.features, out.sketches, out.warnings);
    out.prior = build_prior(sc.priorities, out.features, sc.prior);
    out.waypoints = snap_waypoints(sc.grid, sc.visit, sc.avoid);
    out.posterior = laplace_fit(out.prior, out.waypoints, out.features, sc.optimizer);
    out.map = reward_map(out.posterior, out.features);
    return out;
}

// ---------------------------------------------------------------------------
// Reward map export

/// One line per grid row, row 0 first, comma-separated, full precision.
inline std::string raster_csv(const Eigen::VectorXd& v, int rows, int cols)
{
    std::string out;
    char buf[64];
    for (int r = 0; r < rows; ++r)
    {
        for (int c = 0; c < cols; ++c)
        {
            std::snprintf(buf, sizeof buf, "%s%.17g", c ? "," : "", v(r * cols + c));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

inline json reward_map_manifest(const Scenario& sc, const FusionResult& fr, const std::string& stem)
{
    json manifest;
    manifest["scenario"] = sc.id;
    manifest["rows"] = fr.map.n_rows;
    manifest["cols"] = fr.map.n_cols;
    manifest["resolution"] = sc.grid.resolution;
    manifest["origin"] = {sc.grid.origin.x, sc.grid.origin.y};
    manifest["row_order"] = "row 0 (southernmost) first";
    manifest["mean_file"] = stem + "_mean.csv";
    manifest["variance_file"] = stem + "_variance.csv";
    manifest["feature_columns"] = fr.features.column_names();
    const auto& mu = fr.posterior.mean;
    manifest["posterior_mean"] = std::vector<double>(mu.data(), mu.data() + mu.size());
    json cov = json::array();
    for (Eigen::Index i = 0; i < fr.posterior.covariance.rows(); ++i)
    {
        json row = json::array();
        for (Eigen::Index j = 0; j < fr.posterior.covariance.cols(); ++j)
            row.push_back(fr.posterior.covariance(i, j));
        cov.push_back(row);
    }
    manifest["posterior_covariance"] = cov;
    manifest["optimizer"] = {{"iterations", fr.posterior.iterations}, {"gradient_norm", fr.posterior.gradient_norm}};
    return manifest;
}

/// Writes <stem>_mean.csv, <stem>_variance.csv and <stem>_manifest.json.
inline void write_reward_map(const std::filesystem::path& dir, const std::string& stem, const Scenario& sc,
                             const FusionResult& fr)
{
    std::filesystem::create_directories(dir);
    auto write = [](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::trunc);
        out << text;
        if (!out)
            throw std::runtime_error("failed writing " + path.string());
    };
    write(dir / (stem + "_mean.csv"), raster_csv(fr.map.mean, fr.map.n_rows, fr.map.n_cols));
    write(dir / (stem + "_variance.csv"), raster_csv(fr.map.variance, fr.map.n_rows, fr.map.n_cols));
    write(dir / (stem + "_manifest.json"), reward_map_manifest(sc, fr, stem).dump(2) + "\n");
}

} // namespace searchgrid
