#pragma once

#include "searchgrid/geogrid.hpp"
#include "searchgrid/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace searchgrid
{

/// Operator sketch after normalization: convex, counterclockwise, 3 to 5 vertices.
struct Sketch
{
    std::string name;
    std::vector<Vec2> vertices;
};

inline constexpr std::size_t kMaxSketchVertices = 5;

/// Convex hull of the raw outline, then greedy removal of the vertex whose
/// removal loses the least area until at most five vertices remain.
inline Sketch normalize_sketch(const std::vector<Vec2>& raw, std::string name = {})
{
    auto hull = convex_hull(raw);
    if (hull.size() < 3 || !(signed_area(hull) > 0.0))
        throw std::invalid_argument("sketch '" + name + "' has zero area (needs at least 3 non-collinear points)");
    while (hull.size() > kMaxSketchVertices)
    {
        // On a convex ring, dropping vertex i loses exactly triangle (i-1, i, i+1).
        std::size_t best = 0;
        double best_loss = std::numeric_limits<double>::infinity();
        const std::size_t n = hull.size();
        for (std::size_t i = 0; i < n; ++i)
        {
            const double loss = 0.5 * orient(hull[(i + n - 1) % n], hull[i], hull[(i + 1) % n]);
            if (loss < best_loss)
            {
                best_loss = loss;
                best = i;
            }
        }
        hull.erase(hull.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return {std::move(name), std::move(hull)};
}

// ---------------------------------------------------------------------------
// Labels

enum class SemanticLabel : int
{
    north,
    north_east,
    east,
    south_east,
    south,
    south_west,
    west,
    north_west,
    inside,
    near,
    outside
};

inline constexpr int kLabelCount = 11;
inline constexpr std::array<std::string_view, kLabelCount> kLabelNames{"N",  "NE", "E", "SE",     "S",   "SW",
                                                                      "W",  "NW", "Inside", "Near", "Outside"};

inline std::string_view to_string(SemanticLabel l) { return kLabelNames[static_cast<std::size_t>(l)]; }

/// Case-insensitive.
inline std::optional<SemanticLabel> parse_label(std::string_view s)
{
    auto same = [](std::string_view a, std::string_view b) {
        return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
                   return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
               });
    };
    for (int i = 0; i < kLabelCount; ++i)
        if (same(kLabelNames[static_cast<std::size_t>(i)], s))
            return static_cast<SemanticLabel>(i);
    return std::nullopt;
}

inline bool is_range_label(SemanticLabel l) { return static_cast<int>(l) >= static_cast<int>(SemanticLabel::inside); }

/// Compass sector of `p` seen from `from`: 45-degree sectors centered on N, NE, ...
inline SemanticLabel bearing_label(Vec2 from, Vec2 p)
{
    const Vec2 d = p - from;
    double deg = std::atan2(d.x, d.y) * 180.0 / std::numbers::pi; // clockwise from north
    if (deg < 0.0)
        deg += 360.0;
    const int sector = static_cast<int>(std::floor((deg + 22.5) / 45.0)) % 8;
    return static_cast<SemanticLabel>(sector);
}

// ---------------------------------------------------------------------------
// Softmax class model

struct SemanticConfig
{
    double steepness = 0.05;        ///< 1/m; logit slope of exterior classes
    double near_band = 200.0;       ///< m; "Near" = outside and within this distance of the boundary
    double window_margin = 4000.0;  ///< m; sampling window = sketch bounds grown by this
    double outside_band_offset = 0; ///< m; > 0 adds a second exterior class per edge at this offset
    int n_samples = 10000;          ///< accepted samples per class
    std::uint64_t seed = 1;

    /// Defaults scaled to a grid: steepness 5/resolution, near band 2 cells,
    /// window margin 20 near bands.
    static SemanticConfig for_resolution(double resolution)
    {
        SemanticConfig c;
        c.steepness = 5.0 / resolution;
        c.near_band = 2.0 * resolution;
        c.window_margin = 20.0 * c.near_band;
        return c;
    }
};

enum class ClassRole
{
    interior,
    edge,
    outside_band
};

struct SoftmaxClass
{
    Vec2 w;
    double b = 0.0;
    ClassRole role = ClassRole::interior;
    int edge = -1;
};

struct SoftmaxModel
{
    std::vector<SoftmaxClass> classes;

    [[nodiscard]] std::size_t size() const { return classes.size(); }

    [[nodiscard]] double logit(std::size_t k, Vec2 x) const { return dot(classes[k].w, x) + classes[k].b; }

    [[nodiscard]] std::vector<double> probabilities(Vec2 x) const
    {
        std::vector<double> p(classes.size());
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < p.size(); ++k)
            top = std::max(top, p[k] = logit(k, x));
        double total = 0.0;
        for (auto& v : p)
            total += (v = std::exp(v - top));
        for (auto& v : p)
            v /= total;
        return p;
    }

    [[nodiscard]] std::size_t argmax(Vec2 x) const
    {
        std::size_t best = 0;
        double best_logit = logit(0, x);
        for (std::size_t k = 1; k < classes.size(); ++k)
        {
            const double l = logit(k, x);
            if (l > best_logit)
            {
                best_logit = l;
                best = k;
            }
        }
        return best;
    }
};

/// Interior class (w = 0, b = 0) plus one exterior class per edge whose logit
/// equals the interior logit on the edge's supporting line. With a positive
/// `outside_band_offset`, each edge also gets a steeper class that overtakes
/// the edge class at that distance.
inline SoftmaxModel build_softmax_model(const Sketch& sketch, double steepness, double outside_band_offset = 0.0)
{
    if (!(steepness > 0.0))
        throw std::invalid_argument("softmax steepness must be positive");
    if (sketch.vertices.size() < 3)
        throw std::invalid_argument("sketch must be normalized before building a softmax model");
    SoftmaxModel model;
    model.classes.push_back({{0.0, 0.0}, 0.0, ClassRole::interior, -1});
    const std::size_t n = sketch.vertices.size();
    for (std::size_t e = 0; e < n; ++e)
    {
        const Vec2 a = sketch.vertices[e];
        const Vec2 b = sketch.vertices[(e + 1) % n];
        const Vec2 t = b - a;
        const Vec2 normal = (1.0 / norm(t)) * Vec2{t.y, -t.x}; // outward for CCW rings
        model.classes.push_back({steepness * normal, -steepness * dot(normal, a), ClassRole::edge, static_cast<int>(e)});
    }
    if (outside_band_offset > 0.0)
    {
        for (std::size_t e = 0; e < n; ++e)
        {
            const auto& edge = model.classes[e + 1];
            model.classes.push_back(
                {2.0 * edge.w, 2.0 * edge.b - steepness * outside_band_offset, ClassRole::outside_band, static_cast<int>(e)});
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// Label/class correlation

/// p(label | class), labels as rows in SemanticLabel order, classes as columns.
struct LabelClassTable
{
    Eigen::MatrixXd p;
    int sample_count = 0;
    std::vector<std::string> warnings;

    [[nodiscard]] double operator()(SemanticLabel l, std::size_t k) const
    {
        return p(static_cast<int>(l), static_cast<Eigen::Index>(k));
    }
};

namespace detail
{
struct SketchGeometry
{
    Vec2 centroid;
    Vec2 lo;
    Vec2 hi;
};

inline SketchGeometry sketch_geometry(const Sketch& s)
{
    SketchGeometry g{polygon_centroid(s.vertices), s.vertices.front(), s.vertices.front()};
    for (auto v : s.vertices)
    {
        g.lo = {std::min(g.lo.x, v.x), std::min(g.lo.y, v.y)};
        g.hi = {std::max(g.hi.x, v.x), std::max(g.hi.y, v.y)};
    }
    return g;
}
} // namespace detail

/// Range label (Inside / Near / Outside) of a point relative to the sketch.
inline SemanticLabel range_label(const Sketch& s, Vec2 p, double near_band)
{
    if (point_in_polygon(p, s.vertices))
        return SemanticLabel::inside;
    return distance_to_ring(p, s.vertices) <= near_band ? SemanticLabel::near : SemanticLabel::outside;
}

/// Monte-Carlo estimate of p(label | class): uniform points over the sketch's
/// bounding window are assigned to their argmax class until every class has
/// `n_samples` points (or the attempt budget runs out), then each class's
/// points are scored against the label predicates.
inline LabelClassTable label_given_class(const SoftmaxModel& model, const Sketch& sketch, const SemanticConfig& cfg)
{
    if (cfg.n_samples < 1000)
        throw std::invalid_argument("label_given_class needs at least 1000 samples per class");
    const auto geo = detail::sketch_geometry(sketch);
    const Vec2 lo = geo.lo - Vec2{cfg.window_margin, cfg.window_margin};
    const Vec2 hi = geo.hi + Vec2{cfg.window_margin, cfg.window_margin};

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> ux(lo.x, hi.x);
    std::uniform_real_distribution<double> uy(lo.y, hi.y);

    const std::size_t k_classes = model.size();
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(kLabelCount, static_cast<Eigen::Index>(k_classes));
    std::vector<int> accepted(k_classes, 0);
    std::size_t full = 0;
    const std::uint64_t budget = static_cast<std::uint64_t>(cfg.n_samples) * k_classes * 2000;
    for (std::uint64_t attempt = 0; attempt < budget && full < k_classes; ++attempt)
    {
        const Vec2 x{ux(rng), uy(rng)};
        const std::size_t k = model.argmax(x);
        if (accepted[k] >= cfg.n_samples)
            continue;
        const auto kk = static_cast<Eigen::Index>(k);
        counts(static_cast<int>(range_label(sketch, x, cfg.near_band)), kk) += 1.0;
        counts(static_cast<int>(bearing_label(geo.centroid, x)), kk) += 1.0;
        if (++accepted[k] == cfg.n_samples)
            ++full;
    }

    LabelClassTable table;
    table.sample_count = cfg.n_samples;
    table.p = Eigen::MatrixXd::Zero(kLabelCount, static_cast<Eigen::Index>(k_classes));
    for (std::size_t k = 0; k < k_classes; ++k)
    {
        const auto kk = static_cast<Eigen::Index>(k);
        if (accepted[k] == 0)
        {
            table.warnings.push_back("class " + std::to_string(k) + " of sketch '" + sketch.name +
                                     "' has no dominance region inside the sampling window; using uniform labels");
            table.p.block(0, kk, 8, 1).setConstant(1.0 / 8.0);
            table.p.block(8, kk, 3, 1).setConstant(1.0 / 3.0);
            continue;
        }
        table.p.col(kk) = counts.col(kk) / static_cast<double>(accepted[k]);
    }
    return table;
}

/// Likelihood column sum_class p(label | class) p(class | cell center).
inline Eigen::VectorXd semantic_feature(const SoftmaxModel& model, const LabelClassTable& table, SemanticLabel label,
                                        const GridSpec& grid)
{
    if (table.p.cols() != static_cast<Eigen::Index>(model.size()))
        throw std::invalid_argument("label/class table does not match the softmax model");
    Eigen::VectorXd psi(grid.cell_count());
    for (int c = 0; c < grid.cell_count(); ++c)
    {
        const auto probs = model.probabilities(grid.center(grid.cell(c)));
        double v = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k)
            v += table(label, k) * probs[k];
        psi(c) = std::clamp(v, 0.0, 1.0);
    }
    return psi;
}

inline Eigen::VectorXd semantic_feature(const SoftmaxModel& model, const LabelClassTable& table, std::string_view label,
                                        const GridSpec& grid)
{
    const auto parsed = parse_label(label);
    if (!parsed)
        throw std::invalid_argument("unknown semantic label '" + std::string(label) + "'");
    return semantic_feature(model, table, *parsed, grid);
}

/// Column name used for the semantic feature of one observation.
inline std::string semantic_column_name(std::string_view sketch_name, SemanticLabel label)
{
    return std::string(sketch_name) + ":" + std::string(to_string(label));
}

} // namespace searchgrid
