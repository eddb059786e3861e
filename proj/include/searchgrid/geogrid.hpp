#pragma once

#include "searchgrid/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace searchgrid
{

/// Row-major, zero-based grid cell. Row 0 is the southernmost row.
struct Cell
{
    int row = 0;
    int col = 0;

    friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
};

inline int manhattan(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

/// Discretized operational area. Cell (i, j) spans
/// [origin + (j, i) * resolution, origin + (j + 1, i + 1) * resolution].
struct GridSpec
{
    int n_rows = 1;
    int n_cols = 1;
    double resolution = 1.0;
    Vec2 origin;

    void validate() const
    {
        if (n_rows < 1 || n_cols < 1)
            throw std::invalid_argument("grid must have at least one row and one column");
        if (!(resolution > 0.0) || !std::isfinite(resolution))
            throw std::invalid_argument("grid resolution must be positive");
    }

    [[nodiscard]] int cell_count() const { return n_rows * n_cols; }
    [[nodiscard]] bool contains(Cell c) const { return c.row >= 0 && c.row < n_rows && c.col >= 0 && c.col < n_cols; }
    [[nodiscard]] int index(Cell c) const { return c.row * n_cols + c.col; }
    [[nodiscard]] Cell cell(int index) const { return {index / n_cols, index % n_cols}; }

    /// Cell center relative to the origin. Independent of the origin so that
    /// translated copies of a scenario produce identical local coordinates.
    [[nodiscard]] Vec2 local_center(Cell c) const { return {(c.col + 0.5) * resolution, (c.row + 0.5) * resolution}; }
    [[nodiscard]] Vec2 center(Cell c) const { return origin + local_center(c); }

    /// Cell containing a world coordinate, clamped to the grid.
    [[nodiscard]] Cell snap(Vec2 p) const
    {
        const Vec2 local = p - origin;
        const int col = std::clamp(static_cast<int>(std::floor(local.x / resolution)), 0, n_cols - 1);
        const int row = std::clamp(static_cast<int>(std::floor(local.y / resolution)), 0, n_rows - 1);
        return {row, col};
    }

    [[nodiscard]] bool covers(Vec2 p) const
    {
        const Vec2 local = p - origin;
        return local.x >= 0.0 && local.y >= 0.0 && local.x <= n_cols * resolution && local.y <= n_rows * resolution;
    }
};

enum class GeometryKind
{
    point,
    polyline,
    polygon
};

inline std::string_view to_string(GeometryKind k)
{
    switch (k)
    {
    case GeometryKind::point: return "point";
    case GeometryKind::polyline: return "polyline";
    case GeometryKind::polygon: return "polygon";
    }
    return "?";
}

inline std::optional<GeometryKind> parse_geometry_kind(std::string_view s)
{
    if (s == "point")
        return GeometryKind::point;
    if (s == "polyline")
        return GeometryKind::polyline;
    if (s == "polygon")
        return GeometryKind::polygon;
    return std::nullopt;
}

struct Geometry
{
    GeometryKind kind = GeometryKind::point;
    std::vector<Vec2> coords;
};

struct GeoLayer
{
    std::string feature_name;
    std::vector<Geometry> geometries;
};

/// Default feature vocabulary, in column order.
inline const std::vector<std::string>& default_feature_vocabulary()
{
    static const std::vector<std::string> names{"roads",        "trails",       "structures",
                                                "stream_lines", "water_bodies", "tree_canopy"};
    return names;
}

/// Throws std::invalid_argument naming the offending geometry index.
inline void validate_layer(const GeoLayer& layer)
{
    for (std::size_t g = 0; g < layer.geometries.size(); ++g)
    {
        const auto& geom = layer.geometries[g];
        auto fail = [&](const std::string& what) {
            throw std::invalid_argument("layer '" + layer.feature_name + "' geometry " + std::to_string(g) + ": " +
                                        what);
        };
        for (auto p : geom.coords)
            if (!std::isfinite(p.x) || !std::isfinite(p.y))
                fail("non-finite coordinate");
        switch (geom.kind)
        {
        case GeometryKind::point:
            if (geom.coords.size() != 1)
                fail("point needs exactly 1 coordinate");
            break;
        case GeometryKind::polyline:
            if (geom.coords.size() < 2)
                fail("polyline needs at least 2 vertices");
            break;
        case GeometryKind::polygon:
            if (geom.coords.size() < 3)
                fail("polygon needs at least 3 vertices");
            if (ring_self_intersects(geom.coords))
                fail("polygon is self-intersecting");
            break;
        }
    }
}

namespace detail
{
inline double distance_to_geometry(Vec2 p, const Geometry& g, Vec2 origin)
{
    // Everything is evaluated in grid-local coordinates.
    auto local = [&](std::size_t i) { return g.coords[i] - origin; };
    switch (g.kind)
    {
    case GeometryKind::point: return norm(p - local(0));
    case GeometryKind::polyline:
    {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + 1 < g.coords.size(); ++i)
            best = std::min(best, point_segment_distance(p, local(i), local(i + 1)));
        return best;
    }
    case GeometryKind::polygon:
    {
        std::vector<Vec2> ring(g.coords.size());
        for (std::size_t i = 0; i < ring.size(); ++i)
            ring[i] = local(i);
        if (point_in_polygon(p, ring))
            return 0.0;
        return distance_to_ring(p, ring);
    }
    }
    return std::numeric_limits<double>::infinity();
}
} // namespace detail

/// Per-cell Euclidean distance (meters) from each cell center to the nearest
/// geometry of the layer, row-major. +infinity everywhere for an empty layer.
inline std::vector<double> distance_field(const GeoLayer& layer, const GridSpec& grid)
{
    grid.validate();
    validate_layer(layer);
    std::vector<double> d(static_cast<std::size_t>(grid.cell_count()), std::numeric_limits<double>::infinity());
    for (int idx = 0; idx < grid.cell_count(); ++idx)
    {
        const Vec2 c = grid.local_center(grid.cell(idx));
        double best = std::numeric_limits<double>::infinity();
        for (const auto& g : layer.geometries)
            best = std::min(best, detail::distance_to_geometry(c, g, grid.origin));
        d[static_cast<std::size_t>(idx)] = best;
    }
    return d;
}

/// Per-cell feature vectors: geographic block (phi) and semantic block (psi).
/// Rows are cells in row-major order; columns are features.
struct FeatureMatrix
{
    int n_rows = 0;
    int n_cols = 0;
    Eigen::MatrixXd phi;
    Eigen::MatrixXd psi;
    std::vector<std::string> phi_names;
    std::vector<std::string> psi_names;

    [[nodiscard]] int cell_count() const { return n_rows * n_cols; }
    [[nodiscard]] int n_phi() const { return static_cast<int>(phi.cols()); }
    [[nodiscard]] int n_obs() const { return static_cast<int>(psi.cols()); }
    [[nodiscard]] int width() const { return n_phi() + n_obs(); }

    [[nodiscard]] std::vector<std::string> column_names() const
    {
        auto names = phi_names;
        names.insert(names.end(), psi_names.begin(), psi_names.end());
        return names;
    }

    /// Stacked (phi, psi) feature vector of one cell.
    [[nodiscard]] Eigen::VectorXd stacked(int cell) const
    {
        Eigen::VectorXd x(width());
        x.head(n_phi()) = phi.row(cell).transpose();
        x.tail(n_obs()) = psi.row(cell).transpose();
        return x;
    }

    [[nodiscard]] Eigen::MatrixXd design() const
    {
        Eigen::MatrixXd x(cell_count(), width());
        x.leftCols(n_phi()) = phi;
        x.rightCols(n_obs()) = psi;
        return x;
    }

    void add_semantic_column(std::string name, const Eigen::VectorXd& column)
    {
        if (column.size() != cell_count())
            throw std::invalid_argument("semantic column length does not match grid");
        if (!((column.array() >= 0.0) && (column.array() <= 1.0)).all())
            throw std::invalid_argument("semantic column '" + name + "' has values outside [0, 1]");
        Eigen::MatrixXd grown(cell_count(), n_obs() + 1);
        grown.leftCols(n_obs()) = psi;
        grown.col(n_obs()) = column;
        psi = std::move(grown);
        psi_names.push_back(std::move(name));
    }
};

/// Adjacency metric exp(-d / resolution) per cell and feature. Features in
/// `vocabulary` without a matching layer are empty (all zeros).
inline FeatureMatrix adjacency_features(const GridSpec& grid, const std::vector<GeoLayer>& layers,
                                        const std::vector<std::string>& vocabulary = default_feature_vocabulary())
{
    grid.validate();
    for (const auto& layer : layers)
        if (std::find(vocabulary.begin(), vocabulary.end(), layer.feature_name) == vocabulary.end())
            throw std::invalid_argument("layer '" + layer.feature_name + "' is not in the feature vocabulary");

    FeatureMatrix fm;
    fm.n_rows = grid.n_rows;
    fm.n_cols = grid.n_cols;
    fm.phi = Eigen::MatrixXd::Zero(grid.cell_count(), static_cast<Eigen::Index>(vocabulary.size()));
    fm.psi = Eigen::MatrixXd::Zero(grid.cell_count(), 0);
    fm.phi_names = vocabulary;

    for (std::size_t f = 0; f < vocabulary.size(); ++f)
    {
        GeoLayer merged{vocabulary[f], {}};
        for (const auto& layer : layers)
            if (layer.feature_name == vocabulary[f])
                merged.geometries.insert(merged.geometries.end(), layer.geometries.begin(), layer.geometries.end());
        const auto d = distance_field(merged, grid);
        for (int c = 0; c < grid.cell_count(); ++c)
        {
            const double di = d[static_cast<std::size_t>(c)];
            fm.phi(c, static_cast<Eigen::Index>(f)) = std::isinf(di) ? 0.0 : std::exp(-di / grid.resolution);
        }
    }
    return fm;
}

// ---------------------------------------------------------------------------
// Feature cache: one text raster per (scenario id, resolution).
//
//   searchgrid-features 1
//   scenario <id>
//   resolution <meters>
//   shape <rows> <cols>
//   fingerprint <hex>
//   features <name>,<name>,...
//   plane <name>
//   <rows lines of comma-separated values, row 0 first>
//   ...

/// FNV-1a, stable across platforms; used to detect stale cache files.
inline std::uint64_t fingerprint(std::string_view bytes)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes)
    {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::filesystem::path feature_cache_path(const std::filesystem::path& dir, std::string_view scenario_id,
                                                double resolution)
{
    char res[64];
    std::snprintf(res, sizeof res, "%.17g", resolution);
    std::string safe;
    for (char c : scenario_id)
        safe.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
    return dir / (safe + "_r" + res + ".features.txt");
}

inline void write_feature_cache(const std::filesystem::path& path, std::string_view scenario_id, const GridSpec& grid,
                                const FeatureMatrix& fm, std::uint64_t fp)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write feature cache " + path.string());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", grid.resolution);
    out << "searchgrid-features 1\n";
    out << "scenario " << scenario_id << "\n";
    out << "resolution " << buf << "\n";
    out << "shape " << grid.n_rows << " " << grid.n_cols << "\n";
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
    out << "fingerprint " << buf << "\n";
    out << "features ";
    for (std::size_t f = 0; f < fm.phi_names.size(); ++f)
        out << (f ? "," : "") << fm.phi_names[f];
    out << "\n";
    for (int f = 0; f < fm.n_phi(); ++f)
    {
        out << "plane " << fm.phi_names[static_cast<std::size_t>(f)] << "\n";
        for (int r = 0; r < grid.n_rows; ++r)
        {
            for (int c = 0; c < grid.n_cols; ++c)
            {
                std::snprintf(buf, sizeof buf, "%.17g", fm.phi(r * grid.n_cols + c, f));
                out << (c ? "," : "") << buf;
            }
            out << "\n";
        }
    }
    if (!out)
        throw std::runtime_error("failed writing feature cache " + path.string());
}

/// Returns nullopt when the file is missing, malformed, or stale.
inline std::optional<FeatureMatrix> read_feature_cache(const std::filesystem::path& path, const GridSpec& grid,
                                                       std::uint64_t fp)
{
    std::ifstream in(path);
    if (!in)
        return std::nullopt;
    std::string line, key;
    auto expect_line = [&](std::string_view prefix) -> std::optional<std::string> {
        if (!std::getline(in, line) || line.rfind(prefix, 0) != 0)
            return std::nullopt;
        return line.substr(prefix.size());
    };
    if (!expect_line("searchgrid-features 1"))
        return std::nullopt;
    if (!expect_line("scenario "))
        return std::nullopt;
    auto res = expect_line("resolution ");
    auto shape = expect_line("shape ");
    auto fps = expect_line("fingerprint ");
    auto names = expect_line("features ");
    if (!res || !shape || !fps || !names)
        return std::nullopt;
    if (std::strtod(res->c_str(), nullptr) != grid.resolution)
        return std::nullopt;
    int rows = 0, cols = 0;
    std::istringstream(*shape) >> rows >> cols;
    if (rows != grid.n_rows || cols != grid.n_cols)
        return std::nullopt;
    if (std::strtoull(fps->c_str(), nullptr, 16) != fp)
        return std::nullopt;

    FeatureMatrix fm;
    fm.n_rows = rows;
    fm.n_cols = cols;
    std::istringstream ns(*names);
    for (std::string n; std::getline(ns, n, ',');)
        fm.phi_names.push_back(n);
    fm.phi = Eigen::MatrixXd::Zero(rows * cols, static_cast<Eigen::Index>(fm.phi_names.size()));
    fm.psi = Eigen::MatrixXd::Zero(rows * cols, 0);
    for (std::size_t f = 0; f < fm.phi_names.size(); ++f)
    {
        auto plane = expect_line("plane ");
        if (!plane || *plane != fm.phi_names[f])
            return std::nullopt;
        for (int r = 0; r < rows; ++r)
        {
            if (!std::getline(in, line))
                return std::nullopt;
            const char* p = line.c_str();
            for (int c = 0; c < cols; ++c)
            {
                char* end = nullptr;
                fm.phi(r * cols + c, static_cast<Eigen::Index>(f)) = std::strtod(p, &end);
                if (end == p)
                    return std::nullopt;
                p = (*end == ',') ? end + 1 : end;
            }
        }
    }
    return fm;
}

} // namespace searchgrid
