#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace searchgrid
{

/// Planar point or displacement in meters.
struct Vec2
{
    double x = 0.0;
    double y = 0.0;

    friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Twice the signed area of triangle (a, b, c); positive when counterclockwise.
inline constexpr double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b)
{
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0)
        return norm(p - a);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return norm(p - (a + t * ab));
}

/// Signed shoelace area; positive for counterclockwise rings.
inline double signed_area(std::span<const Vec2> ring)
{
    double twice = 0.0;
    for (std::size_t i = 0, n = ring.size(); i < n; ++i)
        twice += cross(ring[i], ring[(i + 1) % n]);
    return 0.5 * twice;
}

inline Vec2 polygon_centroid(std::span<const Vec2> ring)
{
    double a2 = 0.0;
    Vec2 acc;
    for (std::size_t i = 0, n = ring.size(); i < n; ++i)
    {
        const Vec2 p = ring[i];
        const Vec2 q = ring[(i + 1) % n];
        const double c = cross(p, q);
        a2 += c;
        acc = acc + c * (p + q);
    }
    if (a2 == 0.0)
    {
        Vec2 mean;
        for (auto p : ring)
            mean = mean + p;
        return (1.0 / static_cast<double>(ring.size())) * mean;
    }
    return (1.0 / (3.0 * a2)) * acc;
}

/// Even-odd rule; points on the boundary may land on either side.
inline bool point_in_polygon(Vec2 p, std::span<const Vec2> ring)
{
    bool inside = false;
    for (std::size_t i = 0, n = ring.size(), j = n - 1; i < n; j = i++)
    {
        const Vec2 a = ring[i];
        const Vec2 b = ring[j];
        if ((a.y > p.y) != (b.y > p.y))
        {
            const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x_cross)
                inside = !inside;
        }
    }
    return inside;
}

inline double distance_to_ring(Vec2 p, std::span<const Vec2> ring)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0, n = ring.size(); i < n; ++i)
        best = std::min(best, point_segment_distance(p, ring[i], ring[(i + 1) % n]));
    return best;
}

namespace detail
{
inline bool on_segment(Vec2 a, Vec2 b, Vec2 p)
{
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}
inline int sign(double v) { return (v > 0.0) - (v < 0.0); }
} // namespace detail

/// Closed-segment intersection test, including touching and collinear overlap.
inline bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2)
{
    using detail::on_segment;
    using detail::sign;
    const int d1 = sign(orient(q1, q2, p1));
    const int d2 = sign(orient(q1, q2, p2));
    const int d3 = sign(orient(p1, p2, q1));
    const int d4 = sign(orient(p1, p2, q2));
    if (d1 * d2 < 0 && d3 * d4 < 0)
        return true;
    return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
           (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

/// True when two non-adjacent edges of the closed ring touch or cross.
inline bool ring_self_intersects(std::span<const Vec2> ring)
{
    const std::size_t n = ring.size();
    if (n < 4)
        return false;
    for (std::size_t i = 0; i < n; ++i)
    {
        for (std::size_t j = i + 1; j < n; ++j)
        {
            const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (adjacent)
                continue;
            if (segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]))
                return true;
        }
    }
    return false;
}

/// Andrew's monotone chain. Counterclockwise, collinear points dropped.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts)
{
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3)
        return pts;
    std::vector<Vec2> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        while (k >= 2 && orient(hull[k - 2], hull[k - 1], pts[i]) <= 0.0)
            --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i)
    {
        while (k >= t && orient(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0.0)
            --k;
        hull[k++] = pts[i - 1];
    }
    hull.resize(k - 1);
    return hull;
}

/// Rotation of a point about the origin by `radians`.
inline Vec2 rotate(Vec2 p, double radians)
{
    const double c = std::cos(radians);
    const double s = std::sin(radians);
    return {c * p.x - s * p.y, s * p.x + c * p.y};
}

} // namespace searchgrid
