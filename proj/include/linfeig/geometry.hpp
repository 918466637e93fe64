#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "linfeig/errors.hpp"

namespace linfeig {

using Point = std::array<double, 2>;

enum class DomainKind { Interval, Rectangle, Disc };

inline const char* to_string(DomainKind k)
{
    switch (k) {
    case DomainKind::Interval: return "interval";
    case DomainKind::Rectangle: return "rectangle";
    case DomainKind::Disc: return "disc";
    }
    return "?";
}

/// Computational domain. Interval(a,b) in R, Rectangle(ax,bx,ay,by) or
/// Disc(center,radius) in R^2; maps take values in R^N.
struct DomainSpec {
    DomainKind kind = DomainKind::Interval;
    double a = 0.0, b = 1.0;             // interval, or x-range of rectangle
    double c = 0.0, d = 1.0;             // y-range of rectangle
    Point center{0.0, 0.0};
    double radius = 1.0;
    int dim = 1;                         // n
    int target_dim = 1;                  // N

    static DomainSpec interval(double a, double b, int target_dim = 1)
    {
        DomainSpec s;
        s.kind = DomainKind::Interval;
        s.a = a;
        s.b = b;
        s.dim = 1;
        s.target_dim = target_dim;
        s.validate();
        return s;
    }

    static DomainSpec rectangle(double ax, double bx, double ay, double by, int target_dim = 1)
    {
        DomainSpec s;
        s.kind = DomainKind::Rectangle;
        s.a = ax;
        s.b = bx;
        s.c = ay;
        s.d = by;
        s.dim = 2;
        s.target_dim = target_dim;
        s.validate();
        return s;
    }

    static DomainSpec disc(Point center, double radius, int target_dim = 1)
    {
        DomainSpec s;
        s.kind = DomainKind::Disc;
        s.center = center;
        s.radius = radius;
        s.dim = 2;
        s.target_dim = target_dim;
        s.validate();
        return s;
    }

    void validate() const
    {
        if (dim != 1 && dim != 2) throw GeometryError("domain dimension must be 1 or 2");
        if (target_dim < 1) throw GeometryError("target dimension N must be >= 1");
        switch (kind) {
        case DomainKind::Interval:
            if (dim != 1) throw GeometryError("interval requires dimension 1");
            if (!(b > a)) throw GeometryError("interval requires b > a");
            break;
        case DomainKind::Rectangle:
            if (dim != 2) throw GeometryError("rectangle requires dimension 2");
            if (!(b > a) || !(d > c)) throw GeometryError("rectangle requires positive side lengths");
            break;
        case DomainKind::Disc:
            if (dim != 2) throw GeometryError("disc requires dimension 2");
            if (!(radius > 0.0)) throw GeometryError("disc requires radius > 0");
            break;
        }
    }

    /// Lebesgue measure |Omega|.
    double measure() const
    {
        switch (kind) {
        case DomainKind::Interval: return b - a;
        case DomainKind::Rectangle: return (b - a) * (d - c);
        case DomainKind::Disc: return std::numbers::pi * radius * radius;
        }
        return 0.0;
    }

    bool contains(const Point& x) const
    {
        switch (kind) {
        case DomainKind::Interval: return x[0] > a && x[0] < b;
        case DomainKind::Rectangle: return x[0] > a && x[0] < b && x[1] > c && x[1] < d;
        case DomainKind::Disc: return std::hypot(x[0] - center[0], x[1] - center[1]) < radius;
        }
        return false;
    }
};

enum class NodeKind : unsigned char { Interior, Boundary };

/// Uniform tensor grid (clipped to the domain for discs) with quadrature weights.
/// Only active nodes are stored; `tensor_to_node` maps (i,j) to the active index.
struct GridSpec {
    int dim = 1;
    std::array<int, 2> nodes_per_axis{1, 1};
    std::array<double, 2> spacing{1.0, 1.0};
    std::array<double, 2> origin{0.0, 0.0};

    std::vector<Point> coords;
    std::vector<std::array<int, 2>> index;
    std::vector<NodeKind> kind;
    std::vector<double> cell_volumes;
    std::vector<int> tensor_to_node;
    std::vector<int> interior;   // active indices of interior nodes, increasing
    std::vector<int> dof_of_node; // -1 for boundary nodes

    std::size_t size() const { return coords.size(); }

    int node_at(int i, int j = 0) const
    {
        if (i < 0 || i >= nodes_per_axis[0] || j < 0 || j >= nodes_per_axis[1]) return -1;
        return tensor_to_node[static_cast<std::size_t>(j) * nodes_per_axis[0] + i];
    }

    /// Neighbour of `node` at tensor offset (di,dj), or -1.
    int neighbour(int node, int di, int dj = 0) const
    {
        const auto& ij = index[static_cast<std::size_t>(node)];
        return node_at(ij[0] + di, ij[1] + dj);
    }

    bool is_boundary(int node) const { return kind[static_cast<std::size_t>(node)] == NodeKind::Boundary; }

    double total_volume() const
    {
        double s = 0.0;
        for (double w : cell_volumes) s += w;
        return s;
    }
};

namespace detail {

inline void finish_grid(GridSpec& g)
{
    g.interior.clear();
    g.dof_of_node.assign(g.size(), -1);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.kind[i] == NodeKind::Interior) {
            g.dof_of_node[i] = static_cast<int>(g.interior.size());
            g.interior.push_back(static_cast<int>(i));
        }
    }
}

inline GridSpec tensor_grid(int dim, std::array<int, 2> n, std::array<double, 2> lo, std::array<double, 2> hi)
{
    GridSpec g;
    g.dim = dim;
    g.nodes_per_axis = n;
    g.origin = lo;
    for (int a = 0; a < 2; ++a) g.spacing[a] = n[a] > 1 ? (hi[a] - lo[a]) / (n[a] - 1) : 1.0;
    g.tensor_to_node.assign(static_cast<std::size_t>(n[0]) * n[1], -1);
    for (int j = 0; j < n[1]; ++j) {
        for (int i = 0; i < n[0]; ++i) {
            const int id = static_cast<int>(g.coords.size());
            g.tensor_to_node[static_cast<std::size_t>(j) * n[0] + i] = id;
            g.index.push_back({i, j});
            g.coords.push_back({lo[0] + i * g.spacing[0], dim == 2 ? lo[1] + j * g.spacing[1] : 0.0});
            const bool edge_x = i == 0 || i == n[0] - 1;
            const bool edge_y = dim == 2 && (j == 0 || j == n[1] - 1);
            g.kind.push_back(edge_x || edge_y ? NodeKind::Boundary : NodeKind::Interior);
            // trapezoidal weights
            double w = g.spacing[0] * (edge_x ? 0.5 : 1.0);
            if (dim == 2) w *= g.spacing[1] * (edge_y ? 0.5 : 1.0);
            g.cell_volumes.push_back(w);
        }
    }
    finish_grid(g);
    return g;
}

inline GridSpec disc_grid(const DomainSpec& dom, int resolution)
{
    const double R = dom.radius;
    const double h = 2.0 * R / (resolution - 1);
    const std::array<double, 2> lo{dom.center[0] - R, dom.center[1] - R};
    const int n = resolution;

    // Cut-cell fractions by 4x4 sub-sampling of the cell centred on each node.
    std::vector<double> frac(static_cast<std::size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double x = lo[0] + i * h, y = lo[1] + j * h;
            int inside = 0;
            for (int sj = 0; sj < 4; ++sj)
                for (int si = 0; si < 4; ++si) {
                    const double px = x + (si - 1.5) * h / 4.0, py = y + (sj - 1.5) * h / 4.0;
                    if (std::hypot(px - dom.center[0], py - dom.center[1]) <= R) ++inside;
                }
            frac[static_cast<std::size_t>(j) * n + i] = inside / 16.0;
        }
    }
    auto strictly_inside = [&](int i, int j) {
        const double x = lo[0] + i * h, y = lo[1] + j * h;
        return std::hypot(x - dom.center[0], y - dom.center[1]) < R * (1.0 - 1e-12);
    };
    auto at = [&](int i, int j) -> double {
        if (i < 0 || j < 0 || i >= n || j >= n) return 0.0;
        return frac[static_cast<std::size_t>(j) * n + i];
    };

    // active: positive weight; interior: strictly inside with all 8 neighbours active.
    std::vector<char> active(frac.size(), 0), interior(frac.size(), 0);
    for (std::size_t t = 0; t < frac.size(); ++t) active[t] = frac[t] > 0.0;
    auto is_active = [&](int i, int j) {
        return i >= 0 && j >= 0 && i < n && j < n && active[static_cast<std::size_t>(j) * n + i];
    };
    auto classify = [&] {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                bool ok = is_active(i, j) && strictly_inside(i, j);
                for (int dj = -1; dj <= 1 && ok; ++dj)
                    for (int di = -1; di <= 1 && ok; ++di) ok = is_active(i + di, j + dj);
                interior[static_cast<std::size_t>(j) * n + i] = ok;
            }
    };
    auto is_interior = [&](int i, int j) {
        return i >= 0 && j >= 0 && i < n && j < n && interior[static_cast<std::size_t>(j) * n + i];
    };

    // Prune boundary nodes with no interior neighbour; their weight moves to the
    // nearest kept neighbour so the quadrature still covers the disc.
    for (;;) {
        classify();
        bool changed = false;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const std::size_t t = static_cast<std::size_t>(j) * n + i;
                if (!active[t] || interior[t]) continue;
                bool adjacent = false;
                for (int dj = -1; dj <= 1 && !adjacent; ++dj)
                    for (int di = -1; di <= 1 && !adjacent; ++di)
                        if ((di || dj) && is_interior(i + di, j + dj)) adjacent = true;
                if (adjacent) continue;
                // move weight to an active neighbour closest to the centre
                int best_i = -1, best_j = -1;
                double best = 1e300;
                for (int dj = -1; dj <= 1; ++dj)
                    for (int di = -1; di <= 1; ++di) {
                        if (!(di || dj) || !is_active(i + di, j + dj)) continue;
                        const double r = std::hypot(lo[0] + (i + di) * h - dom.center[0],
                                                    lo[1] + (j + dj) * h - dom.center[1]);
                        if (r < best) { best = r; best_i = i + di; best_j = j + dj; }
                    }
                if (best_i >= 0) frac[static_cast<std::size_t>(best_j) * n + best_i] += frac[t];
                frac[t] = 0.0;
                active[t] = 0;
                changed = true;
            }
        if (!changed) break;
    }

    GridSpec g;
    g.dim = 2;
    g.nodes_per_axis = {n, n};
    g.spacing = {h, h};
    g.origin = lo;
    g.tensor_to_node.assign(frac.size(), -1);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const std::size_t t = static_cast<std::size_t>(j) * n + i;
            if (!active[t]) continue;
            g.tensor_to_node[t] = static_cast<int>(g.coords.size());
            g.index.push_back({i, j});
            g.coords.push_back({lo[0] + i * h, lo[1] + j * h});
            g.kind.push_back(interior[t] ? NodeKind::Interior : NodeKind::Boundary);
            g.cell_volumes.push_back(at(i, j) * h * h);
        }
    finish_grid(g);
    return g;
}

} // namespace detail

/// Builds the computational grid. `resolution` is the node count per axis.
inline GridSpec build_grid(const DomainSpec& domain, int resolution)
{
    domain.validate();
    if (resolution < 5) throw GeometryError("grid resolution must be >= 5");
    switch (domain.kind) {
    case DomainKind::Interval:
        return detail::tensor_grid(1, {resolution, 1}, {domain.a, 0.0}, {domain.b, 0.0});
    case DomainKind::Rectangle:
        return detail::tensor_grid(2, {resolution, resolution}, {domain.a, domain.c}, {domain.b, domain.d});
    case DomainKind::Disc:
        return detail::disc_grid(domain, resolution);
    }
    throw GeometryError("unknown domain kind");
}

/// Declared tolerance on sum(cell_volumes) - |Omega| for clipped disc grids.
inline double disc_area_tolerance(const GridSpec& g) { return 2.0 * g.spacing[0]; }

/// Geometric quantities entering the a-priori eigenvalue bounds.
struct GeometryDescriptors {
    double diameter = 0.0;
    double perimeter = 0.0;                       // H^{n-1}(boundary)
    std::optional<std::vector<double>> curvature_sup; // sup |kappa_i|, i = 1..n-1; empty for C^0 corners
    std::optional<double> eps0;                   // tubular radius
    double poincare_const_clamped = 0.0;
    double poincare_wirtinger_const = 0.0;
    int dim = 1;

    /// Curvature sup-norms; throws for domains without a C^2 boundary.
    const std::vector<double>& curvatures() const
    {
        if (!curvature_sup) throw BoundUnavailable("upper bound unavailable for this geometry (boundary is not C^2)");
        return *curvature_sup;
    }

    double max_curvature() const
    {
        const auto& k = curvatures();
        double m = 0.0;
        for (double v : k) m = std::max(m, std::abs(v));
        return m;
    }

    double tubular_radius() const
    {
        if (!eps0) throw BoundUnavailable("upper bound unavailable for this geometry (no tubular neighbourhood)");
        return *eps0;
    }
};

inline GeometryDescriptors descriptors(const DomainSpec& domain)
{
    domain.validate();
    GeometryDescriptors g;
    g.dim = domain.dim;
    switch (domain.kind) {
    case DomainKind::Interval: {
        const double len = domain.b - domain.a;
        g.diameter = len;
        g.perimeter = 2.0; // counting measure of the two end points
        g.curvature_sup = std::vector<double>{};
        g.eps0 = std::min(1.0, len / 2.0) / 2.0;
        break;
    }
    case DomainKind::Rectangle: {
        const double w = domain.b - domain.a, h = domain.d - domain.c;
        g.diameter = std::hypot(w, h);
        g.perimeter = 2.0 * (w + h);
        break;
    }
    case DomainKind::Disc: {
        const double R = domain.radius;
        g.diameter = 2.0 * R;
        g.perimeter = 2.0 * std::numbers::pi * R;
        g.curvature_sup = std::vector<double>{1.0 / R};
        g.eps0 = std::min(1.0, R) / 2.0;
        break;
    }
    }
    g.poincare_const_clamped = g.diameter;
    g.poincare_wirtinger_const = g.diameter;
    return g;
}

struct Projection {
    Point proj{0.0, 0.0};
    double dist = 0.0;
};

/// Nearest boundary point and distance for x in the closure of a disc or interval.
inline Projection boundary_projection(const DomainSpec& domain, const Point& x)
{
    domain.validate();
    switch (domain.kind) {
    case DomainKind::Interval: {
        if (x[0] < domain.a || x[0] > domain.b) throw GeometryError("point outside the domain closure");
        const double da = x[0] - domain.a, db = domain.b - x[0];
        if (da == db) throw GeometryError("projection not unique");
        return da < db ? Projection{{domain.a, 0.0}, da} : Projection{{domain.b, 0.0}, db};
    }
    case DomainKind::Disc: {
        const double dx = x[0] - domain.center[0], dy = x[1] - domain.center[1];
        const double r = std::hypot(dx, dy);
        if (r > domain.radius) throw GeometryError("point outside the domain closure");
        if (r == 0.0) throw GeometryError("projection not unique");
        const double s = domain.radius / r;
        return {{domain.center[0] + s * dx, domain.center[1] + s * dy}, domain.radius - r};
    }
    case DomainKind::Rectangle:
        throw GeometryError("boundary projection requires a C^2 boundary or an interval");
    }
    throw GeometryError("unknown domain kind");
}

} // namespace linfeig
