#pragma once

#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linfeig/errors.hpp"
#include "linfeig/geometry.hpp"
#include "linfeig/numeric.hpp"
#include "linfeig/sym_tensor.hpp"

namespace linfeig {

enum class BoundaryMode { Clamped, Hinged };

inline const char* to_string(BoundaryMode m) { return m == BoundaryMode::Clamped ? "clamped" : "hinged"; }

inline BoundaryMode parse_boundary_mode(const std::string& s)
{
    if (s == "clamped") return BoundaryMode::Clamped;
    if (s == "hinged") return BoundaryMode::Hinged;
    throw GeometryError("unknown boundary mode '" + s + "' (expected clamped or hinged)");
}

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Node values of u : Omega -> R^N, node-major (values[node * N + k]).
struct GridField {
    std::vector<double> values;
    int target_dim = 1;
    BoundaryMode bc = BoundaryMode::Hinged;
};

/// Finite-difference operators on a grid. Unknowns are the interior node values,
/// component-major (x[k * n_interior + i]); boundary values are zero and the
/// boundary-condition ghosts are folded into the stencils.
class Discretization {
public:
    Discretization(DomainSpec domain, int resolution, BoundaryMode bc)
        : domain_(std::move(domain)), grid_(build_grid(domain_, resolution)), bc_(bc), resolution_(resolution)
    {
        shape_ = {domain_.target_dim, domain_.dim};
        volume_ = pairwise_sum(grid_.cell_volumes);
        if (grid_.interior.empty()) throw GeometryError("grid has no interior nodes");
        build_operators();
    }

    const DomainSpec& domain() const { return domain_; }
    const GridSpec& grid() const { return grid_; }
    BoundaryMode bc() const { return bc_; }
    int resolution() const { return resolution_; }
    TensorShape shape() const { return shape_; }
    int target_dim() const { return shape_.target_dim; }
    int dim() const { return shape_.dim; }
    std::size_t nodes() const { return grid_.size(); }
    std::size_t interior_count() const { return grid_.interior.size(); }
    std::size_t dof_count() const { return interior_count() * static_cast<std::size_t>(shape_.target_dim); }
    /// Quadrature volume sum(cell_volumes); used as |Omega| in every mean.
    double volume() const { return volume_; }
    std::span<const double> weights() const { return grid_.cell_volumes; }

    /// D_ab : interior values -> node values of d^2 u / dx_a dx_b.
    const SparseMatrix& hessian_op(int a, int b) const
    {
        if (a > b) std::swap(a, b);
        return hess_[static_cast<std::size_t>(a * 2 + b)];
    }
    const SparseMatrix& gradient_op(int a) const { return grad_[static_cast<std::size_t>(a)]; }

    GridField field(std::span<const double> dofs) const
    {
        check_dofs(dofs);
        const std::size_t N = static_cast<std::size_t>(shape_.target_dim), ni = interior_count();
        GridField f{std::vector<double>(nodes() * N, 0.0), shape_.target_dim, bc_};
        for (std::size_t k = 0; k < N; ++k)
            for (std::size_t i = 0; i < ni; ++i)
                f.values[static_cast<std::size_t>(grid_.interior[i]) * N + k] = dofs[k * ni + i];
        return f;
    }

    /// Interior values of a field; boundary entries are dropped.
    std::vector<double> dofs(const GridField& f) const
    {
        const std::size_t N = static_cast<std::size_t>(shape_.target_dim), ni = interior_count();
        if (f.values.size() != nodes() * N) throw GeometryError("field size does not match grid");
        std::vector<double> x(dof_count());
        for (std::size_t k = 0; k < N; ++k)
            for (std::size_t i = 0; i < ni; ++i)
                x[k * ni + i] = f.values[static_cast<std::size_t>(grid_.interior[i]) * N + k];
        return x;
    }

    /// Samples u at the interior nodes (boundary values are forced to zero).
    template <class Fn>
    std::vector<double> sample(Fn&& u) const
    {
        const std::size_t N = static_cast<std::size_t>(shape_.target_dim), ni = interior_count();
        std::vector<double> x(dof_count());
        for (std::size_t i = 0; i < ni; ++i) {
            const Point& p = grid_.coords[static_cast<std::size_t>(grid_.interior[i])];
            for (std::size_t k = 0; k < N; ++k) x[k * ni + i] = u(p, static_cast<int>(k));
        }
        return x;
    }

    /// Du at every node, layout [node][k][a] (size nodes * N * n).
    std::vector<double> gradient(std::span<const double> dofs) const
    {
        check_dofs(dofs);
        const std::size_t N = static_cast<std::size_t>(shape_.target_dim), n = static_cast<std::size_t>(shape_.dim);
        const std::size_t ni = interior_count(), nn = nodes();
        std::vector<double> out(nn * N * n);
        for (std::size_t k = 0; k < N; ++k) {
            Eigen::Map<const Eigen::VectorXd> xk(dofs.data() + k * ni, static_cast<Eigen::Index>(ni));
            for (std::size_t a = 0; a < n; ++a) {
                const Eigen::VectorXd d = grad_[a] * xk;
                for (std::size_t v = 0; v < nn; ++v) out[(v * N + k) * n + a] = d[static_cast<Eigen::Index>(v)];
            }
        }
        return out;
    }

    /// D^2u at every node, layout [node][k][a][b] (size nodes * N * n * n), symmetric.
    std::vector<double> hessian(std::span<const double> dofs) const
    {
        check_dofs(dofs);
        const std::size_t N = static_cast<std::size_t>(shape_.target_dim), n = static_cast<std::size_t>(shape_.dim);
        const std::size_t ni = interior_count(), nn = nodes(), hs = shape_.hessian_size();
        std::vector<double> out(nn * hs);
        for (std::size_t k = 0; k < N; ++k) {
            Eigen::Map<const Eigen::VectorXd> xk(dofs.data() + k * ni, static_cast<Eigen::Index>(ni));
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = a; b < n; ++b) {
                    const Eigen::VectorXd d = hessian_op(static_cast<int>(a), static_cast<int>(b)) * xk;
                    for (std::size_t v = 0; v < nn; ++v) {
                        const double val = d[static_cast<Eigen::Index>(v)];
                        out[v * hs + (k * n + a) * n + b] = val;
                        out[v * hs + (k * n + b) * n + a] = val;
                    }
                }
        }
        return out;
    }

    /// Transpose of `hessian`: sigma laid out [node][k][a][b] -> dofs, i.e.
    /// returns x* with <x*, y> = sum_node sigma(node) : D^2y(node).
    std::vector<double> hessian_adjoint(std::span<const double> sigma) const
    {
        const std::size_t N = static_cast<std::size_t>(shape_.target_dim), n = static_cast<std::size_t>(shape_.dim);
        const std::size_t ni = interior_count(), nn = nodes(), hs = shape_.hessian_size();
        if (sigma.size() != nn * hs) throw GeometryError("hessian_adjoint: size mismatch");
        std::vector<double> out(dof_count(), 0.0);
        Eigen::VectorXd s(static_cast<Eigen::Index>(nn));
        for (std::size_t k = 0; k < N; ++k) {
            Eigen::Map<Eigen::VectorXd> ok(out.data() + k * ni, static_cast<Eigen::Index>(ni));
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = a; b < n; ++b) {
                    for (std::size_t v = 0; v < nn; ++v) {
                        double val = sigma[v * hs + (k * n + a) * n + b];
                        if (a != b) val += sigma[v * hs + (k * n + b) * n + a];
                        s[static_cast<Eigen::Index>(v)] = val;
                    }
                    ok += hessian_op(static_cast<int>(a), static_cast<int>(b)).transpose() * s;
                }
        }
        return out;
    }

    /// Transpose of `gradient`: tau laid out [node][k][a] -> dofs.
    std::vector<double> gradient_adjoint(std::span<const double> tau) const
    {
        const std::size_t N = static_cast<std::size_t>(shape_.target_dim), n = static_cast<std::size_t>(shape_.dim);
        const std::size_t ni = interior_count(), nn = nodes();
        if (tau.size() != nn * N * n) throw GeometryError("gradient_adjoint: size mismatch");
        std::vector<double> out(dof_count(), 0.0);
        Eigen::VectorXd s(static_cast<Eigen::Index>(nn));
        for (std::size_t k = 0; k < N; ++k) {
            Eigen::Map<Eigen::VectorXd> ok(out.data() + k * ni, static_cast<Eigen::Index>(ni));
            for (std::size_t a = 0; a < n; ++a) {
                for (std::size_t v = 0; v < nn; ++v) s[static_cast<Eigen::Index>(v)] = tau[(v * N + k) * n + a];
                ok += grad_[a].transpose() * s;
            }
        }
        return out;
    }

    /// Transpose of the value prolongation: node values [node][k] -> dofs.
    std::vector<double> value_adjoint(std::span<const double> values) const
    {
        GridField f{std::vector<double>(values.begin(), values.end()), shape_.target_dim, bc_};
        return dofs(f);
    }

private:
    using Terms = std::vector<std::pair<int, double>>; // (node, coefficient)

    void check_dofs(std::span<const double> dofs) const
    {
        if (dofs.size() != dof_count()) throw GeometryError("dof vector size does not match grid");
    }

    /// u(x_node + offset) expressed through stored nodes, using ghost reflection
    /// through x_node when the offset node is missing.
    Terms value_at(int node, int di, int dj) const
    {
        if (di == 0 && dj == 0) return {{node, 1.0}};
        const int m = grid_.neighbour(node, di, dj);
        if (m >= 0) return {{m, 1.0}};
        const int mirror = grid_.neighbour(node, -di, -dj);
        if (mirror < 0) return {{node, 1.0}};
        if (bc_ == BoundaryMode::Hinged) return {{node, 2.0}, {mirror, -1.0}};
        return {{mirror, 1.0}};
    }

    static void add(Terms& acc, const Terms& t, double c)
    {
        for (auto [node, w] : t) acc.emplace_back(node, c * w);
    }

    Terms hessian_terms(int node, int a, int b) const
    {
        Terms t;
        const double ha = grid_.spacing[static_cast<std::size_t>(a)], hb = grid_.spacing[static_cast<std::size_t>(b)];
        auto off = [](int axis, int s) { return axis == 0 ? std::array<int, 2>{s, 0} : std::array<int, 2>{0, s}; };
        if (a == b) {
            const auto p = off(a, 1), m = off(a, -1);
            add(t, value_at(node, p[0], p[1]), 1.0 / (ha * ha));
            add(t, value_at(node, 0, 0), -2.0 / (ha * ha));
            add(t, value_at(node, m[0], m[1]), 1.0 / (ha * ha));
        } else {
            const double c = 1.0 / (4.0 * ha * hb);
            add(t, value_at(node, 1, 1), c);
            add(t, value_at(node, 1, -1), -c);
            add(t, value_at(node, -1, 1), -c);
            add(t, value_at(node, -1, -1), c);
        }
        return t;
    }

    Terms gradient_terms(int node, int a) const
    {
        Terms t;
        const double h = grid_.spacing[static_cast<std::size_t>(a)];
        auto nb = [&](int s) { return a == 0 ? grid_.neighbour(node, s, 0) : grid_.neighbour(node, 0, s); };
        const bool fwd = nb(1) >= 0, bwd = nb(-1) >= 0;
        if (!grid_.is_boundary(node) || bc_ == BoundaryMode::Clamped || (fwd && bwd)) {
            const auto p = a == 0 ? std::array<int, 2>{1, 0} : std::array<int, 2>{0, 1};
            add(t, value_at(node, p[0], p[1]), 0.5 / h);
            add(t, value_at(node, -p[0], -p[1]), -0.5 / h);
            return t;
        }
        // Hinged boundary node with a missing side: one-sided differences.
        const int s = fwd ? 1 : -1;
        if (nb(s) < 0) return t;
        if (nb(2 * s) >= 0) {
            t.emplace_back(node, -1.5 * s / h);
            t.emplace_back(nb(s), 2.0 * s / h);
            t.emplace_back(nb(2 * s), -0.5 * s / h);
        } else {
            t.emplace_back(node, -1.0 * s / h);
            t.emplace_back(nb(s), 1.0 * s / h);
        }
        return t;
    }

    SparseMatrix assemble(auto&& terms_of) const
    {
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t v = 0; v < nodes(); ++v) {
            for (auto [node, w] : terms_of(static_cast<int>(v))) {
                const int dof = grid_.dof_of_node[static_cast<std::size_t>(node)];
                if (dof >= 0 && w != 0.0) trip.emplace_back(static_cast<int>(v), dof, w);
            }
        }
        SparseMatrix m(static_cast<Eigen::Index>(nodes()), static_cast<Eigen::Index>(interior_count()));
        m.setFromTriplets(trip.begin(), trip.end());
        m.makeCompressed();
        return m;
    }

    void build_operators()
    {
        const int n = shape_.dim;
        for (int a = 0; a < n; ++a) {
            grad_[static_cast<std::size_t>(a)] = assemble([&](int v) { return gradient_terms(v, a); });
            for (int b = a; b < n; ++b)
                hess_[static_cast<std::size_t>(a * 2 + b)] = assemble([&](int v) { return hessian_terms(v, a, b); });
        }
    }

    DomainSpec domain_;
    GridSpec grid_;
    BoundaryMode bc_;
    int resolution_;
    TensorShape shape_;
    double volume_ = 0.0;
    std::array<SparseMatrix, 4> hess_;
    std::array<SparseMatrix, 2> grad_;
};

// ---------------------------------------------------------------------------
// Rescaled L^p quadrature
// ---------------------------------------------------------------------------

/// ((1/|Omega|) sum w |h|^p)^{1/p} = m * mean((|h|/m)^p)^{1/p}, m = max |h|.
struct QuadratureResult {
    double value = 0.0;
    double max_factor = 0.0;
    double log_mean = 0.0; ///< log of mean((|h|/m)^p); -inf for a zero field
};

inline double linf_norm(std::span<const double> h)
{
    double m = 0.0;
    for (double x : h) m = std::max(m, std::abs(x));
    return m;
}

inline QuadratureResult lp_mean_norm(std::span<const double> h, double p, std::span<const double> w)
{
    if (!(p >= 1.0)) throw NumericalError("lp_mean_norm requires p >= 1");
    if (h.size() != w.size()) throw NumericalError("lp_mean_norm: field and weight sizes differ");
    QuadratureResult r;
    r.max_factor = linf_norm(h);
    if (r.max_factor == 0.0) {
        r.log_mean = -std::numeric_limits<double>::infinity();
        return r;
    }
    std::vector<double> terms(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) terms[i] = w[i] * std::pow(std::abs(h[i]) / r.max_factor, p);
    // Dividing by the same pairwise sum of w makes constant fields exact.
    const double mean = std::min(1.0, pairwise_sum(terms) / pairwise_sum(w));
    r.log_mean = std::log(mean);
    r.value = r.max_factor * std::pow(mean, 1.0 / p);
    return r;
}

/// Quasi-uniform C^2 bump fields (1 - |x-c|^2/r^2)^3, `per_component` per
/// component, restricted to interior nodes. Returned as dof vectors.
inline std::vector<std::vector<double>> bump_test_fields(const Discretization& disc, int per_component)
{
    if (per_component < 1) throw NumericalError("test basis size must be >= 1");
    const DomainSpec& dom = disc.domain();
    std::vector<Point> centres;
    double r = 0.0;
    if (dom.kind == DomainKind::Interval) {
        const double len = dom.b - dom.a;
        r = 2.0 * len / (per_component + 1);
        for (int i = 0; i < per_component; ++i) centres.push_back({dom.a + (i + 1) * len / (per_component + 1), 0.0});
    } else {
        r = std::sqrt(dom.measure() / per_component);
        double x0, x1, y0, y1;
        if (dom.kind == DomainKind::Rectangle) {
            x0 = dom.a; x1 = dom.b; y0 = dom.c; y1 = dom.d;
        } else {
            x0 = dom.center[0] - dom.radius; x1 = dom.center[0] + dom.radius;
            y0 = dom.center[1] - dom.radius; y1 = dom.center[1] + dom.radius;
        }
        for (std::uint64_t i = 1; centres.size() < static_cast<std::size_t>(per_component) && i < 100000; ++i) {
            const Point c{x0 + (x1 - x0) * radical_inverse(i, 2), y0 + (y1 - y0) * radical_inverse(i, 3)};
            if (dom.contains(c)) centres.push_back(c);
        }
    }
    std::vector<std::vector<double>> out;
    const int N = disc.target_dim();
    for (int k = 0; k < N; ++k)
        for (const Point& c : centres) {
            auto phi = disc.sample([&](const Point& x, int comp) {
                if (comp != k) return 0.0;
                const double q = (std::pow(x[0] - c[0], 2) + std::pow(x[1] - c[1], 2)) / (r * r);
                return q < 1.0 ? std::pow(1.0 - q, 3) : 0.0;
            });
            if (linf_norm(phi) > 0.0) out.push_back(std::move(phi));
        }
    return out;
}

} // namespace linfeig
