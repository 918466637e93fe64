#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "linfeig/psolver.hpp"

namespace linfeig {

enum class MeasureKind { Scalar, Tensor };

/// Absolutely continuous measure on the grid. `density` is taken with respect
/// to the normalised Lebesgue measure L^n/|Omega|, so the mass carried by a node
/// is density * cell_volume / |Omega|. Tensor densities store `block` entries
/// per node in the [k][a][b] layout.
struct DiscreteMeasure {
    MeasureKind kind = MeasureKind::Scalar;
    std::size_t block = 1;
    std::vector<double> density;
    std::vector<double> cell_volumes;
    double domain_volume = 1.0;
    double total_variation = 0.0;

    std::size_t nodes() const { return cell_volumes.size(); }

    /// |density| at a node (Frobenius norm for tensors).
    double magnitude(std::size_t node) const
    {
        if (kind == MeasureKind::Scalar) return std::abs(density[node]);
        double s = 0.0;
        for (std::size_t j = 0; j < block; ++j) s += density[node * block + j] * density[node * block + j];
        return std::sqrt(s);
    }

    /// Mass carried by a node, |density| * cell_volume / |Omega|.
    double node_mass(std::size_t node) const { return magnitude(node) * cell_volumes[node] / domain_volume; }

    void finalise()
    {
        std::vector<double> t(nodes());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = node_mass(i);
        total_variation = pairwise_sum(t);
    }
};

struct MeasurePair {
    double p = 0.0;
    double Lambda_p = 0.0;
    DiscreteMeasure M, nu;
};

/// M_p = (f/Lambda_p)^{p-1} df and nu_p = g^{p-1} as densities against
/// L^n/|Omega|, evaluated in log form so large p does not overflow.
inline MeasurePair assemble_measures(const PProblem& prob, std::span<const double> u, double p, double Lambda_p)
{
    if (!(Lambda_p > 0.0)) throw NumericalError("measures require Lambda_p > 0");
    const Discretization& d = prob.disc();
    const Integrands it = prob.integrands(u);
    const std::size_t nn = d.nodes(), hs = d.shape().hessian_size();
    MeasurePair m;
    m.p = p;
    m.Lambda_p = Lambda_p;
    for (DiscreteMeasure* dm : {&m.M, &m.nu}) {
        dm->cell_volumes.assign(d.weights().begin(), d.weights().end());
        dm->domain_volume = d.volume();
    }
    m.M.kind = MeasureKind::Tensor;
    m.M.block = hs;
    m.M.density.assign(nn * hs, 0.0);
    m.nu.density.assign(nn, 0.0);
    const double logL = std::log(Lambda_p);
    parallel_for(nn, [&](std::size_t v) {
        if (it.f[v] > 0.0) {
            const double s = std::exp((p - 1.0) * (std::log(it.f[v]) - logL));
            for (std::size_t j = 0; j < hs; ++j) m.M.density[v * hs + j] = s * it.df[v * hs + j];
        }
        if (it.g[v] > 0.0) m.nu.density[v] = std::exp((p - 1.0) * std::log(it.g[v]));
    });
    m.M.finalise();
    m.nu.finalise();
    return m;
}

inline MeasurePair assemble_measures(const PProblem& prob, const PRunResult& r)
{
    if (!r.converged) throw NumericalError("measures require a converged run");
    return assemble_measures(prob, r.u, r.p, r.Lambda_p);
}

struct MassBoundsReport {
    double nu_mass = 0.0;
    double nu_limit = 1.0 + 1e-8;
    double M_mass = 0.0;
    double M_limit = 0.0;  ///< (C8/C1)^{1-1/p} (C5 (Lambda_p+1)^beta + C6), before slack
    double slack = 0.0;
    bool nu_ok = false, M_ok = false;
    bool passed() const { return nu_ok && M_ok; }
    double nu_margin() const { return nu_limit - nu_mass; }
    double M_margin() const { return M_limit * (1.0 + slack) - M_mass; }
};

inline MassBoundsReport mass_bounds_report(const MeasurePair& m, const FConstants& fc, const GConstants& gc,
                                           double slack = 1e-10)
{
    MassBoundsReport r;
    r.nu_mass = m.nu.total_variation;
    r.M_mass = m.M.total_variation;
    r.M_limit = std::pow(gc.C8 / fc.C1, 1.0 - 1.0 / m.p) * (fc.C5 * std::pow(m.Lambda_p + 1.0, fc.beta) + fc.C6);
    r.slack = slack;
    r.nu_ok = r.nu_mass <= r.nu_limit;
    r.M_ok = r.M_mass <= r.M_limit * (1.0 + slack);
    return r;
}

/// Relative gap in  int D^2phi : dM_p = Lambda int (d_eta g.phi + d_P g:Dphi) dnu_p,
/// maximised over the test fields. `Lambda` defaults to the measures' Lambda_p.
/// A field's gap is measured against |lhs|, or against the Cauchy-Schwarz scale
/// ||M_p|| ||D^2phi|| when the lhs is small compared with it.
inline double pairing_residual(const PProblem& prob, const MeasurePair& m, std::span<const double> u,
                               const std::vector<std::vector<double>>& basis,
                               double Lambda = std::numeric_limits<double>::quiet_NaN())
{
    if (std::isnan(Lambda)) Lambda = m.Lambda_p;
    const Discretization& d = prob.disc();
    const Integrands it = prob.integrands(u, false, true);
    const std::size_t nn = d.nodes(), hs = d.shape().hessian_size(), gs = d.shape().gradient_size();
    const std::size_t N = static_cast<std::size_t>(d.target_dim());
    const double W = d.volume();
    const std::span<const double> wt = d.weights();

    // lhs(phi) = <hessian_adjoint(w/W M), phi>, rhs(phi) = <value/gradient adjoints of w/W nu dg, phi>
    std::vector<double> sm(nn * hs), se(nn * N), sp(nn * gs), msq(nn);
    for (std::size_t v = 0; v < nn; ++v) {
        const double c = wt[v] / W;
        double q = 0.0;
        for (std::size_t j = 0; j < hs; ++j) {
            sm[v * hs + j] = c * m.M.density[v * hs + j];
            q += m.M.density[v * hs + j] * m.M.density[v * hs + j];
        }
        msq[v] = wt[v] * q;
        const double nuv = c * m.nu.density[v];
        for (std::size_t k = 0; k < N; ++k) se[v * N + k] = nuv * it.dg_eta[v * N + k];
        for (std::size_t j = 0; j < gs; ++j) sp[v * gs + j] = nuv * it.dg_P[v * gs + j];
    }
    const std::vector<double> a = d.hessian_adjoint(sm);
    const std::vector<double> be = d.value_adjoint(se), bp = d.gradient_adjoint(sp);
    const double m_l2 = std::sqrt(pairwise_sum(msq) / W);

    double worst = 0.0;
    for (const auto& phi : basis) {
        const double lhs = dot(a, phi);
        const double rhs = Lambda * (dot(be, phi) + dot(bp, phi));
        const double cs = m_l2 * prob.hessian_l2(phi);
        if (cs == 0.0 && lhs == 0.0 && rhs == 0.0) continue;
        const double denom = std::abs(lhs) >= 0.1 * cs ? std::abs(lhs) : cs;
        worst = std::max(worst, denom > 0.0 ? std::abs(lhs - rhs) / denom : std::numeric_limits<double>::infinity());
    }
    return worst;
}

/// Fraction of nu_p mass on nodes where g >= level * max g.
inline double concentration(const PProblem& prob, const MeasurePair& m, std::span<const double> u, double level = 0.95)
{
    const Integrands it = prob.integrands(u, false, true);
    const double gmax = linf_norm(it.g);
    if (m.nu.total_variation == 0.0) return 0.0;
    std::vector<double> t(m.nu.nodes(), 0.0);
    for (std::size_t v = 0; v < t.size(); ++v)
        if (it.g[v] >= level * gmax) t[v] = m.nu.node_mass(v);
    return pairwise_sum(t) / m.nu.total_variation;
}

/// Continuous test function on the closure of the domain: phi for nu pairings;
/// the tensor test field for M is phi times the identity in every component.
struct TestFunction {
    std::string name;
    std::function<double(const Point&)> phi;
};

inline std::vector<TestFunction> default_test_functions(const DomainSpec& dom)
{
    Point c{0.0, 0.0};
    double half = 1.0;
    switch (dom.kind) {
    case DomainKind::Interval: c = {0.5 * (dom.a + dom.b), 0.0}; half = 0.5 * (dom.b - dom.a); break;
    case DomainKind::Rectangle: c = {0.5 * (dom.a + dom.b), 0.5 * (dom.c + dom.d)}; half = 0.5 * (dom.b - dom.a); break;
    case DomainKind::Disc: c = dom.center; half = dom.radius; break;
    }
    return {
        {"one", [](const Point&) { return 1.0; }},
        {"odd_x", [c, half](const Point& x) { return (x[0] - c[0]) / half; }},
        {"centre_bump", [c, half](const Point& x) {
             const double q = (std::pow(x[0] - c[0], 2) + std::pow(x[1] - c[1], 2)) / (half * half);
             return q < 1.0 ? std::pow(1.0 - q, 2) : 0.0;
         }},
        {"radial_square", [c, half](const Point& x) {
             return (std::pow(x[0] - c[0], 2) + std::pow(x[1] - c[1], 2)) / (half * half);
         }},
    };
}

/// <phi, nu> and <phi I, M> for one measure pair.
inline std::pair<double, double> pair_with(const GridSpec& grid, const MeasurePair& m, const TestFunction& tf,
                                           TensorShape shape)
{
    const std::size_t nn = m.nu.nodes(), hs = shape.hessian_size();
    std::vector<double> tn(nn), tm(nn);
    for (std::size_t v = 0; v < nn; ++v) {
        const double phi = tf.phi(grid.coords[v]);
        const double c = m.nu.cell_volumes[v] / m.nu.domain_volume;
        tn[v] = c * phi * m.nu.density[v];
        double tr = 0.0;
        for (int k = 0; k < shape.target_dim; ++k)
            for (int a = 0; a < shape.dim; ++a) tr += m.M.density[v * hs + shape.index(k, a, a)];
        tm[v] = c * phi * tr;
    }
    return {pairwise_sum(tn), pairwise_sum(tm)};
}

struct WeakStarRow {
    std::string name;
    std::vector<double> p;
    std::vector<double> nu_pairing, M_pairing;
    std::vector<double> nu_cauchy, M_cauchy; ///< |consecutive differences|
};

/// Pairings of fixed test functions with the measure sequence and their Cauchy differences.
inline std::vector<WeakStarRow> weakstar_trace(const GridSpec& grid, TensorShape shape,
                                               const std::vector<MeasurePair>& seq,
                                               const std::vector<TestFunction>& tests)
{
    if (seq.size() < 3) throw NumericalError("weak-* trace needs at least 3 continuation steps");
    std::vector<WeakStarRow> rows;
    for (const auto& tf : tests) {
        WeakStarRow row;
        row.name = tf.name;
        for (const auto& m : seq) {
            const auto [n, M] = pair_with(grid, m, tf, shape);
            row.p.push_back(m.p);
            row.nu_pairing.push_back(n);
            row.M_pairing.push_back(M);
        }
        for (std::size_t i = 1; i < seq.size(); ++i) {
            row.nu_cauchy.push_back(std::abs(row.nu_pairing[i] - row.nu_pairing[i - 1]));
            row.M_cauchy.push_back(std::abs(row.M_pairing[i] - row.M_pairing[i - 1]));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace linfeig
