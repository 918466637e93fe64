#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "linfeig/densities.hpp"
#include "linfeig/discretization.hpp"
#include "linfeig/errors.hpp"

namespace linfeig {

inline constexpr double p_infinity = std::numeric_limits<double>::infinity();

/// Node values of g(t v, t Dv) for a precomputed gradient field.
inline std::vector<double> constraint_density(const Discretization& disc, const DensityG& g,
                                              std::span<const double> dofs, double t = 1.0)
{
    const GridField v = disc.field(dofs);
    const std::vector<double> Dv = disc.gradient(dofs);
    const std::size_t N = static_cast<std::size_t>(disc.target_dim()), gs = disc.shape().gradient_size();
    std::vector<double> out(disc.nodes());
    parallel_for(out.size(), [&](std::size_t node) {
        std::vector<double> eta(N), P(gs);
        for (std::size_t k = 0; k < N; ++k) eta[k] = t * v.values[node * N + k];
        for (std::size_t j = 0; j < gs; ++j) P[j] = t * Dv[node * gs + j];
        out[node] = g.evaluate(eta, P, {}, {});
    });
    return out;
}

/// ||h||_{L^p} (rescaled); p = infinity gives the max.
inline double mean_norm(std::span<const double> h, double p, std::span<const double> w)
{
    return std::isinf(p) ? linf_norm(h) : lp_mean_norm(h, p, w).value;
}

/// ||g(t v, t Dv)||_{L^p}, the p-th root of rho_p(t) = mean of g(t v, t Dv)^p.
inline double rho(const Discretization& disc, const DensityG& g, std::span<const double> v, double p, double t)
{
    if (t < 0.0) throw NumericalError("rho requires t >= 0");
    if (linf_norm(v) == 0.0) throw NumericalError("rho: candidate field is identically zero");
    return mean_norm(constraint_density(disc, g, v, t), p, disc.weights());
}

struct NormalizationResult {
    double t = 1.0;
    double residual = 0.0; ///< | ||g(t v, t Dv)||_p - 1 |
    double t_lo = 0.0, t_hi = 0.0;
    int iterations = 0;
    bool homogeneous_shortcut = false;
};

/// Finds t > 0 with ||g(t v, t Dv)||_{L^p} = 1. Uses t = ||g(v,Dv)||^{-1/k} for
/// k-homogeneous g unless `force_bisection`; otherwise bisection on the bracket
/// found by doubling/halving from t = 1, to relative tolerance `tol` in t.
inline NormalizationResult normalize(const Discretization& disc, const DensityG& g, std::span<const double> v,
                                     double p, double tol = 1e-10, bool force_bisection = false)
{
    if (!(tol > 0.0)) throw NumericalError("normalize requires tol > 0");
    if (!(p >= 1.0)) throw NumericalError("normalize requires p >= 1");
    if (linf_norm(v) == 0.0) throw NumericalError("cannot normalise the zero field");

    // Precompute v and Dv once; t only scales them.
    const GridField vf = disc.field(v);
    const std::vector<double> Dv = disc.gradient(v);
    const std::size_t N = static_cast<std::size_t>(disc.target_dim()), gs = disc.shape().gradient_size();
    std::vector<double> dens(disc.nodes());
    auto norm_at = [&](double t) {
        parallel_for(dens.size(), [&](std::size_t node) {
            std::vector<double> eta(N), P(gs);
            for (std::size_t k = 0; k < N; ++k) eta[k] = t * vf.values[node * N + k];
            for (std::size_t j = 0; j < gs; ++j) P[j] = t * Dv[node * gs + j];
            dens[node] = g.evaluate(eta, P, {}, {});
        });
        return mean_norm(dens, p, disc.weights());
    };

    NormalizationResult r;
    if (const auto k = g.homogeneity(); k && !force_bisection) {
        const double s = norm_at(1.0);
        if (!(s > 0.0)) throw NumericalError("normalize: constraint density vanishes for this field");
        r.t = std::pow(s, -1.0 / *k);
        r.t_lo = r.t_hi = r.t;
        r.homogeneous_shortcut = true;
        r.residual = std::abs(norm_at(r.t) - 1.0);
        return r;
    }

    double lo = 1.0, hi = 1.0;
    if (norm_at(1.0) < 1.0) {
        int n = 0;
        while (norm_at(hi) < 1.0) {
            lo = hi;
            hi *= 2.0;
            if (++n > 200) throw NumericalError("normalize: no bracket within 200 doublings (non-coercive g or v ~ 0)");
        }
    } else {
        int n = 0;
        while (norm_at(lo) >= 1.0) {
            hi = lo;
            lo *= 0.5;
            if (++n > 200) throw NumericalError("normalize: no bracket within 200 halvings");
        }
    }
    while (hi - lo > tol * hi) {
        const double mid = 0.5 * (lo + hi);
        (norm_at(mid) < 1.0 ? lo : hi) = mid;
        ++r.iterations;
        if (r.iterations > 400) break;
    }
    r.t_lo = lo;
    r.t_hi = hi;
    r.t = 0.5 * (lo + hi);
    r.residual = std::abs(norm_at(r.t) - 1.0);
    return r;
}

} // namespace linfeig
