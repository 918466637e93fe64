#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "linfeig/sym_tensor.hpp"

namespace linfeig {

struct LbfgsSettings {
    int max_iterations = 5000;
    int memory = 12;
    /// Stop when ||grad||_{M^-1} <= gradient_tol.
    double gradient_tol = 1e-10;
    /// Iterations without any decrease of f before giving up.
    int stall_limit = 20;
    /// Iterations without a new smallest gradient norm before giving up.
    int stagnation_limit = 200;
};

struct LbfgsResult {
    std::vector<double> x;
    double f = 0.0;
    double grad_norm = 0.0; ///< ||grad||_{M^-1} at x
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string stop_reason;
    std::vector<double> history; ///< f after every accepted step, starting with f(x0)
};

/// Relative resolution assumed for objective values; accepted steps never raise
/// f by more than this fraction of |f|.
inline constexpr double merit_resolution = 1e-12;

namespace detail {

/// Minimiser of the cubic interpolating (a, fa, da), (b, fb, db), clipped to the
/// interior of [min(a,b), max(a,b)].
inline double cubic_step(double a, double fa, double da, double b, double fb, double db)
{
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    double t;
    if (disc >= 0.0 && std::isfinite(disc)) {
        const double d2 = std::copysign(std::sqrt(disc), b - a);
        t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    } else {
        t = 0.5 * (a + b);
    }
    const double lo = std::min(a, b), hi = std::max(a, b), w = hi - lo;
    if (!std::isfinite(t) || t < lo + 0.1 * w || t > hi - 0.1 * w) t = 0.5 * (a + b);
    return t;
}

} // namespace detail

/// Limited-memory BFGS with a fixed symmetric positive definite preconditioner M:
/// the two-loop recursion starts from H0 = gamma M^{-1}. `fg(x, grad)` returns
/// f(x) and fills grad; `precond(in, out)` applies M^{-1}. Steps satisfy the strong
/// Wolfe conditions, so the recorded history is nonincreasing up to
/// `merit_resolution`.
template <class FG, class Precond>
LbfgsResult lbfgs_minimize(FG&& fg, std::vector<double> x0, Precond&& precond, const LbfgsSettings& s)
{
    const std::size_t n = x0.size();
    LbfgsResult r;
    r.x = std::move(x0);
    std::vector<double> g(n), pg(n), d(n), xt(n), gt(n), q(n);

    auto eval = [&](std::span<const double> x, std::span<double> grad) {
        ++r.evaluations;
        double v = fg(x, grad);
        if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
        return v;
    };

    r.f = eval(r.x, g);
    r.history.push_back(r.f);
    precond(g, pg);
    r.grad_norm = std::sqrt(std::max(0.0, dot(g, pg)));

    struct Pair {
        std::vector<double> s, y;
        double rho;
    };
    std::deque<Pair> mem;
    double gamma = 1.0;
    int stall = 0;
    double best_grad = r.grad_norm;
    int since_best = 0;

    for (;;) {
        if (r.grad_norm <= s.gradient_tol) {
            r.converged = true;
            r.stop_reason = "gradient tolerance";
            break;
        }
        if (r.iterations >= s.max_iterations) {
            r.stop_reason = "iteration budget";
            break;
        }

        // two-loop recursion
        q = g;
        std::vector<double> alpha(mem.size());
        for (std::size_t i = mem.size(); i-- > 0;) {
            alpha[i] = mem[i].rho * dot(mem[i].s, q);
            for (std::size_t j = 0; j < n; ++j) q[j] -= alpha[i] * mem[i].y[j];
        }
        precond(q, d);
        for (double& v : d) v *= gamma;
        for (std::size_t i = 0; i < mem.size(); ++i) {
            const double beta = mem[i].rho * dot(mem[i].y, d);
            for (std::size_t j = 0; j < n; ++j) d[j] += (alpha[i] - beta) * mem[i].s[j];
        }
        for (double& v : d) v = -v;
        double dg0 = dot(g, d);
        if (!(dg0 < 0.0)) {
            mem.clear();
            gamma = 1.0;
            for (std::size_t j = 0; j < n; ++j) d[j] = -pg[j];
            dg0 = dot(g, d);
            if (!(dg0 < 0.0)) {
                r.stop_reason = "no descent direction";
                break;
            }
        }

        // strong Wolfe line search
        constexpr double c1 = 1e-4, c2 = 0.9;
        const double f0 = r.f;
        // Near a minimiser the decrease per step drops below the resolution of f
        // (about 1e-14 relative); inside that band the search is driven by the
        // directional derivative alone and f may move by at most `noise`.
        const double noise = merit_resolution * std::max(std::abs(f0), 1e-300);
        auto armijo = [&](double a, double fa) { return fa <= f0 + c1 * a * dg0 || fa - f0 <= noise; };
        auto phi = [&](double a, double& dphi) {
            for (std::size_t j = 0; j < n; ++j) xt[j] = r.x[j] + a * d[j];
            const double v = eval(xt, gt);
            dphi = dot(gt, d);
            return v;
        };
        double a_prev = 0.0, f_prev = f0, d_prev = dg0;
        double a = mem.empty() && r.iterations == 0 ? std::min(1.0, 1.0 / std::sqrt(-dg0)) : 1.0;
        double a_ok = -1.0, f_ok = 0.0;
        std::vector<double> g_ok;
        auto accept = [&](double aa, double ff) {
            a_ok = aa;
            f_ok = ff;
            g_ok = gt;
        };
        auto zoom = [&](double lo, double flo, double dlo, double hi, double fhi, double dhi) {
            for (int it = 0; it < 40; ++it) {
                double aj;
                if (std::abs(fhi - flo) <= noise && dhi != dlo) {
                    aj = lo - dlo * (hi - lo) / (dhi - dlo);
                    const double mn = std::min(lo, hi), w = std::abs(hi - lo);
                    if (!std::isfinite(aj) || aj < mn + 0.1 * w || aj > mn + 0.9 * w) aj = 0.5 * (lo + hi);
                } else {
                    aj = detail::cubic_step(lo, flo, dlo, hi, fhi, dhi);
                }
                double dj;
                const double fj = phi(aj, dj);
                if (!armijo(aj, fj) || fj > flo + noise) {
                    hi = aj; fhi = fj; dhi = dj;
                } else {
                    if (std::abs(dj) <= -c2 * dg0) { accept(aj, fj); return; }
                    if (dj * (hi - lo) >= 0.0) { hi = lo; fhi = flo; dhi = dlo; }
                    lo = aj; flo = fj; dlo = dj;
                }
                if (std::abs(hi - lo) <= 1e-16 * std::max(1.0, std::abs(lo))) break;
            }
            // Fall back to the best point seen if it decreased f.
            if (lo > 0.0 && flo < f0) {
                double dl;
                const double fl = phi(lo, dl);
                accept(lo, fl);
            }
        };
        for (int it = 0; it < 60; ++it) {
            double da;
            const double fa = phi(a, da);
            if (!armijo(a, fa) || (it > 0 && fa > f_prev + noise)) {
                zoom(a_prev, f_prev, d_prev, a, fa, da);
                break;
            }
            if (std::abs(da) <= -c2 * dg0) { accept(a, fa); break; }
            if (da >= 0.0) {
                zoom(a, fa, da, a_prev, f_prev, d_prev);
                break;
            }
            a_prev = a; f_prev = fa; d_prev = da;
            a *= 4.0;
        }
        if (a_ok <= 0.0 || !(f_ok <= f0 + noise)) {
            if (!mem.empty()) {
                mem.clear();
                gamma = 1.0;
                continue;
            }
            r.stop_reason = "line search failed";
            break;
        }

        // update
        Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
        for (std::size_t j = 0; j < n; ++j) {
            p.s[j] = a_ok * d[j];
            p.y[j] = g_ok[j] - g[j];
            r.x[j] += p.s[j];
        }
        g = g_ok;
        stall = f_ok < r.f ? 0 : stall + 1;
        r.f = f_ok;
        ++r.iterations;
        r.history.push_back(r.f);
        precond(g, pg);
        r.grad_norm = std::sqrt(std::max(0.0, dot(g, pg)));

        const double sy = dot(p.s, p.y);
        if (sy > 1e-300) {
            precond(p.y, q);
            const double yhy = dot(p.y, q);
            if (yhy > 0.0) gamma = sy / yhy;
            p.rho = 1.0 / sy;
            mem.push_back(std::move(p));
            if (static_cast<int>(mem.size()) > s.memory) mem.pop_front();
        }
        if (r.grad_norm < best_grad) {
            best_grad = r.grad_norm;
            since_best = 0;
        } else if (++since_best >= s.stagnation_limit) {
            r.stop_reason = "gradient stagnated";
            break;
        }
        if (stall >= s.stall_limit) {
            r.stop_reason = "no further decrease";
            break;
        }
    }
    return r;
}

} // namespace linfeig
