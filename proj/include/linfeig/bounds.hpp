#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "linfeig/densities.hpp"
#include "linfeig/discretization.hpp"
#include "linfeig/geometry.hpp"

namespace linfeig {

/// Constants of the standard mollifier eta(x) = K exp(-1/(1-|x|^2)) on the unit
/// ball of R^n: c = min of eta on the half ball, C = sup |D eta|.
struct MollifierConstants {
    int n = 1;
    double K = 0.0; ///< normalisation, int eta = 1
    double c = 0.0;
    double C = 0.0;
};

namespace detail {

inline double bump(double r) { return r < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) : 0.0; }

/// |d/dr exp(-1/(1-r^2))| = 2r/(1-r^2)^2 exp(-1/(1-r^2)).
inline double bump_slope(double r)
{
    if (r <= 0.0 || r >= 1.0) return 0.0;
    const double s = 1.0 - r * r;
    return 2.0 * r / (s * s) * std::exp(-1.0 / s);
}

/// Composite Simpson rule on [a, b] with an even number of intervals.
template <class Fn>
double simpson(Fn&& fn, double a, double b, int intervals)
{
    if (intervals % 2) ++intervals;
    const double h = (b - a) / intervals;
    double s = fn(a) + fn(b);
    for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * fn(a + i * h);
    return s * h / 3.0;
}

} // namespace detail

inline MollifierConstants mollifier_constants(int n, int resolution = 20000)
{
    if (n != 1 && n != 2) throw NumericalError("mollifier constants are implemented for n = 1, 2");
    MollifierConstants m;
    m.n = n;
    const double mass = n == 1 ? 2.0 * detail::simpson(detail::bump, 0.0, 1.0, resolution)
                               : 2.0 * std::numbers::pi *
                                     detail::simpson([](double r) { return r * detail::bump(r); }, 0.0, 1.0, resolution);
    m.K = 1.0 / mass;
    // the radial profile decreases, so the half-ball minimum sits at |x| = 1/2
    m.c = m.K * detail::bump(0.5);
    // golden-section search for the maximum of the slope on (0, 1)
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = 1.0;
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = detail::bump_slope(x1), f2 = detail::bump_slope(x2);
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        if (f1 < f2) {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + phi * (hi - lo); f2 = detail::bump_slope(x2);
        } else {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - phi * (hi - lo); f1 = detail::bump_slope(x1);
        }
    }
    m.C = m.K * detail::bump_slope(0.5 * (lo + hi));
    return m;
}

/// Volume of the unit ball in R^n.
inline double unit_ball_volume(int n) { return std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0 + 1.0); }

/// (C4 / (diam^alpha (C_inf sup|d_eta g| + sup|d_P g|)^alpha) - C3)^+.
inline double lower_bound_formula(double C3, double C4, double alpha, double diam, double C_inf, double sup_eta,
                                  double sup_P)
{
    const double denom = std::pow(diam, alpha) * std::pow(C_inf * sup_eta + sup_P, alpha);
    if (!(denom > 0.0)) throw BoundUnavailable("lower bound unavailable: vanishing gradient suprema");
    return positive_part(C4 / denom - C3);
}

struct UpperBoundInputs {
    double C5 = 0, C6 = 0, alpha = 2;
    int n = 2;
    double c = 0, C = 0;
    double sup_R = 0;        ///< sup_{0<=t<=1} R(t)
    double max_curvature = 0;
    double eps0 = 0;
    double perimeter = 0;
    double curvature_quotient = 0; ///< sum_i sup over the collar of kappa_i/(1 - kappa_i d)
};

inline double upper_bound_formula(const UpperBoundInputs& in)
{
    const double a = in.alpha;
    const double lead = std::pow(2.0, 5.0 * a) / std::pow(in.c * unit_ball_volume(in.n), a);
    const double geo = std::pow(2.0, 3.0 * in.n) + std::pow(in.max_curvature, in.n);
    const double brace =
        1.0 + (1.0 + in.C / std::pow(in.eps0, in.n + 1)) * in.perimeter + in.curvature_quotient;
    return in.C6 + in.C5 * lead * std::pow(1.0 + in.sup_R, a) * std::pow(geo, a) * std::pow(brace, a);
}

/// Every ingredient of the bounds, kept for the run report.
struct BoundsReport {
    double lower = 0.0;
    std::optional<double> upper;
    std::string upper_note;
    double C3 = 0, C4 = 0, C5 = 0, C6 = 0, alpha = 0, beta = 0;
    double diameter = 0, C_inf = 0, sup_grad_eta = 0, sup_grad_P = 0, gradient_safety = 1.05;
    double perimeter = 0;
    std::vector<double> curvature_sup;
    std::optional<double> eps0;
    double mollifier_c = 0, mollifier_C = 0, omega_n = 0;
    std::optional<double> sup_R;
    std::optional<double> curvature_quotient;
};

/// Lower bound with gradient suprema sampled over {g <= 1}; C(inf, Omega) is
/// the diameter for both boundary modes.
inline double lower_bound(const FConstants& fc, const DensityG& g, const GeometryDescriptors& geo, BoundaryMode bc,
                          TensorShape shape, int samples = 100000, SublevelSup* out = nullptr)
{
    const SublevelSup s = sublevel_sup_gradients(g, 1.0, shape, samples);
    if (out) *out = s;
    const double C_inf = bc == BoundaryMode::Clamped ? geo.poincare_const_clamped : geo.poincare_wirtinger_const;
    return lower_bound_formula(fc.C3, fc.C4, fc.alpha, geo.diameter, C_inf, s.sup_grad_eta, s.sup_grad_P);
}

/// Sum over principal curvatures of sup_{d < eps0} kappa/(1 - kappa d); for
/// constant curvature the sup is attained as d -> eps0.
inline double curvature_quotient(const GeometryDescriptors& geo)
{
    const double eps0 = geo.tubular_radius();
    double s = 0.0;
    for (double k : geo.curvatures()) {
        const double ka = std::abs(k);
        if (ka * eps0 >= 1.0) throw BoundUnavailable("upper bound unavailable: collar wider than the curvature radius");
        s += ka / (1.0 - ka * eps0);
    }
    return s;
}

/// Upper bound for domains with C^2 boundary in dimension n >= 2.
inline double upper_bound(const FConstants& fc, const DensityG& g, const GeometryDescriptors& geo, TensorShape shape,
                          UpperBoundInputs* out = nullptr)
{
    if (geo.dim < 2) throw BoundUnavailable("upper bound unavailable: one-dimensional domain");
    UpperBoundInputs in;
    in.C5 = fc.C5;
    in.C6 = fc.C6;
    in.alpha = fc.alpha;
    in.n = geo.dim;
    in.max_curvature = geo.max_curvature();
    in.eps0 = geo.tubular_radius();
    in.perimeter = geo.perimeter;
    in.curvature_quotient = curvature_quotient(geo);
    const MollifierConstants m = mollifier_constants(geo.dim);
    in.c = m.c;
    in.C = m.C;
    // R is nondecreasing, so the sup equals R(1); the grid is a cross-check.
    double sup = 0.0;
    for (int i = 0; i <= 100; ++i) sup = std::max(sup, constraint_radius_R(g, i / 100.0, shape));
    in.sup_R = sup;
    if (out) *out = in;
    return upper_bound_formula(in);
}

inline BoundsReport compute_bounds(const FConstants& fc, const DensityG& g, const DomainSpec& domain, BoundaryMode bc,
                                   int samples = 100000)
{
    const GeometryDescriptors geo = descriptors(domain);
    const TensorShape shape{domain.target_dim, domain.dim};
    BoundsReport r;
    r.C3 = fc.C3; r.C4 = fc.C4; r.C5 = fc.C5; r.C6 = fc.C6; r.alpha = fc.alpha; r.beta = fc.beta;
    r.diameter = geo.diameter;
    r.C_inf = bc == BoundaryMode::Clamped ? geo.poincare_const_clamped : geo.poincare_wirtinger_const;
    r.perimeter = geo.perimeter;
    if (geo.curvature_sup) r.curvature_sup = *geo.curvature_sup;
    r.eps0 = geo.eps0;
    r.omega_n = unit_ball_volume(domain.dim);
    SublevelSup s;
    r.lower = lower_bound(fc, g, geo, bc, shape, samples, &s);
    r.sup_grad_eta = s.sup_grad_eta;
    r.sup_grad_P = s.sup_grad_P;
    r.gradient_safety = s.safety_factor;
    try {
        UpperBoundInputs in;
        r.upper = upper_bound(fc, g, geo, shape, &in);
        r.mollifier_c = in.c;
        r.mollifier_C = in.C;
        r.sup_R = in.sup_R;
        r.curvature_quotient = in.curvature_quotient;
    } catch (const BoundUnavailable& e) {
        r.upper_note = e.what();
    } catch (const DensityError& e) {
        r.upper_note = std::string("upper bound unavailable: ") + e.what();
    }
    return r;
}

struct SandwichVerdict {
    bool passed = false;
    bool lower_ok = false;
    std::optional<bool> upper_ok;
    std::string message;
};

/// lower <= Lambda_final (1 + slack) and, when available, Lambda_inf <= upper.
inline SandwichVerdict sandwich_check(const BoundsReport& b, double Lambda_final, std::optional<double> Lambda_inf,
                                      double slack)
{
    SandwichVerdict v;
    if (!(Lambda_final > 0.0) || !std::isfinite(Lambda_final)) {
        v.message = "eigenvalue must be positive and finite";
        return v;
    }
    v.lower_ok = b.lower <= Lambda_final * (1.0 + slack);
    if (b.upper) {
        const double L = Lambda_inf.value_or(Lambda_final);
        v.upper_ok = L <= *b.upper;
    }
    v.passed = v.lower_ok && v.upper_ok.value_or(true);
    if (!v.lower_ok) v.message = "lower bound exceeds the computed eigenvalue";
    else if (v.upper_ok && !*v.upper_ok) v.message = "eigenvalue exceeds the upper bound";
    else v.message = "ok";
    return v;
}

} // namespace linfeig
