#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "linfeig/bounds.hpp"

using namespace linfeig;

namespace {

double profile(double r) { return r < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) : 0.0; }

// Mass of the unnormalised bump by a midpoint rule with `points` cells
// (on [-1,1] for n = 1, on a square grid over [-1,1]^2 for n = 2).
double midpoint_mass(int n, long points)
{
    if (n == 1) {
        const double h = 2.0 / points;
        double s = 0.0;
        for (long i = 0; i < points; ++i) s += profile(std::abs(-1.0 + (i + 0.5) * h));
        return s * h;
    }
    const long side = static_cast<long>(std::sqrt(static_cast<double>(points)));
    const double h = 2.0 / side;
    double s = 0.0;
    for (long i = 0; i < side; ++i)
        for (long j = 0; j < side; ++j)
            s += profile(std::hypot(-1.0 + (i + 0.5) * h, -1.0 + (j + 0.5) * h));
    return s * h * h;
}

// Largest radial slope of the bump on a uniform scan of (0, 1).
double scanned_max_slope(long points)
{
    double best = 0.0;
    for (long i = 1; i < points; ++i) {
        const double r = static_cast<double>(i) / points, s = 1.0 - r * r;
        best = std::max(best, 2.0 * r / (s * s) * std::exp(-1.0 / s));
    }
    return best;
}

FConstants quadratic_f() { return make_density_f("power", {{"alpha", 2}})->constants(); }

} // namespace

TEST(Mollifier, MatchesMidpointQuadrature)
{
    for (int n : {1, 2}) {
        const MollifierConstants m = mollifier_constants(n);
        const double K = 1.0 / midpoint_mass(n, 1'000'000);
        EXPECT_NEAR(m.K, K, (n == 1 ? 1e-9 : 1e-5) * K) << n;
        EXPECT_NEAR(m.c, K * profile(0.5), (n == 1 ? 1e-9 : 1e-5) * m.c) << n;
        const double C = K * scanned_max_slope(1'000'000);
        EXPECT_NEAR(m.C, C, (n == 1 ? 1e-9 : 1e-5) * C) << n;
        EXPECT_GE(m.C, C * (1.0 - 1e-5)); // the scan can only undershoot
    }
}

TEST(Mollifier, StableUnderRefinement)
{
    for (int n : {1, 2}) {
        const MollifierConstants a = mollifier_constants(n, 20000), b = mollifier_constants(n, 40000);
        EXPECT_NEAR(a.K, b.K, 1e-10 * a.K);
        EXPECT_NEAR(a.c, b.c, 1e-10 * a.c);
        EXPECT_NEAR(a.C, b.C, 1e-10 * a.C);
    }
    EXPECT_THROW(mollifier_constants(3), NumericalError);
}

TEST(LowerBound, FormulaValues)
{
    // |u''|^2 over |u|^2 on the unit interval with exact gradient suprema
    EXPECT_DOUBLE_EQ(lower_bound_formula(0.0, 1.0, 2.0, 1.0, 1.0, 2.0, 0.0), 0.25);
    EXPECT_EQ(lower_bound_formula(1e6, 1.0, 2.0, 1.0, 1.0, 2.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(lower_bound_formula(0.0, 2.0, 4.0, 2.0, 0.5, 1.0, 1.0), 2.0 / (16.0 * std::pow(1.5, 4)));
    EXPECT_THROW(lower_bound_formula(0.0, 1.0, 2.0, 1.0, 1.0, 0.0, 0.0), BoundUnavailable);
}

TEST(LowerBound, HingedBenchmarkBelowEigenvalue)
{
    const BoundsReport b = compute_bounds(quadratic_f(), *value_power_g(2), DomainSpec::interval(0, 1),
                                          BoundaryMode::Hinged, 20000);
    // sampled suprema carry a 5% safety inflation, so the bound is 0.25 / 1.05^2
    EXPECT_NEAR(b.lower, 0.25 / (1.05 * 1.05), 1e-6);
    EXPECT_LE(b.lower, 64.0);
    EXPECT_FALSE(b.upper.has_value());
    EXPECT_NE(b.upper_note.find("upper bound unavailable"), std::string::npos);
}

TEST(UpperBound, UnitDiscMatchesDirectEvaluation)
{
    const BoundsReport b =
        compute_bounds(quadratic_f(), *value_power_g(2), DomainSpec::disc({0, 0}, 1.0), BoundaryMode::Hinged, 20000);
    ASSERT_TRUE(b.upper.has_value());
    EXPECT_TRUE(std::isfinite(*b.upper));

    // C5 = 2, alpha = 2, n = 2, R(1) = 1, kappa = 1, collar 1/2, perimeter 2 pi
    const MollifierConstants m = mollifier_constants(2);
    const double pi = std::numbers::pi;
    const double lead = std::pow(2.0, 10.0) / std::pow(m.c * pi, 2.0);
    const double brace = 1.0 + (1.0 + m.C / 0.125) * 2.0 * pi + 1.0 / (1.0 - 0.5);
    const double expect = 2.0 * lead * 4.0 * std::pow(64.0 + 1.0, 2.0) * brace * brace;
    EXPECT_NEAR(*b.upper, expect, 1e-9 * expect);
    EXPECT_NEAR(*b.upper, 9.98e10, 0.01e10);
    EXPECT_NEAR(*b.curvature_quotient, 2.0, 1e-15);
    EXPECT_NEAR(*b.sup_R, 1.0, 1e-12);
}

TEST(UpperBound, LargeDiscCurvatureQuotient)
{
    const GeometryDescriptors geo = descriptors(DomainSpec::disc({0, 0}, 1e3));
    const double q = curvature_quotient(geo);
    EXPECT_NEAR(q, 1e-3 / (1.0 - 1e-3 * geo.tubular_radius()), 1e-15);
    EXPECT_NEAR(q, 1e-3, 1e-6);
}

TEST(UpperBound, UnavailableForRectangle)
{
    const BoundsReport b = compute_bounds(quadratic_f(), *value_power_g(2), DomainSpec::rectangle(0, 1, 0, 1),
                                          BoundaryMode::Clamped, 20000);
    EXPECT_FALSE(b.upper.has_value());
    EXPECT_NE(b.upper_note.find("upper bound unavailable for this geometry"), std::string::npos);
    EXPECT_GT(b.lower, 0.0);
}

TEST(Sandwich, Verdicts)
{
    BoundsReport b;
    b.lower = 0.25;
    b.upper = 100.0;
    EXPECT_FALSE(sandwich_check(b, 0.0, std::nullopt, 0.01).passed);
    EXPECT_FALSE(sandwich_check(b, std::nan(""), std::nullopt, 0.01).passed);
    EXPECT_TRUE(sandwich_check(b, 64.0, 64.1, 0.01).passed);
    const SandwichVerdict over = sandwich_check(b, 64.0, 120.0, 0.01);
    EXPECT_FALSE(over.passed);
    EXPECT_EQ(over.message, "eigenvalue exceeds the upper bound");
    const SandwichVerdict under = sandwich_check(b, 0.2, std::nullopt, 0.01);
    EXPECT_FALSE(under.lower_ok);
    EXPECT_TRUE(sandwich_check(b, 0.248, std::nullopt, 0.01).lower_ok);
    b.upper.reset();
    EXPECT_TRUE(sandwich_check(b, 1e9, 1e9, 0.0).passed);
}
