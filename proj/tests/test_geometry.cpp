#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "linfeig/geometry.hpp"

using namespace linfeig;

namespace {

// Monte-Carlo estimate of |{x in box : |x - c| <= R}| with a fixed stream.
double monte_carlo_disc_area(Point c, double R, std::size_t samples, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(c[0] - R, c[0] + R), uy(c[1] - R, c[1] + R);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double x = ux(rng) - c[0], y = uy(rng) - c[1];
        hits += x * x + y * y <= R * R;
    }
    return 4.0 * R * R * static_cast<double>(hits) / static_cast<double>(samples);
}

} // namespace

TEST(BuildGrid, IntervalFiveNodes)
{
    const GridSpec g = build_grid(DomainSpec::interval(0.0, 1.0), 5);
    ASSERT_EQ(g.size(), 5u);
    EXPECT_DOUBLE_EQ(g.spacing[0], 0.25);
    int boundary = 0;
    for (std::size_t i = 0; i < g.size(); ++i) boundary += g.is_boundary(static_cast<int>(i));
    EXPECT_EQ(boundary, 2);
    EXPECT_EQ(g.interior.size(), 3u);
    EXPECT_NEAR(g.total_volume(), 1.0, 1e-15);
}

TEST(BuildGrid, UnitSquareAdjacencyAndWeights)
{
    const GridSpec g = build_grid(DomainSpec::rectangle(0, 1, 0, 1), 11);
    ASSERT_EQ(g.size(), 121u);
    int checks = 0;
    for (int v = 0; v < static_cast<int>(g.size()); ++v)
        for (auto [di, dj] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
            const int w = g.neighbour(v, di, dj);
            if (w < 0) continue;
            EXPECT_EQ(g.neighbour(w, -di, -dj), v);
            ++checks;
        }
    EXPECT_EQ(checks, 440);
    EXPECT_NEAR(g.total_volume(), 1.0, 1e-14);
}

TEST(BuildGrid, DiscAreaAgainstMonteCarlo)
{
    const DomainSpec dom = DomainSpec::disc({0.0, 0.0}, 1.0);
    const GridSpec g = build_grid(dom, 41);
    const double mc = monte_carlo_disc_area(dom.center, dom.radius, 4'000'000, 11);
    // MC standard error ~ 4 sqrt(p(1-p)/n) ~ 8e-4
    EXPECT_NEAR(mc, std::numbers::pi, 5e-3);
    EXPECT_NEAR(g.total_volume(), mc, disc_area_tolerance(g) + 5e-3);
    EXPECT_NEAR(g.total_volume(), std::numbers::pi, disc_area_tolerance(g));
}

TEST(BuildGrid, RandomDiscsWithinDeclaredTolerance)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uc(-2.0, 2.0), ur(0.3, 3.0);
    std::uniform_int_distribution<int> un(15, 45);
    for (int trial = 0; trial < 20; ++trial) {
        const DomainSpec dom = DomainSpec::disc({uc(rng), uc(rng)}, ur(rng));
        const GridSpec g = build_grid(dom, un(rng));
        EXPECT_NEAR(g.total_volume(), dom.measure(), disc_area_tolerance(g)) << "trial " << trial;
        for (std::size_t v = 0; v < g.size(); ++v) {
            EXPECT_GE(g.cell_volumes[v], 0.0);
            if (!g.is_boundary(static_cast<int>(v))) {
                EXPECT_TRUE(dom.contains(g.coords[v]));
            }
        }
    }
}

TEST(BuildGrid, RejectsCoarseResolution)
{
    EXPECT_THROW(build_grid(DomainSpec::interval(0, 1), 4), GeometryError);
    EXPECT_THROW(DomainSpec::interval(1, 0), GeometryError);
    EXPECT_THROW(DomainSpec::disc({0, 0}, -1.0), GeometryError);
}

TEST(Descriptors, Disc)
{
    const GeometryDescriptors g = descriptors(DomainSpec::disc({0, 0}, 1.0));
    EXPECT_DOUBLE_EQ(g.diameter, 2.0);
    EXPECT_DOUBLE_EQ(g.perimeter, 2.0 * std::numbers::pi);
    ASSERT_EQ(g.curvatures().size(), 1u);
    EXPECT_DOUBLE_EQ(g.curvatures()[0], 1.0);
    EXPECT_DOUBLE_EQ(g.tubular_radius(), 0.5);
}

TEST(Descriptors, Interval)
{
    const GeometryDescriptors g = descriptors(DomainSpec::interval(0, 1));
    EXPECT_DOUBLE_EQ(g.diameter, 1.0);
    EXPECT_DOUBLE_EQ(g.poincare_const_clamped, 1.0);
}

TEST(Descriptors, RectangleHasNoCurvature)
{
    const GeometryDescriptors g = descriptors(DomainSpec::rectangle(0, 1, 0, 1));
    EXPECT_NEAR(g.diameter, 1.41421356237, 1e-10);
    EXPECT_DOUBLE_EQ(g.perimeter, 4.0);
    try {
        (void)g.curvatures();
        FAIL() << "expected BoundUnavailable";
    } catch (const BoundUnavailable& e) {
        EXPECT_NE(std::string(e.what()).find("upper bound unavailable for this geometry"), std::string::npos);
    }
}

TEST(BoundaryProjection, Cases)
{
    const DomainSpec disc = DomainSpec::disc({0, 0}, 1.0);
    const Projection p = boundary_projection(disc, {0.5, 0.0});
    EXPECT_DOUBLE_EQ(p.proj[0], 1.0);
    EXPECT_DOUBLE_EQ(p.proj[1], 0.0);
    EXPECT_DOUBLE_EQ(p.dist, 0.5);

    const Projection q = boundary_projection(DomainSpec::interval(0, 1), {0.3, 0.0});
    EXPECT_DOUBLE_EQ(q.proj[0], 0.0);
    EXPECT_DOUBLE_EQ(q.dist, 0.3);

    try {
        boundary_projection(disc, {0.0, 0.0});
        FAIL() << "expected GeometryError";
    } catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("projection not unique"), std::string::npos);
    }
}

TEST(BoundaryProjection, RandomDiscPointsLandOnCircle)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const DomainSpec disc = DomainSpec::disc({0.3, -0.2}, 1.7);
    for (int i = 0; i < 500; ++i) {
        const Point x{0.3 + 1.7 * u(rng) * 0.7, -0.2 + 1.7 * u(rng) * 0.7};
        if (!disc.contains(x)) continue;
        const Projection p = boundary_projection(disc, x);
        EXPECT_NEAR(std::hypot(p.proj[0] - 0.3, p.proj[1] + 0.2), 1.7, 1e-12);
        EXPECT_NEAR(std::hypot(p.proj[0] - x[0], p.proj[1] - x[1]), p.dist, 1e-12);
    }
}
