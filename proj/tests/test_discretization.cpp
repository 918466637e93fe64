#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "linfeig/discretization.hpp"

using namespace linfeig;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng)
{
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

double max_interior_gradient_error(int resolution)
{
    const Discretization d(DomainSpec::interval(0, 1), resolution, BoundaryMode::Hinged);
    const auto u = d.sample([](const Point& x, int) { return std::sin(std::numbers::pi * x[0]); });
    const auto Du = d.gradient(u);
    double err = 0.0;
    for (int v : d.grid().interior) {
        const double exact = std::numbers::pi * std::cos(std::numbers::pi * d.grid().coords[v][0]);
        err = std::max(err, std::abs(Du[v] - exact));
    }
    return err;
}

} // namespace

TEST(Gradient, ExactForQuadratics1D)
{
    // Central and one-sided second-order differences are exact on quadratics;
    // u must vanish at both end points to be representable.
    const Discretization d(DomainSpec::interval(0, 1), 41, BoundaryMode::Hinged);
    const auto u = d.sample([](const Point& x, int) { return x[0] * (1.0 - x[0]); });
    const auto Du = d.gradient(u);
    for (std::size_t v = 0; v < d.nodes(); ++v) {
        const double x = d.grid().coords[v][0];
        EXPECT_NEAR(Du[v], 1.0 - 2.0 * x, 1e-12) << "node " << v;
    }
}

TEST(Gradient, ExactForAffineMaps2D)
{
    const Discretization d(DomainSpec::rectangle(0, 1, 0, 1), 11, BoundaryMode::Hinged);
    const auto u = d.sample([](const Point& x, int) { return x[0] + 2.0 * x[1]; });
    const auto Du = d.gradient(u);
    const GridSpec& g = d.grid();
    for (int v : g.interior) {
        bool inner = true;
        for (auto [di, dj] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) inner = inner && !g.is_boundary(g.neighbour(v, di, dj));
        if (!inner) continue;
        EXPECT_NEAR(Du[2 * v], 1.0, 1e-12);
        EXPECT_NEAR(Du[2 * v + 1], 2.0, 1e-12);
    }
}

TEST(Gradient, SecondOrderConvergence)
{
    const double e1 = max_interior_gradient_error(101), e2 = max_interior_gradient_error(201);
    EXPECT_NEAR(e1 / e2, 4.0, 0.3);
}

TEST(Hessian, ExactForQuadratics)
{
    const Discretization d(DomainSpec::interval(0, 1), 51, BoundaryMode::Hinged);
    const auto u = d.sample([](const Point& x, int) { return x[0] * x[0] - x[0]; });
    const auto H = d.hessian(u);
    for (int v : d.grid().interior) EXPECT_NEAR(H[v], 2.0, 1e-9);
}

TEST(Hessian, MixedEntry)
{
    const Discretization d(DomainSpec::rectangle(0, 1, 0, 1), 21, BoundaryMode::Hinged);
    const auto u = d.sample([](const Point& x, int) { return x[0] * x[1]; });
    const auto H = d.hessian(u);
    const GridSpec& g = d.grid();
    int checked = 0;
    for (int v : g.interior) {
        bool inner = true;
        for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) inner = inner && !g.is_boundary(g.neighbour(v, di, dj));
        if (!inner) continue;
        ++checked;
        EXPECT_NEAR(H[4 * v + 1], 1.0, 1e-10);
        EXPECT_NEAR(H[4 * v + 2], 1.0, 1e-10);
        EXPECT_NEAR(H[4 * v + 0], 0.0, 1e-10);
        EXPECT_NEAR(H[4 * v + 3], 0.0, 1e-10);
    }
    EXPECT_GT(checked, 0);
}

TEST(Hessian, ClampedGhostReflection)
{
    const Discretization d(DomainSpec::interval(0, 1), 41, BoundaryMode::Clamped);
    const auto u = d.sample([](const Point& x, int) { return std::pow(x[0] * (1.0 - x[0]), 2); });
    const auto Du = d.gradient(u);
    const auto H = d.hessian(u);
    const GridField f = d.field(u);
    const double h = d.grid().spacing[0];
    for (int b : {0, static_cast<int>(d.nodes()) - 1}) {
        EXPECT_LE(std::abs(Du[b]), 1e-12);
        // mirrored ghost value equals the inner neighbour
        const int in = b == 0 ? 1 : b - 1;
        EXPECT_NEAR(H[b], 2.0 * f.values[in] / (h * h), 1e-9);
    }
}

TEST(Hessian, HingedBoundaryCurvatureVanishes)
{
    const Discretization d(DomainSpec::interval(0, 1), 41, BoundaryMode::Hinged);
    const auto u = d.sample([](const Point& x, int) { return std::sin(std::numbers::pi * x[0]); });
    const auto H = d.hessian(u);
    EXPECT_NEAR(H[0], 0.0, 1e-9);
    EXPECT_NEAR(H[d.nodes() - 1], 0.0, 1e-9);
}

TEST(Adjoints, MatchTransposes)
{
    std::mt19937_64 rng(8);
    for (BoundaryMode bc : {BoundaryMode::Hinged, BoundaryMode::Clamped})
        for (const DomainSpec& dom : {DomainSpec::interval(0, 1, 2), DomainSpec::disc({0, 0}, 1.0, 2)}) {
            const Discretization d(dom, 17, bc);
            const auto x = random_vector(d.dof_count(), rng);
            const auto sigma = random_vector(d.nodes() * d.shape().hessian_size(), rng);
            const auto tau = random_vector(d.nodes() * d.shape().gradient_size(), rng);
            const auto vals = random_vector(d.nodes() * 2, rng);
            const double lhs_h = dot(sigma, d.hessian(x)), rhs_h = dot(d.hessian_adjoint(sigma), x);
            EXPECT_NEAR(lhs_h, rhs_h, 1e-9 * std::abs(lhs_h) + 1e-9);
            const double lhs_g = dot(tau, d.gradient(x)), rhs_g = dot(d.gradient_adjoint(tau), x);
            EXPECT_NEAR(lhs_g, rhs_g, 1e-9 * std::abs(lhs_g) + 1e-9);
            const double lhs_v = dot(vals, d.field(x).values), rhs_v = dot(d.value_adjoint(vals), x);
            EXPECT_NEAR(lhs_v, rhs_v, 1e-12 * std::abs(lhs_v) + 1e-12);
        }
}

TEST(Fields, DofRoundTrip)
{
    std::mt19937_64 rng(9);
    const Discretization d(DomainSpec::rectangle(0, 2, 0, 1, 3), 9, BoundaryMode::Clamped);
    const auto x = random_vector(d.dof_count(), rng);
    const GridField f = d.field(x);
    EXPECT_EQ(d.dofs(f), x);
    for (std::size_t v = 0; v < d.nodes(); ++v)
        if (d.grid().is_boundary(static_cast<int>(v)))
            for (int k = 0; k < 3; ++k) EXPECT_EQ(f.values[v * 3 + k], 0.0);
}

TEST(Quadrature, ConstantField)
{
    const std::vector<double> w{0.1, 0.3, 0.2, 0.4};
    const std::vector<double> h(4, -1.7);
    for (double p : {1.0, 2.0, 7.5, 100.0, 1e4}) EXPECT_EQ(lp_mean_norm(h, p, w).value, 1.7) << p;
    const std::vector<double> two(4, 2.0);
    EXPECT_EQ(lp_mean_norm(two, 1e4, w).value, 2.0);
}

TEST(Quadrature, LinearFieldL2)
{
    const Discretization d(DomainSpec::interval(0, 1), 2001, BoundaryMode::Hinged);
    std::vector<double> h(d.nodes());
    for (std::size_t v = 0; v < h.size(); ++v) h[v] = d.grid().coords[v][0];
    EXPECT_NEAR(lp_mean_norm(h, 2.0, d.weights()).value, 1.0 / std::sqrt(3.0), 1e-6);
    EXPECT_EQ(linf_norm(h), 1.0);
}

TEST(Quadrature, RejectsSubunitExponent)
{
    const std::vector<double> h{1.0}, w{1.0};
    EXPECT_THROW(lp_mean_norm(h, 0.5, w), NumericalError);
}

TEST(Quadrature, MonotoneInExponent)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> len(2, 300);
    const std::vector<double> ps{1, 1.5, 2, 3, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 1e4};
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = static_cast<std::size_t>(len(rng));
        std::vector<double> h(n), w(n);
        const double scale = std::pow(10.0, 6.0 * u(rng) - 3.0);
        for (std::size_t i = 0; i < n; ++i) {
            h[i] = scale * (2.0 * u(rng) - 1.0);
            w[i] = 0.01 + u(rng);
        }
        double prev = 0.0;
        for (double p : ps) {
            const double v = lp_mean_norm(h, p, w).value;
            ASSERT_LE(prev, v) << "trial " << trial << " p " << p;
            ASSERT_LE(v, linf_norm(h));
            prev = v;
        }
    }
}

TEST(Quadrature, ApproachesSupNorm)
{
    const Discretization d(DomainSpec::interval(0, 1), 201, BoundaryMode::Hinged);
    std::vector<double> h(d.nodes());
    for (std::size_t v = 0; v < h.size(); ++v) h[v] = std::sin(std::numbers::pi * d.grid().coords[v][0]);
    const double inf = linf_norm(h);
    double prev_gap = 1.0;
    for (int k = 1; k <= 9; ++k) {
        const double gap = (inf - lp_mean_norm(h, std::pow(2.0, k), d.weights()).value) / inf;
        EXPECT_LT(gap, prev_gap);
        prev_gap = gap;
    }
    EXPECT_LT(prev_gap, 0.02);
}

TEST(BumpFields, VanishOnBoundaryAndAreNonzero)
{
    for (const DomainSpec& dom : {DomainSpec::interval(0, 1), DomainSpec::disc({0, 0}, 1.0)}) {
        const Discretization d(dom, 41, BoundaryMode::Clamped);
        const auto b = bump_test_fields(d, 20);
        EXPECT_EQ(b.size(), 20u);
        for (const auto& phi : b) {
            EXPECT_EQ(phi.size(), d.dof_count());
            EXPECT_GT(linf_norm(phi), 0.0);
        }
    }
}
