#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "linfeig/psolver.hpp"
#include "oracles.hpp"

using namespace linfeig;

namespace {

std::shared_ptr<const Discretization> interval_disc(int n, BoundaryMode bc)
{
    return std::make_shared<const Discretization>(DomainSpec::interval(0, 1), n, bc);
}

PProblem quadratic_problem(std::shared_ptr<const Discretization> d)
{
    return PProblem(std::move(d), make_density_f("power", {{"alpha", 2}}), value_power_g(2));
}

std::vector<double> random_field(const Discretization& d, std::mt19937_64& rng)
{
    std::normal_distribution<double> n;
    std::vector<double> x = initial_field(d, rng());
    for (const auto& b : bump_test_fields(d, 5)) {
        const double c = 0.3 * n(rng);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += c * b[i];
    }
    return x;
}

// max_i |analytic_i - fd_i| / max_i |fd_i| with central differences.
template <class Fn>
double gradient_error(Fn&& value_grad, std::vector<double> x)
{
    std::vector<double> g(x.size());
    value_grad(x, g);
    const double h = 1e-6 * linf_norm(x);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double fp = value_grad(x, std::span<double>{});
        x[i] = x0 - h;
        const double fm = value_grad(x, std::span<double>{});
        x[i] = x0;
        const double fd = (fp - fm) / (2.0 * h);
        num = std::max(num, std::abs(g[i] - fd));
        den = std::max(den, std::abs(fd));
    }
    return num / den;
}

class ZeroF final : public DensityF {
public:
    std::string name() const override { return "zero"; }
    double evaluate(std::span<const double>, std::span<double> grad) const override
    {
        for (double& v : grad) v = 0.0;
        return 0.0;
    }
    FConstants constants() const override { return {}; }
};

} // namespace

TEST(Gradients, FiniteDifferences)
{
    std::mt19937_64 rng(31);
    for (BoundaryMode bc : {BoundaryMode::Hinged, BoundaryMode::Clamped})
        for (const DomainSpec& dom : {DomainSpec::interval(0, 1), DomainSpec::disc({0, 0}, 1.0)}) {
            auto d = std::make_shared<const Discretization>(dom, dom.dim == 1 ? 41 : 13, bc);
            for (const auto& g : {value_quadratic_quartic_g(), value_gradient_quadratic_g()}) {
                const PProblem prob(d, make_density_f("regularized_power", {{"alpha", 4}, {"mu", 0.5}}), g);
                for (double p : {2.0, 8.0, 64.0}) {
                    const auto x = random_field(*d, rng);
                    const double ej = gradient_error(
                        [&](std::span<const double> y, std::span<double> gr) {
                            return prob.objective_and_gradient(y, p, gr).norm;
                        },
                        x);
                    const double eg = gradient_error(
                        [&](std::span<const double> y, std::span<double> gr) {
                            return prob.constraint_and_gradient(y, p, gr).norm;
                        },
                        x);
                    EXPECT_LE(ej, 1e-5) << g->name() << " p=" << p;
                    EXPECT_LE(eg, 1e-5) << g->name() << " p=" << p;
                }
            }
        }
}

TEST(Functionals, ZeroField)
{
    const PProblem prob = quadratic_problem(interval_disc(21, BoundaryMode::Hinged));
    const std::vector<double> zero(prob.disc().dof_count(), 0.0);
    std::vector<double> g(zero.size(), 1.0);
    EXPECT_EQ(prob.objective_and_gradient(zero, 4.0, g).norm, 0.0);
    for (double v : g) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(prob.constraint_and_gradient(zero, 4.0).norm, 0.0);
}

TEST(Functionals, ConstantHessian)
{
    // u = x^2 - x has D^2u = 2 inside and 0 at the hinged ends, so
    // ||f||_p = 4 (W_interior / W)^{1/p} for f = |X|^2.
    auto d = interval_disc(51, BoundaryMode::Hinged);
    const PProblem prob = quadratic_problem(d);
    const auto u = d->sample([](const Point& x, int) { return x[0] * x[0] - x[0]; });
    double w_int = 0.0, w_all = 0.0;
    for (std::size_t v = 0; v < d->nodes(); ++v) {
        w_all += d->weights()[v];
        if (!d->grid().is_boundary(static_cast<int>(v))) w_int += d->weights()[v];
    }
    for (double p : {1.0, 3.0, 50.0})
        EXPECT_NEAR(prob.objective_and_gradient(u, p).norm, 4.0 * std::pow(w_int / w_all, 1.0 / p), 1e-10) << p;
}

TEST(SolveP, ConstraintHoldsAfterSolve)
{
    const PProblem prob = quadratic_problem(interval_disc(101, BoundaryMode::Hinged));
    const PRunResult r = solve_p(prob, initial_field(prob.disc(), 1), 6.0, SolverSettings{});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.constraint_norm, 1.0, 1e-9);
    EXPECT_NEAR(prob.constraint_and_gradient(r.u, 6.0).norm, 1.0, 1e-9);
}

TEST(SolveP, OneDimensionalBenchmarksAgainstLinearProgram)
{
    for (BoundaryMode bc : {BoundaryMode::Hinged, BoundaryMode::Clamped}) {
        auto d = interval_disc(201, bc);
        const PProblem prob = quadratic_problem(d);
        const double sup_eig = oracle::sup_eigenvalue_1d(201, bc == BoundaryMode::Clamped);
        EXPECT_NEAR(sup_eig, bc == BoundaryMode::Clamped ? 256.0 : 64.0, 1e-8);
        const PRunResult r = solve_p(prob, initial_field(*d, 7), 64.0, SolverSettings{});
        ASSERT_TRUE(r.converged) << to_string(bc);
        EXPECT_LE(std::abs(r.Lambda_p - sup_eig), 0.2 * sup_eig) << to_string(bc);
        // finite-p values approach the limit from above
        EXPECT_GE(r.Lambda_p, sup_eig);
        EXPECT_LT(r.Lambda_p, 1.05 * sup_eig);
    }
}

TEST(SolveP, EqualDegreeMultiplierMatchesObjective)
{
    auto d = interval_disc(201, BoundaryMode::Hinged);
    const PProblem prob = quadratic_problem(d);
    for (double p : {4.0, 32.0}) {
        const PRunResult r = solve_p(prob, initial_field(*d, 3), p, SolverSettings{});
        EXPECT_NEAR(r.Lambda_p, r.L_p, 1e-6 * r.L_p);
        EXPECT_LE(r.el_residual, 1e-6);
        // phi = u in the weak form: both sides reduce to 2 mean f^p and 2 mean g^p
        EXPECT_NEAR(r.log_lambda_p, p * (std::log(r.L_p) - std::log(r.constraint_norm)), 1e-6 * p);
        const auto sc = multiplier_sandwich(prob.f().constants(), prob.g().constants(), p, r.L_p, r.Lambda_p, 1e-9);
        EXPECT_TRUE(sc.passed);
    }
}

TEST(SolveP, ResidualDetectsPerturbation)
{
    auto d = interval_disc(201, BoundaryMode::Hinged);
    const PProblem prob = quadratic_problem(d);
    const PRunResult r = solve_p(prob, initial_field(*d, 3), 16.0, SolverSettings{});
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    std::vector<double> noisy(r.u);
    const double scale = 0.01 * linf_norm(r.u);
    for (const auto& b : bump_test_fields(*d, 8)) {
        const double c = scale * n(rng);
        for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += c * b[i];
    }
    const auto basis = residual_basis(*d, noisy, 20);
    const double el_noisy = el_residual(prob, noisy, 16.0, r.log_lambda_p, basis);
    EXPECT_GE(el_noisy, 10.0 * std::max(r.el_residual, 1e-12));
}

TEST(SolveP, NonpositiveMultiplierIsRejected)
{
    auto d = interval_disc(41, BoundaryMode::Hinged);
    const PProblem prob(d, std::make_shared<ZeroF>(), value_power_g(2));
    SolverSettings s;
    s.max_outer = 3;
    s.max_inner = 20;
    const PRunResult r = solve_p(prob, initial_field(*d, 1), 4.0, s);
    EXPECT_FALSE(r.converged);
    bool flagged = false;
    for (const auto& f : r.flags) flagged = flagged || f.find("nonpositive multiplier") != std::string::npos;
    EXPECT_TRUE(flagged);
}

TEST(SolveP, RejectsBadInput)
{
    auto d = interval_disc(21, BoundaryMode::Hinged);
    const PProblem prob = quadratic_problem(d);
    const auto x = initial_field(*d, 0);
    EXPECT_THROW(solve_p(prob, x, 0.5, SolverSettings{}), NumericalError);
    EXPECT_THROW(solve_p(prob, x, p_infinity, SolverSettings{}), NumericalError);
    EXPECT_THROW(solve_p(prob, std::vector<double>(3, 1.0), 4.0, SolverSettings{}), NumericalError);
    SolverSettings bad;
    bad.penalty_growth = 1.0;
    EXPECT_THROW(solve_p(prob, x, 4.0, bad), NumericalError);
}

TEST(Sandwich, Bounds)
{
    const FConstants fc{.C1 = 2, .C2 = 4};
    const GConstants gc{.C7 = 2, .C8 = 2};
    const SandwichCheck c = multiplier_sandwich(fc, gc, 2.0, 10.0, 12.0, 0.0);
    EXPECT_DOUBLE_EQ(c.lower, 10.0);
    EXPECT_DOUBLE_EQ(c.upper, 10.0 * std::sqrt(2.0));
    EXPECT_TRUE(c.passed);
    EXPECT_FALSE(multiplier_sandwich(fc, gc, 2.0, 10.0, 9.0, 0.0).passed);
    EXPECT_TRUE(multiplier_sandwich(fc, gc, 2.0, 10.0, 9.95, 0.01).passed);
    EXPECT_NEAR(log_lambda_from_multiplier(3.0, 4.0, 2.0, 1.0), std::log(3.0) + 3.0 * std::log(2.0), 1e-15);
}

TEST(SolveP, ScalingTheObjective)
{
    // c f scales the raw weak form by c^p: lambda_p -> c^p lambda_p, Lambda_p -> c Lambda_p
    auto d = interval_disc(201, BoundaryMode::Hinged);
    const double c = 3.0, p = 16.0;
    const PProblem base = quadratic_problem(d);
    const PProblem scaled(d, make_density_f("power", {{"alpha", 2}, {"scale", c}}), value_power_g(2));
    const PRunResult a = solve_p(base, initial_field(*d, 2), p, SolverSettings{});
    const PRunResult b = solve_p(scaled, initial_field(*d, 2), p, SolverSettings{});
    ASSERT_TRUE(a.converged && b.converged);
    EXPECT_NEAR(b.Lambda_p, c * a.Lambda_p, 1e-6 * b.Lambda_p);
    EXPECT_NEAR(b.log_lambda_p, a.log_lambda_p + p * std::log(c), 1e-6 * std::abs(b.log_lambda_p));
    auto argmax = [&](const PProblem& prob, const std::vector<double>& u) {
        const auto f = prob.integrands(u, true, false).f;
        return std::max_element(f.begin(), f.end()) - f.begin();
    };
    EXPECT_EQ(argmax(base, a.u), argmax(scaled, b.u));
}
