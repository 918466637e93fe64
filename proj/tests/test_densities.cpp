#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "linfeig/densities.hpp"

using namespace linfeig;

namespace {

std::vector<double> random_sym(TensorShape sh, std::mt19937_64& rng, double scale)
{
    std::normal_distribution<double> n;
    SymTensor X(sh);
    for (int k = 0; k < sh.target_dim; ++k)
        for (int i = 0; i < sh.dim; ++i)
            for (int j = i; j < sh.dim; ++j) X.set(k, i, j, scale * n(rng));
    return {X.flat().begin(), X.flat().end()};
}

std::vector<DensityFPtr> f_catalogue()
{
    return {make_density_f("power", {{"alpha", 2}}), make_density_f("power", {{"alpha", 4}, {"scale", 0.5}}),
            make_density_f("regularized_power", {{"alpha", 2}, {"mu", 0.3}}),
            make_density_f("regularized_power", {{"alpha", 4}, {"mu", 0.5}, {"scale", 2.0}})};
}

std::vector<DensityGPtr> g_catalogue()
{
    return {value_power_g(2), value_power_g(4), gradient_power_g(2), gradient_power_g(4),
            value_gradient_quadratic_g(), value_quadratic_quartic_g()};
}

// Central difference of a scalar function along every coordinate of x.
template <class Fn>
std::vector<double> central_gradient(Fn&& fn, std::vector<double> x, double h)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double fp = fn(x);
        x[i] = x0 - h;
        const double fm = fn(x);
        x[i] = x0;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double rel_err(std::span<const double> a, std::span<const double> b)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / std::max(den, 1e-300);
}

// Root of r^2 + r^4 = t by plain bisection.
double quartic_radius(double t)
{
    double lo = 0.0, hi = 1.0;
    while (hi * hi + std::pow(hi, 4) < t) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double m = 0.5 * (lo + hi);
        (m * m + std::pow(m, 4) < t ? lo : hi) = m;
    }
    return 0.5 * (lo + hi);
}

} // namespace

TEST(EvalF, QuadraticCase)
{
    const TensorShape sh{1, 2};
    SymTensor X(sh);
    X.set(0, 0, 0, 2.0);
    X.set(0, 0, 1, 1.0); // sets both off-diagonal entries: |X|^2 = 4 + 1 + 1 + 3
    X.set(0, 1, 1, std::sqrt(3.0));
    const auto f = make_density_f("power", {{"alpha", 2}});
    EXPECT_NEAR(X.norm(), 3.0, 1e-15);
    EXPECT_NEAR(eval_f(*f, X), 9.0, 1e-13);
    const SymTensor d = eval_df(*f, X);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(d.flat()[i], 2.0 * X.flat()[i], 1e-14);
}

TEST(EvalF, ZeroMapsToZero)
{
    for (const auto& f : f_catalogue()) {
        const SymTensor X(TensorShape{2, 2});
        EXPECT_EQ(eval_f(*f, X), 0.0) << f->name();
        const SymTensor d = eval_df(*f, X);
        for (double v : d.flat()) EXPECT_EQ(v, 0.0);
    }
}

TEST(EvalF, FiniteDifferenceGradient)
{
    std::mt19937_64 rng(17);
    for (const auto& f : f_catalogue())
        for (TensorShape sh : {TensorShape{1, 1}, TensorShape{1, 2}, TensorShape{2, 2}})
            for (int s = 0; s < 100; ++s) {
                const auto X = random_sym(sh, rng, 1.0);
                std::vector<double> grad(X.size());
                f->evaluate(X, grad);
                const auto fd = central_gradient([&](const std::vector<double>& y) { return f->evaluate(y, {}); }, X,
                                                 1e-6);
                EXPECT_LE(rel_err(grad, fd), 1e-6) << f->name();
            }
}

TEST(EvalG, FiniteDifferenceGradients)
{
    std::mt19937_64 rng(19);
    std::normal_distribution<double> n;
    for (const auto& g : g_catalogue())
        for (TensorShape sh : {TensorShape{1, 1}, TensorShape{2, 2}})
            for (int s = 0; s < 100; ++s) {
                const std::size_t N = static_cast<std::size_t>(sh.target_dim), gs = sh.gradient_size();
                std::vector<double> z(N + gs);
                for (double& v : z) v = n(rng);
                std::vector<double> ge(N), gP(gs);
                g->evaluate(std::span(z).first(N), std::span(z).subspan(N), ge, gP);
                const auto fd = central_gradient(
                    [&](const std::vector<double>& y) {
                        return g->evaluate(std::span(y).first(N), std::span(y).subspan(N), {}, {});
                    },
                    z, 1e-6);
                std::vector<double> an(ge);
                an.insert(an.end(), gP.begin(), gP.end());
                EXPECT_LE(rel_err(an, fd), 1e-6) << g->name();
            }
}

TEST(CheckAssumptions, CatalogueEntriesPass)
{
    for (const auto& f : f_catalogue())
        for (const auto& g : g_catalogue()) {
            const AssumptionReport r = check_assumptions(*f, *g, TensorShape{2, 2}, 2000, 1);
            EXPECT_TRUE(r.passed()) << f->name() << " / " << g->name() << "\n" << r.summary();
        }
}

TEST(CheckAssumptions, OverstatedEulerConstantFails)
{
    const auto base = make_density_f("power", {{"alpha", 2}});
    FConstants c = base->constants();
    c.C2 = 1.5;
    const DeclaredConstantsF f(base, c);
    const AssumptionReport r = check_assumptions(f, *value_power_g(2), TensorShape{1, 1}, 1000, 2);
    EXPECT_FALSE(r.passed());
    const AssumptionCheck* e = r.find("f_euler_upper");
    ASSERT_NE(e, nullptr);
    EXPECT_FALSE(e->passed);
    EXPECT_FALSE(e->witness.empty());
}

TEST(CheckAssumptions, QuadraticConstraintEulerIdentity)
{
    const auto g = value_gradient_quadratic_g();
    EXPECT_EQ(g->constants().C7, 2.0);
    EXPECT_EQ(g->constants().C8, 2.0);
    const AssumptionReport r = check_assumptions(*make_density_f("power"), *g, TensorShape{1, 2}, 1000, 3);
    EXPECT_TRUE(r.find("g_euler_lower")->passed);
    EXPECT_TRUE(r.find("g_euler_upper")->passed);
}

TEST(CheckAssumptions, TooFewSamples)
{
    EXPECT_THROW(check_assumptions(*make_density_f("power"), *value_power_g(2), TensorShape{1, 1}, 10, 0),
                 DensityError);
}

TEST(SublevelSup, KnownSets)
{
    const TensorShape sh{1, 1};
    const SublevelSup a = sublevel_sup_gradients(*value_power_g(2), 1.0, sh, 2000);
    EXPECT_NEAR(a.raw_grad_eta, 2.0, 1e-9);
    EXPECT_EQ(a.raw_grad_P, 0.0);
    EXPECT_DOUBLE_EQ(a.sup_grad_eta, a.safety_factor * a.raw_grad_eta);

    const SublevelSup b = sublevel_sup_gradients(*value_gradient_quadratic_g(), 1.0, sh, 20000);
    EXPECT_NEAR(b.raw_grad_eta, 2.0, 1e-3);
    EXPECT_NEAR(b.raw_grad_P, 2.0, 1e-3);
    EXPECT_LE(b.raw_grad_eta, 2.0 + 1e-9);

    const SublevelSup c = sublevel_sup_gradients(*value_power_g(4), 16.0, sh, 2000);
    EXPECT_NEAR(c.raw_grad_eta, 32.0, 1e-7);
    EXPECT_EQ(c.raw_grad_P, 0.0);
}

TEST(ConstraintRadius, KnownSets)
{
    const TensorShape sh{1, 1};
    EXPECT_NEAR(constraint_radius_R(*value_power_g(2), 1.0, sh), 1.0, 1e-12);
    EXPECT_NEAR(rho_function(*value_power_g(2), 1.0, sh), 2.0, 1e-12);
    EXPECT_EQ(constraint_radius_R(*value_power_g(2), 0.0, sh), 0.0);
    EXPECT_EQ(rho_function(*value_power_g(2), 0.0, sh), 0.0);
    EXPECT_NEAR(constraint_radius_R(*value_quadratic_quartic_g(), 2.0, sh), 1.0, 1e-12);
}

TEST(ConstraintRadius, MatchesScalarRootFinding)
{
    const TensorShape sh{2, 2};
    for (double t : {0.1, 0.5, 1.0, 3.0, 10.0, 100.0})
        EXPECT_NEAR(constraint_radius_R(*value_quadratic_quartic_g(), t, sh), quartic_radius(t), 1e-10) << t;
}

TEST(ConstraintRadius, NonCoerciveInValue)
{
    EXPECT_THROW(constraint_radius_R(*gradient_power_g(2), 1.0, TensorShape{1, 1}), DensityError);
}

TEST(Factories, RejectUnknownInput)
{
    EXPECT_THROW(make_density_f("cubic"), DensityError);
    EXPECT_THROW(make_density_f("power", {{"alhpa", 2}}), DensityError);
    EXPECT_THROW(make_density_f("power", {{"alpha", 3}}), DensityError);
    EXPECT_THROW(make_density_g("value_power", {{"gamma", 3}}), DensityError);
    EXPECT_THROW(make_density_g("value_gradient_quadratic", {{"gamma", 2}}), DensityError);
    EXPECT_EQ(density_f_catalog().size(), 2u);
    EXPECT_EQ(density_g_catalog().size(), 4u);
}

TEST(Constants, PowerDensityValues)
{
    const FConstants c2 = make_density_f("power", {{"alpha", 2}})->constants();
    EXPECT_EQ(c2.C1, 2.0);
    EXPECT_EQ(c2.C2, 2.0);
    EXPECT_EQ(c2.C4, 1.0);
    EXPECT_EQ(c2.C5, 2.0);
    EXPECT_EQ(c2.beta, 0.5);
    const FConstants c4 = make_density_f("power", {{"alpha", 4}})->constants();
    EXPECT_EQ(c4.C1, 4.0);
    EXPECT_EQ(c4.C5, 4.0);
    EXPECT_EQ(c4.beta, 0.75);
}
