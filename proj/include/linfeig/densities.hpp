#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "linfeig/errors.hpp"
#include "linfeig/numeric.hpp"
#include "linfeig/sym_tensor.hpp"

namespace linfeig {

/// Structural constants of the Hessian density:
///   C1 f <= df:X <= C2 f,  -C3 + C4|X|^a <= f <= C5|X|^a + C6,  |df| <= C5 f^b + C6.
struct FConstants {
    double C1 = 0, C2 = 0, C3 = 0, C4 = 0, C5 = 0, C6 = 0, alpha = 2, beta = 1;
};

/// Euler constants of the constraint density: C7 g <= dg.(eta,P) <= C8 g.
struct GConstants {
    double C7 = 0, C8 = 0;
};

using Params = std::map<std::string, double>;

/// Integrand f on symmetric Hessian tensors. Implementations are pure and
/// thread-safe.
class DensityF {
public:
    virtual ~DensityF() = default;
    virtual std::string name() const = 0;
    virtual Params params() const { return {}; }
    /// f(X); when `grad` is non-empty it receives df(X) (same layout as X).
    virtual double evaluate(std::span<const double> X, std::span<double> grad) const = 0;
    virtual FConstants constants() const = 0;
    /// Degree k when f(tX) = t^k f(X).
    virtual std::optional<double> homogeneity() const { return std::nullopt; }
};

/// Constraint density g(eta, P), eta in R^N, P in R^{N x n}.
class DensityG {
public:
    virtual ~DensityG() = default;
    virtual std::string name() const = 0;
    virtual Params params() const { return {}; }
    /// g(eta,P); gradients written when the spans are non-empty.
    virtual double evaluate(std::span<const double> eta, std::span<const double> P,
                            std::span<double> grad_eta, std::span<double> grad_P) const = 0;
    virtual GConstants constants() const = 0;
    virtual std::optional<double> homogeneity() const { return std::nullopt; }
    virtual bool depends_on_value() const { return true; }
    virtual bool depends_on_gradient() const { return true; }
};

using DensityFPtr = std::shared_ptr<const DensityF>;
using DensityGPtr = std::shared_ptr<const DensityG>;

inline double eval_f(const DensityF& f, const SymTensor& X) { return f.evaluate(X.flat(), {}); }

inline SymTensor eval_df(const DensityF& f, const SymTensor& X)
{
    SymTensor out(X.shape());
    f.evaluate(X.flat(), out.flat_mut());
    return out;
}

// ---------------------------------------------------------------------------
// Catalogue
// ---------------------------------------------------------------------------

/// f(X) = scale * phi(|X|^2) for a scalar profile phi.
class RadialDensityF : public DensityF {
public:
    double evaluate(std::span<const double> X, std::span<double> grad) const override
    {
        double s = 0.0;
        for (double x : X) s += x * x;
        const auto [phi, dphi] = profile(s);
        if (!grad.empty()) {
            const double c = 2.0 * scale_ * dphi;
            for (std::size_t i = 0; i < X.size(); ++i) grad[i] = c * X[i];
        }
        return scale_ * phi;
    }

protected:
    explicit RadialDensityF(double scale) : scale_(scale)
    {
        if (!(scale > 0.0)) throw DensityError("density scale must be positive");
    }
    /// (phi(s), phi'(s)).
    virtual std::pair<double, double> profile(double s) const = 0;

    /// Adjusts unit-scale constants for f -> scale * f.
    FConstants rescale(FConstants c) const
    {
        const double k = scale_;
        c.C3 *= k;
        c.C4 *= k;
        c.C5 = std::max(k * c.C5, std::pow(k, 1.0 - c.beta) * c.C5);
        c.C6 *= k;
        return c;
    }

    double scale_;
};

/// f(X) = scale |X|^alpha, alpha in {2, 4}.
class PowerDensityF final : public RadialDensityF {
public:
    explicit PowerDensityF(double alpha = 2.0, double scale = 1.0) : RadialDensityF(scale), alpha_(alpha)
    {
        if (alpha != 2.0 && alpha != 4.0) throw DensityError("power density supports alpha in {2, 4}");
    }
    std::string name() const override { return "power"; }
    Params params() const override { return {{"alpha", alpha_}, {"scale", scale_}}; }
    FConstants constants() const override
    {
        // |df| = alpha |X|^{alpha-1} = alpha f^{(alpha-1)/alpha}
        FConstants c;
        c.C1 = c.C2 = alpha_;
        c.C3 = 0.0;
        c.C4 = 1.0;
        c.C5 = std::max(1.0, alpha_);
        c.C6 = 0.0;
        c.alpha = alpha_;
        c.beta = (alpha_ - 1.0) / alpha_;
        return rescale(c);
    }
    std::optional<double> homogeneity() const override { return alpha_; }

protected:
    std::pair<double, double> profile(double s) const override
    {
        if (alpha_ == 2.0) return {s, 1.0};
        return {s * s, 2.0 * s};
    }

private:
    double alpha_;
};

/// f(X) = scale ((mu + |X|^2)^{alpha/2} - mu^{alpha/2}), alpha in {2, 4}, mu > 0.
class RegularizedPowerDensityF final : public RadialDensityF {
public:
    RegularizedPowerDensityF(double alpha, double mu, double scale = 1.0)
        : RadialDensityF(scale), alpha_(alpha), mu_(mu)
    {
        if (alpha != 2.0 && alpha != 4.0) throw DensityError("regularized power density supports alpha in {2, 4}");
        if (!(mu > 0.0)) throw DensityError("regularized power density requires mu > 0");
    }
    std::string name() const override { return "regularized_power"; }
    Params params() const override { return {{"alpha", alpha_}, {"mu", mu_}, {"scale", scale_}}; }
    FConstants constants() const override
    {
        FConstants c;
        c.alpha = alpha_;
        c.C3 = 0.0;
        c.C4 = 1.0;
        if (alpha_ == 2.0) {
            c.C1 = c.C2 = 2.0;
            c.C5 = 2.0;
            c.C6 = 0.0;
            c.beta = 0.5;
        } else {
            // f = 2 mu s + s^2, df:X = 4 mu s + 4 s^2, |df| = 4 (mu + s)|X|
            c.C1 = 2.0;
            c.C2 = 4.0;
            c.C5 = 4.0 * (1.0 + mu_);
            c.C6 = std::max(mu_ * mu_, 4.0 * mu_);
            c.beta = 0.75;
        }
        return rescale(c);
    }
    std::optional<double> homogeneity() const override
    {
        if (alpha_ == 2.0) return 2.0;
        return std::nullopt;
    }

protected:
    std::pair<double, double> profile(double s) const override
    {
        if (alpha_ == 2.0) return {s, 1.0};
        return {2.0 * mu_ * s + s * s, 2.0 * mu_ + 2.0 * s};
    }

private:
    double alpha_, mu_;
};

/// Same density with user-declared constants (for consistency checks).
class DeclaredConstantsF final : public DensityF {
public:
    DeclaredConstantsF(DensityFPtr base, FConstants c) : base_(std::move(base)), c_(c) {}
    std::string name() const override { return base_->name(); }
    Params params() const override { return base_->params(); }
    double evaluate(std::span<const double> X, std::span<double> grad) const override
    {
        return base_->evaluate(X, grad);
    }
    FConstants constants() const override { return c_; }
    std::optional<double> homogeneity() const override { return base_->homogeneity(); }

private:
    DensityFPtr base_;
    FConstants c_;
};

/// sum_i coef_i s^{e_i}, evaluated at s = |.|^2.
struct PowerProfile {
    std::vector<std::pair<double, double>> terms; // (coef, exponent)

    bool empty() const { return terms.empty(); }
    std::pair<double, double> operator()(double s) const
    {
        double v = 0.0, dv = 0.0;
        for (auto [c, e] : terms) {
            v += c * std::pow(s, e);
            if (e == 1.0) dv += c;
            else if (s > 0.0) dv += c * e * std::pow(s, e - 1.0);
        }
        return {v, dv};
    }
};

/// g(eta, P) = a(|eta|^2) + b(|P|^2).
class SeparableDensityG final : public DensityG {
public:
    SeparableDensityG(std::string name, Params params, PowerProfile value_part, PowerProfile gradient_part)
        : name_(std::move(name)), params_(std::move(params)), a_(std::move(value_part)), b_(std::move(gradient_part))
    {
        if (a_.empty() && b_.empty()) throw DensityError("constraint density has no terms");
        for (const auto* prof : {&a_, &b_})
            for (auto [c, e] : prof->terms)
                if (!(c > 0.0) || !(e >= 1.0)) throw DensityError("constraint density terms need coef > 0, exponent >= 1");
    }

    std::string name() const override { return name_; }
    Params params() const override { return params_; }

    double evaluate(std::span<const double> eta, std::span<const double> P,
                    std::span<double> grad_eta, std::span<double> grad_P) const override
    {
        double s_eta = 0.0, s_P = 0.0;
        for (double x : eta) s_eta += x * x;
        for (double x : P) s_P += x * x;
        const auto [va, da] = a_(s_eta);
        const auto [vb, db] = b_(s_P);
        if (!grad_eta.empty())
            for (std::size_t i = 0; i < eta.size(); ++i) grad_eta[i] = 2.0 * da * eta[i];
        if (!grad_P.empty())
            for (std::size_t i = 0; i < P.size(); ++i) grad_P[i] = 2.0 * db * P[i];
        return va + vb;
    }

    GConstants constants() const override
    {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto* prof : {&a_, &b_})
            for (auto [c, e] : prof->terms) {
                lo = std::min(lo, 2.0 * e);
                hi = std::max(hi, 2.0 * e);
            }
        return {lo, hi};
    }

    std::optional<double> homogeneity() const override
    {
        const auto c = constants();
        if (c.C7 == c.C8) return c.C7;
        return std::nullopt;
    }

    bool depends_on_value() const override { return !a_.empty(); }
    bool depends_on_gradient() const override { return !b_.empty(); }

private:
    std::string name_;
    Params params_;
    PowerProfile a_, b_;
};

class DeclaredConstantsG final : public DensityG {
public:
    DeclaredConstantsG(DensityGPtr base, GConstants c) : base_(std::move(base)), c_(c) {}
    std::string name() const override { return base_->name(); }
    Params params() const override { return base_->params(); }
    double evaluate(std::span<const double> eta, std::span<const double> P,
                    std::span<double> grad_eta, std::span<double> grad_P) const override
    {
        return base_->evaluate(eta, P, grad_eta, grad_P);
    }
    GConstants constants() const override { return c_; }
    std::optional<double> homogeneity() const override { return base_->homogeneity(); }
    bool depends_on_value() const override { return base_->depends_on_value(); }
    bool depends_on_gradient() const override { return base_->depends_on_gradient(); }

private:
    DensityGPtr base_;
    GConstants c_;
};

/// g = |eta|^gamma.
inline DensityGPtr value_power_g(double gamma = 2.0)
{
    return std::make_shared<SeparableDensityG>("value_power", Params{{"gamma", gamma}},
                                               PowerProfile{{{1.0, gamma / 2.0}}}, PowerProfile{});
}
/// g = |P|^gamma.
inline DensityGPtr gradient_power_g(double gamma = 2.0)
{
    return std::make_shared<SeparableDensityG>("gradient_power", Params{{"gamma", gamma}}, PowerProfile{},
                                               PowerProfile{{{1.0, gamma / 2.0}}});
}
/// g = |eta|^2 + |P|^2.
inline DensityGPtr value_gradient_quadratic_g()
{
    return std::make_shared<SeparableDensityG>("value_gradient_quadratic", Params{},
                                               PowerProfile{{{1.0, 1.0}}}, PowerProfile{{{1.0, 1.0}}});
}
/// g = |eta|^2 + |eta|^4.
inline DensityGPtr value_quadratic_quartic_g()
{
    return std::make_shared<SeparableDensityG>("value_quadratic_quartic", Params{},
                                               PowerProfile{{{1.0, 1.0}, {1.0, 2.0}}}, PowerProfile{});
}

struct DensityCatalogEntry {
    std::string name;
    std::vector<std::string> params;
    std::string description;
};

inline std::vector<DensityCatalogEntry> density_f_catalog()
{
    return {{"power", {"alpha", "scale"}, "scale * |X|^alpha, alpha in {2,4}"},
            {"regularized_power", {"alpha", "mu", "scale"}, "scale * ((mu+|X|^2)^(alpha/2) - mu^(alpha/2))"}};
}

inline std::vector<DensityCatalogEntry> density_g_catalog()
{
    return {{"value_power", {"gamma"}, "|eta|^gamma, gamma in {2,4}"},
            {"gradient_power", {"gamma"}, "|P|^gamma, gamma in {2,4}"},
            {"value_gradient_quadratic", {}, "|eta|^2 + |P|^2"},
            {"value_quadratic_quartic", {}, "|eta|^2 + |eta|^4"}};
}

namespace detail {
inline double param_or(const Params& p, const std::string& key, double fallback)
{
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}
inline void require_known(const Params& p, std::initializer_list<const char*> known, const std::string& who)
{
    for (const auto& [k, v] : p) {
        bool ok = false;
        for (const char* n : known) ok = ok || k == n;
        if (!ok) throw DensityError(who + ": unknown parameter '" + k + "'");
    }
}
} // namespace detail

inline DensityFPtr make_density_f(const std::string& name, const Params& p = {})
{
    if (name == "power") {
        detail::require_known(p, {"alpha", "scale"}, name);
        return std::make_shared<PowerDensityF>(detail::param_or(p, "alpha", 2.0), detail::param_or(p, "scale", 1.0));
    }
    if (name == "regularized_power") {
        detail::require_known(p, {"alpha", "mu", "scale"}, name);
        return std::make_shared<RegularizedPowerDensityF>(detail::param_or(p, "alpha", 4.0),
                                                          detail::param_or(p, "mu", 1.0),
                                                          detail::param_or(p, "scale", 1.0));
    }
    throw DensityError("unknown density f '" + name + "'");
}

inline DensityGPtr make_density_g(const std::string& name, const Params& p = {})
{
    auto gamma = [&] {
        const double g = detail::param_or(p, "gamma", 2.0);
        if (g != 2.0 && g != 4.0) throw DensityError(name + ": gamma must be 2 or 4");
        return g;
    };
    if (name == "value_power") {
        detail::require_known(p, {"gamma"}, name);
        return value_power_g(gamma());
    }
    if (name == "gradient_power") {
        detail::require_known(p, {"gamma"}, name);
        return gradient_power_g(gamma());
    }
    if (name == "value_gradient_quadratic") {
        detail::require_known(p, {}, name);
        return value_gradient_quadratic_g();
    }
    if (name == "value_quadratic_quartic") {
        detail::require_known(p, {}, name);
        return value_quadratic_quartic_g();
    }
    throw DensityError("unknown density g '" + name + "'");
}

// ---------------------------------------------------------------------------
// Assumption checks
// ---------------------------------------------------------------------------

struct AssumptionCheck {
    std::string name;
    bool passed = true;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::string witness;
    std::string note;
};

struct AssumptionReport {
    std::vector<AssumptionCheck> checks;

    bool passed() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
    }
    const AssumptionCheck* find(const std::string& name) const
    {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
    std::string summary() const
    {
        std::ostringstream os;
        for (const auto& c : checks) {
            os << (c.passed ? "PASS " : "FAIL ") << c.name << " margin=" << c.worst_margin;
            if (!c.passed) os << " witness=" << c.witness;
            if (!c.note.empty()) os << " (" << c.note << ")";
            os << '\n';
        }
        return os.str();
    }
};

namespace detail {

inline std::string describe_point(std::span<const double> a, std::span<const double> b = {})
{
    std::ostringstream os;
    os.precision(6);
    os << '[';
    for (std::size_t i = 0; i < a.size(); ++i) os << (i ? "," : "") << a[i];
    if (!b.empty()) {
        os << " | ";
        for (std::size_t i = 0; i < b.size(); ++i) os << (i ? "," : "") << b[i];
    }
    os << ']';
    return os.str();
}

struct CheckAccumulator {
    AssumptionCheck c;
    double tol;
    explicit CheckAccumulator(std::string name, double tol_) : tol(tol_) { c.name = std::move(name); }
    /// margin >= -tol * scale passes; margin is reported relative to scale.
    void record(double margin, double scale, const std::string& witness)
    {
        const double rel = margin / std::max(scale, std::numeric_limits<double>::min());
        if (rel < c.worst_margin) {
            c.worst_margin = rel;
            if (rel < -tol) c.witness = witness;
        }
        if (rel < -tol) c.passed = false;
    }
};

} // namespace detail

/// Samples the structural assumptions on f and g at random nonzero points and
/// reports the worst relative margin of every inequality.
inline AssumptionReport check_assumptions(const DensityF& f, const DensityG& g, TensorShape shape, int samples,
                                          std::uint64_t seed, double tol = 1e-9)
{
    if (samples < 1000) throw DensityError("check_assumptions needs at least 1000 samples");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> log_radius(-2.0, 2.0);

    const FConstants fc = f.constants();
    const GConstants gc = g.constants();
    AssumptionReport report;

    {
        detail::CheckAccumulator c("f_constants_consistent", 0.0);
        if (!(fc.C1 > 0.0)) c.record(fc.C1, 1.0, "C1 <= 0");
        c.record(fc.C2 - fc.C1, 1.0, "C1 > C2");
        c.record(fc.alpha - 1.0 - 1e-15, 1.0, "alpha <= 1");
        c.record(1.0 - fc.beta, 1.0, "beta > 1");
        c.record(std::min({fc.C3, fc.C4, fc.C5, fc.C6}), 1.0, "negative growth constant");
        if (c.c.worst_margin == std::numeric_limits<double>::infinity()) c.c.worst_margin = 0.0;
        report.checks.push_back(c.c);
    }
    {
        detail::CheckAccumulator c("g_constants_consistent", 0.0);
        if (!(gc.C7 > 0.0)) c.record(gc.C7, 1.0, "C7 <= 0");
        c.record(gc.C8 - gc.C7, 1.0, "C7 > C8");
        if (c.c.worst_margin == std::numeric_limits<double>::infinity()) c.c.worst_margin = 0.0;
        report.checks.push_back(c.c);
    }

    const std::size_t hs = shape.hessian_size();
    const std::size_t gs = shape.gradient_size();
    const std::size_t N = static_cast<std::size_t>(shape.target_dim);
    std::vector<double> X(hs), dX(hs), Y(hs), Xp(hs), Xm(hs);

    detail::CheckAccumulator zero_f("f_vanishes_at_zero", tol);
    {
        std::vector<double> z(hs, 0.0), gz(hs, 0.0);
        const double v = f.evaluate(z, gz);
        zero_f.record(-std::abs(v), 1.0, "f(0) != 0");
        zero_f.record(-norm2(gz), 1.0, "df(0) != 0");
    }
    report.checks.push_back(zero_f.c);

    detail::CheckAccumulator euler_lo("f_euler_lower", tol), euler_hi("f_euler_upper", tol),
        positive("f_positive", tol), grow_lo("f_growth_lower", tol), grow_hi("f_growth_upper", tol),
        grad_grow("f_gradient_growth", tol), radial("f_radially_increasing", tol),
        rank_one("f_rank_one_convex", tol);
    rank_one.c.note = "sampled necessary condition for 2-quasiconvexity";

    auto random_sym = [&](std::vector<double>& out, double radius) {
        for (int k = 0; k < shape.target_dim; ++k)
            for (int i = 0; i < shape.dim; ++i)
                for (int j = i; j < shape.dim; ++j) {
                    const double v = normal(rng);
                    out[shape.index(k, i, j)] = v;
                    out[shape.index(k, j, i)] = v;
                }
        const double nrm = norm2(out);
        for (double& x : out) x *= radius / nrm;
    };

    for (int s = 0; s < samples; ++s) {
        const double r = std::pow(10.0, log_radius(rng));
        random_sym(X, r);
        const double fv = f.evaluate(X, dX);
        const double euler = dot(dX, X);
        const std::string w = detail::describe_point(X);
        positive.record(fv, std::max(fv, 1e-300), w);
        euler_lo.record(euler - fc.C1 * fv, fv, w);
        euler_hi.record(fc.C2 * fv - euler, fv, w);
        const double xa = std::pow(r, fc.alpha);
        grow_lo.record(fv - (-fc.C3 + fc.C4 * xa), std::max(1.0, fv), w);
        grow_hi.record(fc.C5 * xa + fc.C6 - fv, std::max(1.0, fv), w);
        const double gnorm = norm2(dX);
        grad_grow.record(fc.C5 * std::pow(fv, fc.beta) + fc.C6 - gnorm, std::max(1.0, gnorm), w);

        // radial monotonicity: f(sX) < f(X) for s in (0,1)
        for (std::size_t i = 0; i < hs; ++i) Xm[i] = 0.7 * X[i];
        const double fs = f.evaluate(Xm, {});
        radial.record(fv - fs, std::max(fv, 1e-300), w);

        // rank-one direction e_k (x) a (x) a
        std::fill(Y.begin(), Y.end(), 0.0);
        const int k = static_cast<int>(rng() % static_cast<std::uint64_t>(shape.target_dim));
        std::vector<double> a(static_cast<std::size_t>(shape.dim));
        for (double& x : a) x = normal(rng);
        for (int i = 0; i < shape.dim; ++i)
            for (int j = 0; j < shape.dim; ++j) Y[shape.index(k, i, j)] = a[i] * a[j];
        const double t = r * std::pow(10.0, log_radius(rng) / 2.0) / std::max(norm2(Y), 1e-300);
        for (std::size_t i = 0; i < hs; ++i) {
            Xp[i] = X[i] + t * Y[i];
            Xm[i] = X[i] - t * Y[i];
        }
        const double mid = 0.5 * (f.evaluate(Xp, {}) + f.evaluate(Xm, {}));
        rank_one.record(mid - fv, std::max(mid, 1e-300), w);
    }
    for (auto* c : {&positive, &euler_lo, &euler_hi, &grow_lo, &grow_hi, &grad_grow, &radial, &rank_one})
        report.checks.push_back(c->c);

    // g checks
    std::vector<double> eta(N), P(gs), ge(N), gP(gs), eta2(N), P2(gs);
    detail::CheckAccumulator g_zero("g_vanishes_at_zero", tol), g_lo("g_euler_lower", tol),
        g_hi("g_euler_upper", tol), g_rad("g_radially_increasing", tol), g_coer("g_coercive", 0.0);
    {
        std::fill(eta.begin(), eta.end(), 0.0);
        std::fill(P.begin(), P.end(), 0.0);
        g_zero.record(-std::abs(g.evaluate(eta, P, {}, {})), 1.0, "g(0,0) != 0");
    }
    const bool use_eta = g.depends_on_value(), use_P = g.depends_on_gradient();
    for (int s = 0; s < samples; ++s) {
        const double r = std::pow(10.0, log_radius(rng));
        for (double& x : eta) x = normal(rng);
        for (double& x : P) x = normal(rng);
        const double nrm = std::sqrt(dot(eta, eta) + dot(P, P));
        for (double& x : eta) x *= r / nrm;
        for (double& x : P) x *= r / nrm;
        const double gv = g.evaluate(eta, P, ge, gP);
        const double euler = dot(ge, eta) + dot(gP, P);
        const std::string w = detail::describe_point(eta, P);
        const double scale = std::max(gv, 1e-300);
        g_lo.record(euler - gc.C7 * gv, scale, w);
        g_hi.record(gc.C8 * gv - euler, scale, w);
        for (std::size_t i = 0; i < N; ++i) eta2[i] = 0.7 * eta[i];
        for (std::size_t i = 0; i < gs; ++i) P2[i] = 0.7 * P[i];
        const double gsmall = g.evaluate(eta2, P2, {}, {});
        if (gv > 0.0) g_rad.record(gv - gsmall, scale, w);
    }

    // Coercivity along unit directions of the variables g depends on.
    {
        const std::size_t dim_e = use_eta ? N : 0, dim_p = use_P ? gs : 0;
        HaltonSphere sphere(dim_e + dim_p);
        std::vector<double> dir(dim_e + dim_p);
        double prev = -1.0;
        for (int k = 0; k <= 3; ++k) {
            const double radius = std::pow(10.0, k);
            double m = std::numeric_limits<double>::infinity();
            for (std::uint64_t i = 1; i <= 256; ++i) {
                sphere.direction(i, dir);
                std::fill(eta.begin(), eta.end(), 0.0);
                std::fill(P.begin(), P.end(), 0.0);
                for (std::size_t d = 0; d < dim_e; ++d) eta[d] = radius * dir[d];
                for (std::size_t d = 0; d < dim_p; ++d) P[d] = radius * dir[dim_e + d];
                m = std::min(m, g.evaluate(eta, P, {}, {}));
            }
            if (prev >= 0.0) g_coer.record(m - prev, std::max(prev, 1e-300), "radius 1e" + std::to_string(k));
            prev = m;
        }
        if (!(use_eta && use_P))
            g_coer.c.note = use_eta ? "coercive in the value variable only" : "coercive in the gradient variable only";
    }
    for (auto* c : {&g_zero, &g_lo, &g_hi, &g_rad, &g_coer}) report.checks.push_back(c->c);
    return report;
}

// ---------------------------------------------------------------------------
// Sublevel-set geometry of g
// ---------------------------------------------------------------------------

struct SublevelSup {
    double sup_grad_eta = 0.0; ///< inflated by the safety factor
    double sup_grad_P = 0.0;   ///< inflated by the safety factor
    double raw_grad_eta = 0.0;
    double raw_grad_P = 0.0;
    double safety_factor = 1.05;
    int samples = 0;
};

/// sup |d_eta g| and sup |d_P g| over {g <= t}, from quasi-random rays of the
/// sublevel set, inflated by `safety`.
inline SublevelSup sublevel_sup_gradients(const DensityG& g, double t, TensorShape shape, int samples = 100000,
                                          double safety = 1.05)
{
    if (!(t > 0.0)) throw DensityError("sublevel level must be positive");
    const std::size_t N = static_cast<std::size_t>(shape.target_dim), gs = shape.gradient_size();
    const std::size_t dim_e = g.depends_on_value() ? N : 0, dim_p = g.depends_on_gradient() ? gs : 0;
    HaltonSphere sphere(dim_e + dim_p);
    std::vector<double> dir(dim_e + dim_p), eta(N, 0.0), P(gs, 0.0), ge(N), gP(gs);

    auto at = [&](double r) {
        for (std::size_t d = 0; d < dim_e; ++d) eta[d] = r * dir[d];
        for (std::size_t d = 0; d < dim_p; ++d) P[d] = r * dir[dim_e + d];
        return g.evaluate(eta, P, ge, gP);
    };

    SublevelSup out;
    out.safety_factor = safety;
    out.samples = samples;
    for (int i = 1; i <= samples; ++i) {
        sphere.direction(static_cast<std::uint64_t>(i), dir);
        double hi = 1.0;
        int doublings = 0;
        while (at(hi) <= t) {
            hi *= 2.0;
            if (++doublings > 200) throw BoundUnavailable("lower bound unavailable: sublevel set of g is unbounded");
        }
        double lo = 0.0;
        for (int it = 0; it < 60 && hi - lo > 1e-15 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (at(mid) <= t ? lo : hi) = mid;
        }
        for (double r : {lo, lo * sphere.scalar(static_cast<std::uint64_t>(i))}) {
            at(r);
            out.raw_grad_eta = std::max(out.raw_grad_eta, norm2(ge));
            out.raw_grad_P = std::max(out.raw_grad_P, norm2(gP));
        }
    }
    out.sup_grad_eta = safety * out.raw_grad_eta;
    out.sup_grad_P = safety * out.raw_grad_P;
    return out;
}

/// Smallest R with {g <= t} inside B^N_R x R^{N x n}: bisection on R using
/// minima of g over sampled directions of the value sphere.
inline double constraint_radius_R(const DensityG& g, double t, TensorShape shape, int directions = 256)
{
    if (t < 0.0) throw DensityError("level t must be >= 0");
    if (!g.depends_on_value())
        throw DensityError("non-coercive g: sublevel sets are unbounded in the value variable");
    if (t == 0.0) return 0.0;
    const std::size_t N = static_cast<std::size_t>(shape.target_dim), gs = shape.gradient_size();
    HaltonSphere sphere(N), psphere(std::max<std::size_t>(gs, 1));
    std::vector<double> dir(N), pdir(std::max<std::size_t>(gs, 1)), eta(N), P(gs, 0.0);
    const int ndirs = N == 1 ? 2 : directions;

    // min over sampled eta-directions and a few gradient samples (P = 0 included)
    auto h = [&](double R) {
        double m = std::numeric_limits<double>::infinity();
        for (int i = 1; i <= ndirs; ++i) {
            if (N == 1) dir[0] = i == 1 ? 1.0 : -1.0;
            else sphere.direction(static_cast<std::uint64_t>(i), dir);
            for (std::size_t d = 0; d < N; ++d) eta[d] = R * dir[d];
            std::fill(P.begin(), P.end(), 0.0);
            m = std::min(m, g.evaluate(eta, P, {}, {}));
            if (g.depends_on_gradient()) {
                for (int j = 1; j <= 8; ++j) {
                    psphere.direction(static_cast<std::uint64_t>(j), pdir);
                    const double pr = 0.125 * j * R;
                    for (std::size_t d = 0; d < gs; ++d) P[d] = pr * pdir[d];
                    m = std::min(m, g.evaluate(eta, P, {}, {}));
                }
            }
        }
        return m;
    };

    double hi = 1.0;
    int doublings = 0;
    while (h(hi) <= t) {
        hi *= 2.0;
        if (++doublings > 200) throw DensityError("non-coercive g: no finite radius contains the sublevel set");
    }
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (h(mid) <= t ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// rho(t) = t + sup_{0<=s<=t} R(s), sampled on a uniform grid of `points` levels.
inline double rho_function(const DensityG& g, double t, TensorShape shape, int points = 101)
{
    if (t < 0.0) throw DensityError("level t must be >= 0");
    if (t == 0.0) return 0.0;
    double sup = 0.0;
    for (int i = 0; i < points; ++i) sup = std::max(sup, constraint_radius_R(g, t * i / (points - 1), shape));
    return t + sup;
}

} // namespace linfeig
