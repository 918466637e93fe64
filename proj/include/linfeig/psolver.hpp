#pragma once

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "linfeig/densities.hpp"
#include "linfeig/discretization.hpp"
#include "linfeig/lbfgs.hpp"
#include "linfeig/normalization.hpp"

namespace linfeig {

struct SolverSettings {
    int max_outer = 40;
    int max_inner = 4000;
    double penalty_init = 10.0;   ///< relative to the objective at the initial point
    double penalty_growth = 10.0;
    double gradient_tol = 1e-9;   ///< relative stationarity tolerance
    double constraint_tol = 1e-10;
    int lbfgs_memory = 12;
    int test_basis_size = 20;     ///< bump fields per component for the weak-form residual
    std::uint64_t seed = 0;

    void validate() const
    {
        if (max_outer < 1 || max_inner < 1 || lbfgs_memory < 1 || test_basis_size < 1)
            throw NumericalError("solver iteration counts must be positive");
        if (!(penalty_init > 0.0) || !(penalty_growth > 1.0))
            throw NumericalError("penalty_init must be > 0 and penalty_growth > 1");
        if (!(gradient_tol > 0.0) || !(constraint_tol > 0.0)) throw NumericalError("tolerances must be positive");
    }
};

/// A rescaled p-norm kept in factored form: norm = m * exp(log_mean / p).
struct FactoredValue {
    double p = 1.0;
    double norm = 0.0;
    double max_factor = 0.0;
    double log_mean = 0.0;

    /// log of the mean p-th power (log J_p or log G_p); -inf for zero fields.
    double log_power() const { return norm > 0.0 ? p * std::log(norm) : -std::numeric_limits<double>::infinity(); }
    /// Mean p-th power; overflows to +inf for large p, use log_power() instead.
    double power() const { return std::exp(log_power()); }
};

/// Pointwise integrands of one field, kept to assemble weak forms.
struct Integrands {
    std::vector<double> f, df;            // f(D^2u), df(D^2u)   [node], [node][k][a][b]
    std::vector<double> g, dg_eta, dg_P;  // g(u,Du), d_eta g, d_P g
};

/// Weak-form vectors at fixed p, scaled by the maxima so nothing overflows:
///   <a, phi> = mean f^{p-1} df:D^2phi / m_f^{p-1},
///   <b, phi> = mean g^{p-1}(d_eta g.phi + d_P g:Dphi) / m_g^{p-1}.
struct WeakForms {
    double p = 1.0;
    std::vector<double> a, b;
    double log_mf = 0.0, log_mg = 0.0;
    double a_scale = 0.0; ///< ||f^{p-1} df||_{L^2 mean} / m_f^{p-1}
};

/// The discrete finite-p problem: min ||f(D^2u)||_p subject to ||g(u,Du)||_p = 1.
class PProblem {
public:
    PProblem(std::shared_ptr<const Discretization> disc, DensityFPtr f, DensityGPtr g)
        : disc_(std::move(disc)), f_(std::move(f)), g_(std::move(g))
    {
        if (!disc_ || !f_ || !g_) throw NumericalError("PProblem needs a discretisation and both densities");
        build_preconditioner();
    }

    const Discretization& disc() const { return *disc_; }
    std::shared_ptr<const Discretization> disc_ptr() const { return disc_; }
    const DensityF& f() const { return *f_; }
    const DensityG& g() const { return *g_; }
    DensityFPtr f_ptr() const { return f_; }
    DensityGPtr g_ptr() const { return g_; }

    Integrands integrands(std::span<const double> x, bool with_f = true, bool with_g = true) const
    {
        const Discretization& d = *disc_;
        const std::size_t nn = d.nodes(), hs = d.shape().hessian_size(), gs = d.shape().gradient_size();
        const std::size_t N = static_cast<std::size_t>(d.target_dim());
        Integrands it;
        if (with_f) {
            const std::vector<double> H = d.hessian(x);
            it.f.resize(nn);
            it.df.resize(nn * hs);
            parallel_for(nn, [&](std::size_t v) {
                it.f[v] = f_->evaluate(std::span(H).subspan(v * hs, hs), std::span(it.df).subspan(v * hs, hs));
            });
        }
        if (with_g) {
            const GridField u = d.field(x);
            const std::vector<double> Du = d.gradient(x);
            it.g.resize(nn);
            it.dg_eta.resize(nn * N);
            it.dg_P.resize(nn * gs);
            parallel_for(nn, [&](std::size_t v) {
                it.g[v] = g_->evaluate(std::span(u.values).subspan(v * N, N), std::span(Du).subspan(v * gs, gs),
                                       std::span(it.dg_eta).subspan(v * N, N), std::span(it.dg_P).subspan(v * gs, gs));
            });
        }
        return it;
    }

    /// ||f(D^2u)||_p and, when `grad` is non-empty, its gradient in the dofs.
    /// The gradient of J_p = ||f||_p^p is p ||f||_p^{p-1} times this one.
    FactoredValue objective_and_gradient(std::span<const double> x, double p, std::span<double> grad = {}) const
    {
        const Integrands it = integrands(x, true, false);
        const FactoredValue v = factored(it.f, p);
        if (!grad.empty()) {
            std::fill(grad.begin(), grad.end(), 0.0);
            if (v.max_factor > 0.0) {
                const std::vector<double> sigma = weighted_powers(it.f, it.df, v, disc_->shape().hessian_size());
                const std::vector<double> gx = disc_->hessian_adjoint(sigma);
                std::copy(gx.begin(), gx.end(), grad.begin());
            }
        }
        return v;
    }

    /// ||g(u,Du)||_p and its gradient (same conventions as the objective).
    FactoredValue constraint_and_gradient(std::span<const double> x, double p, std::span<double> grad = {}) const
    {
        const Integrands it = integrands(x, false, true);
        const FactoredValue v = factored(it.g, p);
        if (!grad.empty()) {
            std::fill(grad.begin(), grad.end(), 0.0);
            if (v.max_factor > 0.0) {
                const std::size_t N = static_cast<std::size_t>(disc_->target_dim());
                const std::vector<double> se = weighted_powers(it.g, it.dg_eta, v, N);
                const std::vector<double> sp = weighted_powers(it.g, it.dg_P, v, disc_->shape().gradient_size());
                const std::vector<double> ge = disc_->value_adjoint(se);
                const std::vector<double> gp = disc_->gradient_adjoint(sp);
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = ge[i] + gp[i];
            }
        }
        return v;
    }

    WeakForms weak_forms(std::span<const double> x, double p) const
    {
        const Integrands it = integrands(x);
        WeakForms w;
        w.p = p;
        const double W = disc_->volume();
        const std::span<const double> wt = disc_->weights();
        const std::size_t nn = disc_->nodes(), hs = disc_->shape().hessian_size(), gs = disc_->shape().gradient_size();
        const std::size_t N = static_cast<std::size_t>(disc_->target_dim());

        const double mf = linf_norm(it.f), mg = linf_norm(it.g);
        w.log_mf = std::log(mf);
        w.log_mg = std::log(mg);
        std::vector<double> sf(nn * hs, 0.0), sq(nn, 0.0);
        if (mf > 0.0) {
            for (std::size_t v = 0; v < nn; ++v) {
                const double r = std::pow(it.f[v] / mf, p - 1.0);
                double nsq = 0.0;
                for (std::size_t j = 0; j < hs; ++j) {
                    const double s = r * it.df[v * hs + j];
                    sf[v * hs + j] = wt[v] / W * s;
                    nsq += s * s;
                }
                sq[v] = wt[v] * nsq;
            }
        }
        w.a = disc_->hessian_adjoint(sf);
        w.a_scale = std::sqrt(pairwise_sum(sq) / W);

        std::vector<double> se(nn * N, 0.0), sp(nn * gs, 0.0);
        if (mg > 0.0) {
            for (std::size_t v = 0; v < nn; ++v) {
                const double r = wt[v] / W * std::pow(it.g[v] / mg, p - 1.0);
                for (std::size_t k = 0; k < N; ++k) se[v * N + k] = r * it.dg_eta[v * N + k];
                for (std::size_t j = 0; j < gs; ++j) sp[v * gs + j] = r * it.dg_P[v * gs + j];
            }
        }
        const std::vector<double> be = disc_->value_adjoint(se), bp = disc_->gradient_adjoint(sp);
        w.b.resize(be.size());
        for (std::size_t i = 0; i < be.size(); ++i) w.b[i] = be[i] + bp[i];
        return w;
    }

    /// Weighted mean L^2 norm of D^2 phi.
    double hessian_l2(std::span<const double> phi) const
    {
        const std::vector<double> H = disc_->hessian(phi);
        const std::size_t hs = disc_->shape().hessian_size();
        std::vector<double> sq(disc_->nodes());
        for (std::size_t v = 0; v < sq.size(); ++v) {
            double s = 0.0;
            for (std::size_t j = 0; j < hs; ++j) s += H[v * hs + j] * H[v * hs + j];
            sq[v] = disc_->weights()[v] * s;
        }
        return std::sqrt(pairwise_sum(sq) / disc_->volume());
    }

    /// out = M^{-1} in, M = sum_ab D_ab^T W D_ab (+ tiny shift), per component.
    void precondition(std::span<const double> in, std::span<double> out) const
    {
        const std::size_t ni = disc_->interior_count();
        for (std::size_t k = 0; k < static_cast<std::size_t>(disc_->target_dim()); ++k) {
            Eigen::Map<const Eigen::VectorXd> b(in.data() + k * ni, static_cast<Eigen::Index>(ni));
            Eigen::Map<Eigen::VectorXd> x(out.data() + k * ni, static_cast<Eigen::Index>(ni));
            x = ldlt_.solve(b);
        }
    }

private:
    FactoredValue factored(std::span<const double> h, double p) const
    {
        const QuadratureResult q = lp_mean_norm(h, p, disc_->weights());
        return {p, q.value, q.max_factor, q.log_mean};
    }

    /// (w/W) (h/m)^{p-1} dh * S^{1/p - 1}, S = mean (h/m)^p; `block` entries per node.
    std::vector<double> weighted_powers(std::span<const double> h, std::span<const double> dh,
                                        const FactoredValue& v, std::size_t block) const
    {
        const double W = disc_->volume(), p = v.p;
        const double scale = std::exp((1.0 / p - 1.0) * v.log_mean);
        const std::span<const double> wt = disc_->weights();
        std::vector<double> out(dh.size());
        parallel_for(h.size(), [&](std::size_t i) {
            const double r = h[i] > 0.0 ? wt[i] / W * std::pow(h[i] / v.max_factor, p - 1.0) * scale : 0.0;
            for (std::size_t j = 0; j < block; ++j) out[i * block + j] = r * dh[i * block + j];
        });
        return out;
    }

    void build_preconditioner()
    {
        const Discretization& d = *disc_;
        const Eigen::Index nn = static_cast<Eigen::Index>(d.nodes());
        Eigen::VectorXd w(nn);
        for (Eigen::Index i = 0; i < nn; ++i) w[i] = d.weights()[static_cast<std::size_t>(i)] / d.volume();
        Eigen::SparseMatrix<double> K(static_cast<Eigen::Index>(d.interior_count()),
                                      static_cast<Eigen::Index>(d.interior_count()));
        for (int a = 0; a < d.dim(); ++a)
            for (int b = a; b < d.dim(); ++b) {
                const Eigen::SparseMatrix<double> D = d.hessian_op(a, b);
                const Eigen::SparseMatrix<double> term = D.transpose() * w.asDiagonal() * D;
                K += (a == b ? 1.0 : 2.0) * term;
            }
        double dmax = 0.0;
        for (Eigen::Index i = 0; i < K.rows(); ++i) dmax = std::max(dmax, K.coeff(i, i));
        Eigen::SparseMatrix<double> I(K.rows(), K.cols());
        I.setIdentity();
        K += (1e-12 * dmax) * I;
        ldlt_.compute(K);
        if (ldlt_.info() != Eigen::Success) throw NumericalError("preconditioner factorisation failed");
    }

    std::shared_ptr<const Discretization> disc_;
    DensityFPtr f_;
    DensityGPtr g_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

struct PRunResult {
    double p = 0.0;
    std::vector<double> u;         ///< interior dofs
    double log_lambda_p = 0.0;     ///< log of the multiplier lambda_p
    double lambda_p = 0.0;         ///< exp(log_lambda_p); +inf when it overflows
    double Lambda_p = 0.0;         ///< lambda_p^{1/p}
    double L_p = 0.0;              ///< ||f(D^2u_p)||_p
    double constraint_norm = 0.0;  ///< ||g(u_p,Du_p)||_p
    double constraint_linf = 0.0;  ///< ||g(u_p,Du_p)||_inf
    double constraint_residual = 0.0;
    double el_residual = 0.0;
    double multiplier = 0.0;       ///< AL multiplier of the normalised problem
    double penalty = 0.0;
    int inner_iterations = 0;
    int outer_iterations = 0;
    bool converged = false;
    bool merit_monotone = true;
    std::vector<std::string> flags;

    GridField field(const Discretization& d) const { return d.field(u); }
};

/// Multiplier of the raw weak form mean f^{p-1}df:D^2phi = lambda mean g^{p-1}(...)
/// recovered from the multiplier mu of grad ||f||_p = mu grad ||g||_p.
inline double log_lambda_from_multiplier(double mu, double p, double L, double G)
{
    return std::log(mu) + (p - 1.0) * (std::log(L) - std::log(G));
}

/// Relative weak-form residual of (u, lambda) over the test fields:
/// max |<f^{p-1}df, D^2phi> - lambda <g^{p-1}(...), phi>| / (||f^{p-1}df|| ||D^2phi||).
inline double el_residual(const PProblem& prob, std::span<const double> u, double p, double log_lambda,
                          const std::vector<std::vector<double>>& basis)
{
    const WeakForms w = prob.weak_forms(u, p);
    if (w.a_scale == 0.0) return 0.0;
    const double kappa = std::exp(log_lambda + (p - 1.0) * (w.log_mg - w.log_mf));
    double worst = 0.0;
    for (const auto& phi : basis) {
        const double denom = w.a_scale * prob.hessian_l2(phi);
        if (denom == 0.0) continue;
        worst = std::max(worst, std::abs(dot(w.a, phi) - kappa * dot(w.b, phi)) / denom);
    }
    return worst;
}

/// Test basis used for the weak-form residual: bump fields plus u itself.
inline std::vector<std::vector<double>> residual_basis(const Discretization& d, std::span<const double> u, int size)
{
    auto basis = bump_test_fields(d, size);
    basis.emplace_back(u.begin(), u.end());
    return basis;
}

/// Polynomial bubble vanishing on the boundary (squared for clamped) with a small
/// seeded smooth perturbation; component k is scaled by 1/(k+1).
inline std::vector<double> initial_field(const Discretization& d, std::uint64_t seed)
{
    const DomainSpec& dom = d.domain();
    const bool clamped = d.bc() == BoundaryMode::Clamped;
    auto bubble = [&](const Point& x) {
        double b = 0.0;
        switch (dom.kind) {
        case DomainKind::Interval: b = (x[0] - dom.a) * (dom.b - x[0]) / std::pow(dom.b - dom.a, 2); break;
        case DomainKind::Rectangle:
            b = (x[0] - dom.a) * (dom.b - x[0]) * (x[1] - dom.c) * (dom.d - x[1]) /
                std::pow((dom.b - dom.a) * (dom.d - dom.c), 2);
            break;
        case DomainKind::Disc:
            b = (dom.radius * dom.radius - std::pow(x[0] - dom.center[0], 2) - std::pow(x[1] - dom.center[1], 2)) /
                (dom.radius * dom.radius);
            break;
        }
        b = std::max(b, 0.0);
        return clamped ? b * b : b;
    };
    std::vector<double> x = d.sample([&](const Point& p, int k) { return bubble(p) / (k + 1); });
    const auto bumps = bump_test_fields(d, 4);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const double amp = 1e-3 * linf_norm(x);
    for (const auto& b : bumps) {
        const double c = amp * normal(rng);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += c * b[i];
    }
    return x;
}

/// Augmented-Lagrangian solve of the finite-p problem from `init`.
inline PRunResult solve_p(const PProblem& prob, std::span<const double> init, double p, const SolverSettings& s)
{
    s.validate();
    if (!(p >= 1.0) || std::isinf(p)) throw NumericalError("solve_p requires finite p >= 1");
    const Discretization& d = prob.disc();
    const std::size_t n = d.dof_count();
    if (init.size() != n) throw NumericalError("initial field has the wrong size");

    PRunResult r;
    r.p = p;
    std::vector<double> x(init.begin(), init.end());
    {
        const NormalizationResult nr = normalize(d, prob.g(), x, p);
        for (double& v : x) v *= nr.t;
    }

    std::vector<double> gj(n), gg(n), tmp(n);
    const FactoredValue J0 = prob.objective_and_gradient(x, p, gj);
    const FactoredValue G0 = prob.constraint_and_gradient(x, p, gg);
    double mu = dot(gj, x) / dot(gg, x);
    if (!(mu > 0.0) || !std::isfinite(mu)) mu = J0.norm;
    double rho = s.penalty_init * J0.norm;
    double c_prev = std::abs(G0.norm - 1.0);
    bool inner_ok = false;

    auto merit = [&](std::span<const double> xv, std::span<double> grad) {
        const FactoredValue J = prob.objective_and_gradient(xv, p, grad);
        const FactoredValue G = prob.constraint_and_gradient(xv, p, tmp);
        const double c = G.norm - 1.0;
        const double m = mu - rho * c;
        for (std::size_t i = 0; i < n; ++i) grad[i] -= m * tmp[i];
        return J.norm - mu * c + 0.5 * rho * c * c;
    };

    for (int outer = 1; outer <= s.max_outer; ++outer) {
        r.outer_iterations = outer;
        prob.objective_and_gradient(x, p, gj);
        prob.precondition(gj, tmp);
        const double gref = std::sqrt(std::max(0.0, dot(gj, tmp)));

        LbfgsSettings ls;
        ls.max_iterations = s.max_inner;
        ls.memory = s.lbfgs_memory;
        ls.gradient_tol = s.gradient_tol * gref;
        LbfgsResult lr = lbfgs_minimize(merit, x, [&](std::span<const double> a, std::span<double> b) {
            prob.precondition(a, b);
        }, ls);
        for (std::size_t i = 1; i < lr.history.size(); ++i)
            if (lr.history[i] > lr.history[i - 1] + merit_resolution * std::abs(lr.history[i - 1]))
                r.merit_monotone = false;
        r.inner_iterations += lr.iterations;
        x = std::move(lr.x);
        // Line-search stalls close to the tolerance are accepted; the residual
        // checks below judge the final point anyway.
        inner_ok = lr.converged || lr.grad_norm <= 100.0 * ls.gradient_tol;

        const double c = prob.constraint_and_gradient(x, p).norm - 1.0;
        mu -= rho * c;
        if (std::abs(c) <= s.constraint_tol) {
            // Feasible: done when stationary, or when the inner solver cannot move.
            if (inner_ok || lr.iterations == 0) break;
            continue;
        }
        if (std::abs(c) > 0.25 * c_prev) rho *= s.penalty_growth;
        c_prev = std::abs(c);
    }

    const FactoredValue J = prob.objective_and_gradient(x, p);
    const FactoredValue G = prob.constraint_and_gradient(x, p);
    r.u = std::move(x);
    r.multiplier = mu;
    r.penalty = rho;
    r.L_p = J.norm;
    r.constraint_norm = G.norm;
    r.constraint_linf = G.max_factor;
    r.constraint_residual = std::abs(G.norm - 1.0);
    r.converged = inner_ok && r.constraint_residual <= s.constraint_tol;
    if (!r.converged) r.flags.emplace_back("budget exhausted before convergence");
    if (!r.merit_monotone) r.flags.emplace_back("merit increased during an inner solve");
    if (!(mu > 0.0) || !(J.norm > 0.0)) {
        r.converged = false;
        r.flags.emplace_back("nonpositive multiplier: rejected (lambda_p must be > 0)");
        r.log_lambda_p = -std::numeric_limits<double>::infinity();
        return r;
    }
    r.log_lambda_p = log_lambda_from_multiplier(mu, p, J.norm, G.norm);
    r.lambda_p = std::exp(r.log_lambda_p);
    r.Lambda_p = std::exp(r.log_lambda_p / p);
    r.el_residual = el_residual(prob, r.u, p, r.log_lambda_p, residual_basis(d, r.u, s.test_basis_size));
    return r;
}

/// Multiplier sandwich (C1/C8)^{1/p} L <= Lambda <= (C2/C7)^{1/p} L,
/// each side relaxed by the factor (1 + slack).
struct SandwichCheck {
    double lower = 0.0, upper = 0.0, Lambda = 0.0, slack = 0.0;
    bool passed = false;
};

inline SandwichCheck multiplier_sandwich(const FConstants& fc, const GConstants& gc, double p, double L_p,
                                         double Lambda_p, double slack)
{
    SandwichCheck c;
    c.lower = std::pow(fc.C1 / gc.C8, 1.0 / p) * L_p;
    c.upper = std::pow(fc.C2 / gc.C7, 1.0 / p) * L_p;
    c.Lambda = Lambda_p;
    c.slack = slack;
    c.passed = c.lower <= Lambda_p * (1.0 + slack) && Lambda_p <= c.upper * (1.0 + slack);
    return c;
}

} // namespace linfeig
