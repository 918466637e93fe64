#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "linfeig/measures.hpp"
#include "linfeig/psolver.hpp"

namespace linfeig {

struct ScheduleSettings {
    double p0 = 0.0;       ///< 0 selects max(4, ceil(n/alpha) + 2)
    double factor = 2.0;
    double p_max = 512.0;
    double lambda_tol = 1e-4; ///< stop when |Lambda_{next} - Lambda|/Lambda < lambda_tol

    double start(int n, double alpha) const
    {
        return p0 > 0.0 ? p0 : std::max(4.0, std::ceil(n / alpha) + 2.0);
    }

    void validate(int n, double alpha) const
    {
        const double s = start(n, alpha);
        if (!(s > n / alpha)) throw NumericalError("p0 must exceed n/alpha");
        if (!(factor > 1.0)) throw NumericalError("schedule factor must be > 1");
        if (p_max < s) throw NumericalError("p_max must be >= p0");
        if (!(lambda_tol >= 0.0)) throw NumericalError("lambda_tol must be >= 0");
    }

    std::vector<double> exponents(int n, double alpha) const
    {
        std::vector<double> ps;
        for (double p = start(n, alpha); p <= p_max * (1.0 + 1e-12); p *= factor) ps.push_back(p);
        return ps;
    }
};

struct Extrapolation {
    double Lambda_inf = 0.0;
    double slope = 0.0;        ///< a in Lambda_p ~ Lambda_inf + a/p
    double fit_residual = 0.0; ///< RMS residual of the fit
    bool warning = false;
    std::string note;
};

/// Least-squares fit Lambda_p ~ Lambda_inf + a/p over the last three points.
/// A non-monotone tail returns the last Lambda_p with a warning.
inline Extrapolation extrapolate_lambda(std::span<const double> p, std::span<const double> Lambda)
{
    if (p.size() != Lambda.size() || p.size() < 3) throw NumericalError("extrapolation needs at least 3 points");
    const std::size_t k = p.size() - 3;
    double x[3], y[3];
    for (int i = 0; i < 3; ++i) {
        x[i] = 1.0 / p[k + static_cast<std::size_t>(i)];
        y[i] = Lambda[k + static_cast<std::size_t>(i)];
    }
    Extrapolation e;
    const double d1 = y[1] - y[0], d2 = y[2] - y[1];
    const double noise = 1e-9 * std::abs(y[2]);
    if (d1 * d2 < 0.0 && std::abs(d1) > noise && std::abs(d2) > noise) {
        e.Lambda_inf = y[2];
        e.warning = true;
        e.note = "non-monotone tail; reporting the last Lambda_p";
        return e;
    }
    const double xm = (x[0] + x[1] + x[2]) / 3.0, ym = (y[0] + y[1] + y[2]) / 3.0;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < 3; ++i) {
        sxx += (x[i] - xm) * (x[i] - xm);
        sxy += (x[i] - xm) * (y[i] - ym);
    }
    e.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    e.Lambda_inf = ym - e.slope * xm;
    double ss = 0.0;
    for (int i = 0; i < 3; ++i) ss += std::pow(y[i] - (e.Lambda_inf + e.slope * x[i]), 2);
    e.fit_residual = std::sqrt(ss / 3.0);
    return e;
}

struct StepDiagnostics {
    double c0_diff = std::numeric_limits<double>::quiet_NaN(); ///< max |u_p - u_prev| over nodes
    double c1_diff = std::numeric_limits<double>::quiet_NaN(); ///< max |Du_p - Du_prev| over nodes
    std::vector<double> hessian_pairings;                      ///< <Laplacian u_p, phi_j> for fixed bumps
    bool norm_monotone = true;  ///< ||f(D^2u_p)||_q <= L_p for earlier q
    SandwichCheck sandwich;
    MassBoundsReport mass;
    double pairing_residual = 0.0;
    double concentration = 0.0;
    bool accepted = false;
    std::vector<std::string> failures;
};

struct ContinuationTrace {
    std::vector<PRunResult> steps;
    std::vector<StepDiagnostics> diagnostics;
    std::vector<MeasurePair> measures; ///< one per accepted step, same order as steps
    std::optional<Extrapolation> extrapolation;
    std::string termination;
    bool solver_failed = false;
    std::uint64_t seed = 0;

    std::vector<double> ps() const
    {
        std::vector<double> v;
        for (const auto& s : steps) v.push_back(s.p);
        return v;
    }
    std::vector<double> Lambdas() const
    {
        std::vector<double> v;
        for (const auto& s : steps) v.push_back(s.Lambda_p);
        return v;
    }
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr char checkpoint_magic[8] = {'L', 'I', 'N', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
    std::uint64_t problem_hash = 0;
    std::uint64_t seed = 0;
    std::vector<PRunResult> steps;
};

namespace detail {

class ByteWriter {
public:
    template <class T>
    void put(const T& v)
    {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf.insert(buf.end(), p, p + sizeof(T));
    }
    void put_string(const std::string& s)
    {
        put(static_cast<std::uint64_t>(s.size()));
        buf.insert(buf.end(), s.begin(), s.end());
    }
    void put_doubles(const std::vector<double>& v)
    {
        put(static_cast<std::uint64_t>(v.size()));
        for (double x : v) put(x);
    }
    std::string buf;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}
    template <class T>
    T get()
    {
        if (pos_ + sizeof(T) > data_.size()) throw CheckpointError("checkpoint truncated");
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::uint64_t get_count(std::uint64_t max)
    {
        const auto n = get<std::uint64_t>();
        if (n > max) throw CheckpointError("checkpoint field length out of range");
        return n;
    }
    std::string get_string()
    {
        const auto n = get_count(data_.size() - pos_);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::vector<double> get_doubles()
    {
        const auto n = get_count((data_.size() - pos_) / sizeof(double));
        std::vector<double> v(n);
        for (auto& x : v) x = get<double>();
        return v;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Writes `content` to `path` through a temporary file and a rename.
inline void atomic_write(const std::filesystem::path& path, const std::string& content)
{
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string serialize_checkpoint(const Checkpoint& c)
{
    detail::ByteWriter w;
    w.buf.append(checkpoint_magic, sizeof(checkpoint_magic));
    w.put(checkpoint_version);
    w.put(c.problem_hash);
    w.put(c.seed);
    w.put(static_cast<std::uint64_t>(c.steps.size()));
    for (const auto& s : c.steps) {
        w.put(s.p);
        w.put_doubles(s.u);
        for (double v : {s.log_lambda_p, s.lambda_p, s.Lambda_p, s.L_p, s.constraint_norm, s.constraint_linf,
                         s.constraint_residual, s.el_residual, s.multiplier, s.penalty})
            w.put(v);
        w.put(static_cast<std::int32_t>(s.inner_iterations));
        w.put(static_cast<std::int32_t>(s.outer_iterations));
        w.put(static_cast<std::uint8_t>(s.converged));
        w.put(static_cast<std::uint8_t>(s.merit_monotone));
        w.put(static_cast<std::uint64_t>(s.flags.size()));
        for (const auto& f : s.flags) w.put_string(f);
    }
    w.put(fnv1a(w.buf));
    return w.buf;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes)
{
    constexpr std::size_t trailer = sizeof(std::uint64_t);
    if (bytes.size() < sizeof(checkpoint_magic) + trailer || std::memcmp(bytes.data(), checkpoint_magic, 8) != 0)
        throw CheckpointError("not a checkpoint file");
    const std::string_view body(bytes.data(), bytes.size() - trailer);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body.size(), trailer);
    if (stored != fnv1a(body)) throw CheckpointError("checkpoint checksum mismatch (corrupt file)");

    detail::ByteReader r(body.substr(sizeof(checkpoint_magic)));
    if (r.get<std::uint32_t>() != checkpoint_version) throw CheckpointError("unsupported checkpoint version");
    Checkpoint c;
    c.problem_hash = r.get<std::uint64_t>();
    c.seed = r.get<std::uint64_t>();
    const auto n = r.get_count(1u << 20);
    for (std::uint64_t i = 0; i < n; ++i) {
        PRunResult s;
        s.p = r.get<double>();
        s.u = r.get_doubles();
        for (double* v : {&s.log_lambda_p, &s.lambda_p, &s.Lambda_p, &s.L_p, &s.constraint_norm, &s.constraint_linf,
                          &s.constraint_residual, &s.el_residual, &s.multiplier, &s.penalty})
            *v = r.get<double>();
        s.inner_iterations = r.get<std::int32_t>();
        s.outer_iterations = r.get<std::int32_t>();
        s.converged = r.get<std::uint8_t>() != 0;
        s.merit_monotone = r.get<std::uint8_t>() != 0;
        const auto nf = r.get_count(1u << 16);
        for (std::uint64_t j = 0; j < nf; ++j) s.flags.push_back(r.get_string());
        c.steps.push_back(std::move(s));
    }
    if (!r.done()) throw CheckpointError("trailing bytes in checkpoint");
    return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c)
{
    atomic_write(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

class Continuation {
public:
    Continuation(std::shared_ptr<const PProblem> prob, ScheduleSettings schedule, SolverSettings solver,
                 std::uint64_t problem_hash = 0)
        : prob_(std::move(prob)), schedule_(schedule), solver_(solver), hash_(problem_hash)
    {
        schedule_.validate(prob_->disc().dim(), prob_->f().constants().alpha);
        solver_.validate();
    }

    const PProblem& problem() const { return *prob_; }
    std::vector<double> exponents() const
    {
        return schedule_.exponents(prob_->disc().dim(), prob_->f().constants().alpha);
    }

    /// Called after every step; e.g. for writing checkpoints.
    std::function<void(const ContinuationTrace&)> on_step;
    /// Stop after this many steps in total (for interrupted runs); 0 = no limit.
    std::size_t max_steps = 0;

    ContinuationTrace run() const
    {
        ContinuationTrace t;
        t.seed = solver_.seed;
        return advance(std::move(t));
    }

    /// Rebuilds the trace stored in a checkpoint and continues the schedule.
    ContinuationTrace resume(const Checkpoint& c) const
    {
        if (c.problem_hash != hash_) throw CheckpointError("checkpoint belongs to a different problem (hash mismatch)");
        if (c.seed != solver_.seed) throw CheckpointError("checkpoint seed differs from the configured seed");
        ContinuationTrace t;
        t.seed = c.seed;
        const auto ps = exponents();
        for (std::size_t i = 0; i < c.steps.size(); ++i) {
            if (i >= ps.size() || c.steps[i].p != ps[i])
                throw CheckpointError("checkpoint exponents do not match the schedule");
            if (c.steps[i].u.size() != prob_->disc().dof_count())
                throw CheckpointError("checkpoint field size does not match the grid");
            record(t, c.steps[i]);
        }
        if (!t.steps.empty() && (t.solver_failed || finished(t))) return finish(std::move(t));
        return advance(std::move(t));
    }

    Checkpoint checkpoint(const ContinuationTrace& t) const { return {hash_, t.seed, t.steps}; }

private:
    bool finished(ContinuationTrace& t) const
    {
        const auto ps = exponents();
        if (t.steps.size() >= 2) {
            const double a = t.steps[t.steps.size() - 2].Lambda_p, b = t.steps.back().Lambda_p;
            if (std::abs(b - a) / a < schedule_.lambda_tol) {
                t.termination = "Lambda_p converged to lambda_tol";
                return true;
            }
        }
        if (t.steps.size() >= ps.size()) {
            t.termination = "reached p_max";
            return true;
        }
        return false;
    }

    ContinuationTrace advance(ContinuationTrace t) const
    {
        const auto ps = exponents();
        std::vector<double> x =
            t.steps.empty() ? initial_field(prob_->disc(), solver_.seed) : t.steps.back().u;
        while (t.steps.size() < ps.size()) {
            if (max_steps && t.steps.size() >= max_steps) {
                t.termination = "interrupted";
                return t;
            }
            PRunResult r = solve_p(*prob_, x, ps[t.steps.size()], solver_);
            x = r.u;
            record(t, std::move(r));
            if (on_step) on_step(t);
            if (t.solver_failed || finished(t)) break;
        }
        return finish(std::move(t));
    }

    ContinuationTrace finish(ContinuationTrace t) const
    {
        if (t.solver_failed) t.termination = "solver failure at p = " + std::to_string(t.steps.back().p);
        std::vector<double> p, L;
        for (std::size_t i = 0; i < t.steps.size(); ++i)
            if (t.diagnostics[i].accepted) {
                p.push_back(t.steps[i].p);
                L.push_back(t.steps[i].Lambda_p);
            }
        if (p.size() >= 3) t.extrapolation = extrapolate_lambda(p, L);
        return t;
    }

    void record(ContinuationTrace& t, PRunResult r) const
    {
        const PProblem& prob = *prob_;
        const Discretization& d = prob.disc();
        const FConstants fc = prob.f().constants();
        const GConstants gc = prob.g().constants();
        StepDiagnostics dg;

        if (!t.steps.empty()) {
            const auto& prev = t.steps.back().u;
            double c0 = 0.0, c1 = 0.0;
            for (std::size_t i = 0; i < prev.size(); ++i) c0 = std::max(c0, std::abs(r.u[i] - prev[i]));
            const auto g1 = d.gradient(r.u), g0 = d.gradient(prev);
            for (std::size_t i = 0; i < g1.size(); ++i) c1 = std::max(c1, std::abs(g1[i] - g0[i]));
            dg.c0_diff = c0;
            dg.c1_diff = c1;
        }
        {
            const auto H = d.hessian(r.u);
            const auto bumps = bump_test_fields(d, 4);
            const std::size_t hs = d.shape().hessian_size(), N = static_cast<std::size_t>(d.target_dim());
            const std::size_t ni = d.interior_count();
            for (std::size_t j = 0; j < std::min<std::size_t>(bumps.size(), 4); ++j) {
                std::vector<double> terms(ni, 0.0);
                for (std::size_t i = 0; i < ni; ++i) {
                    const std::size_t v = static_cast<std::size_t>(d.grid().interior[i]);
                    double lap = 0.0;
                    for (std::size_t k = 0; k < N; ++k)
                        for (int a = 0; a < d.dim(); ++a) lap += H[v * hs + d.shape().index(static_cast<int>(k), a, a)];
                    terms[i] = d.weights()[v] / d.volume() * lap * bumps[j][i];
                }
                dg.hessian_pairings.push_back(pairwise_sum(terms));
            }
        }

        if (r.converged) {
            for (const auto& q : t.steps)
                if (prob.objective_and_gradient(r.u, q.p).norm > r.L_p * (1.0 + 1e-12)) dg.norm_monotone = false;
            dg.sandwich = multiplier_sandwich(fc, gc, r.p, r.L_p, r.Lambda_p, std::max(1e-9, 10.0 * r.el_residual));
            MeasurePair m = assemble_measures(prob, r);
            dg.mass = mass_bounds_report(m, fc, gc, std::max(1e-10, 10.0 * r.el_residual));
            dg.pairing_residual = pairing_residual(prob, m, r.u, residual_basis(d, r.u, solver_.test_basis_size));
            dg.concentration = concentration(prob, m, r.u);
            if (!dg.sandwich.passed) dg.failures.emplace_back("multiplier sandwich");
            if (!dg.mass.nu_ok) dg.failures.emplace_back("nu mass above 1");
            if (!dg.mass.M_ok) dg.failures.emplace_back("M mass above bound");
            if (dg.pairing_residual > std::max(1e-8, 10.0 * r.el_residual)) dg.failures.emplace_back("pairing residual");
            if (!dg.norm_monotone) dg.failures.emplace_back("norm monotonicity");
            if (!r.merit_monotone) dg.failures.emplace_back("merit monotonicity");
            dg.accepted = true;
            t.measures.push_back(std::move(m));
        } else {
            t.solver_failed = true;
            dg.failures.emplace_back("solver did not converge");
        }
        t.steps.push_back(std::move(r));
        t.diagnostics.push_back(std::move(dg));
    }

    std::shared_ptr<const PProblem> prob_;
    ScheduleSettings schedule_;
    SolverSettings solver_;
    std::uint64_t hash_;
};

} // namespace linfeig
