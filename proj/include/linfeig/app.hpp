#pragma once

// Batch front end: run a configuration, verify stored artifacts, export plot data.

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "linfeig/bounds.hpp"
#include "linfeig/config.hpp"
#include "linfeig/continuation.hpp"
#include "linfeig/measures.hpp"

namespace linfeig {

namespace fs = std::filesystem;

enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,
    exit_config = 2,
    exit_solver = 3,
    exit_invariant = 4,
};

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

/// %.17g, or an empty cell for non-finite values.
inline std::string csv_num(double v)
{
    if (!std::isfinite(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Short label of an exponent for file names, e.g. 4, 512, 4.5.
inline std::string p_label(double p)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", p);
    return buf;
}

inline std::string measures_file_name(double p) { return "measures_p" + p_label(p) + ".csv"; }

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw Error("csv column '" + name + "' not found");
    }
    bool has_column(const std::string& name) const
    {
        return std::find(header.begin(), header.end(), name) != header.end();
    }
    double at(std::size_t row, const std::string& name) const { return rows[row][column(name)]; }
};

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// Reads a numeric CSV with a header row; empty cells become NaN.
inline CsvTable read_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw Error(path.string() + ": empty file");
    t.header = split_csv_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw Error(path.string() + ":" + std::to_string(lineno) + ": wrong number of columns");
        std::vector<double> row;
        for (const auto& c : cells) {
            if (c.empty()) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            if (end == c.c_str() || *end != '\0')
                throw Error(path.string() + ":" + std::to_string(lineno) + ": not a number '" + c + "'");
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines)
{
    std::string s;
    for (const auto& l : lines) {
        s += l;
        s += '\n';
    }
    atomic_write(path, s);
}

inline std::string join(const std::vector<std::string>& cells)
{
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += cells[i];
    }
    return s;
}

// ---------------------------------------------------------------------------
// Problem assembly from a configuration
// ---------------------------------------------------------------------------

struct ProblemSetup {
    std::shared_ptr<const Discretization> disc;
    std::shared_ptr<const PProblem> prob;
};

inline ProblemSetup build_problem(const RunConfig& c)
{
    ProblemSetup s;
    s.disc = std::make_shared<Discretization>(c.domain, c.resolution, c.bc);
    s.prob = std::make_shared<PProblem>(s.disc, make_density_f(c.f_name, c.f_params),
                                        make_density_g(c.g_name, c.g_params));
    return s;
}

inline const char* trace_columns[] = {
    "p", "Lambda_p", "L_p", "log_lambda_p", "lambda_p", "constraint_norm", "constraint_linf",
    "constraint_residual", "el_residual", "nu_mass", "M_mass", "M_limit", "pairing_residual", "concentration",
    "c0_diff", "c1_diff", "converged", "inner_iterations", "outer_iterations"};

inline std::vector<std::string> trace_csv_lines(const ContinuationTrace& t)
{
    std::vector<std::string> lines{join(std::vector<std::string>(std::begin(trace_columns), std::end(trace_columns)))};
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const PRunResult& s = t.steps[i];
        const StepDiagnostics& d = t.diagnostics[i];
        const double nan = std::numeric_limits<double>::quiet_NaN();
        lines.push_back(join({csv_num(s.p), csv_num(s.Lambda_p), csv_num(s.L_p), csv_num(s.log_lambda_p),
                              csv_num(s.lambda_p), csv_num(s.constraint_norm), csv_num(s.constraint_linf),
                              csv_num(s.constraint_residual), csv_num(s.el_residual),
                              csv_num(d.accepted ? d.mass.nu_mass : nan), csv_num(d.accepted ? d.mass.M_mass : nan),
                              csv_num(d.accepted ? d.mass.M_limit : nan),
                              csv_num(d.accepted ? d.pairing_residual : nan),
                              csv_num(d.accepted ? d.concentration : nan), csv_num(d.c0_diff), csv_num(d.c1_diff),
                              s.converged ? "1" : "0", std::to_string(s.inner_iterations),
                              std::to_string(s.outer_iterations)}));
    }
    return lines;
}

/// Per-node measure export: coordinates, cell volume, u, g, nu and M densities.
inline std::vector<std::string> measures_csv_lines(const PProblem& prob, const PRunResult& r, const MeasurePair& m)
{
    const Discretization& d = prob.disc();
    const TensorShape sh = d.shape();
    const int N = d.target_dim(), n = d.dim();
    std::vector<std::string> head{"x"};
    if (n == 2) head.emplace_back("y");
    head.emplace_back("cell_volume");
    for (int k = 0; k < N; ++k) head.push_back("u_" + std::to_string(k));
    for (const char* h : {"g", "nu_density", "nu_mass", "M_norm", "M_mass"}) head.emplace_back(h);
    for (int k = 0; k < N; ++k)
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                head.push_back("M_" + std::to_string(k) + "_" + std::to_string(a) + std::to_string(b));

    const GridField u = d.field(r.u);
    const Integrands it = prob.integrands(r.u, false, true);
    std::vector<std::string> lines{join(head)};
    for (std::size_t v = 0; v < d.nodes(); ++v) {
        std::vector<std::string> row;
        const Point& x = d.grid().coords[v];
        row.push_back(csv_num(x[0]));
        if (n == 2) row.push_back(csv_num(x[1]));
        row.push_back(csv_num(d.weights()[v]));
        for (int k = 0; k < N; ++k) row.push_back(csv_num(u.values[v * static_cast<std::size_t>(N) + k]));
        row.push_back(csv_num(it.g[v]));
        row.push_back(csv_num(m.nu.density[v]));
        row.push_back(csv_num(m.nu.node_mass(v)));
        row.push_back(csv_num(m.M.magnitude(v)));
        row.push_back(csv_num(m.M.node_mass(v)));
        for (std::size_t j = 0; j < sh.hessian_size(); ++j) row.push_back(csv_num(m.M.density[v * sh.hessian_size() + j]));
        lines.push_back(join(row));
    }
    return lines;
}

/// Rebuilds the dofs and the measure pair stored in a measures CSV.
inline std::pair<std::vector<double>, MeasurePair> read_measures_csv(const fs::path& path, const Discretization& d,
                                                                     double p, double Lambda_p)
{
    const CsvTable t = read_csv(path);
    if (t.rows.size() != d.nodes()) throw Error(path.string() + ": node count does not match the grid");
    const TensorShape sh = d.shape();
    const int N = d.target_dim(), n = d.dim();
    GridField u{std::vector<double>(d.nodes() * static_cast<std::size_t>(N)), N, d.bc()};
    MeasurePair m;
    m.p = p;
    m.Lambda_p = Lambda_p;
    m.M.kind = MeasureKind::Tensor;
    m.M.block = sh.hessian_size();
    m.M.density.resize(d.nodes() * sh.hessian_size());
    m.nu.density.resize(d.nodes());
    for (DiscreteMeasure* dm : {&m.M, &m.nu}) {
        dm->cell_volumes.resize(d.nodes());
        dm->domain_volume = d.volume();
    }
    std::vector<std::size_t> ucol, mcol;
    for (int k = 0; k < N; ++k) ucol.push_back(t.column("u_" + std::to_string(k)));
    for (int k = 0; k < N; ++k)
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                mcol.push_back(t.column("M_" + std::to_string(k) + "_" + std::to_string(a) + std::to_string(b)));
    const std::size_t cvol = t.column("cell_volume"), cnu = t.column("nu_density");
    for (std::size_t v = 0; v < d.nodes(); ++v) {
        const auto& row = t.rows[v];
        for (int k = 0; k < N; ++k) u.values[v * static_cast<std::size_t>(N) + k] = row[ucol[k]];
        for (std::size_t j = 0; j < mcol.size(); ++j) m.M.density[v * sh.hessian_size() + j] = row[mcol[j]];
        m.nu.density[v] = row[cnu];
        m.M.cell_volumes[v] = m.nu.cell_volumes[v] = row[cvol];
    }
    m.M.finalise();
    m.nu.finalise();
    return {d.dofs(u), std::move(m)};
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline json opt_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json bounds_json(const BoundsReport& b, const std::string& lower_note)
{
    json j;
    j["lower"] = b.lower;
    if (!lower_note.empty()) j["lower_note"] = lower_note;
    j["upper"] = b.upper ? json(*b.upper) : json(nullptr);
    if (!b.upper_note.empty()) j["upper_note"] = b.upper_note;
    j["constants"] = {{"C3", b.C3}, {"C4", b.C4}, {"C5", b.C5}, {"C6", b.C6}, {"alpha", b.alpha}, {"beta", b.beta}};
    j["geometry"] = {{"diameter", b.diameter}, {"C_inf", b.C_inf}, {"perimeter", b.perimeter},
                     {"curvature_sup", b.curvature_sup},
                     {"eps0", b.eps0 ? json(*b.eps0) : json(nullptr)}};
    j["sup_grad_eta"] = b.sup_grad_eta;
    j["sup_grad_P"] = b.sup_grad_P;
    j["gradient_safety"] = b.gradient_safety;
    j["mollifier"] = {{"c", b.mollifier_c}, {"C", b.mollifier_C}, {"omega_n", b.omega_n}};
    j["sup_R"] = b.sup_R ? json(*b.sup_R) : json(nullptr);
    j["curvature_quotient"] = b.curvature_quotient ? json(*b.curvature_quotient) : json(nullptr);
    return j;
}

inline BoundsReport bounds_from_json(const json& j)
{
    BoundsReport b;
    b.lower = j.at("lower").get<double>();
    if (!j.at("upper").is_null()) b.upper = j.at("upper").get<double>();
    return b;
}

struct InvariantChecks {
    std::map<std::string, bool> verdicts;
    std::vector<std::string> messages;

    void add(const std::string& name, bool ok, const std::string& msg = "")
    {
        auto [it, inserted] = verdicts.emplace(name, ok);
        if (!inserted) it->second = it->second && ok;
        if (!ok && !msg.empty()) messages.push_back(name + ": " + msg);
    }
    bool passed() const
    {
        for (const auto& [k, v] : verdicts)
            if (!v) return false;
        return true;
    }
};

/// True when f and g are homogeneous of the same degree, so Lambda_p = L_p.
inline bool equal_degree(const PProblem& prob)
{
    const auto a = prob.f().homogeneity(), b = prob.g().homogeneity();
    return a && b && *a == *b;
}

inline json step_json(const PRunResult& s, const StepDiagnostics& d, bool has_measures)
{
    json j;
    j["p"] = s.p;
    j["Lambda_p"] = opt_json(s.Lambda_p);
    j["L_p"] = opt_json(s.L_p);
    j["log_lambda_p"] = opt_json(s.log_lambda_p);
    j["lambda_p"] = opt_json(s.lambda_p); // null when exp(log_lambda_p) overflows
    j["constraint_norm"] = s.constraint_norm;
    j["constraint_linf"] = s.constraint_linf;
    j["constraint_residual"] = s.constraint_residual;
    j["el_residual"] = s.el_residual;
    j["multiplier"] = s.multiplier;
    j["penalty"] = s.penalty;
    j["inner_iterations"] = s.inner_iterations;
    j["outer_iterations"] = s.outer_iterations;
    j["converged"] = s.converged;
    j["merit_monotone"] = s.merit_monotone;
    j["flags"] = s.flags;
    j["c0_diff"] = opt_json(d.c0_diff);
    j["c1_diff"] = opt_json(d.c1_diff);
    j["hessian_pairings"] = d.hessian_pairings;
    j["measures"] = has_measures ? json(measures_file_name(s.p)) : json(nullptr);
    if (d.accepted) {
        j["sandwich"] = {{"lower", d.sandwich.lower}, {"upper", d.sandwich.upper},
                         {"slack", d.sandwich.slack}, {"passed", d.sandwich.passed}};
        j["nu_mass"] = d.mass.nu_mass;
        j["M_mass"] = d.mass.M_mass;
        j["M_limit"] = d.mass.M_limit;
        j["nu_margin"] = d.mass.nu_margin();
        j["M_margin"] = d.mass.M_margin();
        j["pairing_residual"] = d.pairing_residual;
        j["concentration"] = d.concentration;
        j["norm_monotone"] = d.norm_monotone;
    }
    j["failures"] = d.failures;
    return j;
}

/// Lower and upper bounds; a lower bound that cannot be formed is reported as 0.
inline std::pair<BoundsReport, std::string> safe_bounds(const PProblem& prob, const RunConfig& c)
{
    try {
        return {compute_bounds(prob.f().constants(), prob.g(), c.domain, c.bc, c.bounds_samples), ""};
    } catch (const BoundUnavailable& e) {
        BoundsReport b;
        b.upper_note = "upper bound not computed";
        return {b, e.what()};
    }
}

struct RunOptions {
    std::optional<std::string> output_dir; ///< overrides the configured directory
    bool resume = false;                   ///< continue from checkpoint.bin when present
    std::size_t max_steps = 0;             ///< stop early (testing interrupted runs)
    bool quiet = false;
};

inline int run_command(const fs::path& config_path, const RunOptions& opt = {}, std::ostream& log = std::cout,
                       std::ostream& err = std::cerr)
{
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();
    RunConfig cfg;
    ProblemSetup ps;
    std::unique_ptr<Continuation> cont;
    try {
        cfg = load_config(config_path);
        if (opt.output_dir) {
            cfg.output_dir = *opt.output_dir;
            cfg.echo["output_dir"] = cfg.output_dir;
        }
        ps = build_problem(cfg);
        cont = std::make_unique<Continuation>(ps.prob, cfg.schedule, cfg.solver, problem_hash(cfg));
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const Error& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    }

    const fs::path dir = cfg.output_dir;
    const fs::path ckpt = dir / "checkpoint.bin";
    std::optional<Checkpoint> resume_from;
    if (opt.resume && fs::exists(ckpt)) {
        try {
            resume_from = load_checkpoint(ckpt);
        } catch (const CheckpointError& e) {
            err << "checkpoint error: " << e.what() << '\n';
            return exit_config;
        }
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        err << "cannot create output directory " << dir << ": " << ec.message() << '\n';
        return exit_failure;
    }

    const PProblem& prob = *ps.prob;
    const Discretization& d = prob.disc();
    std::vector<double> step_seconds;
    auto t_step = clock::now();
    cont->max_steps = opt.max_steps;
    cont->on_step = [&](const ContinuationTrace& t) {
        const auto now = clock::now();
        step_seconds.push_back(std::chrono::duration<double>(now - t_step).count());
        t_step = now;
        const PRunResult& s = t.steps.back();
        if (!opt.quiet) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "p = %-6g Lambda_p = %.10g  L_p = %.10g  el = %.2e  %s\n", s.p, s.Lambda_p,
                          s.L_p, s.el_residual, s.converged ? "converged" : "NOT converged");
            log << buf << std::flush;
        }
        if (cfg.wants("checkpoint")) save_checkpoint(ckpt, cont->checkpoint(t));
    };

    ContinuationTrace trace;
    try {
        trace = resume_from ? cont->resume(*resume_from) : cont->run();
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << '\n';
        return exit_config;
    }
    const double solve_seconds = std::chrono::duration<double>(clock::now() - t_start).count();

    const auto t_bounds = clock::now();
    const auto [bounds, lower_note] = safe_bounds(prob, cfg);
    const double bounds_seconds = std::chrono::duration<double>(clock::now() - t_bounds).count();

    // invariant suite
    InvariantChecks checks;
    const bool homog = equal_degree(prob);
    std::size_t mi = 0;
    std::vector<bool> has_measures(trace.steps.size(), false);
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        const PRunResult& s = trace.steps[i];
        const StepDiagnostics& dg = trace.diagnostics[i];
        if (!dg.accepted) continue;
        has_measures[i] = true;
        const std::string at = " at p = " + p_label(s.p);
        checks.add("multiplier_sandwich", dg.sandwich.passed, "violated" + at);
        if (homog)
            checks.add("homogeneous_agreement", std::abs(s.Lambda_p - s.L_p) <= 1e-6 * s.L_p, "Lambda_p != L_p" + at);
        checks.add("nu_mass", dg.mass.nu_ok, "exceeds 1 + 1e-8" + at);
        checks.add("M_mass", dg.mass.M_ok, "exceeds the mass bound" + at);
        checks.add("pairing_residual", dg.pairing_residual <= std::max(1e-8, 10.0 * s.el_residual),
                   "too large" + at);
        checks.add("norm_monotone", dg.norm_monotone, "violated" + at);
        checks.add("merit_monotone", s.merit_monotone, "merit increased" + at);
        checks.add("finite", std::isfinite(s.Lambda_p) && std::isfinite(s.L_p) && std::isfinite(s.el_residual),
                   "non-finite value" + at);
        ++mi;
    }
    std::optional<SandwichVerdict> verdict;
    if (!trace.steps.empty() && trace.diagnostics.back().accepted) {
        std::optional<double> linf;
        if (trace.extrapolation) linf = trace.extrapolation->Lambda_inf;
        verdict = sandwich_check(bounds, trace.steps.back().Lambda_p, linf, cfg.discretisation_slack);
        checks.add("bounds_sandwich", verdict->passed, verdict->message);
    }

    // artifacts
    if (cfg.wants("measures"))
        for (std::size_t i = 0, k = 0; i < trace.steps.size(); ++i)
            if (has_measures[i])
                write_lines(dir / measures_file_name(trace.steps[i].p),
                            measures_csv_lines(prob, trace.steps[i], trace.measures[k++]));
    if (cfg.wants("trace")) write_lines(dir / "trace.csv", trace_csv_lines(trace));

    int code = exit_ok;
    std::string status = "ok";
    if (trace.solver_failed) {
        code = exit_solver;
        status = "solver_failure";
    } else if (!checks.passed()) {
        code = exit_invariant;
        status = "invariant_violation";
    } else if (trace.termination == "interrupted") {
        status = "interrupted";
    }

    if (cfg.wants("report")) {
        json rep;
        rep["schema_version"] = report_schema_version;
        rep["config"] = cfg.echo;
        rep["config_hash"] = hex64(config_hash(cfg));
        rep["problem_hash"] = hex64(problem_hash(cfg));
        rep["grid"] = {{"nodes", d.nodes()}, {"interior_nodes", d.interior_count()}, {"volume", d.volume()}};
        rep["status"] = status;
        rep["termination"] = trace.termination;
        json steps = json::array();
        for (std::size_t i = 0; i < trace.steps.size(); ++i)
            steps.push_back(step_json(trace.steps[i], trace.diagnostics[i], has_measures[i] && cfg.wants("measures")));
        rep["steps"] = steps;
        if (trace.extrapolation) {
            const Extrapolation& e = *trace.extrapolation;
            rep["extrapolation"] = {{"Lambda_inf", e.Lambda_inf}, {"slope", e.slope},
                                    {"fit_residual", e.fit_residual}, {"warning", e.warning}, {"note", e.note}};
        } else {
            rep["extrapolation"] = nullptr;
        }
        rep["bounds"] = bounds_json(bounds, lower_note);
        if (verdict) {
            rep["sandwich_check"] = {{"passed", verdict->passed}, {"lower_ok", verdict->lower_ok},
                                     {"upper_ok", verdict->upper_ok ? json(*verdict->upper_ok) : json(nullptr)},
                                     {"message", verdict->message}};
        }
        if (trace.measures.size() >= 3) {
            json ws = json::array();
            for (const auto& row : weakstar_trace(d.grid(), d.shape(), trace.measures, default_test_functions(cfg.domain)))
                ws.push_back({{"test", row.name}, {"p", row.p}, {"nu_pairing", row.nu_pairing},
                              {"M_pairing", row.M_pairing}, {"nu_cauchy", row.nu_cauchy},
                              {"M_cauchy", row.M_cauchy}});
            rep["weak_star"] = ws;
        }
        json cj = json::object();
        for (const auto& [k, v] : checks.verdicts) cj[k] = v;
        rep["checks"] = cj;
        rep["check_messages"] = checks.messages;
        json art = {{"trace", cfg.wants("trace") ? json("trace.csv") : json(nullptr)},
                    {"checkpoint", cfg.wants("checkpoint") ? json("checkpoint.bin") : json(nullptr)},
                    {"timings", cfg.wants("timings") ? json("timings.json") : json(nullptr)}};
        rep["artifacts"] = art;
        atomic_write(dir / "report.json", rep.dump(2) + "\n");
    }
    if (cfg.wants("timings")) {
        json tj;
        tj["solve_seconds"] = solve_seconds;
        tj["bounds_seconds"] = bounds_seconds;
        tj["step_seconds"] = step_seconds;
        tj["threads"] = thread_count();
        tj["total_seconds"] = std::chrono::duration<double>(clock::now() - t_start).count();
        atomic_write(dir / "timings.json", tj.dump(2) + "\n");
    }

    if (!opt.quiet) {
        if (trace.extrapolation) log << "extrapolated Lambda_inf = " << csv_num(trace.extrapolation->Lambda_inf) << '\n';
        log << "lower bound = " << csv_num(bounds.lower);
        if (bounds.upper) log << ", upper bound = " << csv_num(*bounds.upper);
        log << '\n' << "termination: " << trace.termination << '\n';
        for (const auto& m : checks.messages) log << "invariant: " << m << '\n';
        log << "status: " << status << " (artifacts in " << dir.string() << ")\n";
    }
    return code;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyResult {
    int exit_code = exit_ok;
    std::vector<std::string> missing;
    std::vector<std::string> failures;
    std::vector<std::string> passes;
};

/// Re-runs the invariant suite on stored artifacts without solving anything.
inline VerifyResult verify_artifacts(const fs::path& report_path)
{
    VerifyResult vr;
    const fs::path dir = report_path.parent_path().empty() ? fs::path(".") : report_path.parent_path();
    json rep;
    {
        std::ifstream in(report_path);
        if (!in) {
            vr.missing.push_back("report");
            vr.exit_code = exit_config;
            return vr;
        }
        try {
            rep = json::parse(in);
        } catch (const json::exception& e) {
            vr.failures.push_back(std::string("report unreadable: ") + e.what());
            vr.exit_code = exit_config;
            return vr;
        }
    }
    try {
        if (rep.at("schema_version").get<int>() != report_schema_version)
            throw Error("unsupported report schema version");
        const RunConfig cfg = config_from_json(rep.at("config"));
        const ProblemSetup ps = build_problem(cfg);
        const PProblem& prob = *ps.prob;
        const Discretization& d = prob.disc();
        const FConstants fc = prob.f().constants();
        const GConstants gc = prob.g().constants();

        const fs::path trace_path = dir / "trace.csv";
        if (!fs::exists(trace_path)) {
            vr.missing.push_back("trace");
            vr.exit_code = exit_config;
            return vr;
        }
        const CsvTable tr = read_csv(trace_path);
        const json& steps = rep.at("steps");
        if (steps.size() != tr.rows.size()) throw Error("trace.csv and report.json disagree on the number of steps");

        // measures files must all be present before any check runs
        for (const auto& s : steps)
            if (!s.at("measures").is_null() && !fs::exists(dir / s.at("measures").get<std::string>()))
                vr.missing.push_back("measures (" + s.at("measures").get<std::string>() + ")");
        if (!vr.missing.empty()) {
            vr.exit_code = exit_config;
            return vr;
        }

        auto check = [&](bool ok, const std::string& what) { (ok ? vr.passes : vr.failures).push_back(what); };
        std::vector<double> ps_ok, Ls_ok;
        for (std::size_t i = 0; i < tr.rows.size(); ++i) {
            const double p = tr.at(i, "p"), Lam = tr.at(i, "Lambda_p"), L = tr.at(i, "L_p");
            const double el = tr.at(i, "el_residual");
            const std::string at = " at p = " + p_label(p);
            if (tr.at(i, "converged") != 1.0) continue;
            ps_ok.push_back(p);
            Ls_ok.push_back(Lam);
            const SandwichCheck sw = multiplier_sandwich(fc, gc, p, L, Lam, std::max(1e-9, 10.0 * el));
            check(sw.passed, "multiplier sandwich" + at);
            if (steps[i].at("measures").is_null()) continue;
            auto [u, m] = read_measures_csv(dir / steps[i].at("measures").get<std::string>(), d, p, Lam);
            const MassBoundsReport mb = mass_bounds_report(m, fc, gc, std::max(1e-10, 10.0 * el));
            check(mb.nu_ok, "nu mass <= 1" + at);
            check(mb.M_ok, "M mass bound" + at);
            const double pr = pairing_residual(prob, m, u, residual_basis(d, u, cfg.solver.test_basis_size), Lam);
            check(pr <= std::max(1e-8, 10.0 * el), "pairing residual" + at);
        }
        if (!ps_ok.empty()) {
            std::optional<double> linf;
            if (ps_ok.size() >= 3) linf = extrapolate_lambda(ps_ok, Ls_ok).Lambda_inf;
            const SandwichVerdict v = sandwich_check(bounds_from_json(rep.at("bounds")), Ls_ok.back(), linf,
                                                     cfg.discretisation_slack);
            check(v.passed, "bounds sandwich (" + v.message + ")");
        }
    } catch (const std::exception& e) {
        vr.failures.push_back(std::string("verification error: ") + e.what());
    }
    if (!vr.failures.empty()) vr.exit_code = exit_invariant;
    return vr;
}

inline int verify_command(const fs::path& report_path, std::ostream& out = std::cout)
{
    const VerifyResult r = verify_artifacts(report_path);
    for (const auto& m : r.missing) out << "missing artifact: " << m << '\n';
    for (const auto& f : r.failures) out << "FAIL " << f << '\n';
    out << "verify: " << (r.exit_code == exit_ok ? "PASS" : "FAIL") << " (" << r.passes.size() << " checks passed, "
        << r.failures.size() << " failed";
    if (!r.missing.empty()) out << ", " << r.missing.size() << " artifacts missing";
    out << ")\n";
    return r.exit_code;
}

// ---------------------------------------------------------------------------
// export-plots
// ---------------------------------------------------------------------------

struct ExportResult {
    std::vector<fs::path> files;
    std::vector<double> omitted;
};

/// Writes plots/lambda_vs_p.csv and plots/nodes_p{P}.csv under the run directory.
inline ExportResult export_plots(const fs::path& run_dir)
{
    std::ifstream in(run_dir / "report.json");
    if (!in) throw Error("missing artifact: report");
    const json rep = json::parse(in);
    const CsvTable tr = read_csv(run_dir / "trace.csv");
    if (tr.rows.empty()) throw Error("trace is empty");
    const fs::path out = run_dir / "plots";
    fs::create_directories(out);
    ExportResult r;

    const json& b = rep.at("bounds");
    const std::string lower = csv_num(b.at("lower").get<double>());
    const std::string upper = b.at("upper").is_null() ? "" : csv_num(b.at("upper").get<double>());
    std::vector<std::string> lines{"p,Lambda_p,L_p,lower,upper"};
    for (std::size_t i = 0; i < tr.rows.size(); ++i)
        lines.push_back(join({csv_num(tr.at(i, "p")), csv_num(tr.at(i, "Lambda_p")), csv_num(tr.at(i, "L_p")), lower,
                              upper}));
    write_lines(out / "lambda_vs_p.csv", lines);
    r.files.push_back(out / "lambda_vs_p.csv");

    json omitted = json::array();
    for (const auto& s : rep.at("steps")) {
        const double p = s.at("p").get<double>();
        const fs::path mf = s.at("measures").is_null() ? fs::path() : run_dir / s.at("measures").get<std::string>();
        if (mf.empty() || !fs::exists(mf)) {
            r.omitted.push_back(p);
            omitted.push_back({{"p", p}, {"reason", mf.empty() ? "no measures at this step" : "measures file missing"}});
            continue;
        }
        const CsvTable m = read_csv(mf);
        const bool two_d = m.has_column("y");
        std::vector<std::string> nl{two_d ? "x,y,g,nu_weight,M_weight" : "x,g,nu_weight,M_weight"};
        for (std::size_t v = 0; v < m.rows.size(); ++v) {
            std::vector<std::string> row{csv_num(m.at(v, "x"))};
            if (two_d) row.push_back(csv_num(m.at(v, "y")));
            row.push_back(csv_num(m.at(v, "g")));
            row.push_back(csv_num(m.at(v, "nu_mass")));
            row.push_back(csv_num(m.at(v, "M_mass")));
            nl.push_back(join(row));
        }
        const fs::path f = out / ("nodes_p" + p_label(p) + ".csv");
        write_lines(f, nl);
        r.files.push_back(f);
    }
    json manifest{{"files", json::array()}, {"omitted_steps", omitted}};
    for (const auto& f : r.files) manifest["files"].push_back(f.filename().string());
    atomic_write(out / "manifest.json", manifest.dump(2) + "\n");
    return r;
}

inline int export_plots_command(const fs::path& run_dir, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    try {
        const ExportResult r = export_plots(run_dir);
        for (const auto& f : r.files) out << "wrote " << f.string() << '\n';
        for (double p : r.omitted) out << "omitted p = " << p_label(p) << " (no measures)\n";
        return exit_ok;
    } catch (const std::exception& e) {
        err << "export-plots: " << e.what() << '\n';
        return exit_failure;
    }
}

} // namespace linfeig
