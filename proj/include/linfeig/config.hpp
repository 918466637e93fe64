#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "linfeig/continuation.hpp"
#include "linfeig/densities.hpp"
#include "linfeig/discretization.hpp"
#include "linfeig/geometry.hpp"

namespace linfeig {

using json = nlohmann::json;

inline constexpr int config_schema_version = 1;
inline constexpr int report_schema_version = 1;

struct RunConfig {
    DomainSpec domain;
    BoundaryMode bc = BoundaryMode::Hinged;
    std::string f_name, g_name;
    Params f_params, g_params;
    int resolution = 0;
    ScheduleSettings schedule;
    SolverSettings solver;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::set<std::string> formats;
    int bounds_samples = 100000;
    double discretisation_slack = 0.01;

    json echo; ///< normalised configuration with every default filled in

    bool wants(const std::string& fmt) const { return formats.count(fmt) != 0; }
};

inline const std::vector<std::string>& known_formats()
{
    static const std::vector<std::string> f{"report", "trace", "measures", "checkpoint", "timings"};
    return f;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace detail {

/// Reads keys of one JSON object and rejects any it did not consume.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }

    const json& at(const std::string& key)
    {
        if (!j_.contains(key)) throw ConfigError(key_path(key), "missing required field");
        used_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key)
    {
        const json& v = at(key);
        if (!v.is_number()) throw ConfigError(key_path(key), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(key_path(key), "must be finite");
        return x;
    }
    double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    std::int64_t integer(const std::string& key)
    {
        const json& v = at(key);
        if (!v.is_number_integer()) throw ConfigError(key_path(key), "expected an integer");
        return v.get<std::int64_t>();
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) { return has(key) ? integer(key) : fallback; }

    std::string string(const std::string& key)
    {
        const json& v = at(key);
        if (!v.is_string()) throw ConfigError(key_path(key), "expected a string");
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& fallback) { return has(key) ? string(key) : fallback; }

    void finish() const
    {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw ConfigError(key_path(k), "unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline Params read_params(const json& j, const std::string& path)
{
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    Params p;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_number()) throw ConfigError(path + "." + k, "expected a number");
        p[k] = v.get<double>();
    }
    return p;
}

inline json params_json(const Params& p)
{
    json j = json::object();
    for (const auto& [k, v] : p) j[k] = v;
    return j;
}

} // namespace detail

/// Validates a parsed configuration; every error names the offending key path.
inline RunConfig config_from_json(const json& root)
{
    RunConfig c;
    detail::ObjectReader r(root, "");

    const auto version = r.integer("schema_version");
    if (version != config_schema_version)
        throw ConfigError("schema_version", "unsupported version " + std::to_string(version));

    const int N = static_cast<int>(r.integer("target_dim", 1));
    if (N < 1 || N > 8) throw ConfigError("target_dim", "must be between 1 and 8");
    {
        detail::ObjectReader d(r.at("domain"), "domain");
        const std::string kind = d.string("kind");
        try {
            if (kind == "interval") {
                c.domain = DomainSpec::interval(d.number("a"), d.number("b"), N);
            } else if (kind == "rectangle") {
                c.domain = DomainSpec::rectangle(d.number("a"), d.number("b"), d.number("c"), d.number("d"), N);
            } else if (kind == "disc") {
                const json& ctr = d.at("center");
                if (!ctr.is_array() || ctr.size() != 2 || !ctr[0].is_number() || !ctr[1].is_number())
                    throw ConfigError("domain.center", "expected [x, y]");
                c.domain = DomainSpec::disc({ctr[0].get<double>(), ctr[1].get<double>()}, d.number("radius"), N);
            } else {
                throw ConfigError("domain.kind", "expected interval, rectangle or disc, got '" + kind + "'");
            }
        } catch (const GeometryError& e) {
            throw ConfigError("domain", e.what());
        }
        d.finish();
    }

    try {
        c.bc = parse_boundary_mode(r.string("bc"));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError("bc", e.what());
    }

    auto read_density = [&](const std::string& key, std::string& name, Params& params) {
        detail::ObjectReader d(r.at(key), key);
        name = d.string("name");
        if (d.has("params")) params = detail::read_params(d.at("params"), key + ".params");
        d.finish();
    };
    read_density("density_f", c.f_name, c.f_params);
    read_density("density_g", c.g_name, c.g_params);
    try {
        make_density_f(c.f_name, c.f_params);
    } catch (const DensityError& e) {
        throw ConfigError("density_f", e.what());
    }
    try {
        make_density_g(c.g_name, c.g_params);
    } catch (const DensityError& e) {
        throw ConfigError("density_g", e.what());
    }

    const auto res = r.integer("resolution");
    if (res < 5 || res > 100000) throw ConfigError("resolution", "must be between 5 and 100000");
    c.resolution = static_cast<int>(res);

    if (r.has("schedule")) {
        detail::ObjectReader s(r.at("schedule"), "schedule");
        c.schedule.p0 = s.number("p0", c.schedule.p0);
        c.schedule.factor = s.number("factor", c.schedule.factor);
        c.schedule.p_max = s.number("p_max", c.schedule.p_max);
        c.schedule.lambda_tol = s.number("lambda_tol", c.schedule.lambda_tol);
        s.finish();
    }
    const double alpha = make_density_f(c.f_name, c.f_params)->constants().alpha;
    const double p0 = c.schedule.start(c.domain.dim, alpha);
    if (c.schedule.p0 != 0.0 && !(c.schedule.p0 > c.domain.dim / alpha))
        throw ConfigError("schedule.p0", "must exceed n/alpha = " + std::to_string(c.domain.dim / alpha));
    if (!(c.schedule.factor > 1.0)) throw ConfigError("schedule.factor", "must be > 1");
    if (c.schedule.p_max < p0) throw ConfigError("schedule.p_max", "must be >= p0 = " + std::to_string(p0));
    if (!(c.schedule.lambda_tol >= 0.0)) throw ConfigError("schedule.lambda_tol", "must be >= 0");

    if (r.has("solver")) {
        detail::ObjectReader s(r.at("solver"), "solver");
        SolverSettings& v = c.solver;
        v.max_outer = static_cast<int>(s.integer("max_outer", v.max_outer));
        v.max_inner = static_cast<int>(s.integer("max_inner", v.max_inner));
        v.penalty_init = s.number("penalty_init", v.penalty_init);
        v.penalty_growth = s.number("penalty_growth", v.penalty_growth);
        v.gradient_tol = s.number("gradient_tol", v.gradient_tol);
        v.constraint_tol = s.number("constraint_tol", v.constraint_tol);
        v.lbfgs_memory = static_cast<int>(s.integer("lbfgs_memory", v.lbfgs_memory));
        v.test_basis_size = static_cast<int>(s.integer("test_basis_size", v.test_basis_size));
        s.finish();
    }
    const auto seed = r.integer("seed", 0);
    if (seed < 0) throw ConfigError("seed", "must be >= 0");
    c.seed = static_cast<std::uint64_t>(seed);
    c.solver.seed = c.seed;
    try {
        c.solver.validate();
    } catch (const Error& e) {
        throw ConfigError("solver", e.what());
    }

    c.output_dir = r.string("output_dir", c.output_dir);
    if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
    if (r.has("formats")) {
        const json& f = r.at("formats");
        if (!f.is_array()) throw ConfigError("formats", "expected an array of strings");
        for (const auto& v : f) {
            if (!v.is_string()) throw ConfigError("formats", "expected an array of strings");
            const auto s = v.get<std::string>();
            if (std::find(known_formats().begin(), known_formats().end(), s) == known_formats().end())
                throw ConfigError("formats", "unknown format '" + s + "'");
            c.formats.insert(s);
        }
    } else {
        c.formats.insert(known_formats().begin(), known_formats().end());
    }
    const auto samples = r.integer("bounds_samples", c.bounds_samples);
    if (samples < 1000) throw ConfigError("bounds_samples", "must be >= 1000");
    c.bounds_samples = static_cast<int>(samples);
    c.discretisation_slack = r.number("discretisation_slack", c.discretisation_slack);
    if (!(c.discretisation_slack >= 0.0)) throw ConfigError("discretisation_slack", "must be >= 0");
    r.finish();

    // normalised echo
    json& e = c.echo;
    e["schema_version"] = config_schema_version;
    e["target_dim"] = N;
    json dom{{"kind", to_string(c.domain.kind)}};
    switch (c.domain.kind) {
    case DomainKind::Interval: dom["a"] = c.domain.a; dom["b"] = c.domain.b; break;
    case DomainKind::Rectangle:
        dom["a"] = c.domain.a; dom["b"] = c.domain.b; dom["c"] = c.domain.c; dom["d"] = c.domain.d;
        break;
    case DomainKind::Disc: dom["center"] = {c.domain.center[0], c.domain.center[1]}; dom["radius"] = c.domain.radius; break;
    }
    e["domain"] = dom;
    e["bc"] = to_string(c.bc);
    e["density_f"] = {{"name", c.f_name}, {"params", detail::params_json(c.f_params)}};
    e["density_g"] = {{"name", c.g_name}, {"params", detail::params_json(c.g_params)}};
    e["resolution"] = c.resolution;
    e["schedule"] = {{"p0", p0}, {"factor", c.schedule.factor}, {"p_max", c.schedule.p_max},
                     {"lambda_tol", c.schedule.lambda_tol}};
    const SolverSettings& v = c.solver;
    e["solver"] = {{"max_outer", v.max_outer},       {"max_inner", v.max_inner},
                   {"penalty_init", v.penalty_init}, {"penalty_growth", v.penalty_growth},
                   {"gradient_tol", v.gradient_tol}, {"constraint_tol", v.constraint_tol},
                   {"lbfgs_memory", v.lbfgs_memory}, {"test_basis_size", v.test_basis_size}};
    e["seed"] = c.seed;
    e["output_dir"] = c.output_dir;
    e["formats"] = json(std::vector<std::string>(c.formats.begin(), c.formats.end()));
    e["bounds_samples"] = c.bounds_samples;
    e["discretisation_slack"] = c.discretisation_slack;
    c.schedule.p0 = p0;
    return c;
}

inline RunConfig parse_config_text(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed configuration: ") + e.what());
    }
    return config_from_json(j);
}

inline RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read configuration " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Hash of the whole normalised configuration (key order does not matter:
/// objects are serialised with sorted keys).
inline std::uint64_t config_hash(const RunConfig& c) { return fnv1a(c.echo.dump()); }

/// Hash of what determines the solution sequence: p_max, lambda_tol, the output
/// location and the artifact formats are left out so a run can be extended.
inline std::uint64_t problem_hash(const RunConfig& c)
{
    json j = c.echo;
    j.erase("output_dir");
    j.erase("formats");
    j.erase("bounds_samples");
    j.erase("discretisation_slack");
    j["schedule"].erase("p_max");
    j["schedule"].erase("lambda_tol");
    return fnv1a(j.dump());
}

} // namespace linfeig
