#include <CLI11.hpp>

#include "linfeig/app.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"linfeig: second-order L-infinity eigenvalue solver"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    bool resume = false, quiet = false;
    auto* run = app.add_subcommand("run", "solve along the p-schedule of a configuration and write artifacts");
    run->add_option("config", config_path, "run configuration (JSON)")->required();
    run->add_option("-o,--output-dir", out_dir, "override the configured output directory");
    run->add_flag("--resume", resume, "continue from checkpoint.bin in the output directory");
    run->add_flag("-q,--quiet", quiet, "no progress output");

    std::string report_path;
    auto* verify = app.add_subcommand("verify", "re-check the invariants of stored artifacts");
    verify->add_option("report", report_path, "path to report.json")->required();

    std::string run_dir;
    auto* plots = app.add_subcommand("export-plots", "write plot-ready CSV files under <run-dir>/plots");
    plots->add_option("run-dir", run_dir, "directory of a finished run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : linfeig::exit_config;
    }

    try {
        if (*run) {
            linfeig::RunOptions opt;
            if (!out_dir.empty()) opt.output_dir = out_dir;
            opt.resume = resume;
            opt.quiet = quiet;
            return linfeig::run_command(config_path, opt);
        }
        if (*verify) return linfeig::verify_command(report_path);
        if (*plots) return linfeig::export_plots_command(run_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return linfeig::exit_failure;
    }
    return linfeig::exit_failure;
}
