// Command-line front end: run, exact, steady-check, limit-study.

#include <CLI11.hpp>

#include <iostream>

#include "mesokin/io.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts, bool needs_config) {
    auto* c = cmd->add_option("--config", opts.config_path, "configuration file");
    if (needs_config) c->required();
    cmd->add_option("--out", opts.out_dir, "output directory (overrides the config)");
    cmd->add_option("--seed", opts.seed, "random seed (overrides the config)");
    cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
}

mesokin::RunConfig load(const CommonOptions& opts) {
    mesokin::RunConfig config = mesokin::load_config(opts.config_path);
    if (!opts.out_dir.empty()) config.output.directory = opts.out_dir;
    if (opts.seed) {
        config.initial.seed = *opts.seed;
        if (!config.initial.fibre_seed) config.initial.fibre_seed = *opts.seed + 1;
    }
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mesokin: kinetic simulator for cell motion in fibre networks"};
    app.require_subcommand(1);

    CommonOptions run_opts, exact_opts, steady_opts, limit_opts;
    std::string steady_spec;

    CLI::App* run_cmd = app.add_subcommand("run", "integrate the coupled cell/fibre system");
    add_common(run_cmd, run_opts, true);

    CLI::App* exact_cmd =
        app.add_subcommand("exact", "evaluate the closed-form solution for a prescribed network");
    add_common(exact_cmd, exact_opts, true);

    CLI::App* steady_cmd =
        app.add_subcommand("steady-check", "classify intersection or network steady-state specs");
    steady_cmd->add_option("spec", steady_spec, "steady-state spec file")->required();
    add_common(steady_cmd, steady_opts, false);

    CLI::App* limit_cmd =
        app.add_subcommand("limit-study", "scaling-limit convergence experiment");
    add_common(limit_cmd, limit_opts, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? mesokin::kExitOk : mesokin::kExitConfig;
    }

    try {
        if (run_cmd->parsed()) return mesokin::cmd_run(load(run_opts), std::cout, run_opts.quiet);
        if (exact_cmd->parsed())
            return mesokin::cmd_exact(load(exact_opts), std::cout, exact_opts.quiet);
        if (steady_cmd->parsed()) {
            std::string out = steady_opts.out_dir.empty() ? "out" : steady_opts.out_dir;
            return mesokin::cmd_steady_check(steady_spec, out, std::cout, steady_opts.quiet);
        }
        if (limit_cmd->parsed())
            return mesokin::cmd_limit_study(load(limit_opts), std::cout, limit_opts.quiet);
    } catch (const mesokin::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return mesokin::kExitConfig;
    } catch (const mesokin::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return mesokin::kExitNumerical;
    }
    return mesokin::kExitConfig;
}
