// pdirichlet: sampling, density estimation, discrete and continuum p-Dirichlet solves and the
// error studies, driven by key=value configs and flags that mirror the config keys.

#include "pdirichlet/error.hpp"
#include "pdirichlet/io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

namespace {

constexpr int kNotConverged = 7;

const std::map<std::string, std::string> kHelp = {
    {"density", "reference density: rho1, rho2 or rho3"},
    {"estimator", "density for the continuum solve: exact, kde or skde"},
    {"n", "sample size (integer or b^e)"},
    {"h", "KDE bandwidth"},
    {"T", "spline data sites (perfect square)"},
    {"lambda", "spline penalty"},
    {"p", "Dirichlet exponent"},
    {"graph", "graph type: epsilon or knn"},
    {"eps", "eps-graph length scale, or auto"},
    {"k", "neighbours for knn graphs"},
    {"eta", "weight profile: indicator, gaussian or epanechnikov"},
    {"beta", "boundary regularisation"},
    {"tol", "solver tolerance"},
    {"max_iter", "iteration cap"},
    {"scheme", "continuum scheme: weak or collocation"},
    {"seed", "random seed (or comma list)"},
    {"seeds", "comma-separated seeds"},
    {"points_per_patch", "Chebyshev points per patch side"},
    {"mesh", "evaluation mesh side"},
    {"n_values", "study sample sizes, comma-separated"},
    {"h_values", "study bandwidths, comma-separated"},
    {"h_exponent", "study bandwidth rule h = n^-e, or none"},
    {"derivatives", "score density derivatives (true/false)"},
    {"out", "output directory"},
};

const char* kFlags[] = {"nesterov", "discrete", "svg"};

}  // namespace

int main(int argc, char** argv) {
    using namespace pdirichlet;
    CLI::App app{"Semi-supervised label extension with p-Dirichlet energies"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "Print this help message and exit");
    app.set_version_flag("--version", std::string(PDIRICHLET_VERSION));

    struct Parsed {
        std::string config_path;
        std::map<std::string, std::string> values;
        std::map<std::string, bool> flags;
    };
    std::map<CLI::App*, Parsed> parsed;
    std::map<CLI::App*, io::Subcommand> commands;

    for (const char* name :
         {"sample", "density", "solve-discrete", "solve-continuum", "study-density", "study-minimizers"}) {
        auto* sub = app.add_subcommand(name);
        sub->set_help_flag("--help", "Print this help message and exit");
        commands[sub] = io::parse_subcommand(name);
        auto& p = parsed[sub];
        sub->add_option("--config", p.config_path, "key=value config file; flags override it")->check(CLI::ExistingFile);
        for (const auto& [key, help] : kHelp) sub->add_option("--" + key, p.values[key], help);
        for (const char* key : kFlags) sub->add_flag(std::string("--") + key, p.flags[key]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error[parse]: " << e.what() << '\n';
        return exit_status(ErrorCode::Parse);
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        const auto& p = parsed.at(sub);
        io::KeyValues kv;
        if (!p.config_path.empty()) kv = io::read_key_values(p.config_path);
        kv.emplace_back("command", std::string(io::to_string(commands.at(sub))));
        for (const auto& [key, value] : p.values)
            if (sub->count("--" + key) > 0) kv.emplace_back(key, value);
        for (const auto& [key, on] : p.flags)
            if (on) kv.emplace_back(key, "true");
        io::RunConfig config = io::parse_config(kv);
        auto summary = io::run(config, std::cout);
        bool study = config.command == io::Subcommand::StudyDensity || config.command == io::Subcommand::StudyMinimizers;
        if (!summary.converged && !study) {
            std::cerr << "error[not-converged]: solver stopped before reaching tol = " << config.tol << '\n';
            return kNotConverged;
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error[" << to_string(e.code()) << "]: " << e.what() << '\n';
        return exit_status(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << '\n';
        return 1;
    }
}
