#include "pdirichlet/error.hpp"
#include "pdirichlet/experiments.hpp"
#include "pdirichlet/io.hpp"
#include "pdirichlet/spline.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

namespace pdirichlet::io {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Runner {
    const RunConfig& config;
    std::ostream& log;
    RunSummary summary;

    void stage(const std::string& name, const std::string& metric, double seconds) {
        std::ostringstream line;
        line << name << ": " << metric << " (" << format_number(seconds) << " s)";
        summary.lines.push_back(line.str());
        log << line.str() << '\n';
    }

    std::filesystem::path artifact(const std::string& name) {
        auto path = config.out / name;
        summary.artifacts.push_back(path);
        return path;
    }

    void csv(const std::string& name, const Table& t) { write_csv(t, artifact(name)); }

    density::DensityField estimate(const density::SampleSet& samples, density::DensityKind kind) {
        auto t = Clock::now();
        if (kind == density::DensityKind::Exact)
            return density::exact_density_field(density::reference_density(config.density));
        density::KernelDensityEstimate kde(samples.points, config.h);
        if (kind == density::DensityKind::Kde) {
            auto f = density::kde_density_field(kde, samples.seed);
            stage("kde", "h=" + format_number(config.h), since(t));
            return f;
        }
        auto f = spline::skde_from_kde(kde, {config.T, config.lambda}, samples.seed);
        stage("skde", "h=" + format_number(config.h) + " T=" + std::to_string(config.T), since(t));
        return f;
    }

    experiments::StudyConfig study() const {
        experiments::StudyConfig s;
        s.density = config.density;
        s.n_values = config.n_values.empty() ? std::vector<std::size_t>{config.n} : config.n_values;
        s.h_values = config.h_values.empty() ? std::vector<double>{config.h} : config.h_values;
        s.h_exponent = config.h_exponent;
        s.sites = config.T;
        s.lambda = config.lambda;
        s.p = config.p;
        s.beta = config.beta;
        s.tol = config.tol;
        s.points_per_patch = config.points_per_patch;
        s.scheme = config.scheme;
        s.seeds = config.seeds;
        s.mesh = config.mesh;
        s.derivatives = config.derivatives;
        s.discrete = config.discrete;
        s.eta = config.eta;
        s.discrete_max_iter = config.max_iter;
        s.nesterov = config.nesterov;
        return s;
    }

    void write_study(const std::string& stem, const experiments::ErrorReport& report) {
        csv(stem + ".csv", report.error_table());
        csv(stem + "_timing.csv", report.timing_table());
        csv(stem + "_flags.csv", report.flag_table());
        for (const auto& f : report.flags) {
            std::string v;
            for (double x : f.values) v += " " + format_number(x);
            log << "flag " << f.name << " = " << (f.holds ? "true" : "false") << " [" << v << " ]\n";
        }
        if (config.svg) {
            auto path = artifact(stem + ".svg");
            std::ofstream out(path);
            if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
            out << experiments::line_chart_svg(stem + ": median Linf", experiments::linf_series(report), true, true);
        }
    }

    void sample() {
        const auto rho = density::reference_density(config.density);
        for (auto seed : config.seeds) {
            auto t = Clock::now();
            auto s = density::sample_density(rho, config.n, seed);
            csv("samples_seed" + std::to_string(seed) + ".csv", samples_table(s.points));
            stage("sample", "n=" + std::to_string(s.size()) + " seed=" + std::to_string(seed), since(t));
        }
    }

    void density_estimate() {
        const auto rho = density::reference_density(config.density);
        const auto mesh = experiments::uniform_mesh(config.mesh);
        const auto exact = density::exact_density_field(rho).values_on_mesh(mesh, mesh);
        for (auto seed : config.seeds) {
            auto s = density::sample_density(rho, config.n, seed);
            auto kde = estimate(s, density::DensityKind::Kde).values_on_mesh(mesh, mesh);
            auto skde = estimate(s, density::DensityKind::Skde).values_on_mesh(mesh, mesh);
            auto ek = experiments::error_metrics(kde, exact, mesh, mesh);
            auto es = experiments::error_metrics(skde, exact, mesh, mesh);
            stage("errors", "kde linf=" + format_number(ek.linf) + " l2=" + format_number(ek.l2) +
                                " skde linf=" + format_number(es.linf) + " l2=" + format_number(es.l2),
                  0.0);
            csv("density_seed" + std::to_string(seed) + ".csv",
                mesh_table(mesh, mesh, {{"exact", exact}, {"kde", kde}, {"skde", skde}}));
        }
    }

    void solve_discrete() {
        const auto rho = density::reference_density(config.density);
        auto t = Clock::now();
        auto s = density::sample_density(rho, config.n, config.seeds.front());
        auto [nodes, constraints] = graph::attach_constraints(s.points, experiments::constraint_labels());
        double eps = 1.0;
        auto eta = density::parse_profile(config.eta);
        graph::WeightedGraph g = config.graph == GraphKind::Knn
                                     ? graph::build_knn_graph(nodes, config.k)
                                     : graph::build_epsilon_graph(
                                           nodes, eps = config.eps.value_or(
                                                      graph::epsilon_bounds(nodes.size(), config.p).midpoint()),
                                           eta);
        if (config.graph == GraphKind::Knn) eps = g.epsilon();
        stage("graph", "nodes=" + std::to_string(g.size()) + " edges=" + std::to_string(g.edge_count()) +
                           " eps=" + format_number(eps),
              since(t));
        if (g.warning) log << "warning: " << *g.warning << '\n';
        graph::DiscreteOptions opt;
        opt.p = config.p;
        opt.tol = config.tol;
        opt.max_iter = config.max_iter;
        opt.accel = config.nesterov ? graph::Acceleration::Nesterov : graph::Acceleration::Plain;
        auto res = graph::minimize_discrete(g, constraints, opt);
        summary.converged = res.converged;
        stage("solve-discrete",
              "energy=" + format_number(res.energy) + " iterations=" + std::to_string(res.iterations) +
                  " converged=" + (res.converged ? "true" : "false"),
              res.wall_seconds);
        csv("labeling.csv", labeling_table(nodes, res.values));
        csv("edges.csv", edge_table(g));
        Table hist{{"step", "energy"}, {}};
        for (std::size_t k = 0; k < res.energy_history.size(); ++k)
            hist.rows.push_back({static_cast<double>(k), res.energy_history[k]});
        csv("energy.csv", hist);
    }

    void solve_continuum() {
        const auto rho = density::reference_density(config.density);
        density::SampleSet s;
        if (config.estimator != density::DensityKind::Exact) {
            auto t = Clock::now();
            s = density::sample_density(rho, config.n, config.seeds.front());
            stage("sample", "n=" + std::to_string(s.size()), since(t));
        }
        auto field = estimate(s, config.estimator);
        auto study_config = study();
        auto problem = experiments::labelled_problem(field, study_config);
        continuum::ContinuumOptions opt;
        opt.tol = config.tol;
        opt.max_iter = config.max_iter;
        auto res = continuum::minimize_continuum(problem, opt);
        summary.converged = res.result.converged;
        stage("solve-continuum",
              "energy=" + format_number(res.result.energy) + " steps=" + std::to_string(res.result.iterations) +
                  " residual=" + format_number(res.result.residual) +
                  " converged=" + (res.result.converged ? "true" : "false"),
              res.result.wall_seconds);
        csv("field.csv", field_table(*problem.domain, res.result.values));
        Table hist{{"step", "energy"}, {}};
        for (std::size_t k = 0; k < res.result.energy_history.size(); ++k)
            hist.rows.push_back({static_cast<double>(k), res.result.energy_history[k]});
        csv("energy.csv", hist);
    }

    KeyValues study_density() {
        auto t = Clock::now();
        auto report = experiments::density_error_study(study());
        stage("study-density", std::to_string(report.rows.size()) + " rows", since(t));
        write_study("study_density", report);
        return report.metadata;
    }

    KeyValues study_minimizers() {
        auto t = Clock::now();
        auto report = experiments::minimizer_comparison(study());
        stage("study-minimizers", std::to_string(report.rows.size()) + " rows", since(t));
        for (const auto& r : report.rows) summary.converged = summary.converged && r.converged;
        write_study("study_minimizers", report);
        return report.metadata;
    }
};

}  // namespace

RunSummary run(const RunConfig& config, std::ostream& log) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(config.out, ec);
    if (ec) fail(ErrorCode::Io, "cannot create output directory '" + config.out.string() + "': " + ec.message());
    Runner r{config, log, {}};
    KeyValues meta;
    switch (config.command) {
        case Subcommand::Sample: r.sample(); break;
        case Subcommand::Density: r.density_estimate(); break;
        case Subcommand::SolveDiscrete: r.solve_discrete(); break;
        case Subcommand::SolveContinuum: r.solve_continuum(); break;
        case Subcommand::StudyDensity: meta = r.study_density(); break;
        case Subcommand::StudyMinimizers: meta = r.study_minimizers(); break;
    }
    meta.emplace_back("converged", r.summary.converged ? "true" : "false");
    write_manifest(config, r.artifact("manifest.txt"), meta);
    return r.summary;
}

}  // namespace pdirichlet::io
