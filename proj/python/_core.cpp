#include "pdirichlet/continuum.hpp"
#include "pdirichlet/density.hpp"
#include "pdirichlet/error.hpp"
#include "pdirichlet/experiments.hpp"
#include "pdirichlet/graph.hpp"
#include "pdirichlet/io.hpp"
#include "pdirichlet/spectral.hpp"
#include "pdirichlet/spline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace pdirichlet;

namespace {

Points to_points(const Eigen::Ref<const Eigen::MatrixXd>& xy) {
    if (xy.cols() != 2) throw py::value_error("points must have shape (n, 2)");
    Points out(static_cast<std::size_t>(xy.rows()));
    for (Eigen::Index i = 0; i < xy.rows(); ++i) out[static_cast<std::size_t>(i)] = {xy(i, 0), xy(i, 1)};
    return out;
}

Eigen::MatrixXd from_points(const Points& pts) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out(static_cast<Eigen::Index>(i), 0) = pts[i].x;
        out(static_cast<Eigen::Index>(i), 1) = pts[i].y;
    }
    return out;
}

py::dict minimizer_dict(const MinimizerResult& r) {
    py::dict d;
    d["values"] = r.values;
    d["energy"] = r.energy;
    d["iterations"] = r.iterations;
    d["residual"] = r.residual;
    d["wall_seconds"] = r.wall_seconds;
    d["converged"] = r.converged;
    d["energy_history"] = r.energy_history;
    return d;
}

density::DensityField make_field(const std::string& density, const std::string& estimator, std::size_t n, double h,
                                 std::size_t sites, double lambda, std::uint64_t seed) {
    auto rho = density::reference_density(density);
    if (estimator == "exact") return density::exact_density_field(rho);
    auto s = density::sample_density(rho, n, seed);
    density::KernelDensityEstimate kde(s.points, h);
    if (estimator == "kde") return density::kde_density_field(kde, seed);
    if (estimator == "skde") return spline::skde_from_kde(kde, {sites, lambda}, seed);
    throw py::value_error("estimator must be exact, kde or skde");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Semi-supervised label extension with p-Dirichlet energies";
    m.attr("__version__") = PDIRICHLET_VERSION;

    static py::exception<Error> error(m, "PdirichletError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            std::string msg = "[" + std::string(to_string(e.code())) + "] " + e.what();
            py::set_error(error, msg.c_str());
        }
    });

    // spectral
    m.def(
        "chebyshev_nodes",
        [](int order, double a, double b) { return spectral::chebyshev_nodes(order, {a, b}).nodes(); },
        py::arg("order"), py::arg("a") = -1.0, py::arg("b") = 1.0,
        "Gauss-Lobatto nodes in descending order.");
    m.def(
        "chebyshev_diff_matrix",
        [](int order, double a, double b) {
            return spectral::chebyshev_diff_matrix(spectral::chebyshev_nodes(order, {a, b})).entries;
        },
        py::arg("order"), py::arg("a") = -1.0, py::arg("b") = 1.0);
    m.def(
        "clenshaw_curtis_weights",
        [](int order, double a, double b) {
            return Eigen::VectorXd(spectral::clenshaw_curtis_weights(spectral::chebyshev_nodes(order, {a, b})));
        },
        py::arg("order"), py::arg("a") = -1.0, py::arg("b") = 1.0);

    // densities
    m.def(
        "reference_density",
        [](const std::string& id, const Eigen::Ref<const Eigen::MatrixXd>& xy) {
            auto rho = density::reference_density(id);
            Eigen::VectorXd out(xy.rows());
            for (Eigen::Index i = 0; i < xy.rows(); ++i) out[i] = rho(xy(i, 0), xy(i, 1));
            return out;
        },
        py::arg("id"), py::arg("points"), "Reference density rho1, rho2 or rho3 at each row of points.");
    m.def(
        "sample_density",
        [](const std::string& id, std::size_t n, std::uint64_t seed) {
            return from_points(density::sample_density(density::reference_density(id), n, seed).points);
        },
        py::arg("id"), py::arg("n"), py::arg("seed"));
    m.def(
        "kde",
        [](const Eigen::Ref<const Eigen::MatrixXd>& samples, double h, const Eigen::Ref<const Eigen::MatrixXd>& query,
           const std::string& kernel) {
            density::SampleSet s{to_points(samples), 0};
            auto q = to_points(query);
            return density::kde_evaluate(s, h, {density::parse_kernel_id(kernel)}, q);
        },
        py::arg("samples"), py::arg("h"), py::arg("query"), py::arg("kernel") = "gaussian");
    m.def(
        "density_on_mesh",
        [](const std::string& density, const std::string& estimator, std::size_t n, double h, std::size_t sites,
           double lambda, std::uint64_t seed, std::size_t mesh) {
            auto field = make_field(density, estimator, n, h, sites, lambda, seed);
            auto xs = experiments::uniform_mesh(mesh);
            return field.values_on_mesh(xs, xs);
        },
        py::arg("density"), py::arg("estimator"), py::arg("n") = 10000, py::arg("h") = 0.03,
        py::arg("sites") = 4096, py::arg("lambda_") = 1e-6, py::arg("seed") = 1, py::arg("mesh") = 129);
    m.def(
        "sigma_eta",
        [](const std::string& profile, double p, int d) {
            return density::sigma_eta(density::parse_profile(profile), p, d);
        },
        py::arg("profile"), py::arg("p"), py::arg("d") = 2);

    // graphs
    m.def(
        "epsilon_bounds",
        [](std::size_t n, double p) {
            auto b = graph::epsilon_bounds(n, p);
            return py::make_tuple(b.lower, b.upper);
        },
        py::arg("n"), py::arg("p"));
    m.def(
        "discrete_energy",
        [](const Eigen::Ref<const Eigen::MatrixXd>& points, double eps, const Eigen::VectorXd& f, double p,
           const std::string& eta) {
            auto g = graph::build_epsilon_graph(to_points(points), eps, density::parse_profile(eta));
            return graph::discrete_energy(g, f, p, eps);
        },
        py::arg("points"), py::arg("eps"), py::arg("f"), py::arg("p"), py::arg("eta") = "indicator");
    m.def(
        "minimize_discrete",
        [](const Eigen::Ref<const Eigen::MatrixXd>& points, double eps, const std::vector<std::size_t>& nodes,
           const std::vector<double>& labels, double p, double tol, std::size_t max_iter, bool nesterov,
           const std::string& eta) {
            auto g = graph::build_epsilon_graph(to_points(points), eps, density::parse_profile(eta));
            graph::DiscreteOptions opt;
            opt.p = p;
            opt.tol = tol;
            opt.max_iter = max_iter;
            opt.accel = nesterov ? graph::Acceleration::Nesterov : graph::Acceleration::Plain;
            return minimizer_dict(graph::minimize_discrete(g, {nodes, labels}, opt));
        },
        py::arg("points"), py::arg("eps"), py::arg("nodes"), py::arg("labels"), py::arg("p") = 2.0,
        py::arg("tol") = 1e-5, py::arg("max_iter") = 200000, py::arg("nesterov") = false,
        py::arg("eta") = "indicator");
    m.def(
        "solve_p2_direct",
        [](const Eigen::Ref<const Eigen::MatrixXd>& points, double eps, const std::vector<std::size_t>& nodes,
           const std::vector<double>& labels, const std::string& eta) {
            auto g = graph::build_epsilon_graph(to_points(points), eps, density::parse_profile(eta));
            return graph::solve_p2_direct(g, {nodes, labels});
        },
        py::arg("points"), py::arg("eps"), py::arg("nodes"), py::arg("labels"), py::arg("eta") = "indicator");

    // continuum
    m.def("constraint_labels", [] {
        auto c = experiments::constraint_labels();
        return py::make_tuple(from_points(c.points), c.labels);
    });
    m.def(
        "solve_continuum",
        [](const std::string& density, const std::string& estimator, double p, std::size_t points_per_patch,
           double beta, double tol, std::size_t n, double h, std::size_t sites, double lambda, std::uint64_t seed,
           std::size_t mesh) {
            auto field = make_field(density, estimator, n, h, sites, lambda, seed);
            experiments::StudyConfig sc;
            sc.p = p;
            sc.beta = beta;
            sc.points_per_patch = points_per_patch;
            auto problem = experiments::labelled_problem(field, sc);
            continuum::ContinuumOptions opt;
            opt.tol = tol;
            auto res = continuum::minimize_continuum(problem, opt);
            py::dict d = minimizer_dict(res.result);
            Points nodes;
            for (const auto& node : problem.domain->nodes()) nodes.push_back(node.position);
            d["nodes"] = from_points(nodes);
            d["rejected_steps"] = res.rejected_steps;
            auto xs = experiments::uniform_mesh(mesh);
            d["mesh"] = xs;
            d["mesh_values"] = continuum::evaluate_on_mesh(*problem.domain, res.result.values, xs, xs);
            return d;
        },
        py::arg("density") = "rho1", py::arg("estimator") = "exact", py::arg("p") = 3.0,
        py::arg("points_per_patch") = 20, py::arg("beta") = 0.01, py::arg("tol") = 1e-5, py::arg("n") = 16384,
        py::arg("h") = 0.01, py::arg("sites") = 4096, py::arg("lambda_") = 1e-6, py::arg("seed") = 1,
        py::arg("mesh") = 65,
        "Continuum minimiser with the 16 lattice labels; returns nodal values and values on a uniform mesh.");
    m.def(
        "nonlocal_energy",
        [](const std::function<double(double, double)>& u, double eps, double p, const std::string& profile,
           std::array<double, 4> region, std::size_t order) {
            continuum::NonlocalOptions opt;
            opt.region = {region[0], region[1], region[2], region[3]};
            opt.order = order;
            auto uf = [&](const Point& q) { return u(q.x, q.y); };
            auto one = [](const Point&) { return 1.0; };
            return continuum::nonlocal_energy(uf, one, density::parse_profile(profile), eps, p, opt);
        },
        py::arg("u"), py::arg("eps"), py::arg("p"), py::arg("profile") = "indicator",
        py::arg("region") = std::array<double, 4>{0.0, 1.0, 0.0, 1.0}, py::arg("order") = 4,
        "Non-local energy of u(x, y) with unit density over region (x0, x1, y0, y1).");

    // experiments and io
    m.def(
        "error_metrics",
        [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const std::vector<double>& xs,
           const std::vector<double>& ys) {
            auto e = experiments::error_metrics(a, b, xs, ys);
            return py::make_tuple(e.l2, e.linf);
        },
        py::arg("a"), py::arg("b"), py::arg("xs"), py::arg("ys"));
    m.def("uniform_mesh", &experiments::uniform_mesh, py::arg("d"));
    m.def(
        "run",
        [](const std::map<std::string, std::string>& config) {
            io::KeyValues kv(config.begin(), config.end());
            std::ostringstream log;
            auto summary = io::run(io::parse_config(kv), log);
            py::dict d;
            d["lines"] = summary.lines;
            std::vector<std::string> paths;
            for (const auto& a : summary.artifacts) paths.push_back(a.string());
            d["artifacts"] = paths;
            d["converged"] = summary.converged;
            return d;
        },
        py::arg("config"), "Runs a subcommand from key=value settings (the 'command' key selects it).");
}
