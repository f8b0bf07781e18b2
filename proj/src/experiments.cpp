#include "pdirichlet/experiments.hpp"

#include "pdirichlet/error.hpp"
#include "pdirichlet/graph.hpp"
#include "pdirichlet/spline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace pdirichlet::experiments {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool nonincreasing(const std::vector<double>& v) {
    for (std::size_t k = 1; k < v.size(); ++k)
        if (!(v[k] <= v[k - 1])) return false;
    return !v.empty();
}

struct ReferenceMesh {
    Eigen::MatrixXd value, dx, dy;
};

ReferenceMesh reference_on_mesh(const density::ReferenceDensity& rho, std::span<const double> xs,
                                std::span<const double> ys, bool derivatives) {
    const auto nx = static_cast<Eigen::Index>(xs.size()), ny = static_cast<Eigen::Index>(ys.size());
    ReferenceMesh m{Eigen::MatrixXd(nx, ny), Eigen::MatrixXd(), Eigen::MatrixXd()};
    if (derivatives) {
        m.dx.resize(nx, ny);
        m.dy.resize(nx, ny);
    }
    for (Eigen::Index j = 0; j < ny; ++j) {
        for (Eigen::Index i = 0; i < nx; ++i) {
            Point q{xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(j)]};
            m.value(i, j) = rho.value(q);
            if (derivatives) {
                Vec2 g = rho.gradient(q);
                m.dx(i, j) = g.x;
                m.dy(i, j) = g.y;
            }
        }
    }
    return m;
}

// Rows of one estimate: density and optionally both derivatives.
void score_estimate(const density::DensityField& field, const ReferenceMesh& ref, std::span<const double> mesh,
                    const StudyConfig& config, ErrorRow base, double seconds, std::vector<ErrorRow>& out) {
    auto start = std::chrono::steady_clock::now();
    Eigen::MatrixXd value = field.values_on_mesh(mesh, mesh);
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> grad;
    if (config.derivatives) grad = field.gradients_on_mesh(mesh, mesh);
    seconds += seconds_since(start);
    base.estimate_seconds = seconds;
    auto add = [&](const char* quantity, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        ErrorRow row = base;
        row.quantity = quantity;
        Errors e = error_metrics(a, b, mesh, mesh, config.region);
        row.l2 = e.l2;
        row.linf = e.linf;
        out.push_back(row);
    };
    add("density", value, ref.value);
    if (config.derivatives) {
        add("dx", grad.first, ref.dx);
        add("dy", grad.second, ref.dy);
    }
}

// Medians over seeds keyed by (method, quantity, n, h index).
using CellKey = std::tuple<std::string, std::string, std::size_t, std::size_t>;

std::map<CellKey, double> cell_medians(const std::vector<ErrorRow>& rows, const StudyConfig& config) {
    std::map<CellKey, std::vector<double>> groups;
    for (const auto& r : rows) {
        auto hs = config.bandwidths(r.n);
        auto it = std::find(hs.begin(), hs.end(), r.h);
        std::size_t hi = it == hs.end() ? 0 : static_cast<std::size_t>(it - hs.begin());
        groups[{r.method, r.quantity, r.n, hi}].push_back(r.linf);
    }
    std::map<CellKey, double> out;
    for (auto& [k, v] : groups) out[k] = median(v);
    return out;
}

std::vector<std::size_t> sorted_ns(const StudyConfig& config) {
    std::vector<std::size_t> ns = config.n_values;
    std::sort(ns.begin(), ns.end());
    return ns;
}

std::size_t bandwidth_count(const StudyConfig& config) {
    return config.h_exponent ? 1 : config.h_values.size();
}

// Median Linf across n for each bandwidth index must not increase.
TrendFlag trend_in_n(const std::string& name, const std::string& method, const std::string& quantity,
                     const std::map<CellKey, double>& med, const StudyConfig& config) {
    TrendFlag flag{name, true, {}};
    for (std::size_t hi = 0; hi < bandwidth_count(config); ++hi) {
        std::vector<double> series;
        for (std::size_t n : sorted_ns(config)) {
            auto it = med.find({method, quantity, n, hi});
            series.push_back(it == med.end() ? std::numeric_limits<double>::quiet_NaN() : it->second);
        }
        flag.holds = flag.holds && nonincreasing(series);
        flag.values.insert(flag.values.end(), series.begin(), series.end());
    }
    return flag;
}

}  // namespace

std::vector<double> uniform_mesh(std::size_t d) {
    if (d < 2) fail(ErrorCode::InvalidArgument, "mesh needs at least 2 points per side");
    std::vector<double> xs(d);
    for (std::size_t i = 0; i < d; ++i) xs[i] = static_cast<double>(i) / static_cast<double>(d - 1);
    xs.back() = 1.0;
    return xs;
}

Errors error_metrics(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::span<const double> xs,
                     std::span<const double> ys, const Box& region) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrorCode::Shape, "fields are on different meshes");
    if (static_cast<std::size_t>(a.rows()) != xs.size() || static_cast<std::size_t>(a.cols()) != ys.size())
        fail(ErrorCode::Shape, "field shape does not match the mesh");
    double sum = 0.0, mx = 0.0;
    for (std::size_t j = 0; j < ys.size(); ++j) {
        if (ys[j] < region.y0 || ys[j] > region.y1) continue;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (xs[i] < region.x0 || xs[i] > region.x1) continue;
            double d = std::abs(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                                b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            sum += d * d;
            mx = std::max(mx, d);
        }
    }
    double count = static_cast<double>(xs.size()) * static_cast<double>(ys.size());
    return {std::sqrt(sum / count), mx};
}

double region_fraction(std::span<const double> xs, std::span<const double> ys, const Box& region) {
    auto inside = [](std::span<const double> v, double lo, double hi) {
        return static_cast<double>(std::count_if(v.begin(), v.end(), [&](double t) { return t >= lo && t <= hi; }));
    };
    return inside(xs, region.x0, region.x1) * inside(ys, region.y0, region.y1) /
           (static_cast<double>(xs.size()) * static_cast<double>(ys.size()));
}

double constraint_function(const Point& p) {
    return 4.0 * (p.x - 0.5) * (p.x - 0.5) + (p.y - 0.5) * (p.y - 0.5);
}

ConstraintSet constraint_labels() {
    ConstraintSet c;
    const double t[4] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
    for (double y : t) {
        for (double x : t) {
            c.points.push_back({x, y});
            c.labels.push_back(constraint_function({x, y}));
        }
    }
    return c;
}

std::vector<double> StudyConfig::bandwidths(std::size_t n) const {
    if (h_exponent) return {std::pow(static_cast<double>(n), -*h_exponent)};
    return h_values;
}

void StudyConfig::validate() const {
    auto bad = [](const std::string& what) { fail(ErrorCode::InvalidArgument, what); };
    if (n_values.empty()) bad("n_values must not be empty");
    {
        auto ns = n_values;
        std::sort(ns.begin(), ns.end());
        if (std::adjacent_find(ns.begin(), ns.end()) != ns.end()) bad("n_values must be distinct");
        if (ns.front() < 1) bad("n must be positive");
    }
    if (h_exponent) {
        if (!(*h_exponent > 0.0)) bad("h_exponent must be positive");
    } else {
        if (h_values.empty()) bad("h_values must not be empty");
        auto hs = h_values;
        std::sort(hs.begin(), hs.end());
        if (std::adjacent_find(hs.begin(), hs.end()) != hs.end()) bad("h_values must be distinct");
        for (double h : hs)
            if (!(h > 0.0) || !std::isfinite(h)) bad("bandwidths must be positive");
    }
    spline::SplineConfig{sites, lambda}.validate();
    if (!(p > 1.0)) bad("p must exceed 1");
    if (!(beta >= 0.0)) bad("beta must be non-negative");
    if (!(tol > 0.0)) bad("tol must be positive");
    if (points_per_patch < 3) bad("points_per_patch must be at least 3");
    if (seeds.empty()) bad("at least one seed is required");
    if (!(region.x0 >= 0.0 && region.x1 <= 1.0 && region.y0 >= 0.0 && region.y1 <= 1.0 && region.x0 < region.x1 &&
          region.y0 < region.y1))
        bad("evaluation region must be a non-empty subset of [0,1]^2");
    if (mesh < 2) bad("mesh needs at least 2 points per side");
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    std::size_t m = values.size() / 2;
    return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

io::Table ErrorReport::error_table() const {
    io::Table t;
    t.header = {"method", "quantity", "n", "h", "seed", "l2", "linf", "converged", "iterations", "violations"};
    for (const auto& r : rows) {
        t.rows.push_back({r.method, r.quantity, static_cast<double>(r.n), r.h, static_cast<double>(r.seed), r.l2,
                          r.linf, r.converged ? 1.0 : 0.0, static_cast<double>(r.iterations),
                          static_cast<double>(r.violations)});
    }
    return t;
}

io::Table ErrorReport::timing_table() const {
    io::Table t;
    t.header = {"method", "quantity", "n", "h", "seed", "estimate_seconds", "solve_seconds"};
    for (const auto& r : rows) {
        t.rows.push_back({r.method, r.quantity, static_cast<double>(r.n), r.h, static_cast<double>(r.seed),
                          r.estimate_seconds, r.solve_seconds});
    }
    return t;
}

io::Table ErrorReport::flag_table() const {
    io::Table t;
    t.header = {"flag", "holds", "values"};
    for (const auto& f : flags) {
        std::string v;
        for (std::size_t k = 0; k < f.values.size(); ++k) v += (k ? " " : "") + io::format_number(f.values[k]);
        t.rows.push_back({f.name, f.holds ? 1.0 : 0.0, v});
    }
    return t;
}

const TrendFlag* ErrorReport::flag(const std::string& name) const {
    for (const auto& f : flags)
        if (f.name == name) return &f;
    return nullptr;
}

double ErrorReport::median_linf(const std::string& method, const std::string& quantity, std::size_t n,
                                double h) const {
    std::vector<double> v;
    for (const auto& r : rows)
        if (r.method == method && r.quantity == quantity && r.n == n && r.h == h) v.push_back(r.linf);
    return median(v);
}

double ErrorReport::median_seconds(const std::string& method, std::size_t n, double h) const {
    std::vector<double> v;
    std::set<std::uint64_t> seen;
    for (const auto& r : rows) {
        if (r.method != method || r.n != n || r.h != h || !seen.insert(r.seed).second) continue;
        v.push_back(r.estimate_seconds + r.solve_seconds);
    }
    return median(v);
}

ErrorReport density_error_study(const StudyConfig& config) {
    config.validate();
    const auto rho = density::reference_density(config.density);
    const auto mesh = uniform_mesh(config.mesh);
    const auto ref = reference_on_mesh(rho, mesh, mesh, config.derivatives);
    const spline::SplineConfig sc{config.sites, config.lambda};

    ErrorReport report;
    report.study = "density";
    report.metadata = {{"density", std::string(density::to_string(config.density))},
                       {"mesh", std::to_string(config.mesh)},
                       {"kernel", "gaussian"},
                       {"l2", "sqrt(D^-2 sum over mesh points in region)"}};
    for (std::size_t n : config.n_values) {
        for (double h : config.bandwidths(n)) {
            for (std::uint64_t seed : config.seeds) {
                auto samples = density::sample_density(rho, n, seed);
                ErrorRow base;
                base.n = n;
                base.h = h;
                base.seed = seed;

                auto start = std::chrono::steady_clock::now();
                density::KernelDensityEstimate kde(samples.points, h);
                auto kde_field = density::kde_density_field(kde, seed);
                double kde_seconds = seconds_since(start);
                base.method = "kde";
                score_estimate(kde_field, ref, mesh, config, base, kde_seconds, report.rows);

                start = std::chrono::steady_clock::now();
                auto skde_field = spline::skde_from_kde(kde, sc, seed);
                double skde_seconds = seconds_since(start);
                base.method = "skde";
                score_estimate(skde_field, ref, mesh, config, base, kde_seconds + skde_seconds, report.rows);
            }
        }
    }

    auto med = cell_medians(report.rows, config);
    for (const char* method : {"kde", "skde"})
        report.flags.push_back(
            trend_in_n(std::string(method) + "_linf_nonincreasing_in_n", method, "density", med, config));

    TrendFlag dominance{"skde_linf_le_kde", true, {}};
    for (const auto& [key, value] : med) {
        const auto& [method, quantity, n, hi] = key;
        if (method != "kde" || quantity != "density") continue;
        double s = med.at({"skde", quantity, n, hi});
        dominance.values.push_back(s / value);
        dominance.holds = dominance.holds && s <= value;
    }
    report.flags.push_back(dominance);

    if (bandwidth_count(config) >= 3) {
        TrendFlag interior{"kde_optimal_h_interior", true, {}};
        for (std::size_t n : sorted_ns(config)) {
            std::vector<double> curve;
            for (std::size_t hi = 0; hi < config.h_values.size(); ++hi) curve.push_back(med.at({"kde", "density", n, hi}));
            // bandwidths in increasing order
            std::vector<std::size_t> order(curve.size());
            for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return config.h_values[a] < config.h_values[b]; });
            std::size_t best = 0;
            for (std::size_t k = 1; k < order.size(); ++k)
                if (curve[order[k]] < curve[order[best]]) best = k;
            interior.values.push_back(config.h_values[order[best]]);
            interior.holds = interior.holds && best > 0 && best + 1 < order.size();
        }
        report.flags.push_back(interior);
    }
    return report;
}

continuum::ContinuumProblem labelled_problem(const density::DensityField& density, const StudyConfig& config) {
    auto problem =
        continuum::make_problem(constraint_labels(), config.points_per_patch, density, config.p, config.beta);
    problem.scheme = config.scheme;
    return problem;
}

ErrorReport minimizer_comparison(const StudyConfig& config) {
    config.validate();
    const auto rho = density::reference_density(config.density);
    const auto mesh = uniform_mesh(config.mesh);
    const spline::SplineConfig sc{config.sites, config.lambda};
    continuum::ContinuumOptions copt;
    copt.tol = config.tol;

    ErrorReport report;
    report.study = "minimizers";
    report.metadata = {{"density", std::string(density::to_string(config.density))},
                       {"mesh", std::to_string(config.mesh)},
                       {"points_per_patch", std::to_string(config.points_per_patch)},
                       {"discrete_comparison", "continuum field evaluated at the sample points"}};

    auto start = std::chrono::steady_clock::now();
    auto truth_problem = labelled_problem(density::exact_density_field(rho), config);
    auto truth = continuum::minimize_continuum(truth_problem, copt);
    ErrorRow truth_row;
    truth_row.method = "continuum-exact";
    truth_row.quantity = "minimizer";
    truth_row.converged = truth.result.converged;
    truth_row.solve_seconds = seconds_since(start);
    truth_row.iterations = truth.result.iterations;
    truth_row.violations = monotonicity_violations(truth.result.energy_history);
    report.rows.push_back(truth_row);
    report.energy_histories.push_back(truth.result.energy_history);
    const auto& domain = *truth_problem.domain;
    const Eigen::MatrixXd f_inf = continuum::evaluate_on_mesh(domain, truth.result.values, mesh, mesh);

    for (std::size_t n : config.n_values) {
        for (double h : config.bandwidths(n)) {
            for (std::uint64_t seed : config.seeds) {
                auto samples = density::sample_density(rho, n, seed);
                ErrorRow base;
                base.quantity = "minimizer";
                base.n = n;
                base.h = h;
                base.seed = seed;

                auto solve = [&](const char* method, const density::DensityField& field, double estimate_seconds) {
                    ErrorRow row = base;
                    row.method = method;
                    row.estimate_seconds = estimate_seconds;
                    auto t = std::chrono::steady_clock::now();
                    try {
                        auto res = continuum::minimize_continuum(labelled_problem(field, config), copt);
                        row.solve_seconds = seconds_since(t);
                        row.converged = res.result.converged;
                        row.iterations = res.result.iterations;
                        row.violations = monotonicity_violations(res.result.energy_history);
                        report.energy_histories.push_back(res.result.energy_history);
                        Errors e = error_metrics(continuum::evaluate_on_mesh(domain, res.result.values, mesh, mesh),
                                                 f_inf, mesh, mesh, config.region);
                        row.l2 = e.l2;
                        row.linf = e.linf;
                    } catch (const Error&) {
                        row.solve_seconds = seconds_since(t);
                        row.converged = false;
                        row.l2 = row.linf = std::numeric_limits<double>::quiet_NaN();
                    }
                    report.rows.push_back(row);
                };

                auto t = std::chrono::steady_clock::now();
                density::KernelDensityEstimate kde(samples.points, h);
                auto kde_field = density::kde_density_field(kde, seed);
                double kde_seconds = seconds_since(t);
                if (config.kde) solve("continuum-kde", kde_field, kde_seconds);
                if (config.skde) {
                    t = std::chrono::steady_clock::now();
                    auto skde_field = spline::skde_from_kde(kde, sc, seed);
                    solve("continuum-skde", skde_field, kde_seconds + seconds_since(t));
                }

                if (config.discrete) {
                    ErrorRow row = base;
                    row.method = "discrete";
                    t = std::chrono::steady_clock::now();
                    auto [nodes, gc] = graph::attach_constraints(samples.points, constraint_labels());
                    double eps = graph::epsilon_bounds(nodes.size(), config.p).midpoint();
                    auto g = graph::build_epsilon_graph(nodes, eps, density::parse_profile(config.eta));
                    row.estimate_seconds = seconds_since(t);
                    graph::DiscreteOptions dopt;
                    dopt.p = config.p;
                    dopt.tol = config.tol;
                    dopt.max_iter = config.discrete_max_iter;
                    dopt.accel = config.nesterov ? graph::Acceleration::Nesterov : graph::Acceleration::Plain;
                    t = std::chrono::steady_clock::now();
                    try {
                        auto res = graph::minimize_discrete(g, gc, dopt);
                        row.solve_seconds = seconds_since(t);
                        row.converged = res.converged;
                        row.iterations = res.iterations;
                        row.violations = monotonicity_violations(res.energy_history);
                        report.energy_histories.push_back(res.energy_history);
                        Points inside;
                        std::vector<double> labels;
                        for (std::size_t i = 0; i < samples.points.size(); ++i) {
                            if (!config.region.contains(samples.points[i])) continue;
                            inside.push_back(samples.points[i]);
                            labels.push_back(res.values[static_cast<Eigen::Index>(i)]);
                        }
                        Eigen::VectorXd ref = continuum::evaluate_at(domain, truth.result.values, inside);
                        double sum = 0.0, mx = 0.0;
                        for (std::size_t i = 0; i < inside.size(); ++i) {
                            double d = std::abs(labels[i] - ref[static_cast<Eigen::Index>(i)]);
                            sum += d * d;
                            mx = std::max(mx, d);
                        }
                        row.l2 = std::sqrt(sum / static_cast<double>(samples.points.size()));
                        row.linf = mx;
                    } catch (const Error&) {
                        row.solve_seconds = seconds_since(t);
                        row.converged = false;
                        row.l2 = row.linf = std::numeric_limits<double>::quiet_NaN();
                    }
                    report.rows.push_back(row);
                }
            }
        }
    }

    auto med = cell_medians(report.rows, config);
    for (const char* method : {"continuum-kde", "continuum-skde", "discrete"}) {
        bool used = (std::string(method) == "continuum-kde" && config.kde) ||
                    (std::string(method) == "continuum-skde" && config.skde) ||
                    (std::string(method) == "discrete" && config.discrete);
        if (used)
            report.flags.push_back(
                trend_in_n(std::string(method) + "_linf_nonincreasing_in_n", method, "minimizer", med, config));
    }

    // Wall-time growth across the n sweep, against the growth of n itself.
    auto ns = sorted_ns(config);
    if (ns.size() >= 2) {
        const double n_ratio = static_cast<double>(ns.back()) / static_cast<double>(ns.front());
        auto growth = [&](const std::string& name, const std::string& method, bool superlinear) {
            std::vector<double> times;
            for (std::size_t n : ns) times.push_back(report.median_seconds(method, n, config.bandwidths(n).front()));
            double factor = times.back() / times.front();
            TrendFlag f{name, superlinear ? factor > n_ratio : factor < n_ratio, times};
            f.values.push_back(factor);
            report.flags.push_back(f);
        };
        if (config.skde) growth("continuum_skde_time_sublinear", "continuum-skde", false);
        if (config.discrete) growth("discrete_time_superlinear", "discrete", true);
    }
    return report;
}

std::vector<Series> linf_series(const ErrorReport& report) {
    std::set<double> hs;
    std::set<std::size_t> ns;
    for (const auto& r : report.rows) {
        if (r.n == 0) continue;
        hs.insert(r.h);
        ns.insert(r.n);
    }
    const bool against_h = hs.size() > 1 && ns.size() == 1;
    std::map<std::string, std::map<double, std::vector<double>>> groups;
    for (const auto& r : report.rows) {
        if (r.n == 0 || !std::isfinite(r.linf)) continue;
        std::ostringstream name;
        name << r.method << " " << r.quantity;
        if (against_h) name << " n=" << r.n;
        else if (hs.size() > 1 && ns.size() > 1) name << " h=" << r.h;
        groups[name.str()][against_h ? r.h : static_cast<double>(r.n)].push_back(r.linf);
    }
    std::vector<Series> out;
    for (auto& [name, points] : groups) {
        Series s{name, {}, {}};
        for (auto& [x, v] : points) {
            s.x.push_back(x);
            s.y.push_back(median(v));
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string line_chart_svg(const std::string& title, const std::vector<Series>& series, bool log_x, bool log_y) {
    const double width = 640, height = 420, left = 70, right = 190, top = 40, bottom = 50;
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if ((log_x && !(s.x[k] > 0)) || (log_y && !(s.y[k] > 0))) continue;
            x0 = std::min(x0, tx(s.x[k]));
            x1 = std::max(x1, tx(s.x[k]));
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1;
    const double pw = width - left - right, ph = height - top - bottom;
    auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return top + ph - (ty(v) - y0) / (y1 - y0) * ph; };
    auto label = [](double v, bool lg) {
        std::ostringstream o;
        o.precision(3);
        o << (lg ? std::pow(10.0, v) : v);
        return o.str();
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b"};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << title << "</text>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left << "\" y=\"" << top + ph + 18 << "\">" << label(x0, log_x) << "</text>\n";
    svg << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"end\">" << label(x1, log_x)
        << "</text>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << label(y0, log_y)
        << "</text>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << label(y1, log_y)
        << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % std::size(colors)];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < series[s].x.size(); ++k) {
            if ((log_x && !(series[s].x[k] > 0)) || (log_y && !(series[s].y[k] > 0))) continue;
            svg << px(series[s].x[k]) << "," << py(series[s].y[k]) << " ";
        }
        svg << "\"/>\n";
        double ly = top + 14 + 16 * static_cast<double>(s);
        svg << "<line x1=\"" << width - right + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << width - right + 30
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << width - right + 35 << "\" y=\"" << ly << "\">" << series[s].name << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace pdirichlet::experiments
