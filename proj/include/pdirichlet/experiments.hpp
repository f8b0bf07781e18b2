#pragma once

// Density-estimation error curves, minimiser discrepancy and timing studies.

#include "pdirichlet/continuum.hpp"
#include "pdirichlet/density.hpp"
#include "pdirichlet/io.hpp"
#include "pdirichlet/problem.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pdirichlet::experiments {

/// D points i / (D - 1), i = 0..D-1.
std::vector<double> uniform_mesh(std::size_t d);

struct Errors {
    double l2 = 0.0;
    double linf = 0.0;
};

/// L2 = sqrt((nx ny)^-1 sum over mesh points in region of |a - b|^2), Linf = max over the same
/// points. a and b are (nx x ny) with a(i, j) at (xs[i], ys[j]).
Errors error_metrics(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::span<const double> xs,
                     std::span<const double> ys, const Box& region = kEvaluationWindow);

/// Fraction of the mesh points lying in region.
double region_fraction(std::span<const double> xs, std::span<const double> ys, const Box& region);

/// C(x, y) = 4 (x - 1/2)^2 + (y - 1/2)^2.
double constraint_function(const Point& p);

/// C on the 16-point lattice {0, 1/3, 2/3, 1}^2.
ConstraintSet constraint_labels();

struct StudyConfig {
    density::ReferenceId density = density::ReferenceId::Rho1;
    std::vector<std::size_t> n_values{1u << 10, 1u << 12, 1u << 14};
    /// Bandwidths; replaced by h = n^-h_exponent when that is set.
    std::vector<double> h_values{0.01};
    std::optional<double> h_exponent;
    std::size_t sites = 1u << 12;  // T
    double lambda = 1e-6;
    double p = 3.0;
    double beta = 0.01;
    double tol = 1e-5;
    std::size_t points_per_patch = 30;
    continuum::Scheme scheme = continuum::Scheme::Weak;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    Box region = kEvaluationWindow;
    std::size_t mesh = 512;
    /// Density study: also score both partial derivatives.
    bool derivatives = true;
    /// Minimiser study: which estimators feed the continuum solver, and whether the discrete
    /// gradient flow on an eps-graph over the samples is run as well.
    bool kde = true;
    bool skde = true;
    bool discrete = false;
    std::string eta = "indicator";
    std::size_t discrete_max_iter = 200000;
    bool nesterov = false;

    /// Bandwidths used at sample size n.
    std::vector<double> bandwidths(std::size_t n) const;
    void validate() const;
};

struct ErrorRow {
    std::string method;    // kde, skde, continuum-kde, continuum-skde, continuum-exact, discrete
    std::string quantity;  // density, dx, dy or minimizer
    std::size_t n = 0;
    double h = 0.0;
    std::uint64_t seed = 0;
    double l2 = 0.0;
    double linf = 0.0;
    bool converged = true;
    /// Wall time of the density estimate and of the solve (zero when not applicable).
    double estimate_seconds = 0.0;
    double solve_seconds = 0.0;
    std::size_t iterations = 0;
    std::size_t violations = 0;
};

/// A machine-checkable trend, with the medians (or factors) it was judged on.
struct TrendFlag {
    std::string name;
    bool holds = false;
    std::vector<double> values;
};

struct ErrorReport {
    std::string study;
    std::vector<ErrorRow> rows;
    std::vector<TrendFlag> flags;
    /// Energy histories of every solver run, for monotonicity checks.
    std::vector<std::vector<double>> energy_histories;
    /// Key facts about how the errors were computed.
    io::KeyValues metadata;

    /// Errors only; identical configs give identical tables.
    io::Table error_table() const;
    /// Wall times per row.
    io::Table timing_table() const;
    io::Table flag_table() const;
    const TrendFlag* flag(const std::string& name) const;

    /// Median Linf over seeds of the matching rows (NaN when none match).
    double median_linf(const std::string& method, const std::string& quantity, std::size_t n, double h) const;
    double median_seconds(const std::string& method, std::size_t n, double h) const;
};

double median(std::vector<double> values);

/// For each n, h, seed: samples from the reference density, KDE and SKDE estimates, and their
/// L2 / Linf errors (density and, optionally, both partial derivatives) on the region.
ErrorReport density_error_study(const StudyConfig& config);

/// Ground truth f_inf from the exact density, then for every n and seed the continuum minimisers
/// with the KDE and SKDE densities (and optionally the discrete minimiser), scored by Linf
/// against f_inf on the region. Non-converged solves are flagged and the study continues.
ErrorReport minimizer_comparison(const StudyConfig& config);

/// Problem on the reference layout with the labels of constraint_labels().
continuum::ContinuumProblem labelled_problem(const density::DensityField& density, const StudyConfig& config);

/// Simple SVG line chart of y against x, one polyline per series; log axes when requested.
struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};
std::string line_chart_svg(const std::string& title, const std::vector<Series>& series, bool log_x, bool log_y);

/// Median Linf against n, one series per (method, quantity, h).
std::vector<Series> linf_series(const ErrorReport& report);

}  // namespace pdirichlet::experiments
