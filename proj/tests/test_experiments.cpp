#include "pdirichlet/error.hpp"
#include "pdirichlet/experiments.hpp"
#include "pdirichlet/spline.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace pdirichlet;
using namespace pdirichlet::experiments;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::InvalidArgument;
}

std::string csv_text(const io::Table& t) {
    std::stringstream s;
    io::write_csv(t, s);
    return s.str();
}

}  // namespace

TEST_CASE("uniform mesh") {
    auto m = uniform_mesh(5);
    CHECK(m == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    CHECK(code_of([] { uniform_mesh(1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("error metrics") {
    auto xs = uniform_mesh(101);
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(101, 101);
    auto same = error_metrics(a, a, xs, xs);
    CHECK(same.l2 == 0.0);
    CHECK(same.linf == 0.0);

    // constant difference: Linf = |c|, L2 = |c| sqrt(fraction of mesh points in the window)
    const double c = -0.37;
    Eigen::MatrixXd b = a.array() + c;
    auto e = error_metrics(a, b, xs, xs);
    // 0.01..0.99 on a 0.01 grid holds 99 of 101 points per side
    double s = (99.0 * 99.0) / (101.0 * 101.0);
    CHECK(region_fraction(xs, xs, kEvaluationWindow) == doctest::Approx(s).epsilon(1e-15));
    CHECK(e.linf == doctest::Approx(std::abs(c)).epsilon(1e-14));
    // summation rounding over ~1e4 terms
    CHECK(e.l2 == doctest::Approx(std::abs(c) * std::sqrt(s)).epsilon(1e-12));

    // independent masked computation
    Eigen::MatrixXd d = Eigen::MatrixXd::Random(101, 101);
    Eigen::ArrayXXd mask = Eigen::ArrayXXd::Zero(101, 101);
    mask.block(1, 1, 99, 99).setOnes();
    Eigen::ArrayXXd diff = (a - d).array().abs() * mask;
    auto r = error_metrics(a, d, xs, xs);
    CHECK(r.linf == diff.maxCoeff());
    CHECK(r.l2 == doctest::Approx(std::sqrt(diff.square().sum() / (101.0 * 101.0))).epsilon(1e-13));

    CHECK(code_of([&] { error_metrics(a, Eigen::MatrixXd::Zero(100, 101), xs, xs); }) == ErrorCode::Shape);
    CHECK(code_of([&] { error_metrics(a, a, uniform_mesh(100), xs); }) == ErrorCode::Shape);
}

TEST_CASE("norm ordering on random field pairs") {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::size_t nx = 10 + rng() % 40, ny = 10 + rng() % 40;
        auto xs = uniform_mesh(nx), ys = uniform_mesh(ny);
        Eigen::MatrixXd a = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny));
        Eigen::MatrixXd b = Eigen::MatrixXd::Random(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny));
        Box region{0.1 * (rng() % 4), 0.6 + 0.1 * (rng() % 4), 0.05, 0.95};
        auto e = error_metrics(a, b, xs, ys, region);
        CHECK(e.l2 <= e.linf * std::sqrt(region_fraction(xs, ys, region)) * (1 + 1e-14));
        CHECK(e.l2 >= 0.0);
    }
}

TEST_CASE("constraint labels") {
    CHECK(constraint_function({0.5, 0.5}) == 0.0);
    CHECK(constraint_function({0.0, 0.0}) == 1.25);
    CHECK(constraint_function({1.0, 0.5}) == 1.0);
    auto c = constraint_labels();
    REQUIRE(c.size() == 16);
    c.validate();
    for (std::size_t k = 0; k < 16; ++k) {
        CHECK(c.labels[k] == constraint_function(c.points[k]));
        double x = c.points[k].x * 3.0, y = c.points[k].y * 3.0;
        CHECK(std::abs(x - std::round(x)) < 1e-15);
        CHECK(std::abs(y - std::round(y)) < 1e-15);
    }
    CHECK(c.min_label() == doctest::Approx(1.0 / 36.0 + 4.0 / 36.0));
    CHECK(c.max_label() == 1.25);
}

TEST_CASE("KDE error on the evaluation window") {
    auto rho = density::reference_density(density::ReferenceId::Rho2);
    auto s = density::sample_density(rho, 10000, 11);
    density::KernelDensityEstimate kde(s.points, 0.03);
    auto mesh = uniform_mesh(129);
    Eigen::MatrixXd exact(129, 129);
    for (std::size_t j = 0; j < 129; ++j)
        for (std::size_t i = 0; i < 129; ++i)
            exact(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rho(mesh[i], mesh[j]);
    auto e = error_metrics(kde.values_on_mesh(mesh, mesh), exact, mesh, mesh);
    CHECK(std::isfinite(e.l2));
    CHECK(e.l2 > 0.0);
    CHECK(e.linf >= e.l2);
}

TEST_CASE("median") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(std::isnan(median({})));
}

TEST_CASE("study config validation") {
    StudyConfig c;
    c.validate();
    CHECK(c.bandwidths(64) == std::vector<double>{0.01});
    c.h_exponent = 0.5;
    CHECK(c.bandwidths(64)[0] == doctest::Approx(0.125));
    auto bad = [](auto mutate) {
        StudyConfig s;
        mutate(s);
        return code_of([&] { s.validate(); });
    };
    CHECK(bad([](StudyConfig& s) { s.n_values = {}; }) == ErrorCode::InvalidArgument);
    CHECK(bad([](StudyConfig& s) { s.n_values = {10, 10}; }) == ErrorCode::InvalidArgument);
    CHECK(bad([](StudyConfig& s) { s.h_values = {-1.0}; }) == ErrorCode::InvalidArgument);
    CHECK(bad([](StudyConfig& s) { s.region = {0.0, 1.2, 0.0, 1.0}; }) == ErrorCode::InvalidArgument);
    CHECK(bad([](StudyConfig& s) { s.seeds = {}; }) == ErrorCode::InvalidArgument);
    CHECK(bad([](StudyConfig& s) { s.sites = 1000; }) == ErrorCode::InvalidArgument);
}

TEST_CASE("density study: shape, determinism and flags") {
    StudyConfig c;
    c.density = density::ReferenceId::Rho2;
    c.n_values = {300, 600};
    c.h_values = {0.05, 0.1, 0.2};
    c.seeds = {1, 2};
    c.sites = 256;
    c.mesh = 33;
    auto a = density_error_study(c);
    auto b = density_error_study(c);
    CHECK(a.rows.size() == 2 * 3 * 2 * 2 * 3);  // n x h x seed x estimator x quantity
    CHECK(csv_text(a.error_table()) == csv_text(b.error_table()));
    for (const auto& r : a.rows) {
        CHECK(r.l2 >= 0.0);
        CHECK(r.linf >= r.l2);
        CHECK(r.estimate_seconds >= 0.0);
    }
    for (const char* name : {"kde_linf_nonincreasing_in_n", "skde_linf_le_kde", "kde_optimal_h_interior"})
        CHECK(a.flag(name) != nullptr);
    CHECK(a.flag("skde_linf_le_kde")->values.size() == 6);
    double m = a.median_linf("kde", "density", 300, 0.1);
    CHECK(std::isfinite(m));
    CHECK(a.flag_table().rows.size() == a.flags.size());

    auto series = linf_series(a);
    CHECK(!series.empty());
    auto svg = line_chart_svg("test", series, true, true);
    std::size_t lines = 0;
    for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) ++lines;
    CHECK(lines == series.size());
}

TEST_CASE("minimiser study: shape, determinism and monotone energies") {
    StudyConfig c;
    c.density = density::ReferenceId::Rho2;
    c.n_values = {512, 1024};
    c.h_values = {0.1};
    c.seeds = {1};
    c.sites = 256;
    c.mesh = 65;
    c.points_per_patch = 10;
    c.discrete = true;
    auto a = minimizer_comparison(c);
    auto b = minimizer_comparison(c);
    CHECK(csv_text(a.error_table()) == csv_text(b.error_table()));
    // ground truth plus three methods per (n, seed)
    CHECK(a.rows.size() == 1 + 2 * 3);
    CHECK(a.rows.front().method == "continuum-exact");
    for (const auto& r : a.rows) {
        CHECK(r.converged);
        CHECK(r.violations == 0);
    }
    for (const auto& h : a.energy_histories) CHECK(monotonicity_violations(h) == 0);
    for (const char* name : {"continuum-kde_linf_nonincreasing_in_n", "continuum-skde_linf_nonincreasing_in_n",
                             "discrete_linf_nonincreasing_in_n", "continuum_skde_time_sublinear",
                             "discrete_time_superlinear"})
        CHECK(a.flag(name) != nullptr);
}

TEST_CASE("exact density reproduces the ground truth") {
    StudyConfig c;
    c.points_per_patch = 10;
    auto rho = density::reference_density(density::ReferenceId::Rho2);
    auto p1 = labelled_problem(density::exact_density_field(rho), c);
    auto p2 = labelled_problem(density::exact_density_field(rho), c);
    auto r1 = continuum::minimize_continuum(p1, {.tol = c.tol});
    continuum::ContinuumOptions from_flat{.tol = c.tol};
    from_flat.initial = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p2.domain->size()),
                                                  constraint_labels().mean_label());
    // constraint nodes must hold their targets in the initial state
    for (std::size_t k = 0; k < p2.domain->size(); ++k)
        if (p2.kind(k) == continuum::NodeKind::Constraint) (*from_flat.initial)[static_cast<Eigen::Index>(k)] = p2.targets()[static_cast<Eigen::Index>(k)];
    auto r2 = continuum::minimize_continuum(p2, from_flat);
    REQUIRE(r1.result.converged);
    REQUIRE(r2.result.converged);
    auto mesh = uniform_mesh(65);
    auto e = error_metrics(continuum::evaluate_on_mesh(*p1.domain, r1.result.values, mesh, mesh),
                           continuum::evaluate_on_mesh(*p2.domain, r2.result.values, mesh, mesh), mesh, mesh);
    CHECK(e.linf <= 2.0 * c.tol);
}
