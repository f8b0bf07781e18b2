#include "doctest.h"

#include "pdirichlet/error.hpp"
#include "pdirichlet/spline.hpp"

#include <cmath>
#include <numbers>

using namespace pdirichlet;
using namespace pdirichlet::spline;

namespace {

std::vector<double> sample_sites(const SplineConfig& cfg, auto&& f) {
    std::vector<double> v;
    for (auto& p : cfg.site_points()) v.push_back(f(p.x, p.y));
    return v;
}

}  // namespace

TEST_CASE("basis partition of unity and derivatives") {
    UniformCubicBasis b(7);
    double v[4], d1[4], d2[4];
    for (double x : {0.0, 0.1, 0.33, 0.5, 0.999, 1.0}) {
        b.eval(x, 0, v);
        b.eval(x, 1, d1);
        b.eval(x, 2, d2);
        CHECK(v[0] + v[1] + v[2] + v[3] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(std::abs(d1[0] + d1[1] + d1[2] + d1[3]) < 1e-12);
        CHECK(std::abs(d2[0] + d2[1] + d2[2] + d2[3]) < 1e-10);
    }
    // Gram of values sums to the interval length
    CHECK(b.gram(0).sum() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(b.gram(2).sum()) < 1e-9);

    // derivative consistency by finite differences
    const double h = 1e-6;
    Eigen::MatrixXd c = Eigen::MatrixXd::Random(10, 10);
    TensorSpline s(b, c);
    Point p{0.37, 0.61};
    Vec2 g = s.gradient(p);
    CHECK(g.x == doctest::Approx((s.value({p.x + h, p.y}) - s.value({p.x - h, p.y})) / (2 * h)).epsilon(1e-6));
    CHECK(g.y == doctest::Approx((s.value({p.x, p.y + h}) - s.value({p.x, p.y - h})) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("hessian norm matches quadrature") {
    UniformCubicBasis b(5);
    Eigen::MatrixXd c = Eigen::MatrixXd::Random(8, 8);
    TensorSpline s(b, c);
    // midpoint rule on a fine grid
    const int m = 400;
    double sum = 0.0;
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
            auto hh = s.hessian({(i + 0.5) / m, (j + 0.5) / m});
            sum += hh(0) * hh(0) + 2 * hh(1) * hh(1) + hh(2) * hh(2);
        }
    CHECK(sum / (m * m) == doctest::Approx(s.hessian_norm_squared()).epsilon(1e-4));
}

TEST_CASE("affine and constant reproduction") {
    SplineConfig cfg{256, 1e-3};
    for (double lambda : {1e-8, 1e-3, 10.0}) {
        cfg.lambda = lambda;
        auto data = sample_sites(cfg, [](double x, double y) { return 0.7 - 1.3 * x + 2.1 * y; });
        auto fit = fit_smoothing_spline(data, cfg);
        for (Point p : {Point{0, 0}, Point{0.31, 0.77}, Point{1, 0.5}, Point{0.99, 0.99}}) {
            CHECK(std::abs(fit.value(p) - (0.7 - 1.3 * p.x + 2.1 * p.y)) < 1e-8);
            Vec2 g = fit.gradient(p);
            CHECK(std::abs(g.x + 1.3) < 1e-6);
            CHECK(std::abs(g.y - 2.1) < 1e-6);
        }
        auto cdata = sample_sites(cfg, [](double, double) { return 3.5; });
        auto cfit = fit_smoothing_spline(cdata, cfg);
        CHECK(std::abs(cfit.value({0.42, 0.13}) - 3.5) < 1e-8);
    }

    // through the density field wrapper as well
    SplineConfig c2{400, 1e-6};
    auto data = sample_sites(c2, [](double x, double y) { return 1.0 + 0.2 * x + 0.3 * y; });
    auto field = skde_fit(data, c2);
    CHECK(field.kind() == density::DensityKind::Skde);
    Vec2 g = field.gradient({0.4, 0.6});
    CHECK(std::abs(g.x - 0.2) < 1e-6);
    CHECK(std::abs(g.y - 0.3) < 1e-6);
}

TEST_CASE("smoothing never exceeds the interpolant's curvature") {
    SplineConfig cfg{144, 1e-5};
    auto data = sample_sites(cfg, [](double x, double y) {
        return std::sin(5 * x) * std::cos(3 * y) + 0.05 * std::sin(97 * x * y);
    });
    auto interp = interpolating_spline(data, cfg);
    auto sites = cfg.site_points();
    for (std::size_t k = 0; k < sites.size(); k += 7) CHECK(std::abs(interp.value(sites[k]) - data[k]) < 1e-8);
    double bound = interp.hessian_norm_squared();
    for (double lambda : {1e-8, 1e-6, 1e-4, 1e-2}) {
        cfg.lambda = lambda;
        CHECK(fit_smoothing_spline(data, cfg).hessian_norm_squared() <= bound * (1 + 1e-9));
    }
}

TEST_CASE("configuration errors") {
    std::vector<double> v(10, 1.0);
    try {
        fit_smoothing_spline(v, SplineConfig{10, 1e-6});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
    }
    std::vector<double> w(16, 1.0);
    try {
        fit_smoothing_spline(w, SplineConfig{16, -1.0});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
    }
    try {
        fit_smoothing_spline(w, SplineConfig{16, 1e-300});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IllPosedSpline);
    }
    try {
        fit_smoothing_spline(w, SplineConfig{25, 1e-6});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Shape);
    }
}
