#include "doctest.h"

#include "pdirichlet/error.hpp"
#include "pdirichlet/spectral.hpp"

#include <cmath>
#include <numbers>

using namespace pdirichlet;
using namespace pdirichlet::spectral;

namespace {

Eigen::VectorXd sample(const TensorGrid& g, auto&& f) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(g.size()));
    for (std::size_t k = 0; k < g.size(); ++k) {
        Point p = g.point(k);
        v(static_cast<Eigen::Index>(k)) = f(p.x, p.y);
    }
    return v;
}

}  // namespace

TEST_CASE("chebyshev nodes") {
    auto g = chebyshev_nodes(2, {-1, 1});
    CHECK(g.nodes() == std::vector<double>{1.0, 0.0, -1.0});
    auto h = chebyshev_nodes(2, {0, 1});
    CHECK(h.nodes() == std::vector<double>{1.0, 0.5, 0.0});
    auto c = chebyshev_nodes(8, {-1, 1});
    CHECK(c.node(1) == doctest::Approx(std::cos(std::numbers::pi / 8)).epsilon(1e-15));

    for (int order : {3, 8, 17, 64}) {
        auto g2 = chebyshev_nodes(order, {0.2, 0.7});
        CHECK(g2.node(0) == 0.7);
        CHECK(g2.node(order) == 0.2);
        for (int i = 0; i < order; ++i) CHECK(g2.node(i) > g2.node(i + 1));
        for (int i = 0; i <= order; ++i)
            CHECK(g2.node(i) + g2.node(order - i) == doctest::Approx(0.9).epsilon(1e-15));
    }
}

TEST_CASE("grid errors") {
    CHECK_THROWS_AS(chebyshev_nodes(1, {0, 1}), Error);
    try {
        chebyshev_nodes(1, {0, 1});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidOrder);
    }
    try {
        chebyshev_nodes(4, {1, 1});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidInterval);
    }
}

TEST_CASE("1d differentiation") {
    for (int order : {2, 5, 8, 16, 40}) {
        auto g = chebyshev_nodes(order, {-1, 1});
        auto d = chebyshev_diff_matrix(g);
        for (Eigen::Index i = 0; i < d.entries.rows(); ++i) CHECK(std::abs(d.entries.row(i).sum()) < 1e-10);
        for (int deg = 0; deg <= order; ++deg) {
            Eigen::VectorXd f(g.size()), df(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                f(i) = std::pow(g.node(i), deg);
                df(i) = deg == 0 ? 0.0 : deg * std::pow(g.node(i), deg - 1);
            }
            double err = (d.apply(f) - df).cwiseAbs().maxCoeff();
            CHECK(err <= 1e-10 * order * order * std::max(1.0, df.cwiseAbs().maxCoeff()));
        }
    }
    auto g = chebyshev_nodes(8, {0, 1});
    Eigen::VectorXd x(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) x(i) = g.node(i);
    CHECK((chebyshev_diff_matrix(g).apply(x).array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("tensor operators") {
    auto gx = chebyshev_nodes(8, {0, 1});
    auto gy = chebyshev_nodes(8, {0, 1});
    TensorGrid grid(gx, gy);
    auto ops = tensor_diff_ops(gx, gy);
    auto lin = sample(grid, [](double x, double y) { return x + 2 * y; });
    CHECK((ops.dx.apply(lin).array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((ops.dy.apply(lin).array() - 2.0).abs().maxCoeff() < 1e-12);
    auto xy = sample(grid, [](double x, double y) { return x * y; });
    auto dxy = ops.dx.apply(xy);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(dxy(k) == doctest::Approx(grid.point(k).y).epsilon(1e-12));

    auto f = sample(grid, [](double x, double y) { return std::pow(x, 5) * std::pow(y, 3) + x * x * y; });
    CHECK((ops.dx.apply(ops.dy.apply(f)) - ops.dy.apply(ops.dx.apply(f))).cwiseAbs().maxCoeff() < 1e-8);

    // dense form agrees with the matrix-free form
    Eigen::MatrixXd dense = ops.dy.dense();
    CHECK((dense * f - ops.dy.apply(f)).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("quadrature") {
    auto q = quadrature_2d(chebyshev_nodes(8, {0, 1}), chebyshev_nodes(8, {0, 1}));
    CHECK(q.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK((q.weights.array() >= 0.0).all());
    Eigen::VectorXd xy(q.nodes.size()), x2(q.nodes.size());
    for (std::size_t k = 0; k < q.nodes.size(); ++k) xy(k) = q.nodes[k].x * q.nodes[k].y;
    CHECK(std::abs(q.integrate(xy) - 0.25) < 1e-10);

    auto r = quadrature_2d(chebyshev_nodes(8, {-1, 1}), chebyshev_nodes(8, {0, 1}));
    for (std::size_t k = 0; k < r.nodes.size(); ++k) x2(k) = r.nodes[k].x * r.nodes[k].x;
    CHECK(std::abs(r.integrate(x2) - 2.0 / 3.0) < 1e-10);
    CHECK(r.weights.sum() == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("monomial exactness on a 9x9 grid") {
    auto gx = chebyshev_nodes(8, {0, 1});
    TensorGrid grid(gx, gx);
    auto ops = tensor_diff_ops(gx, gx);
    auto q = quadrature_2d(gx, gx);
    for (int a = 0; a <= 8; ++a)
        for (int b = 0; b <= 8; ++b) {
            auto f = sample(grid, [&](double x, double y) { return std::pow(x, a) * std::pow(y, b); });
            auto fx = sample(grid, [&](double x, double y) { return a ? a * std::pow(x, a - 1) * std::pow(y, b) : 0.0; });
            auto fy = sample(grid, [&](double x, double y) { return b ? b * std::pow(x, a) * std::pow(y, b - 1) : 0.0; });
            CHECK((ops.dx.apply(f) - fx).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, fx.cwiseAbs().maxCoeff()));
            CHECK((ops.dy.apply(f) - fy).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, fy.cwiseAbs().maxCoeff()));
            double exact = 1.0 / ((a + 1.0) * (b + 1.0));
            CHECK(std::abs(q.integrate(f) - exact) <= 1e-8 * exact);
        }
}

TEST_CASE("barycentric interpolation") {
    auto g = chebyshev_nodes(10, {0, 2});
    std::vector<double> xs = {0.0, 0.3, 1.234, 2.0, g.node(3)};
    Eigen::MatrixXd m = interpolation_matrix(g, xs);
    Eigen::VectorXd f(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) f(i) = std::pow(g.node(i), 7) - g.node(i);
    Eigen::VectorXd v = m * f;
    for (std::size_t r = 0; r < xs.size(); ++r)
        CHECK(v(r) == doctest::Approx(std::pow(xs[r], 7) - xs[r]).epsilon(1e-12));
    CHECK(m.row(4).sum() == 1.0);
    CHECK(m(4, 3) == 1.0);
}
