#include "doctest.h"

#include "pdirichlet/density.hpp"
#include "pdirichlet/error.hpp"
#include "pdirichlet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace pdirichlet;
using namespace pdirichlet::graph;

namespace {

WeightedGraph path_graph(std::size_t n) {
    Points pts;
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({static_cast<double>(i), 0.0});
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 1.0});
    return WeightedGraph(pts, 1.0, edges);
}

Points uniform_points(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Points pts(n);
    for (auto& p : pts) p = {u(rng), u(rng)};
    return pts;
}

double brute_energy(const WeightedGraph& g, const Eigen::VectorXd& f, double p, double eps) {
    double s = 0.0;
    const auto n = g.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) s += g.weight(i, j) * std::pow(std::abs(f(i) - f(j)), p);
    return s / (std::pow(eps, p) * n * n);
}

}  // namespace

TEST_CASE("epsilon graph construction") {
    auto eta = density::indicator_profile();
    const double eps = 0.1;
    auto far = build_epsilon_graph({{0, 0}, {0.5, 0}}, eps, eta);
    CHECK(far.edge_count() == 0);
    CHECK(far.warning.has_value());
    auto near = build_epsilon_graph({{0, 0}, {0.05, 0}}, eps, eta);
    CHECK(near.weight(0, 1) == doctest::Approx(1.0 / (eps * eps)));
    CHECK(!near.warning);

    // every pair within reach, compared with a double loop
    auto pts = uniform_points(400, 3);
    for (auto prof : {density::indicator_profile(), density::gaussian_profile(), density::epanechnikov_profile()}) {
        auto g = build_epsilon_graph(pts, 0.08, prof);
        double reach = (std::isfinite(prof.support) ? prof.support : 5.0) * 0.08;
        std::size_t count = 0;
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (std::size_t j = i + 1; j < pts.size(); ++j) {
                double r = distance(pts[i], pts[j]);
                double w = r <= reach ? prof(r / 0.08) / (0.08 * 0.08) : 0.0;
                if (w > 0) ++count;
                CHECK(g.weight(i, j) == doctest::Approx(w).epsilon(1e-14));
                CHECK(g.weight(i, j) == g.weight(j, i));
            }
        CHECK(g.edge_count() == count);
        for (std::size_t i = 0; i < pts.size(); ++i) CHECK(g.weight(i, i) == 0.0);
    }

    auto s = density::sample_density(density::reference_density("rho1"), 1000, 4);
    auto g = build_epsilon_graph(s.points, epsilon_bounds(1000, 3.0).midpoint(), eta);
    CHECK(g.component_count() == 1);
}

TEST_CASE("epsilon bounds") {
    auto b = epsilon_bounds(1000, 3.0);
    CHECK(b.upper == doctest::Approx(0.1));
    CHECK(b.lower == doctest::Approx(std::pow(std::log(1000.0), 0.75) / std::sqrt(1000.0)));
    CHECK(b.midpoint() == doctest::Approx(std::sqrt(b.lower * b.upper)));
}

TEST_CASE("knn graph") {
    auto g = build_knn_graph({{0, 0}, {1, 0}, {2, 0}}, 1);
    auto e = g.edges();
    REQUIRE(e.size() == 2);
    CHECK((e[0].i == 0 && e[0].j == 1));
    CHECK((e[1].i == 1 && e[1].j == 2));

    auto pts = uniform_points(1000, 9);
    auto k10 = build_knn_graph(pts, 10);
    CHECK(k10.min_degree() >= 10);
    CHECK(k10.component_count() == 1);
    // brute-force neighbour lists
    for (std::size_t i = 0; i < pts.size(); i += 37) {
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t j = 0; j < pts.size(); ++j)
            if (j != i) d.emplace_back(distance(pts[i], pts[j]), j);
        std::sort(d.begin(), d.end());
        for (int q = 0; q < 10; ++q) CHECK(k10.weight(i, d[q].second) == 1.0);
    }
    for (auto& edge : k10.edges()) CHECK(k10.weight(edge.j, edge.i) == 1.0);

    try {
        build_knn_graph(pts, 1000);
        FAIL("expected invalid-k");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::InvalidK);
    }
}

TEST_CASE("discrete energy") {
    WeightedGraph two({{0, 0}, {1, 0}}, 0.5, {{0, 1, 3.0}});
    Eigen::VectorXd f(2);
    f << 0, 1;
    CHECK(discrete_energy(two, f, 2.0, 0.5) == doctest::Approx(3.0 / (2 * 0.25)));
    CHECK(discrete_energy(two, Eigen::VectorXd::Constant(2, 4.0), 3.0, 0.5) == 0.0);

    auto pts = uniform_points(60, 1);
    auto g = build_epsilon_graph(pts, 0.3, density::epanechnikov_profile());
    Eigen::VectorXd r = Eigen::VectorXd::Random(60);
    for (double p : {1.5, 2.0, 3.0, 4.5})
        CHECK(discrete_energy(g, r, p, 0.3) == doctest::Approx(brute_energy(g, r, p, 0.3)).epsilon(1e-12));

    // flow gradient is half the derivative of the energy
    Eigen::VectorXd grad = flow_gradient(g, r, 3.0, 0.3);
    const double h = 1e-6;
    for (int i : {0, 17, 42}) {
        Eigen::VectorXd a = r, b = r;
        a(i) += h;
        b(i) -= h;
        double fd = (discrete_energy(g, a, 3.0, 0.3) - discrete_energy(g, b, 3.0, 0.3)) / (2 * h);
        CHECK(grad(i) == doctest::Approx(0.5 * fd).epsilon(1e-6));
    }
}

TEST_CASE("small minimisers") {
    auto g = path_graph(3);
    GraphConstraints c{{0, 2}, {0.0, 1.0}};
    DiscreteOptions opt;
    opt.p = 2;
    opt.tol = 1e-12;
    auto r = minimize_discrete(g, c, opt);
    CHECK(r.converged);
    CHECK(r.values(1) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(solve_p2_direct(g, c)(1) == doctest::Approx(0.5));

    auto g5 = path_graph(5);
    GraphConstraints c5{{0, 4}, {0.0, 1.0}};
    for (double p : {2.0, 3.0, 4.0}) {
        for (auto acc : {Acceleration::Plain, Acceleration::Nesterov}) {
            DiscreteOptions o;
            o.p = p;
            o.tol = 1e-10;
            o.accel = acc;
            auto res = minimize_discrete(g5, c5, o);
            CHECK(res.converged);
            for (int i = 0; i < 5; ++i) CHECK(std::abs(res.values(i) - 0.25 * i) < 1e-4);
            CHECK(monotonicity_violations(res.energy_history) == 0);
        }
    }

    GraphConstraints same{{0, 4}, {0.7, 0.7}};
    auto flat = minimize_discrete(g5, same, DiscreteOptions{});
    CHECK(flat.converged);
    CHECK((flat.values.array() - 0.7).abs().maxCoeff() == 0.0);

    // complete graph with a single label
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i + 1; j < 6; ++j) edges.push_back({i, j, 1.0});
    WeightedGraph k6(uniform_points(6, 2), 1.0, edges);
    auto direct = solve_p2_direct(k6, GraphConstraints{{3}, {-2.0}});
    CHECK((direct.array() + 2.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("gradient descent agrees with the direct p = 2 solve") {
    auto pts = uniform_points(200, 12);
    auto g = build_epsilon_graph(pts, 0.15, density::indicator_profile());
    REQUIRE(g.component_count() == 1);
    GraphConstraints c{{0, 50, 100, 150}, {0.0, 1.0, 0.3, -0.5}};
    auto direct = solve_p2_direct(g, c);
    DiscreteOptions o;
    o.p = 2;
    o.accel = Acceleration::Nesterov;
    o.tol = 1e-13;
    auto res = minimize_discrete(g, c, o);
    CHECK(res.converged);
    CHECK((res.values - direct).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(monotonicity_violations(res.energy_history) == 0);
    // maximum principle
    CHECK(res.values.maxCoeff() <= 1.0 + 1e-6);
    CHECK(res.values.minCoeff() >= -0.5 - 1e-6);
}

TEST_CASE("permutation invariance") {
    auto pts = uniform_points(120, 5);
    std::vector<std::size_t> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937(1));
    Points shuffled(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) shuffled[perm[i]] = pts[i];
    auto eta = density::indicator_profile();
    auto g1 = build_epsilon_graph(pts, 0.2, eta);
    auto g2 = build_epsilon_graph(shuffled, 0.2, eta);
    GraphConstraints c1{{1, 7, 30}, {0.0, 1.0, 2.0}};
    GraphConstraints c2{{perm[1], perm[7], perm[30]}, {0.0, 1.0, 2.0}};
    DiscreteOptions o;
    o.p = 3;
    o.tol = 1e-9;
    o.accel = Acceleration::Nesterov;
    auto r1 = minimize_discrete(g1, c1, o);
    auto r2 = minimize_discrete(g2, c2, o);
    REQUIRE(r1.converged);
    REQUIRE(r2.converged);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs(r1.values(i) - r2.values(perm[i])) < 1e-6);
}

TEST_CASE("brute-force grid search on two free nodes") {
    // nodes 0,1 fixed; 2,3 free; weights chosen asymmetric
    WeightedGraph g(Points(4), 1.0, {{0, 2, 1.0}, {1, 3, 2.0}, {2, 3, 0.5}, {0, 3, 0.7}, {1, 2, 1.3}});
    GraphConstraints c{{0, 1}, {0.0, 1.0}};
    for (double p : {1.5, 2.0, 3.0}) {
        double best = 1e300, b2 = 0, b3 = 0;
        Eigen::VectorXd f(4);
        f << 0, 1, 0, 0;
        for (int a = 0; a <= 1000; ++a)
            for (int b = 0; b <= 1000; ++b) {
                f(2) = a * 1e-3;
                f(3) = b * 1e-3;
                double e = brute_energy(g, f, p, 1.0);
                if (e < best) {
                    best = e;
                    b2 = f(2);
                    b3 = f(3);
                }
            }
        DiscreteOptions o;
        o.p = p;
        o.tol = 1e-9;
        o.accel = Acceleration::Nesterov;
        auto r = minimize_discrete(g, c, o);
        CHECK(std::abs(r.values(2) - b2) <= 2e-3);
        CHECK(std::abs(r.values(3) - b3) <= 2e-3);
    }
}

TEST_CASE("errors") {
    WeightedGraph g(Points(4), 1.0, {{0, 1, 1.0}, {2, 3, 1.0}});
    try {
        solve_p2_direct(g, GraphConstraints{{0}, {1.0}});
        FAIL("expected singular");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Singular);
    }
    auto path = path_graph(3);
    DiscreteOptions o;
    o.p = 2;
    o.tau = 1e6;  // far beyond stability: halving recovers
    auto r = minimize_discrete(path, GraphConstraints{{0, 2}, {0.0, 1.0}}, o);
    CHECK(r.converged);
    CHECK(monotonicity_violations(r.energy_history) == 0);

    o.tau = std::nullopt;
    o.max_iter = 1;
    o.tol = 0.0;
    auto partial = minimize_discrete(path_graph(30), GraphConstraints{{0, 29}, {0.0, 1.0}}, o);
    CHECK(!partial.converged);
    CHECK(partial.iterations == 1);
}
