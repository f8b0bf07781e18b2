#include "doctest.h"

#include "pdirichlet/continuum.hpp"
#include "pdirichlet/density.hpp"
#include "pdirichlet/error.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace pdirichlet;
using namespace pdirichlet::continuum;

namespace {

density::DensityField unit_density() {
    return density::function_density_field([](const Point&) { return 1.0; }, [](const Point&) { return Vec2{}; },
                                           "one");
}

// Points of the {0, 1/3, 2/3, 1}^2 lattice; boundary_only drops the four interior ones.
ConstraintSet lattice(const std::function<double(const Point&)>& label, bool boundary_only = false) {
    ConstraintSet cs;
    for (int j = 0; j < 4; ++j) {
        for (int i = 0; i < 4; ++i) {
            if (boundary_only && i % 3 != 0 && j % 3 != 0) continue;
            Point p{i / 3.0, j / 3.0};
            cs.points.push_back(p);
            cs.labels.push_back(label(p));
        }
    }
    return cs;
}

ConstraintSet corners(const std::function<double(const Point&)>& label) {
    ConstraintSet cs;
    for (Point p : {Point{0, 0}, Point{1, 0}, Point{0, 1}, Point{1, 1}}) {
        cs.points.push_back(p);
        cs.labels.push_back(label(p));
    }
    return cs;
}

Eigen::VectorXd sample(const PatchedDomain& dom, const std::function<double(const Point&)>& f) {
    Eigen::VectorXd u(static_cast<Eigen::Index>(dom.size()));
    for (std::size_t k = 0; k < dom.size(); ++k) u[static_cast<Eigen::Index>(k)] = f(dom.nodes()[k].position);
    return u;
}

double c_label(const Point& p) { return 4 * (p.x - 0.5) * (p.x - 0.5) + (p.y - 0.5) * (p.y - 0.5); }

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("patch layout from constraint coordinates") {
    auto one = [](const Point&) { return 0.0; };
    auto single = build_patches(corners(one), 6);
    CHECK(single.patches().size() == 1);
    CHECK(single.size() == 36);
    CHECK(single.groups().size() == 36);

    auto nine = build_patches(lattice(c_label), 6);
    CHECK(nine.patches().size() == 9);
    CHECK(nine.breaks_x() == std::vector<double>{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0});
    // 12 interface sides with 4 inner nodes each carry 2 copies, 4 interior corners carry 4
    std::size_t two = 0, four = 0;
    for (const auto& g : nine.groups()) {
        two += g.copies.size() == 2;
        four += g.copies.size() == 4;
    }
    // plus the 8 points where interfaces meet the outer boundary
    CHECK(two == 12 * 4 + 8);
    CHECK(four == 4);
    CHECK(nine.groups().size() == 9 * 36 - (12 * 4 + 8) - 3 * 4);

    // an interior corner label sits on the second node of each incident interface
    const auto& placed = nine.constraints()[5];
    CHECK(placed.original.x == doctest::Approx(1.0 / 3.0));
    CHECK(placed.original.y == doctest::Approx(1.0 / 3.0));
    REQUIRE(placed.placed.size() == 4);
    auto grid = spectral::chebyshev_nodes(5, {1.0 / 3.0, 2.0 / 3.0});
    CHECK(placed.offset == doctest::Approx(grid.node(4) - 1.0 / 3.0).epsilon(1e-12));
    for (const auto& q : placed.placed) {
        CHECK(distance(q, placed.original) == doctest::Approx(placed.offset).epsilon(1e-12));
    }
    for (const auto& q : nine.constraints()[0].placed) CHECK(q == Point{0, 0});

    ConstraintSet no_edge;
    no_edge.points = {{0, 0}, {0.5, 0.5}};
    no_edge.labels = {0, 1};
    CHECK(code_of([&] { build_patches(no_edge, 6); }) == ErrorCode::UnsupportedLayout);
    CHECK(code_of([&] { build_patches(corners(one), 2); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("node kinds") {
    auto prob = make_problem(lattice(c_label), 6, unit_density(), 3.0, 0.01);
    std::size_t counts[5] = {};
    for (std::size_t k = 0; k < prob.domain->size(); ++k) ++counts[static_cast<int>(prob.kind(k))];
    // 4 domain corners, 8 boundary lattice points on two patches each, and each interior label
    // on four interface nodes shared by two patches
    std::size_t held = 0;
    for (const auto& g : prob.domain->groups()) held += g.label ? g.copies.size() : 0;
    CHECK(held == 4 + 8 * 2 + 4 * 4 * 2);
    CHECK(counts[static_cast<int>(NodeKind::Constraint)] == held);
    std::size_t flux = 0;
    for (const auto& g : prob.domain->groups()) flux += g.copies.size() > 1 && !g.label;
    CHECK(counts[static_cast<int>(NodeKind::Flux)] == flux);

    ContinuumProblem fresh = make_problem(lattice(c_label), 6, unit_density(), 3.0, 0.01);
    fresh.boundary_data = [](const Point& p) { return p.x; };
    for (std::size_t k = 0; k < fresh.domain->size(); ++k) CHECK(fresh.kind(k) != NodeKind::Outer);
}

TEST_CASE("local energy of polynomial fields") {
    for (double sigma : {1.0, 2.5}) {
        auto prob = make_problem(lattice(c_label), 8, unit_density(), 3.0, 0.01, sigma);
        auto ux = sample(*prob.domain, [](const Point& p) { return p.x; });
        CHECK(local_energy(ux, prob) == doctest::Approx(sigma).epsilon(1e-12));

        prob.p = 2.0;
        auto uxx = sample(*prob.domain, [](const Point& p) { return p.x * p.x; });
        CHECK(std::abs(local_energy(uxx, prob) - sigma * 4.0 / 3.0) <= 1e-8);
    }
    // |grad u|^4 for u = x + 2y is 25 everywhere
    auto prob = make_problem(corners(c_label), 7, unit_density(), 4.0, 0.01);
    auto u = sample(*prob.domain, [](const Point& p) { return p.x + 2 * p.y; });
    CHECK(local_energy(u, prob) == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("flow rhs on polynomial fields") {
    for (Scheme scheme : {Scheme::Weak, Scheme::Collocation}) {
        auto prob = make_problem(lattice(c_label), 9, unit_density(), 2.0, 0.01);
        prob.scheme = scheme;
        auto half_sq = sample(*prob.domain, [](const Point& p) { return 0.5 * p.x * p.x; });
        auto rhs = gradient_flow_rhs({half_sq}, prob);
        auto affine = gradient_flow_rhs({sample(*prob.domain, [](const Point& p) { return 2 * p.x - p.y; })}, prob);
        for (std::size_t k = 0; k < prob.domain->size(); ++k) {
            auto kk = static_cast<Eigen::Index>(k);
            if (prob.kind(k) == NodeKind::Interior) {
                CHECK(std::abs(rhs[kk] - 1.0) <= 1e-6);
                CHECK(std::abs(affine[kk]) <= 1e-9);
            } else if (prob.kind(k) != NodeKind::Outer) {
                CHECK(rhs[kk] == 0.0);
            }
        }
    }
}

TEST_CASE("outer boundary rows") {
    // u = x^2/2 on the right edge: flux -x = -1 and divergence 1.
    auto on_right_edge = [](const ContinuumProblem& prob, std::size_t k) {
        const auto& nd = prob.domain->nodes()[k];
        return prob.kind(k) == NodeKind::Outer && nd.position.x == 1.0 && nd.j > 0 &&
               nd.j + 1 < prob.domain->points_per_patch();
    };
    for (double beta : {0.0, 0.01}) {
        auto prob = make_problem(corners(c_label), 9, unit_density(), 2.0, beta);
        prob.scheme = Scheme::Collocation;
        auto rhs = gradient_flow_rhs({sample(*prob.domain, [](const Point& p) { return 0.5 * p.x * p.x; })}, prob);
        std::size_t seen = 0;
        for (std::size_t k = 0; k < prob.domain->size(); ++k) {
            if (!on_right_edge(prob, k)) continue;
            CHECK(rhs[static_cast<Eigen::Index>(k)] == doctest::Approx(-1.0 + beta).epsilon(1e-9));
            ++seen;
        }
        CHECK(seen == 7);
    }
    // Weak rows: beta is the end quadrature weight along the normal.
    auto prob = make_problem(corners(c_label), 9, unit_density(), 2.0, 0.01);
    auto w = spectral::clenshaw_curtis_weights(spectral::chebyshev_nodes(8, {0.0, 1.0}));
    const double w_end = w[0];
    CHECK(w_end == doctest::Approx(1.0 / (2.0 * (64.0 - 1.0))).epsilon(1e-12));
    auto rhs = gradient_flow_rhs({sample(*prob.domain, [](const Point& p) { return 0.5 * p.x * p.x; })}, prob);
    for (std::size_t k = 0; k < prob.domain->size(); ++k) {
        if (on_right_edge(prob, k)) CHECK(rhs[static_cast<Eigen::Index>(k)] == doctest::Approx(-1.0 + w_end).epsilon(1e-9));
    }
}

TEST_CASE("flow rhs is the energy derivative") {
    auto rho2 = density::exact_density_field(density::reference_density(density::ReferenceId::Rho2));
    auto prob = make_problem(lattice(c_label), 8, rho2, 3.0, 0.01, 1.7);
    auto u = sample(*prob.domain, [](const Point& p) { return std::sin(2 * p.x + 0.3) * std::cos(3 * p.y) + p.x * p.y; });
    auto rhs = gradient_flow_rhs({u}, prob);
    const double h = 1e-4;
    std::size_t checked = 0;
    for (std::size_t k = 0; k < prob.domain->size(); k += 7) {
        if (prob.kind(k) != NodeKind::Interior && prob.kind(k) != NodeKind::Outer) continue;
        const auto& nd = prob.domain->nodes()[k];
        const auto& patch = prob.domain->patches()[nd.patch];
        double w = patch.weights[static_cast<Eigen::Index>(nd.j * prob.domain->points_per_patch() + nd.i)];
        double lumped = w / std::abs(prob.div_weight(k));
        auto shifted = [&](double t) {
            Eigen::VectorXd v = u;
            v[static_cast<Eigen::Index>(k)] += t;
            return local_energy(v, prob);
        };
        double dE = (8 * (shifted(h) - shifted(-h)) - (shifted(2 * h) - shifted(-2 * h))) / (12 * h);
        double expected = -dE / (prob.p * prob.sigma * lumped);
        CHECK(rhs[static_cast<Eigen::Index>(k)] == doctest::Approx(expected).epsilon(1e-6).scale(1.0));
        ++checked;
    }
    CHECK(checked > 40);
}

TEST_CASE("stationary and affine steps") {
    // two patches side by side, boundary held at the affine values
    ConstraintSet cs;
    for (Point p : {Point{0, 0}, Point{0.5, 0}, Point{1, 0}, Point{0, 1}, Point{0.5, 1}, Point{1, 1}}) {
        cs.points.push_back(p);
        cs.labels.push_back(0.3 + p.x - 2 * p.y);
    }
    for (double p : {2.0, 3.0, 4.0}) {
        for (Scheme scheme : {Scheme::Weak, Scheme::Collocation}) {
            auto prob = make_problem(cs, 9, unit_density(), p, 0.01);
            prob.scheme = scheme;
            prob.boundary_data = [](const Point& q) { return 0.3 + q.x - 2 * q.y; };
            auto u = sample(*prob.domain, prob.boundary_data);
            auto mism = interface_mismatch(u, prob);
            CHECK(mism.value <= 1e-14);
            CHECK(mism.flux <= 1e-8);
            for (double tau : {1e-4, 1.0, 1e6}) {
                auto next = semi_implicit_step({u}, prob, tau);
                CHECK((next.u - u).cwiseAbs().maxCoeff() <= 1e-10);
                CHECK(next.algebraic_residual <= 1e-8);
            }
        }
    }
}

TEST_CASE("direct and iterative steps agree") {
    auto rho2 = density::exact_density_field(density::reference_density(density::ReferenceId::Rho2));
    for (double p : {2.0, 3.0}) {
        auto prob = make_problem(lattice(c_label), 8, rho2, p, 0.01);
        auto u = initial_field(prob);
        for (double tau : {1e-5, 1e-2, 10.0}) {
            StepOptions direct, iterative;
            direct.solver = LinearSolver::Direct;
            iterative.solver = LinearSolver::Iterative;
            StepReport rd, ri;
            auto a = semi_implicit_step({u}, prob, tau, direct, &rd);
            auto b = semi_implicit_step({u}, prob, tau, iterative, &ri);
            CHECK(rd.direct);
            CHECK(!ri.direct);
            CHECK(ri.linear_iterations > 0);
            CHECK((a.u - b.u).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, (a.u - u).cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("semi-implicit step lowers the energy") {
    auto prob = make_problem(lattice(c_label), 8, unit_density(), 3.0, 0.01);
    auto u = initial_field(prob);
    // consistent start: a short run, then single small steps
    ContinuumOptions opt;
    opt.max_iter = 3;
    auto warm = minimize_continuum(prob, opt);
    double e0 = local_energy(warm.state.u, prob);
    double tau = default_timestep(warm.state.u, prob);
    CHECK(tau > 0.0);
    auto next = semi_implicit_step(warm.state, prob, tau);
    CHECK(local_energy(next.u, prob) <= e0);
    CHECK(next.time == doctest::Approx(warm.state.time + tau));
    CHECK(u.size() == next.u.size());
    CHECK(code_of([&] { semi_implicit_step(warm.state, prob, 0.0); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { semi_implicit_step({Eigen::VectorXd::Zero(3)}, prob, 1.0); }) == ErrorCode::Shape);
}

TEST_CASE("affine boundary data gives the affine minimiser") {
    auto label = [](const Point& p) { return p.x; };
    for (double p : {2.0, 3.0}) {
        auto prob = make_problem(lattice(label, true), 10, unit_density(), p, 0.01);
        prob.boundary_data = label;
        ContinuumOptions opt;
        // start away from the answer
        opt.initial = sample(*prob.domain, [](const Point& q) { return q.x + 0.2 * std::sin(3 * q.x) * std::sin(5 * q.y); });
        auto r = minimize_continuum(prob, opt);
        CHECK(r.result.converged);
        auto exact = sample(*prob.domain, label);
        CHECK((r.state.u - exact).cwiseAbs().maxCoeff() <= 1e-5);
        CHECK(monotonicity_violations(r.result.energy_history) == 0);
        CHECK(r.result.energy == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("minimiser with lattice labels") {
    auto prob = make_problem(lattice(c_label), 10, unit_density(), 3.0, 0.01);
    auto r = minimize_continuum(prob);
    REQUIRE(r.result.converged);
    CHECK(r.result.residual <= 1e-5);
    CHECK(r.rejected_steps == 0);
    CHECK(monotonicity_violations(r.result.energy_history) == 0);
    CHECK(r.result.energy_history.front() >= r.result.energy);
    CHECK(r.mismatch.value <= 1e-6);
    CHECK(r.mismatch.flux <= 1e-4);
    // labels held
    auto at = evaluate_at(*prob.domain, r.state.u, prob.domain->constraints()[0].placed);
    CHECK(at[0] == doctest::Approx(c_label({0, 0})).epsilon(1e-14));
    // symmetric labels give a symmetric field
    std::vector<double> xs{0.2, 0.8}, ys{0.45};
    auto m = evaluate_on_mesh(*prob.domain, r.state.u, xs, ys);
    CHECK(m(0, 0) == doctest::Approx(m(1, 0)).epsilon(1e-6));

    ContinuumOptions few;
    few.max_iter = 2;
    auto partial = minimize_continuum(prob, few);
    CHECK(!partial.result.converged);
    CHECK(partial.result.values.size() == r.result.values.size());
}

TEST_CASE("maximum principle") {
    // The free corner node inside each ring of offset labels undershoots by roughly 0.04/N
    // (the field has a square-root cusp at each label for p = 3).
    auto cs = lattice(c_label);
    auto prob = make_problem(cs, 60, unit_density(), 3.0, 0.01);
    auto r = minimize_continuum(prob);
    REQUIRE(r.result.converged);
    CHECK(r.state.u.minCoeff() >= cs.min_label() - 1e-3);
    CHECK(r.state.u.maxCoeff() <= cs.max_label() + 1e-3);
}

TEST_CASE("mesh evaluation") {
    auto prob = make_problem(lattice(c_label), 9, unit_density(), 3.0, 0.01);
    const auto& dom = *prob.domain;
    auto sq = sample(dom, [](const Point& p) { return p.x * p.x - 0.5 * p.y * p.y + p.x * p.y; });
    Points nodes;
    for (std::size_t k = 0; k < dom.size(); k += 11) nodes.push_back(dom.nodes()[k].position);
    auto at_nodes = evaluate_at(dom, sq, nodes);
    for (std::size_t q = 0; q < nodes.size(); ++q) {
        const auto& p = nodes[q];
        CHECK(at_nodes[static_cast<Eigen::Index>(q)] == doctest::Approx(p.x * p.x - 0.5 * p.y * p.y + p.x * p.y).epsilon(1e-13));
    }
    std::vector<double> mids;
    for (int k = 0; k < 12; ++k) mids.push_back((k + 0.5) / 12.0);
    auto grid = evaluate_on_mesh(dom, sq, mids, mids);
    REQUIRE(grid.rows() == 12);
    for (int a = 0; a < 12; ++a) {
        for (int b = 0; b < 12; ++b) {
            double x = mids[static_cast<std::size_t>(a)], y = mids[static_cast<std::size_t>(b)];
            CHECK(std::abs(grid(a, b) - (x * x - 0.5 * y * y + x * y)) <= 1e-8);
        }
    }
    auto affine = sample(dom, [](const Point& p) { return 1 - 3 * p.x + p.y; });
    Points any{{0.123, 0.987}, {1.0 / 3.0, 0.5}, {1, 1}, {0, 0.31}};
    auto av = evaluate_at(dom, affine, any);
    for (std::size_t q = 0; q < any.size(); ++q) {
        CHECK(std::abs(av[static_cast<Eigen::Index>(q)] - (1 - 3 * any[q].x + any[q].y)) <= 1e-10);
    }
    std::vector<double> bad{1.5};
    CHECK(code_of([&] { evaluate_on_mesh(dom, affine, bad, mids); }) == ErrorCode::OutOfDomain);
    CHECK(code_of([&] { evaluate_at(dom, affine, Points{{-0.1, 0.5}}); }) == ErrorCode::OutOfDomain);
}

TEST_CASE("initial field") {
    auto prob = make_problem(lattice(c_label), 7, unit_density(), 3.0, 0.01);
    auto u = initial_field(prob);
    CHECK(u.minCoeff() >= 0.0);
    CHECK(u.maxCoeff() <= 1.25);
    for (std::size_t k = 0; k < prob.domain->size(); ++k) {
        if (prob.kind(k) == NodeKind::Constraint) CHECK(u[static_cast<Eigen::Index>(k)] == prob.targets()[static_cast<Eigen::Index>(k)]);
    }
}

namespace {

// int_0^{pi/2} cos^q
double cos_power(double q) {
    return 0.5 * std::sqrt(std::numbers::pi) * boost::math::tgamma((q + 1) / 2) / boost::math::tgamma(q / 2 + 1);
}

// Nonlocal energy of u = x with unit density and indicator weight on a square of side L:
// eps^{-p-2} int_{|h|<eps} |h_1|^p (L - |h_1|)(L - |h_2|) dh, integrated in closed form.
double indicator_energy_of_x(double eps, double p, double L) {
    return 4 * (L * L / (p + 2) * cos_power(p) - L * eps / (p + 3) * (cos_power(p + 1) + 1 / (p + 1)) +
                eps * eps / ((p + 4) * (p + 2)));
}

}  // namespace

TEST_CASE("nonlocal energy") {
    auto one = [](const Point&) { return 1.0; };
    auto x = [](const Point& p) { return p.x; };
    auto eta = density::indicator_profile();
    NonlocalOptions opt;
    opt.region = {0.2, 0.8, 0.2, 0.8};
    for (double p : {2.0, 3.0}) {
        for (double eps : {0.1, 0.05}) {
            double e = nonlocal_energy(x, one, eta, eps, p, opt);
            CHECK(e == doctest::Approx(indicator_energy_of_x(eps, p, 0.6)).epsilon(1e-6));
        }
        // the deep-interior value is sigma_eta per unit area
        CHECK(indicator_energy_of_x(0.0, p, 1.0) == doctest::Approx(density::sigma_eta(eta, p)).epsilon(1e-10));
    }
    CHECK(nonlocal_energy([](const Point&) { return 0.7; }, one, eta, 0.1, 3.0, opt) == 0.0);

    auto u = [](const Point& p) { return std::sin(3 * p.x) + p.y * p.y; };
    auto u2 = [&](const Point& p) { return 2 * u(p); };
    auto rho = [](const Point& p) { return 0.5 + p.x * p.y; };
    auto gauss = density::gaussian_profile();
    NonlocalOptions coarse;
    coarse.order = 4;
    double a = nonlocal_energy(u, rho, gauss, 0.1, 3.0, coarse);
    double b = nonlocal_energy(u2, rho, gauss, 0.1, 3.0, coarse);
    CHECK(b == doctest::Approx(8.0 * a).epsilon(1e-12));

    NonlocalOptions tiny;
    tiny.max_panels_per_side = 10;
    CHECK(code_of([&] { nonlocal_energy(u, rho, eta, 0.01, 3.0, tiny); }) == ErrorCode::Resolution);
    CHECK(code_of([&] { nonlocal_energy(u, rho, eta, 0.0, 3.0); }) == ErrorCode::InvalidArgument);
}
