#include "pdirichlet/continuum.hpp"

#include "pdirichlet/error.hpp"
#include "pdirichlet/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>

namespace pdirichlet::continuum {

namespace {

using Map = Eigen::Map<const Eigen::MatrixXd>;

void check_size(const PatchedDomain& dom, const Eigen::VectorXd& u) {
    if (static_cast<std::size_t>(u.size()) != dom.size()) fail(ErrorCode::Shape, "field size does not match the domain");
}

}  // namespace

Eigen::MatrixXd evaluate_on_mesh(const PatchedDomain& dom, const Eigen::VectorXd& u, std::span<const double> xs,
                                 std::span<const double> ys) {
    check_size(dom, u);
    for (double x : xs) {
        if (!(x >= -1e-12 && x <= 1 + 1e-12)) fail(ErrorCode::OutOfDomain, "mesh coordinate outside [0,1]");
    }
    for (double y : ys) {
        if (!(y >= -1e-12 && y <= 1 + 1e-12)) fail(ErrorCode::OutOfDomain, "mesh coordinate outside [0,1]");
    }
    const std::size_t npx = dom.breaks_x().size() - 1;
    const auto nn = static_cast<Eigen::Index>(dom.points_per_patch());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));

    // Bucket mesh coordinates by patch column/row, then one small matrix product per patch.
    auto bucket = [](const std::vector<double>& breaks, std::span<const double> v) {
        std::vector<std::vector<std::size_t>> b(breaks.size() - 1);
        for (std::size_t k = 0; k < v.size(); ++k) {
            auto it = std::upper_bound(breaks.begin(), breaks.end(), v[k]);
            auto q = std::clamp<std::ptrdiff_t>(it - breaks.begin() - 1, 0, static_cast<std::ptrdiff_t>(breaks.size()) - 2);
            b[static_cast<std::size_t>(q)].push_back(k);
        }
        return b;
    };
    auto bx = bucket(dom.breaks_x(), xs);
    auto by = bucket(dom.breaks_y(), ys);
    for (std::size_t q = 0; q < dom.patches().size(); ++q) {
        const auto& patch = dom.patches()[q];
        const auto& ix = bx[q % npx];
        const auto& iy = by[q / npx];
        if (ix.empty() || iy.empty()) continue;
        std::vector<double> px, py;
        for (auto k : ix) px.push_back(xs[k]);
        for (auto k : iy) py.push_back(ys[k]);
        Eigen::MatrixXd mx = spectral::interpolation_matrix(patch.grid.grid_x(), px);
        Eigen::MatrixXd my = spectral::interpolation_matrix(patch.grid.grid_y(), py);
        Map U(u.data() + patch.offset, nn, nn);
        Eigen::MatrixXd block = mx * U * my.transpose();
        for (std::size_t a = 0; a < ix.size(); ++a) {
            for (std::size_t b = 0; b < iy.size(); ++b) {
                out(static_cast<Eigen::Index>(ix[a]), static_cast<Eigen::Index>(iy[b])) =
                    block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            }
        }
    }
    return out;
}

Eigen::VectorXd evaluate_at(const PatchedDomain& dom, const Eigen::VectorXd& u, std::span<const Point> points) {
    check_size(dom, u);
    const auto nn = static_cast<Eigen::Index>(dom.points_per_patch());
    Eigen::VectorXd out(static_cast<Eigen::Index>(points.size()));
    std::vector<Eigen::VectorXd> bary_x, bary_y;
    for (const auto& patch : dom.patches()) {
        bary_x.push_back(spectral::barycentric_weights(patch.grid.grid_x()));
        bary_y.push_back(spectral::barycentric_weights(patch.grid.grid_y()));
    }
    for (std::size_t k = 0; k < points.size(); ++k) {
        const Point& p = points[k];
        if (!kUnitSquare.contains(p, 1e-12)) fail(ErrorCode::OutOfDomain, "evaluation point outside the unit square");
        std::size_t q = dom.locate(p);
        const auto& patch = dom.patches()[q];
        Eigen::RowVectorXd rx = spectral::interpolation_row(patch.grid.grid_x(), bary_x[q], p.x);
        Eigen::RowVectorXd ry = spectral::interpolation_row(patch.grid.grid_y(), bary_y[q], p.y);
        Map U(u.data() + patch.offset, nn, nn);
        out[static_cast<Eigen::Index>(k)] = (rx * U * ry.transpose())(0, 0);
    }
    return out;
}

Eigen::VectorXd initial_field(const ContinuumProblem& prob) {
    const auto& dom = *prob.domain;
    const auto m = static_cast<Eigen::Index>(dom.size());
    const auto& targets = prob.targets();

    Points sites;
    std::vector<double> labels;
    for (const auto& g : dom.groups()) {
        auto k = g.copies.front();
        if (prob.kind(k) == NodeKind::Constraint) {
            sites.push_back(g.position);
            labels.push_back(targets[static_cast<Eigen::Index>(k)]);
        }
    }
    Eigen::VectorXd u(m);
    if (sites.empty()) {
        u.setZero();
        return u;
    }
    const double lo = *std::min_element(labels.begin(), labels.end());
    const double hi = *std::max_element(labels.begin(), labels.end());
    double mean = 0.0;
    for (double l : labels) mean += l;
    mean /= static_cast<double>(labels.size());

    // Thin-plate spline r^2 log r with an affine part.
    const auto ns = static_cast<Eigen::Index>(sites.size());
    auto phi = [](double r) { return r > 0 ? r * r * std::log(r) : 0.0; };
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(ns + 3, ns + 3);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ns + 3);
    for (Eigen::Index i = 0; i < ns; ++i) {
        for (Eigen::Index j = 0; j < ns; ++j) {
            sys(i, j) = phi(distance(sites[static_cast<std::size_t>(i)], sites[static_cast<std::size_t>(j)]));
        }
        const Point& s = sites[static_cast<std::size_t>(i)];
        sys(i, ns) = sys(ns, i) = 1.0;
        sys(i, ns + 1) = sys(ns + 1, i) = s.x;
        sys(i, ns + 2) = sys(ns + 2, i) = s.y;
        rhs[i] = labels[static_cast<std::size_t>(i)];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
    bool usable = lu.isInvertible();
    Eigen::VectorXd coef;
    if (usable) coef = lu.solve(rhs);

    const auto& nodes = dom.nodes();
    for (Eigen::Index k = 0; k < m; ++k) {
        if (prob.kind(static_cast<std::size_t>(k)) == NodeKind::Constraint) {
            u[k] = targets[k];
            continue;
        }
        if (!usable) {
            u[k] = mean;
            continue;
        }
        const Point& x = nodes[static_cast<std::size_t>(k)].position;
        double v = coef[ns] + coef[ns + 1] * x.x + coef[ns + 2] * x.y;
        for (Eigen::Index i = 0; i < ns; ++i) v += coef[i] * phi(distance(x, sites[static_cast<std::size_t>(i)]));
        u[k] = std::clamp(v, lo, hi);
    }
    return u;
}

double nonlocal_energy(const std::function<double(const Point&)>& u, const std::function<double(const Point&)>& rho,
                       const density::WeightProfile& eta, double eps, double p, const NonlocalOptions& options) {
    if (!(eps > 0.0) || !std::isfinite(eps)) fail(ErrorCode::InvalidArgument, "eps must be positive");
    if (!(p >= 1.0)) fail(ErrorCode::InvalidArgument, "p must be >= 1");
    if (options.order < 1 || options.order > 20) fail(ErrorCode::InvalidArgument, "quadrature order must be in 1..20");
    const Box& box = options.region;
    if (!(box.x1 > box.x0 && box.y1 > box.y0)) fail(ErrorCode::InvalidArgument, "empty integration region");

    const double reach = std::isfinite(eta.support) ? eta.support : 5.0;
    const double radius = reach * eps;
    // Outer panels: side at most eps/2, with edges at distance `radius` from the walls where
    // the clipped inner integral has a kink.
    auto panel_edges = [&](double a, double b) {
        std::vector<double> cuts{a, b};
        if (a + radius < b) cuts.push_back(a + radius);
        if (b - radius > a) cuts.push_back(b - radius);
        std::sort(cuts.begin(), cuts.end());
        std::vector<double> edges{a};
        for (std::size_t k = 1; k < cuts.size(); ++k) {
            double len = cuts[k] - cuts[k - 1];
            if (len <= 1e-14) continue;
            auto m = static_cast<std::size_t>(std::ceil(len / (0.5 * eps) - 1e-9));
            for (std::size_t t = 1; t <= m; ++t) edges.push_back(cuts[k - 1] + len * static_cast<double>(t) / static_cast<double>(m));
        }
        // The clipped area behaves like (radius - d)^{3/2} on the wall side of each reach cut:
        // grade the adjacent panel geometrically toward it.
        std::vector<double> graded;
        auto grade = [&](double cut, double toward_wall) {
            auto it = std::lower_bound(edges.begin(), edges.end(), cut - 1e-14);
            if (it == edges.end() || std::abs(*it - cut) > 1e-12) return;
            std::size_t k = static_cast<std::size_t>(it - edges.begin());
            std::size_t nb = toward_wall < 0 ? k - 1 : k + 1;
            if (nb >= edges.size()) return;
            double h = std::abs(edges[nb] - cut);
            for (double f = 0.25; f > 1e-3; f *= 0.25) graded.push_back(cut + toward_wall * h * f);
        };
        if (a + radius < b) grade(a + radius, -1.0);
        if (b - radius > a) grade(b - radius, 1.0);
        edges.insert(edges.end(), graded.begin(), graded.end());
        std::sort(edges.begin(), edges.end());
        return edges;
    };
    const double limit = static_cast<double>(options.max_panels_per_side);
    if ((box.x1 - box.x0) / (0.5 * eps) > limit + 2 || (box.y1 - box.y0) / (0.5 * eps) > limit + 2) {
        std::ostringstream msg;
        msg << "eps = " << eps << " needs more than " << options.max_panels_per_side << " panels per side";
        fail(ErrorCode::Resolution, msg.str());
    }
    const auto ex = panel_edges(box.x0, box.x1);
    const auto ey = panel_edges(box.y0, box.y1);
    const std::size_t px = ex.size() - 1, py = ey.size() - 1;

    // Gauss-Legendre nodes and weights on [0,1].
    const std::size_t q = options.order;
    std::vector<double> gx(q), gw(q);
    {
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q));
        for (std::size_t k = 1; k < q; ++k) {
            double b = static_cast<double>(k) / std::sqrt(4.0 * static_cast<double>(k * k) - 1.0);
            jac(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = b;
            jac(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = b;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
        for (std::size_t k = 0; k < q; ++k) {
            gx[k] = 0.5 * (es.eigenvalues()[static_cast<Eigen::Index>(k)] + 1.0);
            double v0 = es.eigenvectors()(0, static_cast<Eigen::Index>(k));
            gw[k] = v0 * v0;  // sums to 1 on [0,1]
        }
    }

    const double two_pi = 2.0 * std::numbers::pi;
    const std::size_t na = std::max<std::size_t>(options.angular_panels, 1);
    const double dth = two_pi / static_cast<double>(na);
    const double scale = std::pow(eps, -p) / (eps * eps);

    // Distance from x along direction (c, s) to the region boundary.
    auto exit_distance = [&](const Point& x, double c, double s) {
        double t = std::numeric_limits<double>::infinity();
        if (c > 0) t = std::min(t, (box.x1 - x.x) / c);
        if (c < 0) t = std::min(t, (box.x0 - x.x) / c);
        if (s > 0) t = std::min(t, (box.y1 - x.y) / s);
        if (s < 0) t = std::min(t, (box.y0 - x.y) / s);
        return std::max(t, 0.0);
    };

    // Angles at which the angular integrand has a kink: where a wall is exactly `radius` away
    // along the ray, the directions of the region's corners (the clipped radius), and the two
    // directions normal to grad u(x), where u(z) - u(x) changes sign to first order.
    auto kinks = [&](const Point& x) {
        std::vector<double> th{0.0, two_pi};
        auto add = [&](double t) {
            t = std::fmod(t, two_pi);
            if (t < 0) t += two_pi;
            th.push_back(t);
        };
        const double walls[4][2] = {{box.x1 - x.x, 0.0}, {x.y - box.y0, 1.5}, {x.x - box.x0, 1.0}, {box.y1 - x.y, 0.5}};
        for (const auto& w : walls) {
            // wall at distance w[0] in direction w[1] * pi
            if (w[0] < radius) {
                double dev = std::acos(std::clamp(w[0] / radius, -1.0, 1.0));
                add(w[1] * std::numbers::pi + dev);
                add(w[1] * std::numbers::pi - dev);
            }
        }
        for (double cx : {box.x0, box.x1}) {
            for (double cy : {box.y0, box.y1}) {
                if (std::hypot(cx - x.x, cy - x.y) < radius) add(std::atan2(cy - x.y, cx - x.x));
            }
        }
        const double h = 1e-7;
        double gxu = u({x.x + h, x.y}) - u({x.x - h, x.y});
        double gyu = u({x.x, x.y + h}) - u({x.x, x.y - h});
        if (gxu != 0.0 || gyu != 0.0) {
            double normal = std::atan2(gyu, gxu);
            add(normal + 0.5 * std::numbers::pi);
            add(normal - 0.5 * std::numbers::pi);
        }
        std::sort(th.begin(), th.end());
        return th;
    };

    // Integral along the ray at angle ang, out to the clipped radius.
    auto ray = [&](const Point& x, double ux, double ang) {
        double c = std::cos(ang), s = std::sin(ang);
        double rmax = std::min(radius, exit_distance(x, c, s));
        if (rmax <= 0) return 0.0;
        auto nr = static_cast<std::size_t>(std::max(1.0, std::ceil(rmax / eps - 1e-9)));
        double dr = rmax / static_cast<double>(nr);
        double line = 0.0;
        for (std::size_t b = 0; b < nr; ++b) {
            for (std::size_t kr = 0; kr < q; ++kr) {
                double r = (static_cast<double>(b) + gx[kr]) * dr;
                double w = eta(r / eps);
                if (w == 0.0) continue;
                Point z{x.x + r * c, x.y + r * s};
                line += gw[kr] * dr * w * std::pow(std::abs(u(z) - ux), p) * rho(z) * r;
            }
        }
        return line;
    };

    // Wall (normal angle, distance) cutting the ray at angle ang inside the kernel reach.
    auto clipping_wall = [&](const Point& x, double ang) -> std::optional<std::pair<double, double>> {
        double c = std::cos(ang), s = std::sin(ang);
        double best = radius;
        std::optional<std::pair<double, double>> wall;
        auto consider = [&](double t, double normal, double d) {
            if (t < best) {
                best = t;
                wall = std::pair{normal, d};
            }
        };
        if (c > 0) consider((box.x1 - x.x) / c, 0.0, box.x1 - x.x);
        if (c < 0) consider((box.x0 - x.x) / c, std::numbers::pi, x.x - box.x0);
        if (s > 0) consider((box.y1 - x.y) / s, 0.5 * std::numbers::pi, box.y1 - x.y);
        if (s < 0) consider((box.y0 - x.y) / s, -0.5 * std::numbers::pi, x.y - box.y0);
        return wall;
    };

    auto inner = [&](const Point& x) {
        const double ux = u(x);
        double acc = 0.0;
        auto th = kinks(x);
        for (std::size_t seg = 0; seg + 1 < th.size(); ++seg) {
            const double t0 = th[seg], len = th[seg + 1] - th[seg];
            if (len <= 1e-15) continue;
            auto panels = static_cast<std::size_t>(std::ceil(len / dth - 1e-9));
            auto wall = clipping_wall(x, t0 + 0.5 * len);
            if (wall && wall->second > 0.0) {
                // Clipped by one wall: the radius is d / cos(phi), phi measured from the wall
                // normal. With tan(phi) = sinh(v) it becomes d cosh(v) and dphi = sech(v) dv.
                double phi0 = std::remainder(t0 - wall->first, two_pi);
                double phi1 = phi0 + len;
                double v0 = std::asinh(std::tan(phi0)), v1 = std::asinh(std::tan(phi1));
                panels = std::max(panels, static_cast<std::size_t>(std::ceil((v1 - v0) / 0.5 - 1e-9)));
                const double width = (v1 - v0) / static_cast<double>(panels);
                for (std::size_t a = 0; a < panels; ++a) {
                    for (std::size_t ka = 0; ka < q; ++ka) {
                        double v = v0 + (static_cast<double>(a) + gx[ka]) * width;
                        double ang = wall->first + std::atan(std::sinh(v));
                        acc += gw[ka] * width * ray(x, ux, ang) / std::cosh(v);
                    }
                }
                continue;
            }
            const double width = len / static_cast<double>(panels);
            for (std::size_t a = 0; a < panels; ++a) {
                for (std::size_t ka = 0; ka < q; ++ka) {
                    double ang = t0 + (static_cast<double>(a) + gx[ka]) * width;
                    acc += gw[ka] * width * ray(x, ux, ang);
                }
            }
        }
        return acc * rho(x);
    };

    std::vector<double> partial(px * py, 0.0);
    parallel_for(px * py, [&](std::size_t b, std::size_t e) {
        for (std::size_t cell = b; cell < e; ++cell) {
            std::size_t i = cell % px, j = cell / px;
            const double wx = ex[i + 1] - ex[i], wy = ey[j + 1] - ey[j];
            double s = 0.0;
            for (std::size_t a = 0; a < q; ++a) {
                for (std::size_t c = 0; c < q; ++c) {
                    Point x{ex[i] + gx[a] * wx, ey[j] + gx[c] * wy};
                    s += gw[a] * gw[c] * inner(x);
                }
            }
            partial[cell] = s * wx * wy;
        }
    });
    double total = 0.0;
    for (double v : partial) total += v;
    return scale * total;
}

}  // namespace pdirichlet::continuum
