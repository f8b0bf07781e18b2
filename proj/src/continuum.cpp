#include "pdirichlet/continuum.hpp"

#include "pdirichlet/error.hpp"
#include "pdirichlet/parallel.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

namespace pdirichlet::continuum {

namespace {

constexpr double kSnap = 1e-12;
constexpr std::size_t kMaxPatches = 1024;

std::vector<double> distinct_sorted(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    for (double x : v) {
        if (out.empty() || x - out.back() > kSnap) out.push_back(x);
    }
    return out;
}

double snap(const std::vector<double>& breaks, double x) {
    auto it = std::lower_bound(breaks.begin(), breaks.end(), x - kSnap);
    return *it;
}

std::size_t interval_index(const std::vector<double>& breaks, double x) {
    auto it = std::upper_bound(breaks.begin(), breaks.end(), x);
    std::ptrdiff_t k = it - breaks.begin() - 1;
    k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(breaks.size()) - 2);
    return static_cast<std::size_t>(k);
}

}  // namespace

std::size_t PatchedDomain::locate(const Point& p) const {
    std::size_t ix = interval_index(breaks_x_, p.x);
    std::size_t iy = interval_index(breaks_y_, p.y);
    return iy * (breaks_x_.size() - 1) + ix;
}

PatchedDomain build_patches(const ConstraintSet& constraints, std::size_t points_per_patch) {
    constraints.validate();
    if (points_per_patch < 3) fail(ErrorCode::InvalidArgument, "need at least 3 collocation points per patch side");
    for (const auto& p : constraints.points) {
        if (!kUnitSquare.contains(p, kSnap)) {
            fail(ErrorCode::UnsupportedLayout, "constraint outside the unit square");
        }
    }

    PatchedDomain dom;
    std::vector<double> xs, ys;
    for (const auto& p : constraints.points) {
        xs.push_back(p.x);
        ys.push_back(p.y);
    }
    dom.breaks_x_ = distinct_sorted(std::move(xs));
    dom.breaks_y_ = distinct_sorted(std::move(ys));
    for (auto* b : {&dom.breaks_x_, &dom.breaks_y_}) {
        if (b->size() < 2 || std::abs(b->front()) > kSnap || std::abs(b->back() - 1.0) > kSnap) {
            fail(ErrorCode::UnsupportedLayout,
                 "constraint coordinates must include 0 and 1 in both directions to form a patch lattice");
        }
        b->front() = 0.0;
        b->back() = 1.0;
    }
    const std::size_t npx = dom.breaks_x_.size() - 1;
    const std::size_t npy = dom.breaks_y_.size() - 1;
    if (npx * npy > kMaxPatches) {
        std::ostringstream msg;
        msg << "layout needs " << npx * npy << " patches (limit " << kMaxPatches << ")";
        fail(ErrorCode::UnsupportedLayout, msg.str());
    }

    const std::size_t n = points_per_patch;
    const int order = static_cast<int>(n) - 1;
    dom.points_ = n;
    std::size_t offset = 0;
    for (std::size_t jy = 0; jy < npy; ++jy) {
        for (std::size_t ix = 0; ix < npx; ++ix) {
            auto gx = spectral::chebyshev_nodes(order, {dom.breaks_x_[ix], dom.breaks_x_[ix + 1]});
            auto gy = spectral::chebyshev_nodes(order, {dom.breaks_y_[jy], dom.breaks_y_[jy + 1]});
            auto dx = spectral::chebyshev_diff_matrix(gx);
            auto dy = spectral::chebyshev_diff_matrix(gy);
            auto quad = spectral::quadrature_2d(gx, gy);
            spectral::TensorGrid grid(gx, gy);
            dom.patches_.push_back({grid.box(), std::move(grid), std::move(dx), std::move(dy), quad.weights, offset});
            offset += n * n;
        }
    }

    std::map<std::pair<double, double>, std::size_t> group_of;
    dom.nodes_.reserve(offset);
    for (std::size_t pi = 0; pi < dom.patches_.size(); ++pi) {
        const Patch& patch = dom.patches_[pi];
        const Box& b = patch.box;
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) {
                Point pos = patch.grid.point(patch.grid.index(i, j));
                Vec2 outer{}, iface{};
                auto side = [&](bool on, double coord, double boundary, Vec2 normal) {
                    if (!on) return;
                    Vec2& acc = coord == boundary ? outer : iface;
                    acc.x += normal.x;
                    acc.y += normal.y;
                };
                side(i == 0, b.x1, 1.0, {1.0, 0.0});
                side(i == n - 1, b.x0, 0.0, {-1.0, 0.0});
                side(j == 0, b.y1, 1.0, {0.0, 1.0});
                side(j == n - 1, b.y0, 0.0, {0.0, -1.0});
                double on = std::hypot(outer.x, outer.y);
                if (on > 0) outer = {outer.x / on, outer.y / on};

                auto key = std::make_pair(pos.x, pos.y);
                auto [it, fresh] = group_of.emplace(key, dom.groups_.size());
                if (fresh) dom.groups_.push_back({pos, {}, {}, false, std::nullopt});
                NodeGroup& g = dom.groups_[it->second];
                g.copies.push_back(dom.nodes_.size());
                g.interface_normals.push_back(iface);
                g.on_outer = g.on_outer || on > 0;
                dom.nodes_.push_back({pi, i, j, pos, it->second, outer});
            }
        }
    }

    auto label_group = [&](const Point& at, double label) {
        auto it = group_of.find({at.x, at.y});
        if (it == group_of.end()) fail(ErrorCode::UnsupportedLayout, "constraint does not fall on a collocation node");
        auto& g = dom.groups_[it->second];
        if (g.label && *g.label != label) {
            fail(ErrorCode::UnsupportedLayout, "two constraints with different labels share a collocation node");
        }
        g.label = label;
    };

    for (std::size_t c = 0; c < constraints.size(); ++c) {
        Point p{snap(dom.breaks_x_, constraints.points[c].x), snap(dom.breaks_y_, constraints.points[c].y)};
        double label = constraints.labels[c];
        PlacedConstraint placed{constraints.points[c], label, {}, 0.0};
        bool interior_corner = p.x > 0.0 && p.x < 1.0 && p.y > 0.0 && p.y < 1.0;
        if (!interior_corner) {
            placed.placed.push_back(p);
        } else {
            auto ix = static_cast<std::size_t>(std::find(dom.breaks_x_.begin(), dom.breaks_x_.end(), p.x) -
                                               dom.breaks_x_.begin());
            auto iy = static_cast<std::size_t>(std::find(dom.breaks_y_.begin(), dom.breaks_y_.end(), p.y) -
                                               dom.breaks_y_.begin());
            // Second node in from the shared corner on each incident interface.
            const auto& right = dom.patches_[iy * npx + ix].grid.grid_x();
            const auto& left = dom.patches_[iy * npx + ix - 1].grid.grid_x();
            const auto& up = dom.patches_[iy * npx + ix].grid.grid_y();
            const auto& down = dom.patches_[(iy - 1) * npx + ix].grid.grid_y();
            placed.placed = {{right.node(n - 2), p.y}, {left.node(1), p.y}, {p.x, up.node(n - 2)}, {p.x, down.node(1)}};
            for (const auto& q : placed.placed) placed.offset = std::max(placed.offset, distance(p, q));
        }
        for (const auto& q : placed.placed) label_group(q, label);
        dom.placed_.push_back(std::move(placed));
    }
    return dom;
}

namespace {

// -W^{-1} D^T W: minus the adjoint of D in the inner product weighted by w.
Eigen::MatrixXd quadrature_adjoint(const Eigen::MatrixXd& d, const Eigen::VectorXd& w) {
    return -(w.cwiseInverse().asDiagonal() * d.transpose() * w.asDiagonal());
}

}  // namespace

struct ContinuumProblem::Cache {
    Eigen::VectorXd rho;
    std::vector<NodeKind> kinds;
    Eigen::VectorXd targets;
    std::vector<Eigen::MatrixXd> div_x, div_y;
    Eigen::VectorXd div_weight;
    std::vector<Vec2> normal;
};

const ContinuumProblem::Cache& ContinuumProblem::cache() const {
    if (cache_) return *cache_;
    if (!domain || !density) fail(ErrorCode::InvalidArgument, "continuum problem needs a domain and a density");
    if (!(p > 1.0) || !std::isfinite(p)) fail(ErrorCode::InvalidArgument, "p must be finite and > 1");
    if (!(beta >= 0.0)) fail(ErrorCode::InvalidArgument, "beta must be non-negative");
    auto c = std::make_shared<Cache>();
    const auto& nodes = domain->nodes();
    const std::size_t m = nodes.size();
    const std::size_t n = domain->points_per_patch();
    const bool weak = scheme == Scheme::Weak;
    Points pts(m);
    for (std::size_t k = 0; k < m; ++k) pts[k] = nodes[k].position;
    c->rho = density->values(pts);

    std::vector<Eigen::VectorXd> wx, wy;
    for (const auto& patch : domain->patches()) {
        wx.push_back(spectral::clenshaw_curtis_weights(patch.grid.grid_x()));
        wy.push_back(spectral::clenshaw_curtis_weights(patch.grid.grid_y()));
        c->div_x.push_back(weak ? quadrature_adjoint(patch.dx.entries, wx.back()) : patch.dx.entries);
        c->div_y.push_back(weak ? quadrature_adjoint(patch.dy.entries, wy.back()) : patch.dy.entries);
    }
    // Weak rows at patch sides are scaled by the geometric mean of the end weights of the axes
    // along which the node is a side node; the lumped mass is then w_k / end_weight.
    auto end_weight = [&](std::size_t k) {
        const auto& nd = nodes[k];
        double prod = 1.0;
        int count = 0;
        if (nd.i == 0 || nd.i == n - 1) {
            prod *= wx[nd.patch][static_cast<Eigen::Index>(nd.i)];
            ++count;
        }
        if (nd.j == 0 || nd.j == n - 1) {
            prod *= wy[nd.patch][static_cast<Eigen::Index>(nd.j)];
            ++count;
        }
        return count == 0 ? 1.0 : std::pow(prod, 1.0 / count);
    };
    auto weight = [&](std::size_t k) {
        const auto& nd = nodes[k];
        return wx[nd.patch][static_cast<Eigen::Index>(nd.i)] * wy[nd.patch][static_cast<Eigen::Index>(nd.j)];
    };

    c->kinds.assign(m, NodeKind::Interior);
    c->targets = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    c->div_weight = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    c->normal.assign(m, Vec2{});
    for (const auto& g : domain->groups()) {
        std::optional<double> held = g.label;
        if (!held && boundary_data && g.on_outer) held = boundary_data(g.position);
        double mass = 0.0;
        for (std::size_t k : g.copies) mass += weight(k) / end_weight(k);
        for (std::size_t c_i = 0; c_i < g.copies.size(); ++c_i) {
            std::size_t k = g.copies[c_i];
            auto kk = static_cast<Eigen::Index>(k);
            if (held) {
                c->kinds[k] = NodeKind::Constraint;
                c->targets[kk] = *held;
            } else if (g.copies.size() == 1) {
                c->kinds[k] = g.on_outer ? NodeKind::Outer : NodeKind::Interior;
                if (!g.on_outer) {
                    c->div_weight[kk] = 1.0;
                } else if (weak) {
                    c->div_weight[kk] = end_weight(k);
                } else {
                    c->div_weight[kk] = beta;
                    c->normal[k] = {-nodes[k].outer_normal.x, -nodes[k].outer_normal.y};
                }
            } else {
                c->kinds[k] = c_i == 0 ? NodeKind::Flux : NodeKind::Match;
                if (weak) {
                    c->div_weight[kk] = -weight(k) / mass;
                } else {
                    c->normal[k] = g.interface_normals[c_i];
                }
            }
        }
    }
    cache_ = c;
    return *cache_;
}

const Eigen::VectorXd& ContinuumProblem::rho() const { return cache().rho; }
NodeKind ContinuumProblem::kind(std::size_t node) const { return cache().kinds.at(node); }
const Eigen::VectorXd& ContinuumProblem::targets() const { return cache().targets; }

const Eigen::MatrixXd& ContinuumProblem::divergence_factor(std::size_t patch, spectral::Axis axis) const {
    const auto& c = cache();
    return axis == spectral::Axis::X ? c.div_x.at(patch) : c.div_y.at(patch);
}

double ContinuumProblem::div_weight(std::size_t node) const {
    return cache().div_weight[static_cast<Eigen::Index>(node)];
}

Vec2 ContinuumProblem::row_normal(std::size_t node) const { return cache().normal.at(node); }

ContinuumProblem make_problem(const ConstraintSet& constraints, std::size_t points_per_patch,
                              const density::DensityField& density, double p, double beta, double sigma) {
    ContinuumProblem prob;
    prob.domain = std::make_shared<const PatchedDomain>(build_patches(constraints, points_per_patch));
    prob.density = std::make_shared<const density::DensityField>(density);
    prob.p = p;
    prob.beta = beta;
    prob.sigma = sigma;
    return prob;
}

namespace {

using Map = Eigen::Map<const Eigen::MatrixXd>;
using spectral::Axis;

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

bool flow_row(NodeKind kind) { return kind == NodeKind::Interior || kind == NodeKind::Outer; }

struct Gradients {
    Eigen::VectorXd gx, gy;
};

Gradients gradients(const Eigen::VectorXd& u, const ContinuumProblem& prob) {
    const auto& dom = *prob.domain;
    const auto nn = static_cast<Eigen::Index>(dom.points_per_patch());
    Gradients g{Eigen::VectorXd(u.size()), Eigen::VectorXd(u.size())};
    for (const auto& patch : dom.patches()) {
        auto off = static_cast<Eigen::Index>(patch.offset);
        Map U(u.data() + off, nn, nn);
        Eigen::Map<Eigen::MatrixXd>(g.gx.data() + off, nn, nn).noalias() = patch.dx.entries * U;
        Eigen::Map<Eigen::MatrixXd>(g.gy.data() + off, nn, nn).noalias() = U * patch.dy.entries.transpose();
    }
    return g;
}

// a = (|grad u|^2 + delta^2)^{(p-2)/2} rho^2 at every node.
Eigen::VectorXd coefficient(const Gradients& g, const ContinuumProblem& prob) {
    const auto& rho = prob.rho();
    const double e = 0.5 * (prob.p - 2.0);
    Eigen::VectorXd a(g.gx.size());
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        double s = g.gx[k] * g.gx[k] + g.gy[k] * g.gy[k] + prob.delta * prob.delta;
        a[k] = (e == 0.0 ? 1.0 : std::pow(s, e)) * rho[k] * rho[k];
    }
    return a;
}

// Linearisation of the flux a grad u about the current state: the flux of an increment v is
// K grad v with K = a I + (p-2) a grad u grad u^T / (|grad u|^2 + delta^2).
struct Frozen {
    Eigen::VectorXd kxx, kxy, kyy;
};

Frozen freeze(const Gradients& g, const Eigen::VectorXd& a, const ContinuumProblem& prob) {
    Frozen fz{a, Eigen::VectorXd::Zero(a.size()), a};
    if (prob.p == 2.0) return fz;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        double gx = g.gx[k], gy = g.gy[k];
        double b = (prob.p - 2.0) * a[k] / (gx * gx + gy * gy + prob.delta * prob.delta);
        fz.kxx[k] += b * gx * gx;
        fz.kxy[k] = b * gx * gy;
        fz.kyy[k] += b * gy * gy;
    }
    return fz;
}

// Per patch: flux components and divergence of a field under a (possibly anisotropic) tensor.
struct PatchFlux {
    Eigen::MatrixXd qx, qy, div;
};

std::vector<PatchFlux> all_flux(const ContinuumProblem& prob, const Eigen::VectorXd& v, const Eigen::VectorXd& kxx,
                                const Eigen::VectorXd* kxy, const Eigen::VectorXd& kyy) {
    const auto& dom = *prob.domain;
    const auto nn = static_cast<Eigen::Index>(dom.points_per_patch());
    std::vector<PatchFlux> out(dom.patches().size());
    parallel_for(out.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t q = b; q < e; ++q) {
            const auto& patch = dom.patches()[q];
            const auto off = static_cast<Eigen::Index>(patch.offset);
            auto& f = out[q];
            Map U(v.data() + off, nn, nn);
            Eigen::MatrixXd gx = patch.dx.entries * U;
            Eigen::MatrixXd gy = U * patch.dy.entries.transpose();
            f.qx = Map(kxx.data() + off, nn, nn).cwiseProduct(gx);
            f.qy = Map(kyy.data() + off, nn, nn).cwiseProduct(gy);
            if (kxy) {
                f.qx += Map(kxy->data() + off, nn, nn).cwiseProduct(gy);
                f.qy += Map(kxy->data() + off, nn, nn).cwiseProduct(gx);
            }
            f.div.noalias() = prob.divergence_factor(q, Axis::X) * f.qx;
            f.div.noalias() += f.qy * prob.divergence_factor(q, Axis::Y).transpose();
        }
    });
    return out;
}

Eigen::Index local_index(const NodeInfo& nd, std::size_t n) { return static_cast<Eigen::Index>(nd.j * n + nd.i); }

// div_weight * div q + normal . q at node k.
double row_value(const ContinuumProblem& prob, const std::vector<PatchFlux>& flux, std::size_t k) {
    const auto& nd = prob.domain->nodes()[k];
    const auto& f = flux[nd.patch];
    auto loc = local_index(nd, prob.domain->points_per_patch());
    Vec2 nv = prob.row_normal(k);
    return prob.div_weight(k) * f.div(loc) + nv.x * f.qx(loc) + nv.y * f.qy(loc);
}

double interface_value(const ContinuumProblem& prob, const std::vector<PatchFlux>& flux, std::size_t k) {
    double s = 0.0;
    for (std::size_t c : prob.domain->groups()[prob.domain->nodes()[k].group].copies) s += row_value(prob, flux, c);
    return s;
}

// Node-wise residual of the nonlinear problem: rhs at flow nodes, interface balance at Flux
// nodes, value mismatch at Match nodes, held-value error at Constraint nodes.
Eigen::VectorXd nonlinear_residual(const ContinuumProblem& prob, const Eigen::VectorXd& u, const Eigen::VectorXd& a) {
    const auto& dom = *prob.domain;
    auto flux = all_flux(prob, u, a, nullptr, a);
    Eigen::VectorXd r(u.size());
    for (std::size_t k = 0; k < dom.size(); ++k) {
        auto kk = static_cast<Eigen::Index>(k);
        switch (prob.kind(k)) {
        case NodeKind::Interior:
        case NodeKind::Outer: r[kk] = row_value(prob, flux, k); break;
        case NodeKind::Constraint: r[kk] = prob.targets()[kk] - u[kk]; break;
        case NodeKind::Match:
            r[kk] = u[static_cast<Eigen::Index>(dom.groups()[dom.nodes()[k].group].copies[0])] - u[kk];
            break;
        case NodeKind::Flux: r[kk] = -interface_value(prob, flux, k); break;
        }
    }
    return r;
}

// Linearised step operator applied to an increment v.
Eigen::VectorXd apply_system(const ContinuumProblem& prob, const Frozen& fz, double tau, const Eigen::VectorXd& v) {
    const auto& dom = *prob.domain;
    auto flux = all_flux(prob, v, fz.kxx, prob.p == 2.0 ? nullptr : &fz.kxy, fz.kyy);
    Eigen::VectorXd out(v.size());
    for (std::size_t k = 0; k < dom.size(); ++k) {
        auto kk = static_cast<Eigen::Index>(k);
        switch (prob.kind(k)) {
        case NodeKind::Interior:
        case NodeKind::Outer: out[kk] = v[kk] - tau * row_value(prob, flux, k); break;
        case NodeKind::Constraint: out[kk] = v[kk]; break;
        case NodeKind::Match:
            out[kk] = v[kk] - v[static_cast<Eigen::Index>(dom.groups()[dom.nodes()[k].group].copies[0])];
            break;
        case NodeKind::Flux: out[kk] = interface_value(prob, flux, k); break;
        }
    }
    return out;
}

// Right-hand side for the increment: tau * rhs on flow rows, the nonlinear residual on the
// algebraic rows.
Eigen::VectorXd step_rhs(const ContinuumProblem& prob, const Eigen::VectorXd& residual, double tau) {
    Eigen::VectorXd b = residual;
    for (Eigen::Index k = 0; k < b.size(); ++k) {
        if (flow_row(prob.kind(static_cast<std::size_t>(k)))) b[k] *= tau;
    }
    return b;
}

// e diag(k) d: the term d/dx(k d/dx) along one grid line.
Eigen::MatrixXd line_second(const Eigen::MatrixXd& e, const Eigen::VectorXd& k, const Eigen::MatrixXd& d) {
    return e * k.asDiagonal() * d;
}

// Three-point first derivative on a nonuniform line: centred inside, one-sided at the ends.
Eigen::MatrixXd three_point_d1(const std::vector<double>& x) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    auto lagrange = [&](Eigen::Index at, Eigen::Index s0) {
        // derivative at x[at] of the quadratic through s0, s0+1, s0+2
        for (Eigen::Index m = 0; m < 3; ++m) {
            Eigen::Index im = s0 + m;
            double num = 0.0, den = 1.0;
            for (Eigen::Index l = 0; l < 3; ++l) {
                if (l == m) continue;
                den *= x[im] - x[s0 + l];
                double prod = 1.0;
                for (Eigen::Index q = 0; q < 3; ++q) {
                    if (q == m || q == l) continue;
                    prod *= x[at] - x[s0 + q];
                }
                num += prod;
            }
            d(at, im) = num / den;
        }
    };
    for (Eigen::Index i = 0; i < n; ++i) lagrange(i, std::clamp<Eigen::Index>(i - 1, 0, n - 3));
    return d;
}

// Conservative three-point stencil inside the line, e diag(k) d at the ends.
Eigen::MatrixXd fd_second(const std::vector<double>& c, const Eigen::MatrixXd& e, const Eigen::MatrixXd& d,
                          const Eigen::VectorXd& k) {
    const auto n = static_cast<Eigen::Index>(c.size());
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        double hm = c[i] - c[i - 1], hp = c[i + 1] - c[i], hbar = 0.5 * (c[i + 1] - c[i - 1]);
        double km = 0.5 * (k[i] + k[i - 1]), kp = 0.5 * (k[i] + k[i + 1]);
        l(i, i + 1) = kp / hp / hbar;
        l(i, i - 1) = km / hm / hbar;
        l(i, i) = -(kp / hp + km / hm) / hbar;
    }
    for (Eigen::Index i : {Eigen::Index{0}, n - 1}) l.row(i) = e.row(i) * k.asDiagonal() * d;
    return l;
}

enum class Assembly { Exact, LowOrder };

// Sparse matrix of the step operator. Exact: the spectral operator including the mixed
// derivative terms. LowOrder: three-point analog without mixed terms, used to precondition.
Eigen::SparseMatrix<double> assemble(const ContinuumProblem& prob, const Frozen& fz, double tau, Assembly mode) {
    const auto& dom = *prob.domain;
    const std::size_t n = dom.points_per_patch();
    const auto nn = static_cast<Eigen::Index>(n);
    const auto m = static_cast<Eigen::Index>(dom.size());
    const bool exact = mode == Assembly::Exact;
    const bool mixed = exact && prob.p != 2.0;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(m) * (exact ? 2 * n + 4 : 12));
    const auto& nodes = dom.nodes();

    struct Factors {
        Eigen::MatrixXd dx, dy, ex, ey;
    };
    std::vector<Factors> fac(dom.patches().size());
    for (std::size_t q = 0; q < fac.size(); ++q) {
        const auto& patch = dom.patches()[q];
        auto& f = fac[q];
        if (exact) {
            f.dx = patch.dx.entries;
            f.dy = patch.dy.entries;
            f.ex = prob.divergence_factor(q, Axis::X);
            f.ey = prob.divergence_factor(q, Axis::Y);
        } else {
            f.dx = three_point_d1(patch.grid.grid_x().nodes());
            f.dy = three_point_d1(patch.grid.grid_y().nodes());
            const bool weak = prob.scheme == Scheme::Weak;
            f.ex = weak ? quadrature_adjoint(f.dx, spectral::clenshaw_curtis_weights(patch.grid.grid_x())) : f.dx;
            f.ey = weak ? quadrature_adjoint(f.dy, spectral::clenshaw_curtis_weights(patch.grid.grid_y())) : f.dy;
        }
    }

    // d/dx(kxx d/dx) along grid line `line` (a column for X, a row for Y) of patch q.
    auto line_matrix = [&](std::size_t q, Axis axis, std::size_t line) -> Eigen::MatrixXd {
        const auto& patch = dom.patches()[q];
        const auto off = static_cast<Eigen::Index>(patch.offset);
        const auto l = static_cast<Eigen::Index>(line);
        const auto& f = fac[q];
        const bool along_x = axis == Axis::X;
        Map K((along_x ? fz.kxx : fz.kyy).data() + off, nn, nn);
        Eigen::VectorXd k = along_x ? Eigen::VectorXd(K.col(l)) : Eigen::VectorXd(K.row(l).transpose());
        const auto& e = along_x ? f.ex : f.ey;
        const auto& d = along_x ? f.dx : f.dy;
        if (exact) return line_second(e, k, d);
        return fd_second(along_x ? patch.grid.grid_x().nodes() : patch.grid.grid_y().nodes(), e, d, k);
    };

    auto add_line = [&](Eigen::Index row, std::size_t off, Axis axis, std::size_t i, std::size_t j,
                        const Eigen::RowVectorXd& coeffs, double scale) {
        for (Eigen::Index q = 0; q < nn; ++q) {
            double c = coeffs[q];
            if (c == 0.0) continue;
            std::size_t local = axis == Axis::X ? j * n + static_cast<std::size_t>(q) : static_cast<std::size_t>(q) * n + i;
            trips.emplace_back(row, static_cast<Eigen::Index>(off + local), scale * c);
        }
    };
    // scale * (cx d/dx + cy d/dy) at node (i, j) of patch q.
    auto add_gradient = [&](Eigen::Index row, std::size_t q, std::size_t i, std::size_t j, double cx, double cy,
                            double scale) {
        const auto off = dom.patches()[q].offset;
        if (cx != 0.0) add_line(row, off, Axis::X, i, j, fac[q].dx.row(static_cast<Eigen::Index>(i)), scale * cx);
        if (cy != 0.0) add_line(row, off, Axis::Y, i, j, fac[q].dy.row(static_cast<Eigen::Index>(j)), scale * cy);
    };
    // scale * div(K grad v) at node (i, j) of patch q, given the rows of the two line operators.
    auto add_div = [&](Eigen::Index row, std::size_t q, std::size_t i, std::size_t j, const Eigen::RowVectorXd& xrow,
                       const Eigen::RowVectorXd& yrow, double scale) {
        const auto off = dom.patches()[q].offset;
        add_line(row, off, Axis::X, i, j, xrow, scale);
        add_line(row, off, Axis::Y, i, j, yrow, scale);
        if (!mixed) return;
        // Ex(kxy Dy v) + Ey(kxy Dx v)
        const auto& f = fac[q];
        Map Kxy(fz.kxy.data() + off, nn, nn);
        const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
        for (Eigen::Index b = 0; b < nn; ++b) {
            for (Eigen::Index a = 0; a < nn; ++a) {
                double c = f.ex(ii, a) * Kxy(a, jj) * f.dy(jj, b) + f.ey(jj, b) * Kxy(ii, b) * f.dx(ii, a);
                if (c != 0.0) trips.emplace_back(row, static_cast<Eigen::Index>(off + b * nn + a), scale * c);
            }
        }
    };
    // Row terms of node k (see ContinuumProblem::div_weight) scaled by s.
    auto add_row_terms = [&](Eigen::Index row, std::size_t k, double s, const Eigen::RowVectorXd* xrow,
                             const Eigen::RowVectorXd* yrow) {
        const auto& nd = nodes[k];
        const auto kk = static_cast<Eigen::Index>(k);
        const double dw = prob.div_weight(k);
        if (dw != 0.0) {
            if (xrow) {
                add_div(row, nd.patch, nd.i, nd.j, *xrow, *yrow, s * dw);
            } else {
                Eigen::RowVectorXd xr = line_matrix(nd.patch, Axis::X, nd.j).row(static_cast<Eigen::Index>(nd.i));
                Eigen::RowVectorXd yr = line_matrix(nd.patch, Axis::Y, nd.i).row(static_cast<Eigen::Index>(nd.j));
                add_div(row, nd.patch, nd.i, nd.j, xr, yr, s * dw);
            }
        }
        const Vec2 nv = prob.row_normal(k);
        if (nv.x != 0.0 || nv.y != 0.0) {
            add_gradient(row, nd.patch, nd.i, nd.j, fz.kxx[kk] * nv.x + fz.kxy[kk] * nv.y,
                         fz.kxy[kk] * nv.x + fz.kyy[kk] * nv.y, s);
        }
    };

    for (std::size_t q = 0; q < dom.patches().size(); ++q) {
        const auto off = dom.patches()[q].offset;
        std::vector<Eigen::MatrixXd> lx(n), ly(n);
        for (std::size_t l = 0; l < n; ++l) {
            lx[l] = line_matrix(q, Axis::X, l);
            ly[l] = line_matrix(q, Axis::Y, l);
        }
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t k = off + j * n + i;
                const auto row = static_cast<Eigen::Index>(k);
                switch (prob.kind(k)) {
                case NodeKind::Interior:
                case NodeKind::Outer: {
                    trips.emplace_back(row, row, 1.0);
                    if (tau == 0.0) break;
                    Eigen::RowVectorXd xr = lx[j].row(static_cast<Eigen::Index>(i));
                    Eigen::RowVectorXd yr = ly[i].row(static_cast<Eigen::Index>(j));
                    add_row_terms(row, k, -tau, &xr, &yr);
                    break;
                }
                case NodeKind::Constraint: trips.emplace_back(row, row, 1.0); break;
                case NodeKind::Match:
                    trips.emplace_back(row, row, 1.0);
                    trips.emplace_back(row, static_cast<Eigen::Index>(dom.groups()[nodes[k].group].copies[0]), -1.0);
                    break;
                case NodeKind::Flux:
                    for (std::size_t c : dom.groups()[nodes[k].group].copies) {
                        if (nodes[c].patch == q) {
                            Eigen::RowVectorXd xr = lx[nodes[c].j].row(static_cast<Eigen::Index>(nodes[c].i));
                            Eigen::RowVectorXd yr = ly[nodes[c].i].row(static_cast<Eigen::Index>(nodes[c].j));
                            add_row_terms(row, c, 1.0, &xr, &yr);
                        } else {
                            add_row_terms(row, c, 1.0, nullptr, nullptr);
                        }
                    }
                    break;
                }
            }
        }
    }
    Eigen::SparseMatrix<double> mat(m, m);
    mat.setFromTriplets(trips.begin(), trips.end());
    mat.makeCompressed();
    return mat;
}

// Restarted GMRES, right preconditioned; stops on the unpreconditioned residual.
template <class Apply, class Precond>
std::size_t gmres(const Apply& apply, const Precond& precond, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                  double tol, double floor, std::size_t restart, std::size_t max_iter) {
    // Aim for tol relative to b; a restart cycle that stalls is accepted once below floor.
    const double target = tol * b.norm();
    double previous = std::numeric_limits<double>::infinity();
    const auto n = b.size();
    const auto m = static_cast<Eigen::Index>(restart);
    std::size_t total = 0;
    Eigen::MatrixXd V(n, m + 1);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
    Eigen::VectorXd cs(m), sn(m), g(m + 1);
    while (true) {
        Eigen::VectorXd r = b - apply(x);
        double beta = r.norm();
        if (beta <= target || (beta <= floor && beta > 0.5 * previous)) return total;
        if (total >= max_iter) break;
        previous = beta;
        V.col(0) = r / beta;
        g.setZero();
        g[0] = beta;
        H.setZero();
        Eigen::Index k = 0;
        for (; k < m && total < max_iter; ++k, ++total) {
            Eigen::VectorXd w = apply(precond(V.col(k)));
            for (Eigen::Index i = 0; i <= k; ++i) {
                H(i, k) = V.col(i).dot(w);
                w -= H(i, k) * V.col(i);
            }
            const double next = w.norm();
            H(k + 1, k) = next;
            if (next > 0) V.col(k + 1) = w / next;
            for (Eigen::Index i = 0; i < k; ++i) {
                double t = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
                H(i + 1, k) = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
                H(i, k) = t;
            }
            double rr = std::hypot(H(k, k), H(k + 1, k));
            cs[k] = rr > 0 ? H(k, k) / rr : 1.0;
            sn[k] = rr > 0 ? H(k + 1, k) / rr : 0.0;
            H(k, k) = rr;
            H(k + 1, k) = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            if (std::abs(g[k + 1]) <= 0.5 * target || next == 0.0) {
                ++k;
                ++total;
                break;
            }
        }
        Eigen::VectorXd y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
        x += precond(V.leftCols(k) * y);
    }
    Eigen::VectorXd r = b - apply(x);
    if (r.norm() <= std::max(target, floor)) return total;
    std::ostringstream msg;
    msg << "GMRES did not converge in " << max_iter << " iterations (residual " << r.norm() << ", target " << target
        << ")";
    fail(ErrorCode::AlgebraicSolve, msg.str());
}


// Row scaling bringing the tau-weighted flow rows and the interface rows to unit size, so the
// GMRES residual target is not swamped by rounding in the stiff rows.
Eigen::VectorXd row_scaling(const ContinuumProblem& prob, const Frozen& fz, double tau) {
    const auto& dom = *prob.domain;
    double dnorm = 0.0, enorm = 0.0;
    for (std::size_t q = 0; q < dom.patches().size(); ++q) {
        const auto& patch = dom.patches()[q];
        dnorm = std::max({dnorm, patch.dx.entries.cwiseAbs().rowwise().sum().maxCoeff(),
                          patch.dy.entries.cwiseAbs().rowwise().sum().maxCoeff()});
        enorm = std::max({enorm, prob.divergence_factor(q, Axis::X).cwiseAbs().rowwise().sum().maxCoeff(),
                          prob.divergence_factor(q, Axis::Y).cwiseAbs().rowwise().sum().maxCoeff()});
    }
    const double kmax = std::max({fz.kxx.cwiseAbs().maxCoeff(), fz.kyy.cwiseAbs().maxCoeff(), 1e-300});
    auto size = [&](std::size_t k) {
        Vec2 nv = prob.row_normal(k);
        return kmax * dnorm * (std::abs(prob.div_weight(k)) * enorm + std::abs(nv.x) + std::abs(nv.y));
    };
    Eigen::VectorXd s = Eigen::VectorXd::Ones(fz.kxx.size());
    for (std::size_t k = 0; k < dom.size(); ++k) {
        auto kk = static_cast<Eigen::Index>(k);
        auto kind = prob.kind(k);
        if (flow_row(kind)) {
            s[kk] = 1.0 / (1.0 + tau * size(k));
        } else if (kind == NodeKind::Flux) {
            double total = 0.0;
            for (std::size_t c : dom.groups()[dom.nodes()[k].group].copies) total += size(c);
            s[kk] = total > 0.0 ? 1.0 / total : 1.0;
        }
    }
    return s;
}

struct Linearisation {
    Eigen::VectorXd residual;
    Frozen frozen;
};

Linearisation linearise(const ContinuumProblem& prob, const Eigen::VectorXd& u) {
    Gradients g = gradients(u, prob);
    Eigen::VectorXd a = coefficient(g, prob);
    return {nonlinear_residual(prob, u, a), freeze(g, a, prob)};
}

// Increment solving (step operator) delta = step_rhs; tau = 0 leaves only the algebraic rows.
Eigen::VectorXd solve_increment(const ContinuumProblem& prob, const Linearisation& lin, double tau, double field_scale,
                                const StepOptions& options, StepReport& report) {
    const auto& dom = *prob.domain;
    Eigen::VectorXd b = step_rhs(prob, lin.residual, tau);
    bool direct = options.solver == LinearSolver::Direct ||
                  (options.solver == LinearSolver::Auto && dom.size() <= options.direct_limit);
    report.direct = direct;
    if (direct) {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(assemble(prob, lin.frozen, tau, Assembly::Exact));
        if (lu.info() != Eigen::Success) fail(ErrorCode::StepFailure, "semi-implicit system is singular");
        return lu.solve(b);
    }
    Eigen::VectorXd scale = row_scaling(prob, lin.frozen, tau);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> pre(assemble(prob, lin.frozen, tau, Assembly::LowOrder));
    if (pre.info() != Eigen::Success) fail(ErrorCode::StepFailure, "preconditioner factorisation failed");
    auto scaled = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return scale.cwiseProduct(apply_system(prob, lin.frozen, tau, v));
    };
    auto precond = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return pre.solve(v.cwiseQuotient(scale)); };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    const double floor = 1e-15 * std::sqrt(static_cast<double>(b.size())) * field_scale;
    report.linear_iterations += gmres(scaled, precond, scale.cwiseProduct(b), x, options.gmres_tol, floor,
                                      options.gmres_restart, options.gmres_max_iter);
    return x;
}

double algebraic_part(const ContinuumProblem& prob, const Eigen::VectorXd& residual) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < residual.size(); ++k) {
        if (!flow_row(prob.kind(static_cast<std::size_t>(k)))) worst = std::max(worst, std::abs(residual[k]));
    }
    return worst;
}

// Newton iterations on the algebraic rows only (flow rows held), to start from a state that
// satisfies the interface and constraint conditions.
Eigen::VectorXd make_consistent(const ContinuumProblem& prob, Eigen::VectorXd u, const StepOptions& options,
                                StepReport& report) {
    const double scale = std::max(1.0, max_abs(u));
    for (int it = 0; it < 20; ++it) {
        Linearisation lin = linearise(prob, u);
        Eigen::VectorXd delta = solve_increment(prob, lin, 0.0, scale, options, report);
        u += delta;
        if (max_abs(delta) <= 1e-13 * scale) break;
    }
    return u;
}

void check_size(const Eigen::VectorXd& u, const ContinuumProblem& prob) {
    if (static_cast<std::size_t>(u.size()) != prob.domain->size()) {
        fail(ErrorCode::Shape, "field size does not match the domain");
    }
}

}  // namespace

double local_energy(const Eigen::VectorXd& u, const ContinuumProblem& prob) {
    check_size(u, prob);
    const auto& rho = prob.rho();
    Gradients g = gradients(u, prob);
    double total = 0.0;
    for (const auto& patch : prob.domain->patches()) {
        auto off = static_cast<Eigen::Index>(patch.offset);
        for (Eigen::Index k = 0; k < patch.weights.size(); ++k) {
            double gx = g.gx[off + k], gy = g.gy[off + k];
            double r = rho[off + k];
            total += patch.weights[k] * std::pow(gx * gx + gy * gy, 0.5 * prob.p) * r * r;
        }
    }
    return prob.sigma * total;
}

Eigen::VectorXd gradient_flow_rhs(const FlowState& state, const ContinuumProblem& prob) {
    check_size(state.u, prob);
    Eigen::VectorXd r = nonlinear_residual(prob, state.u, coefficient(gradients(state.u, prob), prob));
    for (Eigen::Index k = 0; k < r.size(); ++k) {
        if (!flow_row(prob.kind(static_cast<std::size_t>(k)))) r[k] = 0.0;
    }
    return r;
}

InterfaceMismatch interface_mismatch(const Eigen::VectorXd& u, const ContinuumProblem& prob) {
    check_size(u, prob);
    Eigen::VectorXd r = nonlinear_residual(prob, u, coefficient(gradients(u, prob), prob));
    InterfaceMismatch out;
    for (Eigen::Index k = 0; k < r.size(); ++k) {
        auto kind = prob.kind(static_cast<std::size_t>(k));
        if (kind == NodeKind::Match) out.value = std::max(out.value, std::abs(r[k]));
        if (kind == NodeKind::Flux) out.flux = std::max(out.flux, std::abs(r[k]));
    }
    return out;
}

double default_timestep(const Eigen::VectorXd& u, const ContinuumProblem& prob) {
    check_size(u, prob);
    const auto& dom = *prob.domain;
    Gradients g = gradients(u, prob);
    Frozen fz = freeze(g, coefficient(g, prob), prob);
    const std::size_t n = dom.points_per_patch();
    const auto nn = static_cast<Eigen::Index>(n);
    double worst = 0.0;
    for (std::size_t q = 0; q < dom.patches().size(); ++q) {
        const auto& patch = dom.patches()[q];
        const auto off = static_cast<Eigen::Index>(patch.offset);
        const auto& ex = prob.divergence_factor(q, Axis::X);
        const auto& ey = prob.divergence_factor(q, Axis::Y);
        Map Kxx(fz.kxx.data() + off, nn, nn), Kxy(fz.kxy.data() + off, nn, nn), Kyy(fz.kyy.data() + off, nn, nn);
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(nn, nn);
        for (Eigen::Index l = 0; l < nn; ++l) {
            Eigen::VectorXd kx = Kxx.col(l), ky = Kyy.row(l).transpose();
            sums.col(l) += line_second(ex, kx, patch.dx.entries).cwiseAbs().rowwise().sum();
            sums.row(l) += line_second(ey, ky, patch.dy.entries).cwiseAbs().rowwise().sum().transpose();
        }
        Eigen::VectorXd dxs = patch.dx.entries.cwiseAbs().rowwise().sum();
        Eigen::VectorXd dys = patch.dy.entries.cwiseAbs().rowwise().sum();
        for (Eigen::Index j = 0; j < nn; ++j) {
            for (Eigen::Index i = 0; i < nn; ++i) {
                const auto k = patch.offset + static_cast<std::size_t>(j * nn + i);
                if (!flow_row(prob.kind(k))) continue;
                Vec2 nv = prob.row_normal(k);
                double kn = std::max(Kxx(i, j), Kyy(i, j)) + std::abs(Kxy(i, j));
                double row = std::abs(prob.div_weight(k)) * sums(i, j) +
                             kn * (std::abs(nv.x) * dxs[i] + std::abs(nv.y) * dys[j]);
                worst = std::max(worst, row);
            }
        }
    }
    if (!(worst > 0.0)) return 1.0;
    return 0.5 / worst;
}

FlowState semi_implicit_step(const FlowState& state, const ContinuumProblem& prob, double tau,
                             const StepOptions& options, StepReport* report) {
    check_size(state.u, prob);
    if (!(tau > 0.0) || !std::isfinite(tau)) fail(ErrorCode::InvalidArgument, "time step must be positive");
    StepReport local;
    Linearisation lin = linearise(prob, state.u);
    Eigen::VectorXd delta = solve_increment(prob, lin, tau, std::max(1.0, max_abs(state.u)), options, local);
    FlowState next{state.u + delta, state.time + tau, 0.0};
    // Residual of the linear system on the algebraic rows, interface rows relative to their size.
    Eigen::VectorXd lin_res = step_rhs(prob, lin.residual, tau) - apply_system(prob, lin.frozen, tau, delta);
    next.algebraic_residual = algebraic_part(prob, row_scaling(prob, lin.frozen, tau).cwiseProduct(lin_res));
    if (next.algebraic_residual > 1e-8 * std::max(1.0, max_abs(state.u))) {
        std::ostringstream msg;
        msg << "interface conditions not met after the step (residual " << next.algebraic_residual << ")";
        fail(ErrorCode::AlgebraicSolve, msg.str());
    }
    if (report) *report = local;
    return next;
}

ContinuumResult minimize_continuum(const ContinuumProblem& prob, const ContinuumOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    if (!(options.tol > 0.0)) fail(ErrorCode::InvalidArgument, "tolerance must be positive");
    if (!(options.tau_growth >= 1.0)) fail(ErrorCode::InvalidArgument, "tau growth must be >= 1");
    const auto m = static_cast<Eigen::Index>(prob.domain->size());

    FlowState state;
    if (options.initial) {
        if (options.initial->size() != m) fail(ErrorCode::Shape, "initial field size does not match the domain");
        state.u = *options.initial;
        for (Eigen::Index k = 0; k < m; ++k) {
            if (prob.kind(static_cast<std::size_t>(k)) == NodeKind::Constraint) state.u[k] = prob.targets()[k];
        }
    } else {
        state.u = initial_field(prob);
    }

    ContinuumResult out;
    {
        StepReport rep;
        state.u = make_consistent(prob, state.u, options.step, rep);
        out.linear_iterations += rep.linear_iterations;
    }
    double energy = local_energy(state.u, prob);
    out.result.energy_history.push_back(energy);
    double tau = options.tau ? *options.tau : default_timestep(state.u, prob);
    if (!(tau > 0.0)) fail(ErrorCode::InvalidArgument, "time step must be positive");
    const double tau_floor = 1e-14 * tau;
    double residual = max_abs(gradient_flow_rhs(state, prob));

    std::size_t attempts = 0;
    while (residual > options.tol && attempts < options.max_iter) {
        ++attempts;
        StepReport rep;
        FlowState trial = semi_implicit_step(state, prob, tau, options.step, &rep);
        out.linear_iterations += rep.linear_iterations;
        double e = local_energy(trial.u, prob);
        if (!std::isfinite(e) || energy_increased(energy, e)) {
            ++out.rejected_steps;
            tau *= 0.5;
            if (tau < tau_floor) fail(ErrorCode::StepSize, "time step collapsed while the energy kept increasing");
            continue;
        }
        state = std::move(trial);
        energy = e;
        out.result.energy_history.push_back(energy);
        ++out.result.iterations;
        tau = std::min(tau * options.tau_growth, options.tau_max);
        residual = max_abs(gradient_flow_rhs(state, prob));
    }

    out.result.values = state.u;
    out.result.energy = energy;
    out.result.residual = residual;
    out.result.converged = residual <= options.tol;
    out.mismatch = interface_mismatch(state.u, prob);
    out.state = std::move(state);
    out.result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace pdirichlet::continuum
