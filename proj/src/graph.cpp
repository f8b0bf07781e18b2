#include "pdirichlet/graph.hpp"

#include "pdirichlet/error.hpp"
#include "pdirichlet/parallel.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <boost/pending/disjoint_sets.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pdirichlet::graph {

WeightedGraph::WeightedGraph(Points points, double epsilon, const std::vector<Edge>& edges)
    : points_(std::move(points)), epsilon_(epsilon) {
    const std::size_t n = points_.size();
    offsets_.assign(n + 1, 0);
    for (const auto& e : edges) {
        if (e.i >= n || e.j >= n) fail(ErrorCode::InvalidArgument, "edge endpoint out of range");
        if (e.i == e.j) fail(ErrorCode::InvalidArgument, "self-loops are not allowed");
        ++offsets_[e.i + 1];
        ++offsets_[e.j + 1];
    }
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] += offsets_[i];
    neighbors_.resize(offsets_[n]);
    weights_.resize(offsets_[n]);
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (const auto& e : edges) {
        neighbors_[fill[e.i]] = e.j;
        weights_[fill[e.i]++] = e.w;
        neighbors_[fill[e.j]] = e.i;
        weights_[fill[e.j]++] = e.w;
    }
    // rows sorted by neighbour index
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) row.emplace_back(neighbors_[k], weights_[k]);
        std::sort(row.begin(), row.end());
        for (std::size_t k = 0; k < row.size(); ++k) {
            neighbors_[offsets_[i] + k] = row[k].first;
            weights_[offsets_[i] + k] = row[k].second;
        }
    }
}

std::vector<Edge> WeightedGraph::edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count());
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k)
            if (neighbors_[k] > i) out.push_back({i, neighbors_[k], weights_[k]});
    return out;
}

double WeightedGraph::weight(std::size_t i, std::size_t j) const {
    auto begin = neighbors_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]);
    auto end = neighbors_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]);
    auto it = std::lower_bound(begin, end, j);
    return (it != end && *it == j) ? weights_[static_cast<std::size_t>(it - neighbors_.begin())] : 0.0;
}

double WeightedGraph::weighted_degree(std::size_t i) const {
    double s = 0.0;
    for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) s += weights_[k];
    return s;
}

double WeightedGraph::max_weighted_degree() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m = std::max(m, weighted_degree(i));
    return m;
}

std::size_t WeightedGraph::min_degree() const {
    std::size_t m = size() ? offsets_[1] - offsets_[0] : 0;
    for (std::size_t i = 0; i < size(); ++i) m = std::min(m, offsets_[i + 1] - offsets_[i]);
    return m;
}

std::vector<std::size_t> WeightedGraph::component_labels(std::size_t* count) const {
    const std::size_t n = size();
    std::vector<std::size_t> rank(n), parent(n);
    boost::disjoint_sets<std::size_t*, std::size_t*> sets(rank.data(), parent.data());
    for (std::size_t i = 0; i < n; ++i) sets.make_set(i);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k)
            if (weights_[k] > 0.0 && neighbors_[k] > i) sets.union_set(i, neighbors_[k]);
    std::vector<std::size_t> label(n), root_label(n, n);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = sets.find_set(i);
        if (root_label[r] == n) root_label[r] = next++;
        label[i] = root_label[r];
    }
    if (count) *count = next;
    return label;
}

std::size_t WeightedGraph::component_count() const {
    std::size_t c = 0;
    component_labels(&c);
    return c;
}

namespace {

/// Uniform bucket grid over a point set.
struct Buckets {
    double x0, y0, cell;
    std::size_t nx, ny;
    std::vector<std::size_t> start, order;

    Buckets(const Points& pts, double cell_size) {
        double x1 = pts[0].x, y1 = pts[0].y;
        x0 = x1;
        y0 = y1;
        for (auto& p : pts) {
            x0 = std::min(x0, p.x);
            y0 = std::min(y0, p.y);
            x1 = std::max(x1, p.x);
            y1 = std::max(y1, p.y);
        }
        double extent = std::max({x1 - x0, y1 - y0, 1e-300});
        cell = std::max(cell_size, extent / 2048.0);
        nx = static_cast<std::size_t>((x1 - x0) / cell) + 1;
        ny = static_cast<std::size_t>((y1 - y0) / cell) + 1;
        std::vector<std::size_t> of(pts.size());
        start.assign(nx * ny + 1, 0);
        for (std::size_t s = 0; s < pts.size(); ++s) {
            of[s] = index(cx(pts[s].x), cy(pts[s].y));
            ++start[of[s] + 1];
        }
        for (std::size_t c = 0; c < nx * ny; ++c) start[c + 1] += start[c];
        order.resize(pts.size());
        std::vector<std::size_t> fill(start.begin(), start.end() - 1);
        for (std::size_t s = 0; s < pts.size(); ++s) order[fill[of[s]]++] = s;
    }
    std::size_t cx(double x) const { return std::min(nx - 1, static_cast<std::size_t>((x - x0) / cell)); }
    std::size_t cy(double y) const { return std::min(ny - 1, static_cast<std::size_t>((y - y0) / cell)); }
    std::size_t index(std::size_t i, std::size_t j) const { return j * nx + i; }
};

}  // namespace

WeightedGraph build_epsilon_graph(const Points& points, double epsilon, const density::WeightProfile& eta) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        std::ostringstream msg;
        msg << "epsilon must be positive, got " << epsilon;
        fail(ErrorCode::InvalidArgument, msg.str());
    }
    if (points.empty()) return WeightedGraph({}, epsilon, {});
    const double reach = (std::isfinite(eta.support) ? eta.support : 5.0) * epsilon;
    const double scale = 1.0 / (epsilon * epsilon);
    Buckets grid(points, reach);

    std::vector<std::vector<Edge>> rows(points.size());
    parallel_for(points.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Point& p = points[i];
            std::size_t ci = grid.cx(p.x), cj = grid.cy(p.y);
            for (std::size_t gj = cj > 0 ? cj - 1 : 0; gj <= std::min(grid.ny - 1, cj + 1); ++gj)
                for (std::size_t gi = ci > 0 ? ci - 1 : 0; gi <= std::min(grid.nx - 1, ci + 1); ++gi) {
                    std::size_t c = grid.index(gi, gj);
                    for (std::size_t k = grid.start[c]; k < grid.start[c + 1]; ++k) {
                        std::size_t j = grid.order[k];
                        if (j <= i) continue;
                        double r = distance(p, points[j]);
                        if (r > reach) continue;
                        double w = scale * eta(r / epsilon);
                        if (w > 0.0) rows[i].push_back({i, j, w});
                    }
                }
        }
    });
    std::vector<Edge> edges;
    for (auto& r : rows) edges.insert(edges.end(), r.begin(), r.end());
    WeightedGraph g(points, epsilon, edges);
    std::size_t comps = g.component_count();
    if (comps > 1) {
        std::ostringstream msg;
        msg << "disconnected graph: " << comps << " components at epsilon = " << epsilon;
        g.warning = msg.str();
    }
    return g;
}

WeightedGraph build_knn_graph(const Points& points, std::size_t k) {
    const std::size_t n = points.size();
    if (k < 1 || k >= n) {
        std::ostringstream msg;
        msg << "k must satisfy 1 <= k < n, got k = " << k << " with n = " << n;
        fail(ErrorCode::InvalidK, msg.str());
    }
    auto [xlo, xhi] = std::minmax_element(points.begin(), points.end(),
                                          [](const Point& a, const Point& b) { return a.x < b.x; });
    auto [ylo, yhi] = std::minmax_element(points.begin(), points.end(),
                                          [](const Point& a, const Point& b) { return a.y < b.y; });
    double side = std::max(xhi->x - xlo->x, yhi->y - ylo->y);
    // about k points per cell
    Buckets grid(points, side * std::sqrt(static_cast<double>(k) / static_cast<double>(n)));

    std::vector<std::vector<std::size_t>> lists(n);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        std::vector<std::pair<double, std::size_t>> cand;
        for (std::size_t i = b; i < e; ++i) {
            const Point& p = points[i];
            const auto ci = static_cast<long long>(grid.cx(p.x)), cj = static_cast<long long>(grid.cy(p.y));
            cand.clear();
            const long long rmax = static_cast<long long>(std::max(grid.nx, grid.ny));
            for (long long r = 0; r <= rmax; ++r) {
                for (long long gj = cj - r; gj <= cj + r; ++gj)
                    for (long long gi = ci - r; gi <= ci + r; ++gi) {
                        if (std::max(std::llabs(gi - ci), std::llabs(gj - cj)) != r) continue;
                        if (gi < 0 || gj < 0 || gi >= static_cast<long long>(grid.nx) ||
                            gj >= static_cast<long long>(grid.ny))
                            continue;
                        std::size_t c = grid.index(static_cast<std::size_t>(gi), static_cast<std::size_t>(gj));
                        for (std::size_t q = grid.start[c]; q < grid.start[c + 1]; ++q) {
                            std::size_t j = grid.order[q];
                            if (j == i) continue;
                            double dx = p.x - points[j].x, dy = p.y - points[j].y;
                            cand.emplace_back(dx * dx + dy * dy, j);
                        }
                    }
                if (cand.size() >= k) {
                    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
                    double reach = static_cast<double>(r) * grid.cell;
                    if (cand[k - 1].first <= reach * reach) break;
                }
            }
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
            for (std::size_t q = 0; q < k; ++q) lists[i].push_back(cand[q].second);
        }
    });

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j : lists[i]) pairs.emplace_back(std::min(i, j), std::max(i, j));
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    std::vector<Edge> edges;
    edges.reserve(pairs.size());
    for (auto [i, j] : pairs) edges.push_back({i, j, 1.0});
    WeightedGraph g(points, 1.0, edges);
    std::size_t comps = g.component_count();
    if (comps > 1) {
        std::ostringstream msg;
        msg << "disconnected graph: " << comps << " components with k = " << k;
        g.warning = msg.str();
    }
    return g;
}

double EpsilonBounds::midpoint() const { return std::sqrt(lower * upper); }

EpsilonBounds epsilon_bounds(std::size_t n, double p) {
    const double nn = static_cast<double>(n);
    return {std::pow(std::log(nn), 0.75) / std::sqrt(nn), std::pow(nn, -1.0 / p)};
}

void GraphConstraints::validate(std::size_t n) const {
    if (nodes.empty()) fail(ErrorCode::InvalidArgument, "at least one constrained node is required");
    if (nodes.size() != labels.size()) fail(ErrorCode::Shape, "one label per constrained node is required");
    std::vector<std::size_t> sorted = nodes;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        fail(ErrorCode::InvalidArgument, "a node is constrained more than once");
    if (sorted.back() >= n) fail(ErrorCode::InvalidArgument, "constrained node index out of range");
}

std::pair<Points, GraphConstraints> attach_constraints(const Points& samples, const ConstraintSet& constraints) {
    constraints.validate();
    Points all = samples;
    GraphConstraints gc;
    for (std::size_t k = 0; k < constraints.size(); ++k) {
        gc.nodes.push_back(all.size());
        gc.labels.push_back(constraints.labels[k]);
        all.push_back(constraints.points[k]);
    }
    return {std::move(all), std::move(gc)};
}

namespace {

inline double abs_pow(double d, double p) {
    double a = std::abs(d);
    if (p == 2.0) return a * a;
    if (p == 3.0) return a * a * a;
    if (p == 1.5) return a * std::sqrt(a);
    return std::pow(a, p);
}

// d |d|^{p-2}, zero at d = 0
inline double signed_pow(double d, double p) {
    if (p == 2.0) return d;
    if (p == 3.0) return d * std::abs(d);
    if (d == 0.0) return 0.0;
    if (p == 1.5) return d / std::sqrt(std::abs(d));
    return d * std::pow(std::abs(d), p - 2.0);
}

void check_field(const WeightedGraph& graph, const Eigen::VectorXd& f) {
    if (static_cast<std::size_t>(f.size()) != graph.size()) {
        std::ostringstream msg;
        msg << "labelling has " << f.size() << " entries for a graph of " << graph.size() << " nodes";
        fail(ErrorCode::Shape, msg.str());
    }
}

}  // namespace

double discrete_energy(const WeightedGraph& graph, const Eigen::VectorXd& f, double p, double epsilon) {
    check_field(graph, f);
    const std::size_t n = graph.size();
    if (n == 0) return 0.0;
    std::vector<double> row(n, 0.0);
    const auto& off = graph.offsets();
    const auto& nb = graph.neighbors();
    const auto& w = graph.weights();
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double s = 0.0;
            for (std::size_t k = off[i]; k < off[i + 1]; ++k) s += w[k] * abs_pow(f(i) - f(nb[k]), p);
            row[i] = s;
        }
    });
    double total = std::accumulate(row.begin(), row.end(), 0.0);
    const double nn = static_cast<double>(n);
    return total / (std::pow(epsilon, p) * nn * nn);
}

Eigen::VectorXd flow_gradient(const WeightedGraph& graph, const Eigen::VectorXd& f, double p, double epsilon) {
    check_field(graph, f);
    const std::size_t n = graph.size();
    Eigen::VectorXd g(static_cast<Eigen::Index>(n));
    const auto& off = graph.offsets();
    const auto& nb = graph.neighbors();
    const auto& w = graph.weights();
    const double nn = static_cast<double>(n);
    const double scale = p / (std::pow(epsilon, p) * nn * nn);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double s = 0.0;
            for (std::size_t k = off[i]; k < off[i + 1]; ++k) s += w[k] * signed_pow(f(i) - f(nb[k]), p);
            g(static_cast<Eigen::Index>(i)) = scale * s;
        }
    });
    return g;
}

double default_step(const WeightedGraph& graph, const GraphConstraints& constraints, double p, double epsilon) {
    double range = *std::max_element(constraints.labels.begin(), constraints.labels.end()) -
                   *std::min_element(constraints.labels.begin(), constraints.labels.end());
    if (!(range > 0.0)) range = 1.0;
    const double nn = static_cast<double>(graph.size());
    double degree = std::max(graph.max_weighted_degree(), 1e-300);
    return 0.9 * std::pow(epsilon, p) * nn * nn / (p * degree * std::pow(range, p - 2.0));
}

MinimizerResult minimize_discrete(const WeightedGraph& graph, const GraphConstraints& constraints,
                                  const DiscreteOptions& options) {
    auto start = std::chrono::steady_clock::now();
    const std::size_t n = graph.size();
    constraints.validate(n);
    const double p = options.p;
    if (!(p > 1.0)) {
        std::ostringstream msg;
        msg << "p must exceed 1, got " << p;
        fail(ErrorCode::InvalidArgument, msg.str());
    }
    const double eps = options.epsilon.value_or(graph.epsilon());
    double tau = options.tau.value_or(default_step(graph, constraints, p, eps));
    if (!(tau > 0.0)) fail(ErrorCode::InvalidArgument, "step size must be positive");
    const double tau_floor = tau * 1e-14;

    Eigen::VectorXd free_mask = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    for (std::size_t c : constraints.nodes) free_mask(static_cast<Eigen::Index>(c)) = 0.0;

    Eigen::VectorXd f;
    if (options.initial) {
        check_field(graph, *options.initial);
        f = *options.initial;
    } else {
        double mean = std::accumulate(constraints.labels.begin(), constraints.labels.end(), 0.0) /
                      static_cast<double>(constraints.labels.size());
        f = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), mean);
    }
    for (std::size_t k = 0; k < constraints.nodes.size(); ++k)
        f(static_cast<Eigen::Index>(constraints.nodes[k])) = constraints.labels[k];

    auto masked_gradient = [&](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(flow_gradient(graph, x, p, eps).cwiseProduct(free_mask));
    };

    MinimizerResult result;
    double energy = discrete_energy(graph, f, p, eps);
    result.energy_history.push_back(energy);
    Eigen::VectorXd previous = f;
    double momentum_step = 1.0;  // Nesterov counter k
    std::size_t iter = 0;
    double residual = 0.0;
    for (; iter < options.max_iter; ++iter) {
        Eigen::VectorXd g = masked_gradient(f);
        residual = g.cwiseAbs().maxCoeff();
        if (residual <= options.tol) {
            result.converged = true;
            break;
        }
        Eigen::VectorXd trial;
        bool momentum = options.accel == Acceleration::Nesterov && momentum_step > 1.0;
        if (momentum) {
            double beta = (momentum_step - 1.0) / (momentum_step + 2.0);
            Eigen::VectorXd y = f + beta * (f - previous);
            trial = y - tau * masked_gradient(y);
        } else {
            trial = f - tau * g;
        }
        double e_trial = discrete_energy(graph, trial, p, eps);
        if (!std::isfinite(e_trial) || energy_increased(energy, e_trial)) {
            if (momentum) {
                momentum_step = 1.0;
                previous = f;
            } else {
                tau *= 0.5;
                if (tau < tau_floor) {
                    std::ostringstream msg;
                    msg << "step size collapsed to " << tau << " without decreasing the energy";
                    fail(ErrorCode::StepSize, msg.str());
                }
            }
            continue;
        }
        previous = f;
        f = std::move(trial);
        energy = e_trial;
        momentum_step += 1.0;
        result.energy_history.push_back(energy);
    }
    if (!result.converged) residual = masked_gradient(f).cwiseAbs().maxCoeff();
    result.converged = result.converged || residual <= options.tol;
    result.values = std::move(f);
    result.energy = energy;
    result.iterations = iter;
    result.residual = residual;
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

Eigen::VectorXd solve_p2_direct(const WeightedGraph& graph, const GraphConstraints& constraints) {
    const std::size_t n = graph.size();
    constraints.validate(n);
    std::size_t comps = 0;
    auto label = graph.component_labels(&comps);
    std::vector<bool> anchored(comps, false);
    for (std::size_t c : constraints.nodes) anchored[label[c]] = true;
    for (std::size_t c = 0; c < comps; ++c)
        if (!anchored[c]) {
            std::ostringstream msg;
            msg << "Laplacian system is singular: " << std::count(anchored.begin(), anchored.end(), false)
                << " connected component(s) carry no constraint";
            fail(ErrorCode::Singular, msg.str());
        }

    const std::size_t none = n;
    std::vector<std::size_t> slot(n, 0);
    Eigen::VectorXd fixed = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    std::vector<bool> is_fixed(n, false);
    for (std::size_t k = 0; k < constraints.nodes.size(); ++k) {
        is_fixed[constraints.nodes[k]] = true;
        fixed(static_cast<Eigen::Index>(constraints.nodes[k])) = constraints.labels[k];
    }
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i) slot[i] = is_fixed[i] ? none : m++;

    std::vector<Eigen::Triplet<double>> entries;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    const auto& off = graph.offsets();
    const auto& nb = graph.neighbors();
    const auto& w = graph.weights();
    for (std::size_t i = 0; i < n; ++i) {
        if (is_fixed[i]) continue;
        auto r = static_cast<int>(slot[i]);
        double diag = 0.0;
        for (std::size_t k = off[i]; k < off[i + 1]; ++k) {
            diag += w[k];
            if (is_fixed[nb[k]])
                rhs(r) += w[k] * fixed(static_cast<Eigen::Index>(nb[k]));
            else
                entries.emplace_back(r, static_cast<int>(slot[nb[k]]), -w[k]);
        }
        entries.emplace_back(r, r, diag);
    }
    Eigen::SparseMatrix<double> lap(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    lap.setFromTriplets(entries.begin(), entries.end());
    Eigen::VectorXd out = fixed;
    if (m > 0) {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(lap);
        if (ldlt.info() != Eigen::Success) fail(ErrorCode::Singular, "Laplacian factorisation failed");
        Eigen::VectorXd sol = ldlt.solve(rhs);
        for (std::size_t i = 0; i < n; ++i)
            if (!is_fixed[i]) out(static_cast<Eigen::Index>(i)) = sol(static_cast<Eigen::Index>(slot[i]));
    }
    return out;
}

}  // namespace pdirichlet::graph
