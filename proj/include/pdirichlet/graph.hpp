#pragma once

// Geometric graphs over samples and the constrained discrete p-Dirichlet problem.

#include "pdirichlet/density.hpp"
#include "pdirichlet/problem.hpp"
#include "pdirichlet/types.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace pdirichlet::graph {

struct Edge {
    std::size_t i;
    std::size_t j;
    double w;
};

/// Symmetric weighted graph in compressed-row form; every undirected edge is stored in both
/// rows and there are no self-loops.
class WeightedGraph {
public:
    WeightedGraph(Points points, double epsilon, const std::vector<Edge>& edges);

    std::size_t size() const { return points_.size(); }
    const Points& points() const { return points_; }
    double epsilon() const { return epsilon_; }

    const std::vector<std::size_t>& offsets() const { return offsets_; }
    const std::vector<std::size_t>& neighbors() const { return neighbors_; }
    const std::vector<double>& weights() const { return weights_; }

    /// Undirected edges with i < j, in row order.
    std::vector<Edge> edges() const;
    std::size_t edge_count() const { return neighbors_.size() / 2; }
    double weight(std::size_t i, std::size_t j) const;
    double weighted_degree(std::size_t i) const;
    double max_weighted_degree() const;
    std::size_t min_degree() const;

    /// Connected components (edges of positive weight); labels are 0..count-1.
    std::vector<std::size_t> component_labels(std::size_t* count = nullptr) const;
    std::size_t component_count() const;

    /// Set when the graph has more than one component.
    std::optional<std::string> warning;

private:
    Points points_;
    double epsilon_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> neighbors_;
    std::vector<double> weights_;
};

/// W_ij = eps^-2 eta(|x_i - x_j| / eps). Infinite-support profiles are cut at 5 eps.
WeightedGraph build_epsilon_graph(const Points& points, double epsilon, const density::WeightProfile& eta);

/// Edge i~j when either point is among the other's k nearest neighbours; unit weights.
/// The stored length scale is 1.
WeightedGraph build_knn_graph(const Points& points, std::size_t k);

/// Bounds on eps for d = 2: lower (log n)^{3/4} / sqrt(n), upper n^{-1/p}.
struct EpsilonBounds {
    double lower;
    double upper;
    double midpoint() const;  // geometric mean
};

EpsilonBounds epsilon_bounds(std::size_t n, double p);

/// Labelled graph nodes.
struct GraphConstraints {
    std::vector<std::size_t> nodes;
    std::vector<double> labels;

    void validate(std::size_t n) const;
};

/// Appends the labelled points after the samples and returns the node list and constraints.
std::pair<Points, GraphConstraints> attach_constraints(const Points& samples, const ConstraintSet& constraints);

/// (1 / (eps^p n^2)) sum over ordered pairs W_ij |f_i - f_j|^p.
double discrete_energy(const WeightedGraph& graph, const Eigen::VectorXd& f, double p, double epsilon);

/// g_i = (p / (eps^p n^2)) sum_j W_ij (f_i - f_j) |f_i - f_j|^{p-2}; zero where f_i = f_j.
/// This is the descent direction of the gradient flow; it is half of dE/df_i because every
/// unordered pair appears twice in the energy.
Eigen::VectorXd flow_gradient(const WeightedGraph& graph, const Eigen::VectorXd& f, double p, double epsilon);

enum class Acceleration { Plain, Nesterov };

struct DiscreteOptions {
    double p = 3.0;
    /// Length scale in the energy; defaults to the graph's.
    std::optional<double> epsilon;
    /// Step size; defaults to 0.9 eps^p n^2 / (p * max degree * R^{p-2}), R the label range.
    std::optional<double> tau;
    double tol = 1e-5;
    std::size_t max_iter = 200000;
    Acceleration accel = Acceleration::Plain;
    /// Initial labelling; defaults to the label mean on free nodes.
    std::optional<Eigen::VectorXd> initial;
};

double default_step(const WeightedGraph& graph, const GraphConstraints& constraints, double p, double epsilon);

/// Gradient flow with constrained nodes held fixed. Terminates when the max norm of the flow
/// gradient over free nodes is at most tol. A rejected step (energy increase) halves tau;
/// Nesterov additionally restarts its momentum first. Throws step-size when tau collapses.
MinimizerResult minimize_discrete(const WeightedGraph& graph, const GraphConstraints& constraints,
                                  const DiscreteOptions& options);

/// Exact p = 2 minimiser from the Laplacian system with constrained rows eliminated.
Eigen::VectorXd solve_p2_direct(const WeightedGraph& graph, const GraphConstraints& constraints);

}  // namespace pdirichlet::graph
