#pragma once

// Local continuum p-Dirichlet problem on a tensor layout of rectangular patches, each carrying
// a Chebyshev collocation grid. Patches are coupled through value and flux matching.

#include "pdirichlet/density.hpp"
#include "pdirichlet/problem.hpp"
#include "pdirichlet/spectral.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace pdirichlet::continuum {

struct Patch {
    Box box;
    spectral::TensorGrid grid;
    spectral::DiffOperator dx;  // 1D factors
    spectral::DiffOperator dy;
    Eigen::VectorXd weights;    // tensor Clenshaw-Curtis weights
    std::size_t offset;         // first global index
};

enum class NodeKind { Interior, Outer, Constraint, Flux, Match };

struct NodeInfo {
    std::size_t patch;
    std::size_t i;
    std::size_t j;
    Point position;
    std::size_t group;
    /// Outward unit normal of the domain (outer-boundary nodes only).
    Vec2 outer_normal;
};

/// All copies of one physical point. Interface points have one copy per incident patch.
struct NodeGroup {
    Point position;
    std::vector<std::size_t> copies;
    /// Per copy: sum of the outward normals of that copy's patch sides that are interfaces.
    std::vector<Vec2> interface_normals;
    bool on_outer = false;
    std::optional<double> label;
};

/// A labelled point as given and the interface node(s) it was assigned to.
struct PlacedConstraint {
    Point original;
    double label;
    std::vector<Point> placed;
    /// Distance moved off a shared corner (0 when placed on the point itself).
    double offset = 0.0;
};

class PatchedDomain {
public:
    const std::vector<double>& breaks_x() const { return breaks_x_; }
    const std::vector<double>& breaks_y() const { return breaks_y_; }
    const std::vector<Patch>& patches() const { return patches_; }
    std::size_t points_per_patch() const { return points_; }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeInfo>& nodes() const { return nodes_; }
    const std::vector<NodeGroup>& groups() const { return groups_; }
    const std::vector<PlacedConstraint>& constraints() const { return placed_; }

    /// Patch index containing p (ties resolved toward the lower patch).
    std::size_t locate(const Point& p) const;

    friend PatchedDomain build_patches(const ConstraintSet& constraints, std::size_t points_per_patch);

private:
    std::vector<double> breaks_x_;
    std::vector<double> breaks_y_;
    std::vector<Patch> patches_;
    std::size_t points_ = 0;
    std::vector<NodeInfo> nodes_;
    std::vector<NodeGroup> groups_;
    std::vector<PlacedConstraint> placed_;
};

/// Patch breakpoints are the distinct constraint coordinates (which must include 0 and 1 in
/// each direction). Constraints at interior corners are replaced by copies at the nearest
/// interface node along each of the four incident interfaces.
PatchedDomain build_patches(const ConstraintSet& constraints, std::size_t points_per_patch);

/// Weak: flow rows are the exact gradient of the quadrature energy under a lumped metric, so
/// the divergence is taken with the quadrature adjoint -W^{-1} D^T W of the derivative matrix
/// and outer-boundary and interface fluxes enter naturally. Collocation: the divergence is D
/// applied to the flux, outer rows carry -a grad u . n + beta div(...), interface rows match
/// the normal fluxes pointwise.
enum class Scheme { Weak, Collocation };

struct ContinuumProblem {
    std::shared_ptr<const PatchedDomain> domain;
    std::shared_ptr<const density::DensityField> density;
    double p = 3.0;
    double beta = 0.01;
    double sigma = 1.0;
    /// When set, every outer-boundary node is held at this value instead of the flux condition.
    std::function<double(const Point&)> boundary_data;
    /// Regularisation in (|grad u|^2 + delta^2)^{(p-2)/2}.
    double delta = 1e-8;
    Scheme scheme = Scheme::Weak;

    /// rho at every node, computed on first use.
    const Eigen::VectorXd& rho() const;
    NodeKind kind(std::size_t node) const;
    /// Held value of a Constraint node (label or boundary data); zero elsewhere.
    const Eigen::VectorXd& targets() const;

    /// Divergence operator of a patch along one axis (n x n, acting like the derivative factor).
    const Eigen::MatrixXd& divergence_factor(std::size_t patch, spectral::Axis axis) const;
    /// A node's row is div_weight * div(q) + row_normal . q for the flux q; interface rows sum
    /// these over the copies of the point.
    double div_weight(std::size_t node) const;
    Vec2 row_normal(std::size_t node) const;

private:
    struct Cache;
    const Cache& cache() const;
    mutable std::shared_ptr<const Cache> cache_;
};

ContinuumProblem make_problem(const ConstraintSet& constraints, std::size_t points_per_patch,
                              const density::DensityField& density, double p, double beta,
                              double sigma = 1.0);

struct FlowState {
    Eigen::VectorXd u;
    double time = 0.0;
    double algebraic_residual = 0.0;
};

/// sigma * sum over patches of the Clenshaw-Curtis quadrature of |grad u|^p rho^2.
double local_energy(const Eigen::VectorXd& u, const ContinuumProblem& problem);

/// Interior: div(a grad u); outer boundary: -a grad u . n + beta div(a grad u) (Weak: beta is
/// the normal quadrature weight of the node and the divergence carries the boundary flux);
/// zero at constraint and interface nodes. a = (|grad u|^2 + delta^2)^{(p-2)/2} rho^2.
Eigen::VectorXd gradient_flow_rhs(const FlowState& state, const ContinuumProblem& problem);

struct InterfaceMismatch {
    double value = 0.0;  // max |u_c - u_0| over interface copies
    double flux = 0.0;   // max |interface row| (net normal flux) over interface points
};

InterfaceMismatch interface_mismatch(const Eigen::VectorXd& u, const ContinuumProblem& problem);

enum class LinearSolver { Auto, Direct, Iterative };

struct StepOptions {
    LinearSolver solver = LinearSolver::Auto;
    /// Largest system solved densely when solver is Auto.
    std::size_t direct_limit = 600;
    double gmres_tol = 1e-12;
    std::size_t gmres_restart = 60;
    std::size_t gmres_max_iter = 1500;
};

struct StepReport {
    std::size_t linear_iterations = 0;
    bool direct = false;
};

/// One semi-implicit Euler step: coefficients frozen at the current state, new values solved
/// together with the interface conditions.
FlowState semi_implicit_step(const FlowState& state, const ContinuumProblem& problem, double tau,
                             const StepOptions& options = {}, StepReport* report = nullptr);

/// 0.5 / (max row sum of |d rhs / du|) at the given field.
double default_timestep(const Eigen::VectorXd& u, const ContinuumProblem& problem);

/// Thin-plate spline through the constraint nodes, clamped to the label range; boundary data
/// when present.
Eigen::VectorXd initial_field(const ContinuumProblem& problem);

struct ContinuumOptions {
    double tol = 1e-5;
    std::size_t max_iter = 5000;
    std::optional<double> tau;
    double tau_growth = 2.0;
    double tau_max = 1e12;
    std::optional<Eigen::VectorXd> initial;
    StepOptions step;
};

struct ContinuumResult {
    MinimizerResult result;
    FlowState state;
    std::size_t rejected_steps = 0;
    std::size_t linear_iterations = 0;
    InterfaceMismatch mismatch;
};

/// Semi-implicit gradient flow until max |gradient_flow_rhs| <= tol. tau starts at the given
/// value (default_timestep otherwise), doubles after each accepted step up to tau_max and is
/// halved whenever a step would raise the energy.
ContinuumResult minimize_continuum(const ContinuumProblem& problem, const ContinuumOptions& options = {});

/// Values of the patch fields at xs x ys as an (nx x ny) matrix, by barycentric interpolation.
Eigen::MatrixXd evaluate_on_mesh(const PatchedDomain& domain, const Eigen::VectorXd& u, std::span<const double> xs,
                                 std::span<const double> ys);
Eigen::VectorXd evaluate_at(const PatchedDomain& domain, const Eigen::VectorXd& u, std::span<const Point> points);

struct NonlocalOptions {
    /// Region holding both integration variables.
    Box region = kUnitSquare;
    /// Gauss-Legendre points per panel (outer variable) and per radial/angular panel.
    std::size_t order = 8;
    /// Minimum angular panels over a full turn.
    std::size_t angular_panels = 4;
    std::size_t max_panels_per_side = 4096;
};

/// eps^-p int int eta_eps(|x - z|) |u(x) - u(z)|^p rho(x) rho(z) dx dz over region^2, with
/// eta_eps = eps^-2 eta(r / eps). Outer variable: composite Gauss-Legendre with panels of side
/// at most eps/2, edges at the kernel reach from each wall and graded toward those edges; inner
/// variable: polar coordinates about x, clipped to the region, with angular panels split where
/// the clipped radius has kinks and a tan(phi) = sinh(v) change of variable where a wall clips.
double nonlocal_energy(const std::function<double(const Point&)>& u, const std::function<double(const Point&)>& rho,
                       const density::WeightProfile& eta, double eps, double p, const NonlocalOptions& options = {});

}  // namespace pdirichlet::continuum
