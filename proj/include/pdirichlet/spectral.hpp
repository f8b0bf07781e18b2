#pragma once

// Chebyshev collocation on Gauss-Lobatto points: 1D grids, differentiation matrices,
// tensor-product operators on rectangles, Clenshaw-Curtis quadrature and barycentric
// interpolation.

#include "pdirichlet/types.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace pdirichlet::spectral {

struct Interval {
    double a = -1.0;
    double b = 1.0;
};

/// Gauss-Lobatto grid a + (b-a)(1+cos(i*pi/D))/2, i = 0..D. Nodes are stored in
/// descending order so node 0 is exactly b and node D is exactly a.
class ChebGrid1D {
public:
    ChebGrid1D(int order, Interval interval);

    int order() const { return order_; }
    std::size_t size() const { return nodes_.size(); }
    const Interval& interval() const { return interval_; }
    const std::vector<double>& nodes() const { return nodes_; }
    double node(std::size_t i) const { return nodes_[i]; }
    double length() const { return interval_.b - interval_.a; }

private:
    int order_;
    Interval interval_;
    std::vector<double> nodes_;
};

ChebGrid1D chebyshev_nodes(int order, Interval interval);

/// Dense square operator acting on nodal values.
struct DiffOperator {
    Eigen::MatrixXd entries;

    std::size_t size() const { return static_cast<std::size_t>(entries.rows()); }
    Eigen::VectorXd apply(const Eigen::VectorXd& values) const { return entries * values; }
};

/// Collocation derivative on the grid nodes. Off-diagonal entries use the closed form
/// for Gauss-Lobatto points; each diagonal entry is minus the sum of its row.
DiffOperator chebyshev_diff_matrix(const ChebGrid1D& grid);

/// Clenshaw-Curtis weights for the grid nodes; they sum to b - a.
Eigen::VectorXd clenshaw_curtis_weights(const ChebGrid1D& grid);

/// Barycentric weights (-1)^j * delta_j, delta = 1/2 at the endpoints.
Eigen::VectorXd barycentric_weights(const ChebGrid1D& grid);

/// Row-vector of interpolation coefficients: value(x) = row . nodal_values.
/// Exact (a unit vector) when x coincides with a node.
Eigen::RowVectorXd interpolation_row(const ChebGrid1D& grid, const Eigen::VectorXd& bary, double x);

/// Matrix mapping nodal values to values at the given points.
Eigen::MatrixXd interpolation_matrix(const ChebGrid1D& grid, std::span<const double> xs);

/// Tensor-product grid on [ax,bx] x [ay,by]. Fields are flattened with x varying
/// fastest: index(i, j) = j * nx + i, where i indexes grid_x and j indexes grid_y.
class TensorGrid {
public:
    TensorGrid(ChebGrid1D grid_x, ChebGrid1D grid_y);

    const ChebGrid1D& grid_x() const { return gx_; }
    const ChebGrid1D& grid_y() const { return gy_; }
    std::size_t nx() const { return gx_.size(); }
    std::size_t ny() const { return gy_.size(); }
    std::size_t size() const { return nx() * ny(); }
    std::size_t index(std::size_t i, std::size_t j) const { return j * nx() + i; }
    Point point(std::size_t k) const { return {gx_.node(k % nx()), gy_.node(k / nx())}; }
    Box box() const {
        return {gx_.interval().a, gx_.interval().b, gy_.interval().a, gy_.interval().b};
    }

private:
    ChebGrid1D gx_;
    ChebGrid1D gy_;
};

enum class Axis { X, Y };

/// Kronecker-structured derivative I (x) D along one axis of a TensorGrid, applied without
/// forming the full matrix.
class TensorDiffOperator {
public:
    TensorDiffOperator(Axis axis, DiffOperator factor, std::size_t nx, std::size_t ny);

    Axis axis() const { return axis_; }
    const DiffOperator& factor() const { return factor_; }
    std::size_t size() const { return nx_ * ny_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& field) const;
    void apply(const double* in, double* out) const;

    /// Full (size x size) matrix; intended for small grids.
    Eigen::MatrixXd dense() const;

private:
    Axis axis_;
    DiffOperator factor_;
    std::size_t nx_;
    std::size_t ny_;
};

struct TensorDiffOps {
    TensorDiffOperator dx;
    TensorDiffOperator dy;
};

TensorDiffOps tensor_diff_ops(const ChebGrid1D& grid_x, const ChebGrid1D& grid_y);

struct QuadratureRule {
    Points nodes;
    Eigen::VectorXd weights;

    double integrate(const Eigen::VectorXd& values) const { return weights.dot(values); }
};

/// Tensor Clenshaw-Curtis rule on the grid nodes, in the TensorGrid flattening order.
QuadratureRule quadrature_2d(const ChebGrid1D& grid_x, const ChebGrid1D& grid_y);

}  // namespace pdirichlet::spectral
