#include "pdirichlet/spectral.hpp"

#include "pdirichlet/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace pdirichlet::spectral {

using std::numbers::pi;

ChebGrid1D::ChebGrid1D(int order, Interval interval) : order_(order), interval_(interval) {
    if (order < 2) {
        std::ostringstream msg;
        msg << "Chebyshev order must be >= 2, got " << order;
        fail(ErrorCode::InvalidOrder, msg.str());
    }
    if (!(interval.a < interval.b)) {
        std::ostringstream msg;
        msg << "interval requires a < b, got [" << interval.a << ", " << interval.b << "]";
        fail(ErrorCode::InvalidInterval, msg.str());
    }
    const double mid = 0.5 * (interval.a + interval.b);
    const double half = 0.5 * (interval.b - interval.a);
    nodes_.resize(static_cast<std::size_t>(order) + 1);
    for (int i = 0; i <= order; ++i) {
        // sin form keeps the nodes symmetric about the midpoint to rounding
        double t = std::sin(pi * (order - 2.0 * i) / (2.0 * order));
        nodes_[i] = mid + half * t;
    }
    nodes_.front() = interval.b;
    nodes_.back() = interval.a;
    if (order % 2 == 0) nodes_[order / 2] = mid;
}

ChebGrid1D chebyshev_nodes(int order, Interval interval) { return ChebGrid1D(order, interval); }

DiffOperator chebyshev_diff_matrix(const ChebGrid1D& grid) {
    const int n = grid.order();
    const std::size_t m = grid.size();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
    auto c = [n](int i) { return (i == 0 || i == n) ? 2.0 : 1.0; };
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
            if (i == j) continue;
            // x_i - x_j on [-1,1] via the product formula, free of cancellation
            double diff = 2.0 * std::sin((i + j) * pi / (2.0 * n)) * std::sin((j - i) * pi / (2.0 * n));
            double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            d(i, j) = c(i) / c(j) * sign / diff;
        }
    }
    for (int i = 0; i <= n; ++i) {
        double s = 0.0;
        for (int j = 0; j <= n; ++j)
            if (j != i) s += d(i, j);
        d(i, i) = -s;
    }
    d *= 2.0 / grid.length();
    return {std::move(d)};
}

Eigen::VectorXd clenshaw_curtis_weights(const ChebGrid1D& grid) {
    const int n = grid.order();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n + 1);
    const double nn = static_cast<double>(n);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n - 1);
    if (n % 2 == 0) {
        w(0) = 1.0 / (nn * nn - 1.0);
        w(n) = w(0);
        for (int k = 1; k < n / 2; ++k)
            for (int i = 1; i < n; ++i) v(i - 1) -= 2.0 * std::cos(2.0 * k * pi * i / nn) / (4.0 * k * k - 1.0);
        for (int i = 1; i < n; ++i) v(i - 1) -= std::cos(pi * i) / (nn * nn - 1.0);
    } else {
        w(0) = 1.0 / (nn * nn);
        w(n) = w(0);
        for (int k = 1; k <= (n - 1) / 2; ++k)
            for (int i = 1; i < n; ++i) v(i - 1) -= 2.0 * std::cos(2.0 * k * pi * i / nn) / (4.0 * k * k - 1.0);
    }
    for (int i = 1; i < n; ++i) w(i) = 2.0 * v(i - 1) / nn;
    return w * (0.5 * grid.length());
}

Eigen::VectorXd barycentric_weights(const ChebGrid1D& grid) {
    const int n = grid.order();
    Eigen::VectorXd w(n + 1);
    for (int j = 0; j <= n; ++j) {
        double sign = (j % 2 == 0) ? 1.0 : -1.0;
        w(j) = sign * ((j == 0 || j == n) ? 0.5 : 1.0);
    }
    return w;
}

Eigen::RowVectorXd interpolation_row(const ChebGrid1D& grid, const Eigen::VectorXd& bary, double x) {
    const std::size_t m = grid.size();
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(m);
    for (std::size_t j = 0; j < m; ++j) {
        if (x == grid.node(j)) {
            row(j) = 1.0;
            return row;
        }
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        row(j) = bary(j) / (x - grid.node(j));
        denom += row(j);
    }
    return row / denom;
}

Eigen::MatrixXd interpolation_matrix(const ChebGrid1D& grid, std::span<const double> xs) {
    Eigen::VectorXd bary = barycentric_weights(grid);
    Eigen::MatrixXd out(xs.size(), grid.size());
    for (std::size_t r = 0; r < xs.size(); ++r) out.row(r) = interpolation_row(grid, bary, xs[r]);
    return out;
}

TensorGrid::TensorGrid(ChebGrid1D grid_x, ChebGrid1D grid_y) : gx_(std::move(grid_x)), gy_(std::move(grid_y)) {}

TensorDiffOperator::TensorDiffOperator(Axis axis, DiffOperator factor, std::size_t nx, std::size_t ny)
    : axis_(axis), factor_(std::move(factor)), nx_(nx), ny_(ny) {}

void TensorDiffOperator::apply(const double* in, double* out) const {
    // Column-major (nx x ny) view: column j holds the x-line at y-node j.
    Eigen::Map<const Eigen::MatrixXd> f(in, nx_, ny_);
    Eigen::Map<Eigen::MatrixXd> g(out, nx_, ny_);
    if (axis_ == Axis::X)
        g.noalias() = factor_.entries * f;
    else
        g.noalias() = f * factor_.entries.transpose();
}

Eigen::VectorXd TensorDiffOperator::apply(const Eigen::VectorXd& field) const {
    Eigen::VectorXd out(field.size());
    apply(field.data(), out.data());
    return out;
}

Eigen::MatrixXd TensorDiffOperator::dense() const {
    const std::size_t n = size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    const auto& d = factor_.entries;
    for (std::size_t j = 0; j < ny_; ++j)
        for (std::size_t i = 0; i < nx_; ++i) {
            std::size_t row = j * nx_ + i;
            if (axis_ == Axis::X)
                for (std::size_t k = 0; k < nx_; ++k) m(row, j * nx_ + k) = d(i, k);
            else
                for (std::size_t k = 0; k < ny_; ++k) m(row, k * nx_ + i) = d(j, k);
        }
    return m;
}

TensorDiffOps tensor_diff_ops(const ChebGrid1D& grid_x, const ChebGrid1D& grid_y) {
    return {TensorDiffOperator(Axis::X, chebyshev_diff_matrix(grid_x), grid_x.size(), grid_y.size()),
            TensorDiffOperator(Axis::Y, chebyshev_diff_matrix(grid_y), grid_x.size(), grid_y.size())};
}

QuadratureRule quadrature_2d(const ChebGrid1D& grid_x, const ChebGrid1D& grid_y) {
    Eigen::VectorXd wx = clenshaw_curtis_weights(grid_x);
    Eigen::VectorXd wy = clenshaw_curtis_weights(grid_y);
    QuadratureRule rule;
    rule.nodes.reserve(grid_x.size() * grid_y.size());
    rule.weights.resize(static_cast<Eigen::Index>(grid_x.size() * grid_y.size()));
    for (std::size_t j = 0; j < grid_y.size(); ++j)
        for (std::size_t i = 0; i < grid_x.size(); ++i) {
            rule.nodes.push_back({grid_x.node(i), grid_y.node(j)});
            rule.weights(static_cast<Eigen::Index>(j * grid_x.size() + i)) = wx(i) * wy(j);
        }
    return rule;
}

}  // namespace pdirichlet::spectral
