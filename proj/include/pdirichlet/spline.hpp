#pragma once

// Smoothing splines on [0,1]^2: tensor cubic B-splines with a thin-plate (m = 2) penalty,
// fitted to values on a uniform lattice of data sites.

#include "pdirichlet/density.hpp"
#include "pdirichlet/types.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>

namespace pdirichlet::spline {

/// T data sites on the lattice ((i+1/2)/s, (j+1/2)/s), s = sqrt(T), and the penalty weight.
struct SplineConfig {
    std::size_t sites = 4096;
    double lambda = 1e-6;

    std::size_t side() const;
    Points site_points() const;
    void validate() const;
};

/// Cubic B-spline basis with uniform knots on [0,1]: `intervals` cells, intervals + 3 functions.
class UniformCubicBasis {
public:
    explicit UniformCubicBasis(std::size_t intervals);

    std::size_t intervals() const { return intervals_; }
    std::size_t size() const { return intervals_ + 3; }
    double spacing() const { return 1.0 / static_cast<double>(intervals_); }

    /// First nonzero index q and the four basis values (or derivatives of order `deriv`)
    /// B_q..B_{q+3} at x.
    std::size_t eval(double x, int deriv, double out[4]) const;

    /// Gram matrix of the derivatives of order `deriv`: G(k,l) = int_0^1 B_k^(d) B_l^(d).
    Eigen::MatrixXd gram(int deriv) const;

    /// Dense (xs.size() x size()) matrix of basis values or derivatives at the points.
    Eigen::MatrixXd collocation(std::span<const double> xs, int deriv) const;

private:
    std::size_t intervals_;
};

/// u(x,y) = sum_{i,j} c(i,j) B_i(x) B_j(y).
class TensorSpline {
public:
    TensorSpline(UniformCubicBasis basis, Eigen::MatrixXd coefficients);

    const UniformCubicBasis& basis() const { return basis_; }
    const Eigen::MatrixXd& coefficients() const { return coeffs_; }

    double value(const Point& p) const;
    Vec2 gradient(const Point& p) const;
    /// (u_xx, u_xy, u_yy)
    Eigen::Vector3d hessian(const Point& p) const;

    Eigen::MatrixXd values_on_mesh(std::span<const double> xs, std::span<const double> ys) const;
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gradients_on_mesh(std::span<const double> xs,
                                                                   std::span<const double> ys) const;

    /// int_{[0,1]^2} u_xx^2 + 2 u_xy^2 + u_yy^2, evaluated exactly from the coefficients.
    double hessian_norm_squared() const;

private:
    UniformCubicBasis basis_;
    Eigen::MatrixXd coeffs_;
};

/// Minimiser of (1/T) sum (u(t_i) - f_i)^2 + lambda * int |D^2 u|^2 over the spline space with
/// side - 1 intervals per direction. `values` is ordered like SplineConfig::site_points().
TensorSpline fit_smoothing_spline(std::span<const double> values, const SplineConfig& config);

/// Minimum-penalty spline with u(t_i) = f_i at every site.
TensorSpline interpolating_spline(std::span<const double> values, const SplineConfig& config);

/// Smoothing-spline fit of KDE values at the sites, clamped at the density floor.
density::DensityField skde_fit(std::span<const double> kde_at_sites, const SplineConfig& config,
                               density::DensityMetadata meta = {});

/// KDE of the samples evaluated at the sites, followed by skde_fit.
density::DensityField skde_from_kde(const density::KernelDensityEstimate& kde, const SplineConfig& config,
                                    std::optional<std::uint64_t> seed = {});

}  // namespace pdirichlet::spline
