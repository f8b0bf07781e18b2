#include "pdirichlet/spline.hpp"

#include "pdirichlet/error.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <boost/math/quadrature/gauss.hpp>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pdirichlet::spline {

using SpMat = Eigen::SparseMatrix<double>;

std::size_t SplineConfig::side() const {
    auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(sites))));
    return s;
}

void SplineConfig::validate() const {
    std::size_t s = side();
    if (s * s != sites) {
        std::ostringstream msg;
        msg << "number of spline sites must be a perfect square, got " << sites;
        fail(ErrorCode::InvalidArgument, msg.str());
    }
    if (s < 3) fail(ErrorCode::InvalidArgument, "spline lattice needs at least 3 x 3 sites");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        std::ostringstream msg;
        msg << "spline penalty lambda must be positive, got " << lambda;
        fail(ErrorCode::InvalidArgument, msg.str());
    }
}

Points SplineConfig::site_points() const {
    std::size_t s = side();
    Points out;
    out.reserve(s * s);
    for (std::size_t j = 0; j < s; ++j)
        for (std::size_t i = 0; i < s; ++i)
            out.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(s),
                           (static_cast<double>(j) + 0.5) / static_cast<double>(s)});
    return out;
}

UniformCubicBasis::UniformCubicBasis(std::size_t intervals) : intervals_(intervals) {
    if (intervals == 0) fail(ErrorCode::InvalidArgument, "spline basis needs at least one interval");
}

std::size_t UniformCubicBasis::eval(double x, int deriv, double out[4]) const {
    const double m = static_cast<double>(intervals_);
    double t = std::clamp(x, 0.0, 1.0) * m;
    auto q = std::min(static_cast<std::size_t>(t), intervals_ - 1);
    double u = t - static_cast<double>(q);
    double v = 1.0 - u;
    switch (deriv) {
        case 0:
            out[0] = v * v * v / 6.0;
            out[1] = (3.0 * u * u * u - 6.0 * u * u + 4.0) / 6.0;
            out[2] = (-3.0 * u * u * u + 3.0 * u * u + 3.0 * u + 1.0) / 6.0;
            out[3] = u * u * u / 6.0;
            break;
        case 1:
            out[0] = -0.5 * v * v * m;
            out[1] = 0.5 * (3.0 * u * u - 4.0 * u) * m;
            out[2] = 0.5 * (-3.0 * u * u + 2.0 * u + 1.0) * m;
            out[3] = 0.5 * u * u * m;
            break;
        case 2:
            out[0] = v * m * m;
            out[1] = (3.0 * u - 2.0) * m * m;
            out[2] = (1.0 - 3.0 * u) * m * m;
            out[3] = u * m * m;
            break;
        default: fail(ErrorCode::InvalidArgument, "cubic B-spline derivative order must be 0, 1 or 2");
    }
    return q;
}

Eigen::MatrixXd UniformCubicBasis::gram(int deriv) const {
    using Gauss = boost::math::quadrature::gauss<double, 4>;
    // symmetric rule on [-1,1]: abscissa/weights hold the nonnegative half
    std::vector<double> nodes, weights;
    for (std::size_t k = 0; k < Gauss::abscissa().size(); ++k) {
        nodes.push_back(Gauss::abscissa()[k]);
        weights.push_back(Gauss::weights()[k]);
        if (Gauss::abscissa()[k] != 0.0) {
            nodes.push_back(-Gauss::abscissa()[k]);
            weights.push_back(Gauss::weights()[k]);
        }
    }
    const double hk = spacing();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
    double b[4];
    for (std::size_t cell = 0; cell < intervals_; ++cell)
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            double x = (static_cast<double>(cell) + 0.5 * (nodes[k] + 1.0)) * hk;
            std::size_t q = eval(x, deriv, b);
            double w = 0.5 * hk * weights[k];
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c)
                    g(static_cast<Eigen::Index>(q + r), static_cast<Eigen::Index>(q + c)) += w * b[r] * b[c];
        }
    return g;
}

Eigen::MatrixXd UniformCubicBasis::collocation(std::span<const double> xs, int deriv) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(size()));
    double b[4];
    for (std::size_t r = 0; r < xs.size(); ++r) {
        std::size_t q = eval(xs[r], deriv, b);
        for (int k = 0; k < 4; ++k) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q + k)) = b[k];
    }
    return out;
}

TensorSpline::TensorSpline(UniformCubicBasis basis, Eigen::MatrixXd coefficients)
    : basis_(basis), coeffs_(std::move(coefficients)) {
    if (coeffs_.rows() != static_cast<Eigen::Index>(basis_.size()) || coeffs_.cols() != coeffs_.rows())
        fail(ErrorCode::Shape, "spline coefficient matrix does not match the basis size");
}

namespace {

double tensor_eval(const UniformCubicBasis& basis, const Eigen::MatrixXd& c, const Point& p, int dx, int dy) {
    double bx[4], by[4];
    std::size_t qx = basis.eval(p.x, dx, bx);
    std::size_t qy = basis.eval(p.y, dy, by);
    double sum = 0.0;
    for (int b = 0; b < 4; ++b)
        for (int a = 0; a < 4; ++a)
            sum += c(static_cast<Eigen::Index>(qx + a), static_cast<Eigen::Index>(qy + b)) * bx[a] * by[b];
    return sum;
}

}  // namespace

double TensorSpline::value(const Point& p) const { return tensor_eval(basis_, coeffs_, p, 0, 0); }

Vec2 TensorSpline::gradient(const Point& p) const {
    return {tensor_eval(basis_, coeffs_, p, 1, 0), tensor_eval(basis_, coeffs_, p, 0, 1)};
}

Eigen::Vector3d TensorSpline::hessian(const Point& p) const {
    return {tensor_eval(basis_, coeffs_, p, 2, 0), tensor_eval(basis_, coeffs_, p, 1, 1),
            tensor_eval(basis_, coeffs_, p, 0, 2)};
}

Eigen::MatrixXd TensorSpline::values_on_mesh(std::span<const double> xs, std::span<const double> ys) const {
    return basis_.collocation(xs, 0) * coeffs_ * basis_.collocation(ys, 0).transpose();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> TensorSpline::gradients_on_mesh(std::span<const double> xs,
                                                                             std::span<const double> ys) const {
    Eigen::MatrixXd bx = basis_.collocation(xs, 0), by = basis_.collocation(ys, 0);
    Eigen::MatrixXd dbx = basis_.collocation(xs, 1), dby = basis_.collocation(ys, 1);
    return {dbx * coeffs_ * by.transpose(), bx * coeffs_ * dby.transpose()};
}

double TensorSpline::hessian_norm_squared() const {
    Eigen::MatrixXd g0 = basis_.gram(0), g1 = basis_.gram(1), g2 = basis_.gram(2);
    const auto& c = coeffs_;
    double xx = (g2.array() * (c * g0 * c.transpose()).array()).sum();
    double xy = (g1.array() * (c * g1 * c.transpose()).array()).sum();
    double yy = (g0.array() * (c * g2 * c.transpose()).array()).sum();
    return xx + 2.0 * xy + yy;
}

namespace {

struct SplineSystem {
    UniformCubicBasis basis;
    SpMat design;   // T x nb^2
    SpMat penalty;  // nb^2 x nb^2
};

SplineSystem assemble(const SplineConfig& config) {
    config.validate();
    const std::size_t s = config.side();
    UniformCubicBasis basis(s - 1);
    const std::size_t nb = basis.size();

    std::vector<double> coords(s);
    for (std::size_t i = 0; i < s; ++i) coords[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(s);
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(s * s * 16);
    double bx[4], by[4];
    for (std::size_t j = 0; j < s; ++j) {
        std::size_t qy = basis.eval(coords[j], 0, by);
        for (std::size_t i = 0; i < s; ++i) {
            std::size_t qx = basis.eval(coords[i], 0, bx);
            auto row = static_cast<int>(j * s + i);
            for (int b = 0; b < 4; ++b)
                for (int a = 0; a < 4; ++a)
                    entries.emplace_back(row, static_cast<int>((qy + b) * nb + qx + a), bx[a] * by[b]);
        }
    }
    SpMat design(static_cast<Eigen::Index>(s * s), static_cast<Eigen::Index>(nb * nb));
    design.setFromTriplets(entries.begin(), entries.end());

    SpMat g0 = basis.gram(0).sparseView(), g1 = basis.gram(1).sparseView(), g2 = basis.gram(2).sparseView();
    SpMat penalty = Eigen::kroneckerProduct(g0, g2).eval();
    penalty += 2.0 * SpMat(Eigen::kroneckerProduct(g1, g1).eval());
    penalty += SpMat(Eigen::kroneckerProduct(g2, g0).eval());
    return {basis, std::move(design), std::move(penalty)};
}

TensorSpline to_spline(const UniformCubicBasis& basis, const Eigen::VectorXd& c) {
    const auto nb = static_cast<Eigen::Index>(basis.size());
    return TensorSpline(basis, Eigen::Map<const Eigen::MatrixXd>(c.data(), nb, nb));
}

void check_values(std::span<const double> values, const SplineConfig& config) {
    if (values.size() != config.sites) {
        std::ostringstream msg;
        msg << "expected " << config.sites << " values at the spline sites, got " << values.size();
        fail(ErrorCode::Shape, msg.str());
    }
}

}  // namespace

TensorSpline fit_smoothing_spline(std::span<const double> values, const SplineConfig& config) {
    SplineSystem sys = assemble(config);
    check_values(values, config);
    const double inv_t = 1.0 / static_cast<double>(config.sites);
    Eigen::Map<const Eigen::VectorXd> f(values.data(), static_cast<Eigen::Index>(values.size()));

    SpMat normal = SpMat(sys.design.transpose() * sys.design) * inv_t + config.lambda * sys.penalty;
    Eigen::VectorXd rhs = (sys.design.transpose() * f) * inv_t;

    Eigen::SimplicialLDLT<SpMat> ldlt(normal);
    double dmax = 0.0, dmin = 0.0;
    if (ldlt.info() == Eigen::Success) {
        dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
        dmin = ldlt.vectorD().minCoeff();
    }
    if (ldlt.info() != Eigen::Success || !(dmin > 1e-15 * dmax)) {
        std::ostringstream msg;
        msg << "spline normal equations are singular or indefinite (condition estimate "
            << (dmin > 0.0 ? dmax / dmin : std::numeric_limits<double>::infinity()) << ", lambda " << config.lambda
            << ")";
        fail(ErrorCode::IllPosedSpline, msg.str());
    }
    return to_spline(sys.basis, ldlt.solve(rhs));
}

TensorSpline interpolating_spline(std::span<const double> values, const SplineConfig& config) {
    SplineSystem sys = assemble(config);
    check_values(values, config);
    const auto nc = sys.penalty.rows(), nt = sys.design.rows();

    std::vector<Eigen::Triplet<double>> entries;
    for (int k = 0; k < sys.penalty.outerSize(); ++k)
        for (SpMat::InnerIterator it(sys.penalty, k); it; ++it)
            entries.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int k = 0; k < sys.design.outerSize(); ++k)
        for (SpMat::InnerIterator it(sys.design, k); it; ++it) {
            entries.emplace_back(static_cast<int>(nc + it.row()), static_cast<int>(it.col()), it.value());
            entries.emplace_back(static_cast<int>(it.col()), static_cast<int>(nc + it.row()), it.value());
        }
    SpMat kkt(nc + nt, nc + nt);
    kkt.setFromTriplets(entries.begin(), entries.end());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nc + nt);
    for (Eigen::Index k = 0; k < nt; ++k) rhs(nc + k) = values[static_cast<std::size_t>(k)];

    Eigen::SparseLU<SpMat> lu;
    lu.compute(kkt);
    if (lu.info() != Eigen::Success) fail(ErrorCode::IllPosedSpline, "interpolating spline system is singular");
    Eigen::VectorXd sol = lu.solve(rhs);
    return to_spline(sys.basis, sol.head(nc));
}

namespace {

class SplineRepresentation final : public density::DensityRepresentation {
public:
    explicit SplineRepresentation(TensorSpline spline) : spline_(std::move(spline)) {}
    double value(const Point& p) const override { return spline_.value(p); }
    Vec2 gradient(const Point& p) const override { return spline_.gradient(p); }
    Eigen::MatrixXd values_on_mesh(std::span<const double> xs, std::span<const double> ys) const override {
        return spline_.values_on_mesh(xs, ys);
    }
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gradients_on_mesh(std::span<const double> xs,
                                                                   std::span<const double> ys) const override {
        return spline_.gradients_on_mesh(xs, ys);
    }

private:
    TensorSpline spline_;
};

}  // namespace

density::DensityField skde_fit(std::span<const double> kde_at_sites, const SplineConfig& config,
                               density::DensityMetadata meta) {
    TensorSpline spline = fit_smoothing_spline(kde_at_sites, config);
    meta.kind = density::DensityKind::Skde;
    meta.lambda = config.lambda;
    meta.knots = config.sites;
    return density::DensityField(std::make_shared<SplineRepresentation>(std::move(spline)), std::move(meta));
}

density::DensityField skde_from_kde(const density::KernelDensityEstimate& kde, const SplineConfig& config,
                                    std::optional<std::uint64_t> seed) {
    config.validate();
    Points sites = config.site_points();
    Eigen::VectorXd values = kde.values(sites);
    density::DensityMetadata meta;
    meta.source = std::string(density::to_string(kde.kernel().id));
    meta.bandwidth = kde.bandwidth();
    meta.seed = seed;
    return skde_fit(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), config,
                    std::move(meta));
}

}  // namespace pdirichlet::spline
