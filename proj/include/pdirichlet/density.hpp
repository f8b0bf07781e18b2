#pragma once

#include "pdirichlet/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace pdirichlet::density {

// ---------------------------------------------------------------------------
// Reference densities on the unit square

enum class ReferenceId { Rho1, Rho2, Rho3 };

ReferenceId parse_reference_id(std::string_view id);
std::string_view to_string(ReferenceId id);

/// rho1 = 1, rho2 = (xy + 0.2)/N2, rho3 = (cos(6 pi ((x-.5)^2 + (y-.2)^2))/3 + .5)/N3.
/// Normalisations are computed by quadrature over [0,1]^2.
class ReferenceDensity {
public:
    explicit ReferenceDensity(ReferenceId id);

    ReferenceId id() const { return id_; }
    double normalization() const { return normalization_; }
    double operator()(double x, double y) const { return unnormalized(x, y) / normalization_; }
    double value(const Point& p) const { return (*this)(p.x, p.y); }
    Vec2 gradient(const Point& p) const;

private:
    double unnormalized(double x, double y) const;

    ReferenceId id_;
    double normalization_ = 1.0;
};

ReferenceDensity reference_density(ReferenceId id);
ReferenceDensity reference_density(std::string_view id);

struct SampleSet {
    Points points;
    std::uint64_t seed = 0;

    std::size_t size() const { return points.size(); }
};

/// Inverse-transform sampling from the density discretised on a 2^10 x 2^10 grid of cells:
/// marginal CDF in x, conditional CDF in y, linear interpolation inside each cell.
SampleSet sample_density(const ReferenceDensity& density, std::size_t n, std::uint64_t seed);

/// Uniform double in [0,1) from the top 53 bits of a 64-bit Mersenne twister draw.
class UniformSource {
public:
    explicit UniformSource(std::uint64_t seed);
    double next();

private:
    struct State;
    std::shared_ptr<State> state_;
};

// ---------------------------------------------------------------------------
// Kernels and kernel density estimation

enum class KernelId { Gaussian, UniformBall, Epanechnikov };

KernelId parse_kernel_id(std::string_view id);
std::string_view to_string(KernelId id);

/// Radially symmetric 2D kernel integrating to one.
struct Kernel {
    KernelId id = KernelId::Gaussian;

    /// Support radius M; the Gaussian is summed out to radius 5 (mass error < 1e-5).
    double support_radius() const;
    /// Formal support (infinity for the Gaussian).
    double formal_support() const;
    double value(double r2) const;
    /// dK/dr divided by r, so grad K(z) = profile_slope(|z|^2) * z.
    double slope_over_r(double r2) const;
};

/// Bandwidth n^{-1/6}.
double default_bandwidth(std::size_t n);

class KernelDensityEstimate {
public:
    KernelDensityEstimate(Points samples, double h, Kernel kernel = {});

    double bandwidth() const { return h_; }
    const Kernel& kernel() const { return kernel_; }
    const Points& samples() const { return samples_; }

    double value(const Point& q) const;
    Vec2 gradient(const Point& q) const;
    Eigen::VectorXd values(std::span<const Point> query) const;

    /// Values on the tensor mesh xs x ys as an (nx x ny) matrix, M(i, j) = rho(xs[i], ys[j]).
    /// The Gaussian kernel uses the separable product form.
    Eigen::MatrixXd values_on_mesh(std::span<const double> xs, std::span<const double> ys) const;
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gradients_on_mesh(std::span<const double> xs,
                                                                   std::span<const double> ys) const;

private:
    template <typename Visit>
    void for_each_neighbor(const Point& q, Visit&& visit) const;

    Points samples_;
    double h_;
    Kernel kernel_;
    double radius_;
    double cell_;
    double x0_ = 0.0;
    double y0_ = 0.0;
    std::size_t cells_x_ = 1;
    std::size_t cells_y_ = 1;
    std::vector<std::size_t> cell_start_;
    std::vector<std::size_t> order_;
};

/// (1/n) sum_i K_h(q - x_i), K_h(x) = h^-2 K(x/h).
Eigen::VectorXd kde_evaluate(const SampleSet& samples, double h, const Kernel& kernel,
                             std::span<const Point> query);

// ---------------------------------------------------------------------------
// Density fields consumed by the solvers

enum class DensityKind { Kde, Skde, Exact };

std::string_view to_string(DensityKind kind);

/// Unclamped evaluator behind a DensityField.
class DensityRepresentation {
public:
    virtual ~DensityRepresentation() = default;
    virtual double value(const Point& p) const = 0;
    virtual Vec2 gradient(const Point& p) const = 0;
    virtual Eigen::MatrixXd values_on_mesh(std::span<const double> xs, std::span<const double> ys) const;
    virtual std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gradients_on_mesh(std::span<const double> xs,
                                                                           std::span<const double> ys) const;
};

struct DensityMetadata {
    DensityKind kind = DensityKind::Exact;
    std::string source;
    std::optional<double> bandwidth;
    std::optional<double> lambda;
    std::optional<std::size_t> knots;
    std::optional<std::uint64_t> seed;
};

/// Strictly positive density on [0,1]^2: the representation clamped below at
/// floor = floor_fraction * (max of the representation on a 129^2 uniform mesh).
class DensityField {
public:
    static constexpr double kDefaultFloorFraction = 1e-3;

    DensityField(std::shared_ptr<const DensityRepresentation> rep, DensityMetadata meta,
                 double floor_fraction = kDefaultFloorFraction);

    const DensityMetadata& metadata() const { return meta_; }
    DensityKind kind() const { return meta_.kind; }
    double floor() const { return floor_; }
    double peak() const { return peak_; }

    double value(const Point& p) const;
    /// Gradient of the clamped field: the representation's gradient where it exceeds the
    /// floor, zero where the floor is active.
    Vec2 gradient(const Point& p) const;
    Eigen::VectorXd values(std::span<const Point> points) const;

    Eigen::MatrixXd values_on_mesh(std::span<const double> xs, std::span<const double> ys) const;
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gradients_on_mesh(std::span<const double> xs,
                                                                   std::span<const double> ys) const;

    const DensityRepresentation& representation() const { return *rep_; }

private:
    void check_domain(const Point& p) const;

    std::shared_ptr<const DensityRepresentation> rep_;
    DensityMetadata meta_;
    double peak_ = 0.0;
    double floor_ = 0.0;
};

DensityField exact_density_field(const ReferenceDensity& density);
DensityField kde_density_field(const KernelDensityEstimate& kde, std::optional<std::uint64_t> seed = {});
/// Field from an arbitrary analytic function and gradient (used for test problems).
DensityField function_density_field(std::function<double(const Point&)> value,
                                    std::function<Vec2(const Point&)> gradient, std::string source);

/// Gradient at each query point; out-of-domain error outside [0,1]^2.
std::vector<Vec2> density_gradient(const DensityField& field, std::span<const Point> query);

// ---------------------------------------------------------------------------
// Weight profiles and the constant sigma_eta

/// eta : [0, inf) -> [0, inf), with eta(r) = 0 for r > support (support may be infinite).
struct WeightProfile {
    std::string name;
    std::function<double(double)> eta;
    double support = 1.0;

    double operator()(double r) const { return eta(r); }
};

WeightProfile indicator_profile();
WeightProfile gaussian_profile();
WeightProfile epanechnikov_profile();
WeightProfile parse_profile(std::string_view name);

/// sigma_eta = int_{R^d} eta(|x|) |x . e1|^p dx by radial-angular quadrature.
double sigma_eta(const WeightProfile& profile, double p, int d = 2);

}  // namespace pdirichlet::density
