#include "pdirichlet/density.hpp"
#include "pdirichlet/error.hpp"
#include "pdirichlet/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

namespace pdirichlet::density {

using std::numbers::pi;

KernelId parse_kernel_id(std::string_view id) {
    if (id == "gaussian") return KernelId::Gaussian;
    if (id == "uniform-ball" || id == "uniform") return KernelId::UniformBall;
    if (id == "epanechnikov") return KernelId::Epanechnikov;
    fail(ErrorCode::InvalidArgument, "unknown kernel '" + std::string(id) + "'");
}

std::string_view to_string(KernelId id) {
    switch (id) {
        case KernelId::Gaussian: return "gaussian";
        case KernelId::UniformBall: return "uniform-ball";
        case KernelId::Epanechnikov: return "epanechnikov";
    }
    return "?";
}

double Kernel::support_radius() const { return id == KernelId::Gaussian ? 5.0 : 1.0; }

double Kernel::formal_support() const {
    return id == KernelId::Gaussian ? std::numeric_limits<double>::infinity() : 1.0;
}

double Kernel::value(double r2) const {
    switch (id) {
        case KernelId::Gaussian: return std::exp(-0.5 * r2) / (2.0 * pi);
        case KernelId::UniformBall: return r2 <= 1.0 ? 1.0 / pi : 0.0;
        case KernelId::Epanechnikov: return r2 <= 1.0 ? 2.0 / pi * (1.0 - r2) : 0.0;
    }
    return 0.0;
}

double Kernel::slope_over_r(double r2) const {
    switch (id) {
        case KernelId::Gaussian: return -std::exp(-0.5 * r2) / (2.0 * pi);
        case KernelId::UniformBall: return 0.0;
        case KernelId::Epanechnikov: return r2 <= 1.0 ? -4.0 / pi : 0.0;
    }
    return 0.0;
}

double default_bandwidth(std::size_t n) { return std::pow(static_cast<double>(n), -1.0 / 6.0); }

KernelDensityEstimate::KernelDensityEstimate(Points samples, double h, Kernel kernel)
    : samples_(std::move(samples)), h_(h), kernel_(kernel) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        std::ostringstream msg;
        msg << "bandwidth must be positive, got " << h;
        fail(ErrorCode::InvalidBandwidth, msg.str());
    }
    if (samples_.empty()) fail(ErrorCode::EmptySample, "kernel density estimate needs at least one sample");
    radius_ = kernel_.support_radius() * h_;

    double x1 = samples_[0].x, y1 = samples_[0].y;
    x0_ = x1;
    y0_ = y1;
    for (const auto& s : samples_) {
        x0_ = std::min(x0_, s.x);
        y0_ = std::min(y0_, s.y);
        x1 = std::max(x1, s.x);
        y1 = std::max(y1, s.y);
    }
    constexpr std::size_t max_cells = 512;
    double extent = std::max(x1 - x0_, y1 - y0_);
    cell_ = std::max(radius_, extent / max_cells);
    if (cell_ <= 0.0) cell_ = 1.0;
    cells_x_ = static_cast<std::size_t>((x1 - x0_) / cell_) + 1;
    cells_y_ = static_cast<std::size_t>((y1 - y0_) / cell_) + 1;

    // counting sort of samples into cells
    std::vector<std::size_t> cell_of(samples_.size());
    cell_start_.assign(cells_x_ * cells_y_ + 1, 0);
    for (std::size_t s = 0; s < samples_.size(); ++s) {
        auto cx = std::min(cells_x_ - 1, static_cast<std::size_t>((samples_[s].x - x0_) / cell_));
        auto cy = std::min(cells_y_ - 1, static_cast<std::size_t>((samples_[s].y - y0_) / cell_));
        cell_of[s] = cy * cells_x_ + cx;
        ++cell_start_[cell_of[s] + 1];
    }
    for (std::size_t c = 0; c < cells_x_ * cells_y_; ++c) cell_start_[c + 1] += cell_start_[c];
    order_.resize(samples_.size());
    std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t s = 0; s < samples_.size(); ++s) order_[fill[cell_of[s]]++] = s;
}

template <typename Visit>
void KernelDensityEstimate::for_each_neighbor(const Point& q, Visit&& visit) const {
    auto lo = [&](double v, double origin) {
        double c = std::floor((v - radius_ - origin) / cell_);
        return c < 0.0 ? std::size_t{0} : static_cast<std::size_t>(c);
    };
    auto hi = [&](double v, double origin, std::size_t count) -> long long {
        double c = std::floor((v + radius_ - origin) / cell_);
        if (c < 0.0) return -1;
        return static_cast<long long>(std::min<double>(c, static_cast<double>(count - 1)));
    };
    long long cx1 = hi(q.x, x0_, cells_x_), cy1 = hi(q.y, y0_, cells_y_);
    const double r2max = radius_ * radius_;
    for (long long cy = static_cast<long long>(lo(q.y, y0_)); cy <= cy1; ++cy)
        for (long long cx = static_cast<long long>(lo(q.x, x0_)); cx <= cx1; ++cx) {
            std::size_t c = static_cast<std::size_t>(cy) * cells_x_ + static_cast<std::size_t>(cx);
            for (std::size_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
                const Point& s = samples_[order_[k]];
                double dx = q.x - s.x, dy = q.y - s.y;
                double d2 = dx * dx + dy * dy;
                if (d2 <= r2max) visit(dx, dy, d2);
            }
        }
}

double KernelDensityEstimate::value(const Point& q) const {
    double sum = 0.0;
    const double inv_h2 = 1.0 / (h_ * h_);
    for_each_neighbor(q, [&](double, double, double d2) { sum += kernel_.value(d2 * inv_h2); });
    return sum * inv_h2 / static_cast<double>(samples_.size());
}

Vec2 KernelDensityEstimate::gradient(const Point& q) const {
    double gx = 0.0, gy = 0.0;
    const double inv_h2 = 1.0 / (h_ * h_);
    for_each_neighbor(q, [&](double dx, double dy, double d2) {
        double s = kernel_.slope_over_r(d2 * inv_h2);
        gx += s * dx;
        gy += s * dy;
    });
    // grad K_h(z) = h^-3 (grad K)(z/h) = h^-4 slope * z
    double scale = inv_h2 * inv_h2 / static_cast<double>(samples_.size());
    return {gx * scale, gy * scale};
}

Eigen::VectorXd KernelDensityEstimate::values(std::span<const Point> query) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(query.size()));
    parallel_for(query.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) out(static_cast<Eigen::Index>(k)) = value(query[k]);
    });
    return out;
}

namespace {

// Per-axis Gaussian factors for a block of samples: G(a, s) = g_h(grid[a] - sample_s).
void gaussian_factors(std::span<const double> grid, const Points& samples, std::size_t begin, std::size_t end,
                      bool use_x, double h, Eigen::MatrixXd& value, Eigen::MatrixXd* slope) {
    const double norm = 1.0 / (std::sqrt(2.0 * pi) * h);
    value.resize(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(end - begin));
    if (slope) slope->resize(value.rows(), value.cols());
    for (std::size_t s = begin; s < end; ++s) {
        double c = use_x ? samples[s].x : samples[s].y;
        for (std::size_t a = 0; a < grid.size(); ++a) {
            double t = (grid[a] - c) / h;
            double g = norm * std::exp(-0.5 * t * t);
            value(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s - begin)) = g;
            if (slope) (*slope)(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s - begin)) = -t / h * g;
        }
    }
}

constexpr std::size_t kSampleBlock = 2048;

}  // namespace

Eigen::MatrixXd KernelDensityEstimate::values_on_mesh(std::span<const double> xs, std::span<const double> ys) const {
    const auto nx = static_cast<Eigen::Index>(xs.size()), ny = static_cast<Eigen::Index>(ys.size());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nx, ny);
    if (kernel_.id == KernelId::Gaussian) {
        Eigen::MatrixXd gx, gy;
        for (std::size_t b = 0; b < samples_.size(); b += kSampleBlock) {
            std::size_t e = std::min(samples_.size(), b + kSampleBlock);
            gaussian_factors(xs, samples_, b, e, true, h_, gx, nullptr);
            gaussian_factors(ys, samples_, b, e, false, h_, gy, nullptr);
            out.noalias() += gx * gy.transpose();
        }
        return out / static_cast<double>(samples_.size());
    }
    parallel_for(ys.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j)
            for (std::size_t i = 0; i < xs.size(); ++i)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value({xs[i], ys[j]});
    });
    return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> KernelDensityEstimate::gradients_on_mesh(std::span<const double> xs,
                                                                                     std::span<const double> ys) const {
    const auto nx = static_cast<Eigen::Index>(xs.size()), ny = static_cast<Eigen::Index>(ys.size());
    Eigen::MatrixXd ddx = Eigen::MatrixXd::Zero(nx, ny), ddy = Eigen::MatrixXd::Zero(nx, ny);
    if (kernel_.id == KernelId::Gaussian) {
        Eigen::MatrixXd gx, gy, sx, sy;
        for (std::size_t b = 0; b < samples_.size(); b += kSampleBlock) {
            std::size_t e = std::min(samples_.size(), b + kSampleBlock);
            gaussian_factors(xs, samples_, b, e, true, h_, gx, &sx);
            gaussian_factors(ys, samples_, b, e, false, h_, gy, &sy);
            ddx.noalias() += sx * gy.transpose();
            ddy.noalias() += gx * sy.transpose();
        }
        double inv_n = 1.0 / static_cast<double>(samples_.size());
        return {ddx * inv_n, ddy * inv_n};
    }
    parallel_for(ys.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j)
            for (std::size_t i = 0; i < xs.size(); ++i) {
                Vec2 g = gradient({xs[i], ys[j]});
                ddx(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g.x;
                ddy(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g.y;
            }
    });
    return {ddx, ddy};
}

Eigen::VectorXd kde_evaluate(const SampleSet& samples, double h, const Kernel& kernel, std::span<const Point> query) {
    return KernelDensityEstimate(samples.points, h, kernel).values(query);
}

// ---------------------------------------------------------------------------

std::string_view to_string(DensityKind kind) {
    switch (kind) {
        case DensityKind::Kde: return "kde";
        case DensityKind::Skde: return "skde";
        case DensityKind::Exact: return "exact";
    }
    return "?";
}

Eigen::MatrixXd DensityRepresentation::values_on_mesh(std::span<const double> xs, std::span<const double> ys) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
    for (std::size_t j = 0; j < ys.size(); ++j)
        for (std::size_t i = 0; i < xs.size(); ++i)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value({xs[i], ys[j]});
    return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> DensityRepresentation::gradients_on_mesh(std::span<const double> xs,
                                                                                      std::span<const double> ys) const {
    Eigen::MatrixXd gx(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
    Eigen::MatrixXd gy(gx.rows(), gx.cols());
    for (std::size_t j = 0; j < ys.size(); ++j)
        for (std::size_t i = 0; i < xs.size(); ++i) {
            Vec2 g = gradient({xs[i], ys[j]});
            gx(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g.x;
            gy(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g.y;
        }
    return {gx, gy};
}

DensityField::DensityField(std::shared_ptr<const DensityRepresentation> rep, DensityMetadata meta,
                           double floor_fraction)
    : rep_(std::move(rep)), meta_(std::move(meta)) {
    std::vector<double> mesh(129);
    for (std::size_t i = 0; i < mesh.size(); ++i) mesh[i] = static_cast<double>(i) / 128.0;
    peak_ = rep_->values_on_mesh(mesh, mesh).maxCoeff();
    if (!(peak_ > 0.0)) fail(ErrorCode::InvalidArgument, "density field has no positive values on [0,1]^2");
    floor_ = floor_fraction * peak_;
}

void DensityField::check_domain(const Point& p) const {
    constexpr double slack = 1e-12;
    if (!kUnitSquare.contains(p, slack)) {
        std::ostringstream msg;
        msg << "density query (" << p.x << ", " << p.y << ") lies outside [0,1]^2";
        fail(ErrorCode::OutOfDomain, msg.str());
    }
}

double DensityField::value(const Point& p) const {
    check_domain(p);
    return std::max(rep_->value(p), floor_);
}

Vec2 DensityField::gradient(const Point& p) const {
    check_domain(p);
    if (rep_->value(p) <= floor_) return {0.0, 0.0};
    return rep_->gradient(p);
}

Eigen::VectorXd DensityField::values(std::span<const Point> points) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(points.size()));
    for (std::size_t k = 0; k < points.size(); ++k) out(static_cast<Eigen::Index>(k)) = value(points[k]);
    return out;
}

Eigen::MatrixXd DensityField::values_on_mesh(std::span<const double> xs, std::span<const double> ys) const {
    for (double x : xs) check_domain({x, 0.5});
    for (double y : ys) check_domain({0.5, y});
    return rep_->values_on_mesh(xs, ys).cwiseMax(floor_);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> DensityField::gradients_on_mesh(std::span<const double> xs,
                                                                             std::span<const double> ys) const {
    for (double x : xs) check_domain({x, 0.5});
    for (double y : ys) check_domain({0.5, y});
    Eigen::MatrixXd raw = rep_->values_on_mesh(xs, ys);
    auto [gx, gy] = rep_->gradients_on_mesh(xs, ys);
    for (Eigen::Index k = 0; k < raw.size(); ++k)
        if (raw(k) <= floor_) {
            gx(k) = 0.0;
            gy(k) = 0.0;
        }
    return {gx, gy};
}

namespace {

class ExactRepresentation final : public DensityRepresentation {
public:
    explicit ExactRepresentation(ReferenceDensity density) : density_(density) {}
    double value(const Point& p) const override { return density_.value(p); }
    Vec2 gradient(const Point& p) const override { return density_.gradient(p); }

private:
    ReferenceDensity density_;
};

class KdeRepresentation final : public DensityRepresentation {
public:
    explicit KdeRepresentation(KernelDensityEstimate kde) : kde_(std::move(kde)) {}
    double value(const Point& p) const override { return kde_.value(p); }
    Vec2 gradient(const Point& p) const override { return kde_.gradient(p); }
    Eigen::MatrixXd values_on_mesh(std::span<const double> xs, std::span<const double> ys) const override {
        return kde_.values_on_mesh(xs, ys);
    }
    std::pair<Eigen::MatrixXd, Eigen::MatrixXd> gradients_on_mesh(std::span<const double> xs,
                                                                   std::span<const double> ys) const override {
        return kde_.gradients_on_mesh(xs, ys);
    }

private:
    KernelDensityEstimate kde_;
};

class FunctionRepresentation final : public DensityRepresentation {
public:
    FunctionRepresentation(std::function<double(const Point&)> v, std::function<Vec2(const Point&)> g)
        : value_(std::move(v)), gradient_(std::move(g)) {}
    double value(const Point& p) const override { return value_(p); }
    Vec2 gradient(const Point& p) const override { return gradient_(p); }

private:
    std::function<double(const Point&)> value_;
    std::function<Vec2(const Point&)> gradient_;
};

}  // namespace

DensityField exact_density_field(const ReferenceDensity& density) {
    DensityMetadata meta;
    meta.kind = DensityKind::Exact;
    meta.source = std::string(to_string(density.id()));
    return DensityField(std::make_shared<ExactRepresentation>(density), meta);
}

DensityField kde_density_field(const KernelDensityEstimate& kde, std::optional<std::uint64_t> seed) {
    DensityMetadata meta;
    meta.kind = DensityKind::Kde;
    meta.source = std::string(to_string(kde.kernel().id));
    meta.bandwidth = kde.bandwidth();
    meta.seed = seed;
    return DensityField(std::make_shared<KdeRepresentation>(kde), meta);
}

DensityField function_density_field(std::function<double(const Point&)> value,
                                    std::function<Vec2(const Point&)> gradient, std::string source) {
    DensityMetadata meta;
    meta.kind = DensityKind::Exact;
    meta.source = std::move(source);
    return DensityField(std::make_shared<FunctionRepresentation>(std::move(value), std::move(gradient)), meta);
}

std::vector<Vec2> density_gradient(const DensityField& field, std::span<const Point> query) {
    std::vector<Vec2> out;
    out.reserve(query.size());
    for (const auto& q : query) out.push_back(field.gradient(q));
    return out;
}

}  // namespace pdirichlet::density
