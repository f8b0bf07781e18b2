#include "pdirichlet/density.hpp"
#include "pdirichlet/error.hpp"
#include "pdirichlet/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace pdirichlet::density {

using std::numbers::pi;

ReferenceId parse_reference_id(std::string_view id) {
    if (id == "rho1") return ReferenceId::Rho1;
    if (id == "rho2") return ReferenceId::Rho2;
    if (id == "rho3") return ReferenceId::Rho3;
    fail(ErrorCode::InvalidArgument, "unknown density id '" + std::string(id) + "' (expected rho1, rho2 or rho3)");
}

std::string_view to_string(ReferenceId id) {
    switch (id) {
        case ReferenceId::Rho1: return "rho1";
        case ReferenceId::Rho2: return "rho2";
        case ReferenceId::Rho3: return "rho3";
    }
    return "rho?";
}

ReferenceDensity::ReferenceDensity(ReferenceId id) : id_(id) {
    if (id == ReferenceId::Rho1) return;
    static const spectral::QuadratureRule rule =
        spectral::quadrature_2d(spectral::chebyshev_nodes(256, {0.0, 1.0}), spectral::chebyshev_nodes(256, {0.0, 1.0}));
    double total = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k)
        total += rule.weights(static_cast<Eigen::Index>(k)) * unnormalized(rule.nodes[k].x, rule.nodes[k].y);
    normalization_ = total;
}

double ReferenceDensity::unnormalized(double x, double y) const {
    switch (id_) {
        case ReferenceId::Rho1: return 1.0;
        case ReferenceId::Rho2: return x * y + 0.2;
        case ReferenceId::Rho3: {
            double r2 = (x - 0.5) * (x - 0.5) + (y - 0.2) * (y - 0.2);
            return std::cos(6.0 * pi * r2) / 3.0 + 0.5;
        }
    }
    return 0.0;
}

Vec2 ReferenceDensity::gradient(const Point& p) const {
    switch (id_) {
        case ReferenceId::Rho1: return {0.0, 0.0};
        case ReferenceId::Rho2: return {p.y / normalization_, p.x / normalization_};
        case ReferenceId::Rho3: {
            double dx = p.x - 0.5, dy = p.y - 0.2;
            double s = -std::sin(6.0 * pi * (dx * dx + dy * dy)) / 3.0 * 6.0 * pi * 2.0 / normalization_;
            return {s * dx, s * dy};
        }
    }
    return {};
}

ReferenceDensity reference_density(ReferenceId id) { return ReferenceDensity(id); }
ReferenceDensity reference_density(std::string_view id) { return ReferenceDensity(parse_reference_id(id)); }

struct UniformSource::State {
    std::mt19937_64 engine;
};

UniformSource::UniformSource(std::uint64_t seed) : state_(std::make_shared<State>(State{std::mt19937_64(seed)})) {}

double UniformSource::next() { return static_cast<double>(state_->engine() >> 11) * 0x1.0p-53; }

SampleSet sample_density(const ReferenceDensity& density, std::size_t n, std::uint64_t seed) {
    if (n == 0) fail(ErrorCode::EmptySample, "sample_density requires n >= 1");
    constexpr std::size_t cells = 1024;
    constexpr double width = 1.0 / cells;

    // column_cdf[i] = mass of columns < i; cond[i*(cells+1) + j] = mass of cells < j in column i
    std::vector<double> cond(cells * (cells + 1));
    std::vector<double> column_cdf(cells + 1, 0.0);
    for (std::size_t i = 0; i < cells; ++i) {
        double x = (i + 0.5) * width;
        double* c = &cond[i * (cells + 1)];
        c[0] = 0.0;
        for (std::size_t j = 0; j < cells; ++j) c[j + 1] = c[j] + density(x, (j + 0.5) * width);
        column_cdf[i + 1] = column_cdf[i] + c[cells];
    }

    auto invert = [](const double* cdf, std::size_t count, double target) {
        // first index with cdf[idx + 1] > target, then linear position within the cell
        const double* it = std::upper_bound(cdf + 1, cdf + count + 1, target);
        std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - (cdf + 1)), count - 1);
        double lo = cdf[idx], hi = cdf[idx + 1];
        double frac = hi > lo ? (target - lo) / (hi - lo) : 0.5;
        return std::pair<std::size_t, double>(idx, std::clamp(frac, 0.0, 1.0));
    };

    UniformSource uniform(seed);
    SampleSet out;
    out.seed = seed;
    out.points.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        auto [col, fx] = invert(column_cdf.data(), cells, uniform.next() * column_cdf[cells]);
        const double* c = &cond[col * (cells + 1)];
        auto [row, fy] = invert(c, cells, uniform.next() * c[cells]);
        out.points.push_back({(static_cast<double>(col) + fx) * width, (static_cast<double>(row) + fy) * width});
    }
    return out;
}

}  // namespace pdirichlet::density
