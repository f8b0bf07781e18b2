#include "pdirichlet/density.hpp"
#include "pdirichlet/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

namespace pdirichlet::density {

using std::numbers::pi;

WeightProfile indicator_profile() {
    return {"indicator", [](double r) { return r <= 1.0 ? 1.0 : 0.0; }, 1.0};
}

WeightProfile gaussian_profile() {
    return {"gaussian", [](double r) { return std::exp(-0.5 * r * r) / (2.0 * pi); },
            std::numeric_limits<double>::infinity()};
}

WeightProfile epanechnikov_profile() {
    return {"epanechnikov", [](double r) { return r <= 1.0 ? 1.0 - r * r : 0.0; }, 1.0};
}

WeightProfile parse_profile(std::string_view name) {
    if (name == "indicator") return indicator_profile();
    if (name == "gaussian") return gaussian_profile();
    if (name == "epanechnikov") return epanechnikov_profile();
    fail(ErrorCode::InvalidArgument, "unknown weight profile '" + std::string(name) + "'");
}

namespace {

using Rule = boost::math::quadrature::gauss_kronrod<double, 61>;

double integrate(const std::function<double(double)>& f, double a, double b) {
    return Rule::integrate(f, a, b, 15, 1e-14);
}

// int over the unit sphere S^{d-1} of |theta . e1|^p
double angular_factor(double p, int d) {
    if (d == 1) return 2.0;
    if (d == 2) return 4.0 * integrate([p](double t) { return std::pow(std::cos(t), p); }, 0.0, pi / 2.0);
    return 2.0 * std::pow(pi, 0.5 * (d - 1)) * std::tgamma(0.5 * (p + 1.0)) / std::tgamma(0.5 * (p + d));
}

}  // namespace

double sigma_eta(const WeightProfile& profile, double p, int d) {
    if (!(p >= 1.0)) {
        std::ostringstream msg;
        msg << "sigma_eta requires p >= 1, got " << p;
        fail(ErrorCode::InvalidArgument, msg.str());
    }
    if (d < 1) fail(ErrorCode::InvalidArgument, "sigma_eta requires d >= 1");
    const double power = p + d - 1.0;
    auto radial = [&](double r) { return profile(r) * std::pow(r, power); };

    double value = 0.0;
    if (std::isfinite(profile.support)) {
        value = integrate(radial, 0.0, profile.support);
    } else {
        double upper = 1.0;
        value = integrate(radial, 0.0, upper);
        bool converged = false;
        for (int k = 0; k < 40 && !converged; ++k) {
            double tail = integrate(radial, upper, 2.0 * upper);
            upper *= 2.0;
            value += tail;
            converged = std::abs(tail) <= 1e-15 * std::abs(value) || (value == 0.0 && tail == 0.0 && k > 4);
        }
        if (!converged || !std::isfinite(value)) {
            std::ostringstream msg;
            msg << "sigma_eta radial integral did not settle by radius " << upper << " for p = " << p;
            fail(ErrorCode::Divergence, msg.str());
        }
    }
    return angular_factor(p, d) * value;
}

}  // namespace pdirichlet::density
