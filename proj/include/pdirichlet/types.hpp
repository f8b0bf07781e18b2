#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

namespace pdirichlet {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

using Points = std::vector<Point>;

/// Axis-aligned rectangle [x0,x1] x [y0,y1].
struct Box {
    double x0 = 0.0;
    double x1 = 1.0;
    double y0 = 0.0;
    double y1 = 1.0;

    bool contains(const Point& p, double slack = 0.0) const {
        return p.x >= x0 - slack && p.x <= x1 + slack && p.y >= y0 - slack && p.y <= y1 + slack;
    }
    double area() const { return (x1 - x0) * (y1 - y0); }
};

inline constexpr Box kUnitSquare{0.0, 1.0, 0.0, 1.0};

/// Interior evaluation window used for all error norms.
inline constexpr Box kEvaluationWindow{0.01, 0.99, 0.01, 0.99};

}  // namespace pdirichlet
