#include "pdirichlet/problem.hpp"

#include "pdirichlet/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pdirichlet {

double ConstraintSet::min_label() const { return *std::min_element(labels.begin(), labels.end()); }
double ConstraintSet::max_label() const { return *std::max_element(labels.begin(), labels.end()); }
double ConstraintSet::mean_label() const {
    return std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(labels.size());
}

void ConstraintSet::validate() const {
    if (points.empty()) fail(ErrorCode::InvalidArgument, "at least one labelled point is required");
    if (points.size() != labels.size()) {
        std::ostringstream msg;
        msg << "constraint set has " << points.size() << " points but " << labels.size() << " labels";
        fail(ErrorCode::Shape, msg.str());
    }
    for (double y : labels)
        if (!std::isfinite(y)) fail(ErrorCode::InvalidArgument, "constraint labels must be finite");
    Points sorted = points;
    std::sort(sorted.begin(), sorted.end(), [](const Point& a, const Point& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    for (std::size_t k = 1; k < sorted.size(); ++k)
        if (sorted[k] == sorted[k - 1]) {
            std::ostringstream msg;
            msg << "labelled point (" << sorted[k].x << ", " << sorted[k].y << ") appears more than once";
            fail(ErrorCode::InvalidArgument, msg.str());
        }
}

std::size_t monotonicity_violations(const std::vector<double>& history) {
    std::size_t count = 0;
    for (std::size_t k = 1; k < history.size(); ++k)
        if (energy_increased(history[k - 1], history[k])) ++count;
    return count;
}

}  // namespace pdirichlet
