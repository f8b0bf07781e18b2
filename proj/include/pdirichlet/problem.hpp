#pragma once

#include "pdirichlet/types.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace pdirichlet {

/// Labelled points (x_i, y_i), i = 1..N.
struct ConstraintSet {
    Points points;
    std::vector<double> labels;

    std::size_t size() const { return points.size(); }
    double min_label() const;
    double max_label() const;
    double mean_label() const;

    /// N >= 1, one label per point, finite labels, pairwise distinct points.
    void validate() const;
};

/// Outcome of an iterative minimisation. `values` holds the labelling (graph solvers) or the
/// stacked patch fields (continuum solver).
struct MinimizerResult {
    Eigen::VectorXd values;
    double energy = 0.0;
    std::size_t iterations = 0;
    double residual = 0.0;
    double wall_seconds = 0.0;
    bool converged = false;
    /// Energy at the initial state and after every accepted step.
    std::vector<double> energy_history;
};

/// Relative slack used when judging "energy did not increase": two evaluations of the same
/// sum can differ by accumulated rounding of this order.
inline constexpr double kEnergyRoundoff = 1e-12;

inline bool energy_increased(double before, double after) {
    return after > before + kEnergyRoundoff * std::abs(before);
}

/// Number of accepted steps whose energy rose beyond the rounding slack.
std::size_t monotonicity_violations(const std::vector<double>& history);

}  // namespace pdirichlet
