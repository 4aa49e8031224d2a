#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fbsde/contracts.hpp"

namespace fbsde {

// Ordinary least squares on the basis {1, s, s^2}.
struct RegressionFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double residual_variance = 0.0;  // eta^2 estimate
    int num_points = 0;
};

// OLS over the masked paths, solved via Householder QR of the design matrix
// (not normal equations). Throws InsufficientPoints (< 3 included points) or
// DegenerateDesign (< 3 distinct states among them). An empty mask includes
// every path.
RegressionFit fit_quadratic(const Eigen::VectorXd& states, const Eigen::VectorXd& values,
                            const std::vector<unsigned char>& mask = {});

inline double conditional_expectation(const RegressionFit& fit, double s) {
    return fit.a + fit.b * s + fit.c * s * s;
}

struct ExerciseState {
    Eigen::VectorXd regressor;     // per-path scalar s
    Eigen::VectorXd continuation;  // per-path propagated value Y
    Eigen::VectorXd call_value;    // per-path immediate exercise / call amount
    Optionality owner = Optionality::holder;
    // Paths eligible for a decision (in-the-money filter for holder
    // contracts). Empty means every path is eligible.
    std::vector<unsigned char> decision_mask;
};

struct ExerciseResult {
    Eigen::VectorXd values;            // updated per-path values
    std::vector<unsigned char> reset;  // which paths were reset to call_value
};

// Decision uses the regressed expectation, the reset uses the actual call
// value; non-reset paths keep their propagated continuation. Holder resets
// when E[Y|s] < call value, issuer when E[Y|s] > call value.
ExerciseResult apply_exercise(const ExerciseState& state, const RegressionFit& fit);

}  // namespace fbsde
