#include "fbsde/regression.hpp"

#include <set>

#include "fbsde/errors.hpp"

namespace fbsde {

RegressionFit fit_quadratic(const Eigen::VectorXd& states, const Eigen::VectorXd& values,
                            const std::vector<unsigned char>& mask) {
    const long m = states.size();
    if (values.size() != m) throw DimensionMismatch("fit_quadratic: states/values length mismatch");
    if (!mask.empty() && static_cast<long>(mask.size()) != m)
        throw DimensionMismatch("fit_quadratic: mask length mismatch");

    std::vector<long> rows;
    rows.reserve(m);
    for (long i = 0; i < m; ++i)
        if (mask.empty() || mask[i]) rows.push_back(i);

    const long n = static_cast<long>(rows.size());
    if (n < 3) throw InsufficientPoints("fit_quadratic: need at least 3 included points");

    std::set<double> distinct;
    for (long i : rows) {
        distinct.insert(states[i]);
        if (distinct.size() >= 3) break;
    }
    if (distinct.size() < 3)
        throw DegenerateDesign("fit_quadratic: need at least 3 distinct states");

    Eigen::MatrixXd design(n, 3);
    Eigen::VectorXd target(n);
    for (long k = 0; k < n; ++k) {
        const double s = states[rows[k]];
        design(k, 0) = 1.0;
        design(k, 1) = s;
        design(k, 2) = s * s;
        target[k] = values[rows[k]];
    }

    const Eigen::Vector3d coef = design.householderQr().solve(target);
    const Eigen::VectorXd residual = target - design * coef;

    RegressionFit fit;
    fit.a = coef[0];
    fit.b = coef[1];
    fit.c = coef[2];
    fit.num_points = static_cast<int>(n);
    fit.residual_variance = n > 3 ? residual.squaredNorm() / static_cast<double>(n - 3) : 0.0;
    return fit;
}

ExerciseResult apply_exercise(const ExerciseState& state, const RegressionFit& fit) {
    const long m = state.continuation.size();
    if (state.regressor.size() != m || state.call_value.size() != m)
        throw DimensionMismatch("apply_exercise: field length mismatch");
    if (!state.decision_mask.empty() && static_cast<long>(state.decision_mask.size()) != m)
        throw DimensionMismatch("apply_exercise: decision mask length mismatch");

    ExerciseResult result;
    result.values = state.continuation;
    result.reset.assign(m, 0);
    for (long j = 0; j < m; ++j) {
        if (!state.decision_mask.empty() && !state.decision_mask[j]) continue;
        const double expected = conditional_expectation(fit, state.regressor[j]);
        const double call = state.call_value[j];
        const bool reset = state.owner == Optionality::holder ? expected < call : expected > call;
        if (reset) {
            result.values[j] = call;
            result.reset[j] = 1;
        }
    }
    return result;
}

}  // namespace fbsde
