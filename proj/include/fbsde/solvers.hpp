#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "fbsde/contracts.hpp"
#include "fbsde/market.hpp"
#include "fbsde/neural.hpp"

namespace fbsde {

// Driver of the backward equation. For risk-neutral pricing f = -rY.
struct Driver {
    std::function<double(double t, const Eigen::RowVectorXd& x, double y,
                         const Eigen::RowVectorXd& z)>
        f;
    std::function<double(double t, const Eigen::RowVectorXd& x, double y,
                         const Eigen::RowVectorXd& z)>
        df_dy;
};

Driver pricing_driver(double rate);

struct TrainingProtocol {
    int iterations = 5000;
    int validate_every = 100;
    int select_count = 10;
    int batch_size = 5000;
    std::uint64_t seed = 0;
    Activation activation = Activation::tanh;
    double learning_rate = 5e-3;
};

TrainingProtocol full_protocol(std::uint64_t seed = 0);
TrainingProtocol efficiency_protocol(std::uint64_t seed = 0);

struct ValidationSnapshot {
    int iteration = 0;
    double loss = 0.0;
    double price = 0.0;
};

struct SolverReport {
    double price = 0.0;
    double dispersion = 0.0;  // std dev of the selected validation prices
    std::vector<double> loss_history;
    std::vector<ValidationSnapshot> validation_history;
    double wall_clock_seconds = 0.0;
    std::uint64_t seed = 0;
};

// Mean over paths of (Y_N - g)^2.
double loss_forward(const Eigen::VectorXd& y_terminal, const Eigen::VectorXd& payoffs);
// Mean squared deviation from the cross-path mean (population variance).
double loss_backward(const Eigen::VectorXd& y_initial);

// One step of the exact discounted recursion Y_i = (Y_{i+1} - Z.dW) / (1 + r h).
Eigen::VectorXd backward_step(const Eigen::VectorXd& y_next, const Matrix& z, const Matrix& dw,
                              double rate, double h);
// First-order Taylor form for a general driver; reduces to backward_step for
// the pricing driver.
Eigen::VectorXd backward_step_generic(const Eigen::VectorXd& y_next, const Matrix& z,
                                      const Matrix& dw, const Driver& driver, double t,
                                      const Matrix& x, double h);

// Snapshots with the smallest validation losses (ties broken by earliest
// iteration); returns their mean price and standard deviation.
std::pair<double, double> select_and_report(const std::vector<ValidationSnapshot>& history,
                                            int select_count);

// Forward solver: propagates Y from trainable (Y0, Z0) to maturity and
// minimizes the terminal mismatch. European contracts only.
SolverReport forward_dnn_solve(const MarketConfig& market, const TimeGrid& grid,
                               const ContractSpec& contract, const TrainingProtocol& protocol);

// Backward solver with least-squares exercise handling: sets Y_N to the
// terminal payoff, propagates to t=0 and minimizes the cross-path variance of
// Y_0; exercise/coupon events are applied through regression during the
// sweep. European contracts reduce to the plain backward method.
SolverReport lsq_backward_dnn_solve(const MarketConfig& market, const TimeGrid& grid,
                                    const ContractSpec& contract,
                                    const TrainingProtocol& protocol);

}  // namespace fbsde
