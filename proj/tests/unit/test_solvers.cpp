#include <doctest.h>

#include <cmath>

#include "fbsde/errors.hpp"
#include "fbsde/harness.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/solvers.hpp"

using namespace fbsde;

namespace {

// small instances keep the solver tests fast; convergence quality is covered
// by the acceptance suite
TrainingProtocol tiny_protocol(std::uint64_t seed, int iterations = 40) {
    TrainingProtocol p;
    p.iterations = iterations;
    p.validate_every = 10;
    p.select_count = 2;
    p.batch_size = 256;
    p.seed = seed;
    return p;
}

TimeGrid small_grid(int steps, std::vector<int> events) {
    TimeGrid grid;
    grid.maturity = 1.0;
    grid.steps = steps;
    grid.event_indices = std::move(events);
    return grid;
}

}  // namespace

TEST_SUITE_BEGIN("solvers");

TEST_CASE("forward loss is the mean squared terminal mismatch") {
    Eigen::VectorXd y(2), g(2);
    y << 1.0, 2.0;
    CHECK(loss_forward(y, y) == 0.0);
    g << 0.0, 3.0;  // differences (1, -1)
    CHECK(loss_forward(y, g) == doctest::Approx(1.0));
    Eigen::VectorXd y4(4), g4(4);
    y4 << 2.0, 0.0, 0.0, 0.0;
    g4.setZero();
    CHECK(loss_forward(y4, g4) == doctest::Approx(1.0));
}

TEST_CASE("backward loss is the population variance") {
    CHECK(loss_backward(Eigen::VectorXd::Constant(5, 3.3)) == 0.0);
    Eigen::VectorXd two(2);
    two << 1.0, 3.0;
    CHECK(loss_backward(two) == doctest::Approx(1.0));
    Eigen::VectorXd four(4);
    four << 0.0, 0.0, 0.0, 4.0;  // mean 1, squared deviations (1,1,1,9)
    CHECK(loss_backward(four) == doctest::Approx(3.0));
}

TEST_CASE("backward step arithmetic") {
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(3, 5.0);
    const Matrix z = Matrix::Zero(3, 2), dw = Matrix::Constant(3, 2, 0.3);
    CHECK((backward_step(y, z, dw, 0.0, 0.01) - y).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::VectorXd y1 = Eigen::VectorXd::Constant(1, 10.0);
    const Matrix z1 = Matrix::Constant(1, 1, 2.0), dw1 = Matrix::Constant(1, 1, 0.1);
    CHECK(backward_step(y1, z1, dw1, 0.01, 0.01)[0] ==
          doctest::Approx((10.0 - 0.2) / 1.0001).epsilon(1e-14));
}

TEST_CASE("pricing driver reduces the general step to the exact one") {
    NormalStream stream(3, 0);
    const Driver driver = pricing_driver(0.01);
    for (int k = 0; k < 200; ++k) {
        Eigen::VectorXd y(4);
        Matrix z(4, 3), dw(4, 3), x(4, 3);
        for (long i = 0; i < y.size(); ++i) y[i] = 5.0 + stream.next();
        for (long i = 0; i < z.size(); ++i) z.data()[i] = stream.next();
        for (long i = 0; i < dw.size(); ++i) dw.data()[i] = 0.1 * stream.next();
        for (long i = 0; i < x.size(); ++i) x.data()[i] = 100.0 + stream.next();
        const Eigen::VectorXd exact = backward_step(y, z, dw, 0.01, 0.01);
        const Eigen::VectorXd general = backward_step_generic(y, z, dw, driver, 0.5, x, 0.01);
        CHECK((exact - general).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("snapshot selection picks the smallest losses") {
    std::vector<ValidationSnapshot> history;
    NormalStream stream(1, 0);
    for (int i = 0; i < 50; ++i)
        history.push_back({(i + 1) * 100, stream.next_uniform(), 5.0 + 0.1 * stream.next()});
    const auto [price, dispersion] = select_and_report(history, 10);

    std::vector<ValidationSnapshot> sorted = history;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.loss < b.loss; });
    double mean = 0.0;
    for (int k = 0; k < 10; ++k) mean += sorted[k].price;
    mean /= 10.0;
    CHECK(price == doctest::Approx(mean).epsilon(1e-12));
    CHECK(dispersion > 0.0);
}

TEST_CASE("snapshot selection edge cases") {
    std::vector<ValidationSnapshot> same(8, ValidationSnapshot{100, 0.5, 4.2});
    const auto [price, dispersion] = select_and_report(same, 3);
    CHECK(price == doctest::Approx(4.2));
    CHECK(dispersion == doctest::Approx(0.0).scale(1.0));

    std::vector<ValidationSnapshot> all = {{100, 3.0, 1.0}, {200, 1.0, 2.0}, {300, 2.0, 6.0}};
    const auto [p2, d2] = select_and_report(all, 3);
    CHECK(p2 == doctest::Approx(3.0));
    CHECK(d2 == doctest::Approx(std::sqrt((4.0 + 1.0 + 9.0) / 3.0)));

    // ties broken by earliest iteration
    std::vector<ValidationSnapshot> tied = {{100, 1.0, 10.0}, {200, 1.0, 20.0}};
    CHECK(select_and_report(tied, 1).first == doctest::Approx(10.0));
}

TEST_CASE("forward solver rejects early-exercise contracts") {
    const MarketConfig market = reference_market(1);
    const TimeGrid grid = small_grid(20, {5, 10, 20});
    BermudanBasketCall berm{{1.0}, 100.0, {5, 10, 20}};
    CHECK_THROWS_AS(forward_dnn_solve(market, grid, berm, tiny_protocol(1)),
                    ContractNotSupported);
    CallableYieldNote note{1.0, {0.05, 0.05}, {0.7, 0.7}, 0.5, 1.0, {10, 20}, {100.0}};
    CHECK_THROWS_AS(forward_dnn_solve(market, grid, note, tiny_protocol(1)),
                    ContractNotSupported);
}

TEST_CASE("zero-vol forward solve converges to the discounted payoff") {
    MarketConfig market;
    market.rate = 0.01;
    market.assets = {{100.0, 0.0, 0.0}};
    market.correlation = Eigen::MatrixXd::Identity(1, 1);
    const TimeGrid grid = small_grid(10, {10});
    const EuropeanBasketCall contract{{1.0}, 80.0};

    // deterministic drift path then discount
    double x = 100.0;
    const double h = grid.step_size();
    for (int i = 0; i < grid.steps; ++i) x += market.rate * x * h;
    double target = std::max(x - 80.0, 0.0);
    for (int i = 0; i < grid.steps; ++i) target /= 1.0 + market.rate * h;

    TrainingProtocol p = tiny_protocol(3, 4000);
    p.batch_size = 16;
    p.validate_every = 100;
    p.select_count = 5;
    const SolverReport report = forward_dnn_solve(market, grid, contract, p);
    CHECK(report.price == doctest::Approx(target).epsilon(2e-3));
    CHECK(report.loss_history.back() < 1e-4);
}

TEST_CASE("bermudan without decision dates reproduces the european run bit for bit") {
    const MarketConfig market = reference_market(1);
    const TimeGrid grid = small_grid(20, {20});
    const EuropeanBasketCall euro{{1.0}, 100.0};
    const BermudanBasketCall terminal_only{{1.0}, 100.0, {20}};
    const BermudanBasketCall no_dates{{1.0}, 100.0, {}};

    const SolverReport a = lsq_backward_dnn_solve(market, grid, euro, tiny_protocol(7));
    const SolverReport b = lsq_backward_dnn_solve(market, grid, terminal_only, tiny_protocol(7));
    const SolverReport c = lsq_backward_dnn_solve(market, grid, no_dates, tiny_protocol(7));
    CHECK(a.price == b.price);
    CHECK(a.price == c.price);
    CHECK(a.loss_history == b.loss_history);
    CHECK(a.validation_history.size() == b.validation_history.size());
    for (std::size_t i = 0; i < a.validation_history.size(); ++i) {
        CHECK(a.validation_history[i].loss == b.validation_history[i].loss);
        CHECK(a.validation_history[i].price == c.validation_history[i].price);
    }
}

TEST_CASE("same seed reproduces the full report") {
    const MarketConfig market = reference_market(1);
    const TimeGrid grid = small_grid(10, {10});
    const ContractSpec euro = reference_european(1);
    const SolverReport a = lsq_backward_dnn_solve(market, grid, euro, tiny_protocol(21));
    const SolverReport b = lsq_backward_dnn_solve(market, grid, euro, tiny_protocol(21));
    CHECK(a.price == b.price);
    CHECK(a.dispersion == b.dispersion);
    CHECK(a.loss_history == b.loss_history);
}

TEST_CASE("backward solver handles exercise events (smoke)") {
    const MarketConfig market = reference_market(1);
    const TimeGrid grid = small_grid(12, {3, 6, 9, 12});
    BermudanBasketCall berm{{1.0}, 100.0, {3, 6, 9, 12}};
    const SolverReport report = lsq_backward_dnn_solve(market, grid, berm, tiny_protocol(5));
    CHECK(std::isfinite(report.price));
    CHECK(report.price > 0.0);
    CHECK(report.validation_history.size() == 4);
}

TEST_SUITE_END();
