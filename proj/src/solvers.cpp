#include "fbsde/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fbsde/errors.hpp"
#include "fbsde/regression.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

Driver pricing_driver(double rate) {
    Driver d;
    d.f = [rate](double, const Eigen::RowVectorXd&, double y, const Eigen::RowVectorXd&) {
        return -rate * y;
    };
    d.df_dy = [rate](double, const Eigen::RowVectorXd&, double, const Eigen::RowVectorXd&) {
        return -rate;
    };
    return d;
}

TrainingProtocol full_protocol(std::uint64_t seed) {
    TrainingProtocol p;
    p.iterations = 5000;
    p.validate_every = 100;
    p.select_count = 10;
    p.batch_size = 5000;
    p.seed = seed;
    return p;
}

TrainingProtocol efficiency_protocol(std::uint64_t seed) {
    TrainingProtocol p;
    p.iterations = 500;
    p.validate_every = 10;
    p.select_count = 10;
    p.batch_size = 5000;
    p.seed = seed;
    return p;
}

double loss_forward(const Eigen::VectorXd& y_terminal, const Eigen::VectorXd& payoffs) {
    if (y_terminal.size() != payoffs.size())
        throw DimensionMismatch("loss_forward: length mismatch");
    return (y_terminal - payoffs).squaredNorm() / static_cast<double>(y_terminal.size());
}

double loss_backward(const Eigen::VectorXd& y_initial) {
    if (y_initial.size() < 2) throw DimensionMismatch("loss_backward: need at least 2 paths");
    const double mean = y_initial.mean();
    return (y_initial.array() - mean).square().sum() / static_cast<double>(y_initial.size());
}

Eigen::VectorXd backward_step(const Eigen::VectorXd& y_next, const Matrix& z, const Matrix& dw,
                              double rate, double h) {
    return (y_next - z.cwiseProduct(dw).rowwise().sum()) / (1.0 + rate * h);
}

Eigen::VectorXd backward_step_generic(const Eigen::VectorXd& y_next, const Matrix& z,
                                      const Matrix& dw, const Driver& driver, double t,
                                      const Matrix& x, double h) {
    const long m = y_next.size();
    Eigen::VectorXd y(m);
    for (long j = 0; j < m; ++j) {
        const Eigen::RowVectorXd xj = x.row(j);
        const Eigen::RowVectorXd zj = z.row(j);
        const double f = driver.f(t, xj, y_next[j], zj);
        const double fy = driver.df_dy(t, xj, y_next[j], zj);
        y[j] = y_next[j] + (f * h - zj.dot(dw.row(j))) / (1.0 - fy * h);
    }
    return y;
}

std::pair<double, double> select_and_report(const std::vector<ValidationSnapshot>& history,
                                            int select_count) {
    if (history.empty()) throw NumericalError("select_and_report: empty validation history");
    if (select_count <= 0 || select_count > static_cast<int>(history.size()))
        throw NumericalError("select_and_report: bad select count");

    std::vector<std::size_t> order(history.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (history[a].loss != history[b].loss) return history[a].loss < history[b].loss;
        return history[a].iteration < history[b].iteration;
    });

    double mean = 0.0;
    for (int k = 0; k < select_count; ++k) mean += history[order[k]].price;
    mean /= select_count;
    double var = 0.0;
    for (int k = 0; k < select_count; ++k) {
        const double d = history[order[k]].price - mean;
        var += d * d;
    }
    var /= select_count;
    return {mean, std::sqrt(var)};
}

// --- shared solver machinery -------------------------------------------------

namespace {

struct EventPlan {
    int index = 0;
    std::size_t schedule_pos = 0;  // position in the contract schedule
};

struct BatchData {
    PathBatch batch;
    std::vector<Matrix> normalized;  // states scaled by 1/X0, inputs to the networks
    Eigen::VectorXd payoffs;         // terminal payoff per path
};

// Refills the workspace in place; same-shaped reuse does not allocate.
void prepare_batch(BatchData& data, const MarketConfig& market, const TimeGrid& grid,
                   const ContractSpec& contract, int num_paths, std::uint64_t seed) {
    simulate_paths_into(data.batch, market, grid, num_paths, seed);
    const int d = market.dim();
    Eigen::VectorXd inv_spot(d);
    for (int a = 0; a < d; ++a) inv_spot[a] = 1.0 / market.assets[a].spot;
    data.normalized.resize(grid.steps);
    for (int i = 0; i < grid.steps; ++i)
        data.normalized[i] = data.batch.states[i] * inv_spot.asDiagonal();
    data.payoffs.resize(num_paths);
    for (int j = 0; j < num_paths; ++j)
        data.payoffs[j] = terminal_payoff(contract, data.batch.states[grid.steps].row(j).transpose());
}

// Per-path regressor, call amount, coupon and decision filter at one event.
struct EventCrossSection {
    Eigen::VectorXd regressor;  // normalized scalar state
    Eigen::VectorXd call_values;
    Eigen::VectorXd coupons;
    std::vector<unsigned char> decision_mask;  // empty = all paths
    Optionality owner = Optionality::holder;
    bool has_coupons = false;
};

EventCrossSection event_cross_section(const ContractSpec& contract, const MarketConfig& market,
                                      int event_index, const Matrix& states) {
    const long m = states.rows();
    EventCrossSection cs;
    cs.regressor.resize(m);
    cs.call_values.resize(m);
    cs.coupons = Eigen::VectorXd::Zero(m);

    if (const auto* b = std::get_if<BermudanBasketCall>(&contract)) {
        Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(b->weights.data(),
                                                              static_cast<long>(b->weights.size()));
        const double basket0 = w.dot(market.spots());
        cs.owner = Optionality::holder;
        cs.decision_mask.assign(m, 0);
        const Eigen::VectorXd basket = states * w;
        for (long j = 0; j < m; ++j) {
            cs.regressor[j] = basket[j] / basket0;
            cs.call_values[j] = std::max(basket[j] - b->strike, 0.0);
            cs.decision_mask[static_cast<std::size_t>(j)] = cs.call_values[j] > 0.0 ? 1 : 0;
        }
        return cs;
    }

    const auto& c = std::get<CallableYieldNote>(contract);
    const auto& sched = c.schedule_indices;
    const auto it = std::find(sched.begin(), sched.end(), event_index);
    if (it == sched.end()) throw EventNotInSchedule("event index is not a schedule date");
    const auto k = static_cast<std::size_t>(it - sched.begin());
    Eigen::VectorXd init = Eigen::Map<const Eigen::VectorXd>(
        c.initial_spots.data(), static_cast<long>(c.initial_spots.size()));
    cs.owner = Optionality::issuer;
    cs.has_coupons = true;
    for (long j = 0; j < m; ++j) {
        const double p = performance(init, states.row(j).transpose());
        cs.regressor[j] = p;
        cs.call_values[j] = c.notional;
        cs.coupons[j] = c.notional * c.coupon_rates[k] * heaviside(p - c.coupon_barriers[k]);
    }
    return cs;
}

// Applies the regression decision to the propagated values; reused by both the
// recorded (training) and plain (validation) sweeps so semantics stay aligned.
struct EventOutcome {
    std::vector<unsigned char> reset;
    Eigen::VectorXd reset_values;
    Eigen::VectorXd coupons;
    bool has_coupons = false;
};

EventOutcome decide_event(const EventCrossSection& cs, const Eigen::VectorXd& continuation) {
    ExerciseState state;
    state.regressor = cs.regressor;
    state.continuation = continuation;
    state.call_value = cs.call_values;
    state.owner = cs.owner;
    state.decision_mask = cs.decision_mask;
    const RegressionFit fit = fit_quadratic(cs.regressor, continuation, cs.decision_mask);
    ExerciseResult result = apply_exercise(state, fit);
    EventOutcome outcome;
    outcome.reset = std::move(result.reset);
    outcome.reset_values = cs.call_values;
    outcome.coupons = cs.coupons;
    outcome.has_coupons = cs.has_coupons;
    return outcome;
}

// Backward sweep without a tape: used for validation snapshots.
std::pair<double, double> backward_eval(const ParameterStore& store, const SubNetworkStack& stack,
                                        const BatchData& data, const MarketConfig& market,
                                        const ContractSpec& contract,
                                        const std::vector<int>& decisions, double h) {
    const int n = static_cast<int>(data.normalized.size());
    const double discount = 1.0 / (1.0 + market.rate * h);
    Eigen::VectorXd y = data.payoffs;
    auto next_decision = decisions.rbegin();
    for (int i = n - 1; i >= 0; --i) {
        const Matrix z = net_eval_batch(store, stack.networks[i], data.normalized[i]);
        y = (y - z.cwiseProduct(data.batch.increments[i]).rowwise().sum()) * discount;
        if (next_decision != decisions.rend() && *next_decision == i) {
            const EventCrossSection cs =
                event_cross_section(contract, market, i, data.batch.states[i]);
            const EventOutcome outcome = decide_event(cs, y);
            for (long j = 0; j < y.size(); ++j)
                if (outcome.reset[static_cast<std::size_t>(j)]) y[j] = outcome.reset_values[j];
            if (outcome.has_coupons) y += outcome.coupons;
            ++next_decision;
        }
    }
    return {loss_backward(y), y.mean()};
}

// Forward sweep without a tape: validation loss for the forward method.
double forward_eval_loss(const ParameterStore& store, const SubNetworkStack& stack,
                         const BatchData& data, double rate, double h) {
    const int n = static_cast<int>(data.normalized.size());
    const long m = data.batch.num_paths;
    const double growth = 1.0 + rate * h;
    Eigen::VectorXd y = Eigen::VectorXd::Constant(m, store.value(stack.y0)(0, 0));
    for (int i = 0; i < n; ++i) {
        Matrix z;
        if (i == 0)
            z = store.value(stack.z0).replicate(m, 1);
        else
            z = net_eval_batch(store, stack.networks[i], data.normalized[i]);
        y = y * growth + z.cwiseProduct(data.batch.increments[i]).rowwise().sum();
    }
    return loss_forward(y, data.payoffs);
}

double wall_seconds(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

SolverReport forward_dnn_solve(const MarketConfig& market, const TimeGrid& grid,
                               const ContractSpec& contract, const TrainingProtocol& protocol) {
    if (has_early_exercise(contract))
        throw ContractNotSupported(
            "forward_dnn: early-exercise contracts require the backward solver");
    market.validate();
    grid.validate();
    validate_contract(contract, market.dim(), grid.steps);

    const auto start = std::chrono::steady_clock::now();
    const int d = market.dim();
    const int n = grid.steps;
    const double h = grid.step_size();
    const long m = protocol.batch_size;

    ParameterStore store;
    SubNetworkStack stack =
        make_stack(store, d, n, derive_seed(protocol.seed, 0x6e657473ULL), protocol.activation,
                   /*forward_extras=*/true);

    // Y0 starts near a crude MC estimate, Z0 near zero; both trainable.
    {
        BatchData pilot;
        prepare_batch(pilot, market, grid, contract, 1000,
                      derive_seed(protocol.seed, 0x70696c6fULL));
        const double guess = std::exp(-market.rate * grid.maturity) * pilot.payoffs.mean();
        NormalStream init_stream(derive_seed(protocol.seed, 0x79307a30ULL), 0);
        store.value(stack.y0)(0, 0) = guess * (0.8 + 0.4 * init_stream.next_uniform());
        for (int a = 0; a < d; ++a)
            store.value(stack.z0)(0, a) = 0.2 * init_stream.next_uniform() - 0.1;
    }

    AdamState adam(store, protocol.learning_rate);
    SolverReport report;
    report.seed = protocol.seed;
    report.loss_history.reserve(protocol.iterations);

    BatchData validation;
    prepare_batch(validation, market, grid, contract, protocol.batch_size,
                  derive_seed(protocol.seed, 0x76616c69ULL));

    BatchData data;
    Tape tape(store);
    for (int it = 1; it <= protocol.iterations; ++it) {
        prepare_batch(data, market, grid, contract, protocol.batch_size,
                      derive_seed(protocol.seed, static_cast<std::uint64_t>(it)));
        tape.reset();
        Var y = tape.broadcast(tape.param(stack.y0), static_cast<int>(m));
        for (int i = 0; i < n; ++i) {
            Var z = i == 0 ? tape.broadcast(tape.param(stack.z0), static_cast<int>(m))
                           : tape.net_forward(stack.networks[i], tape.constant(data.normalized[i]));
            Var zdw = tape.row_sum(tape.mul(z, tape.constant(data.batch.increments[i])));
            y = tape.add(tape.scale(y, 1.0 + market.rate * h), zdw);
        }
        Var loss = tape.mean_all(tape.square(tape.sub(y, tape.constant(data.payoffs))));
        report.loss_history.push_back(tape.scalar(loss));

        compute_gradients(tape, loss);
        adam_update(store, adam);

        if (it % protocol.validate_every == 0) {
            ValidationSnapshot snap;
            snap.iteration = it;
            snap.loss = forward_eval_loss(store, stack, validation, market.rate, h);
            snap.price = store.value(stack.y0)(0, 0);
            report.validation_history.push_back(snap);
        }
    }

    const auto [price, dispersion] = select_and_report(report.validation_history,
                                                       protocol.select_count);
    report.price = price;
    report.dispersion = dispersion;
    report.wall_clock_seconds = wall_seconds(start);
    return report;
}

SolverReport lsq_backward_dnn_solve(const MarketConfig& market, const TimeGrid& grid,
                                    const ContractSpec& contract,
                                    const TrainingProtocol& protocol) {
    market.validate();
    grid.validate();
    validate_contract(contract, market.dim(), grid.steps);

    const auto start = std::chrono::steady_clock::now();
    const int d = market.dim();
    const int n = grid.steps;
    const double h = grid.step_size();
    const long m = protocol.batch_size;
    const double discount = 1.0 / (1.0 + market.rate * h);
    const std::vector<int> decisions = decision_indices(contract, n);

    ParameterStore store;
    SubNetworkStack stack =
        make_stack(store, d, n, derive_seed(protocol.seed, 0x6e657473ULL), protocol.activation,
                   /*forward_extras=*/false);

    AdamState adam(store, protocol.learning_rate);
    SolverReport report;
    report.seed = protocol.seed;
    report.loss_history.reserve(protocol.iterations);

    BatchData validation;
    prepare_batch(validation, market, grid, contract, protocol.batch_size,
                  derive_seed(protocol.seed, 0x76616c69ULL));

    BatchData data;
    Tape tape(store);
    for (int it = 1; it <= protocol.iterations; ++it) {
        prepare_batch(data, market, grid, contract, protocol.batch_size,
                      derive_seed(protocol.seed, static_cast<std::uint64_t>(it)));
        tape.reset();
        Var y = tape.constant(data.payoffs);
        auto next_decision = decisions.rbegin();
        for (int i = n - 1; i >= 0; --i) {
            Var z = tape.net_forward(stack.networks[i], tape.constant(data.normalized[i]));
            Var zdw = tape.row_sum(tape.mul(z, tape.constant(data.batch.increments[i])));
            y = tape.scale(tape.sub(y, zdw), discount);
            if (next_decision != decisions.rend() && *next_decision == i) {
                // Exercise decision frozen for this iteration: gradient flows
                // through the kept branch only.
                const EventCrossSection cs =
                    event_cross_section(contract, market, i, data.batch.states[i]);
                const EventOutcome outcome = decide_event(cs, tape.value(y).col(0));
                y = tape.select(outcome.reset, tape.constant(outcome.reset_values), y);
                if (outcome.has_coupons) y = tape.add(y, tape.constant(outcome.coupons));
                ++next_decision;
            }
        }
        Var mean = tape.mean_all(y);
        Var dev = tape.sub(y, tape.broadcast(mean, static_cast<int>(m)));
        Var loss = tape.mean_all(tape.square(dev));
        report.loss_history.push_back(tape.scalar(loss));

        compute_gradients(tape, loss);
        adam_update(store, adam);

        if (it % protocol.validate_every == 0) {
            const auto [val_loss, val_price] =
                backward_eval(store, stack, validation, market, contract, decisions, h);
            report.validation_history.push_back({it, val_loss, val_price});
        }
    }

    const auto [price, dispersion] = select_and_report(report.validation_history,
                                                       protocol.select_count);
    report.price = price;
    report.dispersion = dispersion;
    report.wall_clock_seconds = wall_seconds(start);
    return report;
}

}  // namespace fbsde
