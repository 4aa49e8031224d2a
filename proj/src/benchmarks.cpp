#include "fbsde/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fbsde/errors.hpp"
#include "fbsde/regression.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double black_scholes_call(double spot, double strike, double rate, double dividend, double vol,
                          double maturity) {
    if (!(spot > 0.0 && strike > 0.0 && vol > 0.0 && maturity > 0.0))
        throw ConfigError("black_scholes_call: spot, strike, vol, maturity must be > 0");
    const double sig_sqrt_t = vol * std::sqrt(maturity);
    const double d1 =
        (std::log(spot / strike) + (rate - dividend + 0.5 * vol * vol) * maturity) / sig_sqrt_t;
    const double d2 = d1 - sig_sqrt_t;
    return std::exp(-dividend * maturity) * spot * norm_cdf(d1) -
           std::exp(-rate * maturity) * strike * norm_cdf(d2);
}

double black_scholes_delta(double spot, double strike, double rate, double dividend, double vol,
                           double maturity) {
    const double sig_sqrt_t = vol * std::sqrt(maturity);
    const double d1 =
        (std::log(spot / strike) + (rate - dividend + 0.5 * vol * vol) * maturity) / sig_sqrt_t;
    return std::exp(-dividend * maturity) * norm_cdf(d1);
}

// --- least-square Monte Carlo ------------------------------------------------

namespace {

struct EventScalars {
    // Raw scalar statistic per path at each decision date: basket value for
    // basket calls, worst-of performance for CYNs.
    std::vector<Eigen::VectorXd> statistic;
    Eigen::VectorXd terminal_payoff;
};

EventScalars simulate_event_scalars(const MarketConfig& market, const TimeGrid& grid,
                                    const ContractSpec& contract,
                                    const std::vector<int>& decisions, long num_paths,
                                    std::uint64_t seed) {
    const int d = market.dim();
    const int n = grid.steps;
    const double h = grid.step_size();
    const double sqrt_h = std::sqrt(h);
    const Eigen::MatrixXd chol = cholesky_factor(market.correlation);

    Eigen::VectorXd drift(d), vol(d), spot(d);
    for (int a = 0; a < d; ++a) {
        drift[a] = market.rate - market.assets[a].dividend;
        vol[a] = market.assets[a].vol;
        spot[a] = market.assets[a].spot;
    }

    const bool is_cyn = std::holds_alternative<CallableYieldNote>(contract);
    const std::vector<double>* weights = nullptr;
    if (const auto* e = std::get_if<EuropeanBasketCall>(&contract)) weights = &e->weights;
    if (const auto* b = std::get_if<BermudanBasketCall>(&contract)) weights = &b->weights;

    EventScalars out;
    out.statistic.resize(decisions.size());
    for (auto& v : out.statistic) v.resize(num_paths);
    out.terminal_payoff.resize(num_paths);

#pragma omp parallel for schedule(static)
    for (long j = 0; j < num_paths; ++j) {
        NormalStream stream(seed, static_cast<std::uint64_t>(j));
        Eigen::VectorXd xi(d), dw(d), x = spot;
        std::size_t next_event = 0;
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < d; ++a) xi[a] = stream.next();
            dw.noalias() = chol.template triangularView<Eigen::Lower>() * xi;
            for (int a = 0; a < d; ++a)
                x[a] += drift[a] * x[a] * h + vol[a] * x[a] * dw[a] * sqrt_h;
            if (next_event < decisions.size() && decisions[next_event] == i + 1) {
                double s;
                if (is_cyn) {
                    s = x[0] / spot[0];
                    for (int a = 1; a < d; ++a) s = std::min(s, x[a] / spot[a]);
                } else {
                    s = 0.0;
                    for (int a = 0; a < d; ++a) s += (*weights)[a] * x[a];
                }
                out.statistic[next_event][j] = s;
                ++next_event;
            }
        }
        out.terminal_payoff[j] = terminal_payoff(contract, x);
    }
    return out;
}

}  // namespace

McResult lsq_monte_carlo(const MarketConfig& market, const TimeGrid& grid,
                         const ContractSpec& contract, long num_paths, std::uint64_t seed) {
    market.validate();
    grid.validate();
    validate_contract(contract, market.dim(), grid.steps);
    if (num_paths < 2) throw ConfigError("mc_paths: must be at least 2");

    const int n = grid.steps;
    const std::vector<int> decisions = decision_indices(contract, n);
    const EventScalars scalars =
        simulate_event_scalars(market, grid, contract, decisions, num_paths, seed);

    // Backward induction on realized cashflows (cashflow-timing formulation):
    // pv holds the value at the current event date of all cashflows after it.
    Eigen::VectorXd pv = scalars.terminal_payoff;
    double t_prev = grid.maturity;

    const auto* berm = std::get_if<BermudanBasketCall>(&contract);
    const auto* cyn = std::get_if<CallableYieldNote>(&contract);

    for (std::size_t k = decisions.size(); k-- > 0;) {
        const double t_k = grid.time_at(decisions[k]);
        pv *= std::exp(-market.rate * (t_prev - t_k));
        const Eigen::VectorXd& stat = scalars.statistic[k];

        ExerciseState state;
        state.continuation = pv;
        if (berm != nullptr) {
            const double basket0 =
                Eigen::Map<const Eigen::VectorXd>(berm->weights.data(),
                                                  static_cast<long>(berm->weights.size()))
                    .dot(market.spots());
            state.regressor = stat / basket0;
            state.call_value = (stat.array() - berm->strike).cwiseMax(0.0);
            state.owner = Optionality::holder;
            state.decision_mask.assign(static_cast<std::size_t>(num_paths), 0);
            for (long j = 0; j < num_paths; ++j)
                state.decision_mask[static_cast<std::size_t>(j)] =
                    state.call_value[j] > 0.0 ? 1 : 0;
        } else {
            state.regressor = stat;
            state.call_value = Eigen::VectorXd::Constant(num_paths, cyn->notional);
            state.owner = Optionality::issuer;
        }

        const RegressionFit fit = fit_quadratic(state.regressor, pv, state.decision_mask);
        pv = apply_exercise(state, fit).values;

        if (cyn != nullptr) {
            const std::size_t pos = static_cast<std::size_t>(
                std::find(cyn->schedule_indices.begin(), cyn->schedule_indices.end(),
                          decisions[k]) -
                cyn->schedule_indices.begin());
            for (long j = 0; j < num_paths; ++j)
                pv[j] += cyn->notional * cyn->coupon_rates[pos] *
                         heaviside(stat[j] - cyn->coupon_barriers[pos]);
        }
        t_prev = t_k;
    }

    pv *= std::exp(-market.rate * t_prev);

    McResult result;
    result.price = pv.mean();
    const double var =
        (pv.array() - result.price).square().sum() / static_cast<double>(num_paths - 1);
    result.standard_error = std::sqrt(var / static_cast<double>(num_paths));
    return result;
}

// --- Crank-Nicolson PDE ------------------------------------------------------

namespace {

// Tridiagonal solve (Thomas algorithm); lower/diag/upper are the interior rows.
void thomas_solve(std::vector<double>& lower, std::vector<double>& diag,
                  std::vector<double>& upper, std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

}  // namespace

double crank_nicolson_1d(const MarketConfig& market, const TimeGrid& grid,
                         const ContractSpec& contract, const PdeGrid1D& pde) {
    market.validate();
    grid.validate();
    if (market.dim() != 1)
        throw ContractNotSupported("pde_1d: single underlier only");
    validate_contract(contract, 1, grid.steps);
    if (pde.num_nodes < 5) throw ConfigError("pde.num_nodes: must be at least 5");
    if (pde.steps_per_interval < 1) throw ConfigError("pde.steps_per_interval: must be >= 1");
    if (pde.rannacher_steps < 0) throw ConfigError("pde.rannacher_steps: must be >= 0");

    const double spot = market.assets[0].spot;
    const double sigma = market.assets[0].vol;
    const double q = market.assets[0].dividend;
    const double r = market.rate;
    const double T = grid.maturity;

    const int nodes = pde.num_nodes;
    const double half_width = pde.half_width_stds * sigma * std::sqrt(T);
    const double x_min = std::log(spot) - half_width;
    const double dx = 2.0 * half_width / (nodes - 1);
    if (std::log(spot) < x_min || std::log(spot) > x_min + (nodes - 1) * dx)
        throw SpotOutsideGrid("pde: spot outside the space grid");

    std::vector<double> level(nodes);
    for (int j = 0; j < nodes; ++j) level[j] = std::exp(x_min + j * dx);

    // Spatial operator L[V] = a V_x + b V_xx - r V, central differences.
    const double a = r - q - 0.5 * sigma * sigma;
    const double b = 0.5 * sigma * sigma;
    const double lo = b / (dx * dx) - a / (2.0 * dx);
    const double di = -2.0 * b / (dx * dx) - r;
    const double up = b / (dx * dx) + a / (2.0 * dx);

    std::vector<double> v(nodes);
    Eigen::VectorXd one_level(1);
    for (int j = 0; j < nodes; ++j) {
        one_level[0] = level[j];
        v[j] = terminal_payoff(contract, one_level);
    }

    const std::vector<int> decisions = decision_indices(contract, grid.steps);
    const auto* berm = std::get_if<BermudanBasketCall>(&contract);
    const auto* cyn = std::get_if<CallableYieldNote>(&contract);

    const int interior = nodes - 2;
    std::vector<double> tl(interior), td(interior), tu(interior), rhs(interior);

    // One theta-step of size dt. Linearity (V_xx = 0) boundaries are folded
    // into the first and last interior rows.
    const auto step = [&](double dt, double theta) {
        for (int j = 0; j < interior; ++j) {
            tl[j] = -dt * theta * lo;
            td[j] = 1.0 - dt * theta * di;
            tu[j] = -dt * theta * up;
            const int g = j + 1;  // global node
            const double explicit_part =
                lo * v[g - 1] + di * v[g] + up * v[g + 1];
            rhs[j] = v[g] + dt * (1.0 - theta) * explicit_part;
        }
        // V_0 = 2 V_1 - V_2 and V_{n-1} = 2 V_{n-2} - V_{n-3}
        td[0] += 2.0 * tl[0];
        tu[0] -= tl[0];
        tl[0] = 0.0;
        td[interior - 1] += 2.0 * tu[interior - 1];
        tl[interior - 1] -= tu[interior - 1];
        tu[interior - 1] = 0.0;
        thomas_solve(tl, td, tu, rhs);
        for (int j = 0; j < interior; ++j) v[j + 1] = rhs[j];
        v[0] = 2.0 * v[1] - v[2];
        v[nodes - 1] = 2.0 * v[nodes - 2] - v[nodes - 3];
    };

    const double h = grid.step_size();
    const double sub_dt = h / pde.steps_per_interval;
    int implicit_quarters = pde.rannacher_steps;  // pending after terminal condition

    auto next_decision = decisions.rbegin();
    for (int i = grid.steps - 1; i >= 0; --i) {
        for (int s = 0; s < pde.steps_per_interval; ++s) {
            if (implicit_quarters > 0) {
                for (int k = 0; k < implicit_quarters; ++k)
                    step(sub_dt / implicit_quarters, 1.0);
                implicit_quarters = 0;
            } else {
                step(sub_dt, 0.5);
            }
        }
        if (next_decision != decisions.rend() && *next_decision == i) {
            if (berm != nullptr) {
                const double w = berm->weights[0];
                for (int j = 0; j < nodes; ++j)
                    v[j] = std::max(v[j], std::max(w * level[j] - berm->strike, 0.0));
            } else if (cyn != nullptr) {
                const std::size_t pos = static_cast<std::size_t>(
                    std::find(cyn->schedule_indices.begin(), cyn->schedule_indices.end(), i) -
                    cyn->schedule_indices.begin());
                for (int j = 0; j < nodes; ++j) {
                    const double p = level[j] / cyn->initial_spots[0];
                    v[j] = std::min(v[j], cyn->notional);
                    v[j] += cyn->notional * cyn->coupon_rates[pos] *
                            heaviside(p - cyn->coupon_barriers[pos]);
                }
            }
            implicit_quarters = pde.rannacher_steps;
            ++next_decision;
        }
    }

    // Linear interpolation at the spot (the centered grid puts it on a node).
    const double x_spot = std::log(spot);
    const int j0 = std::min(static_cast<int>((x_spot - x_min) / dx), nodes - 2);
    const double w1 = (x_spot - (x_min + j0 * dx)) / dx;
    return (1.0 - w1) * v[j0] + w1 * v[j0 + 1];
}

}  // namespace fbsde
