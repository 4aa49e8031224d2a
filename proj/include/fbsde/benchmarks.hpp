#pragma once

#include <cstdint>

#include "fbsde/contracts.hpp"
#include "fbsde/market.hpp"

namespace fbsde {

// Closed form with continuous dividend yield:
// e^{-qT} S N(d1) - e^{-rT} K N(d2).
double black_scholes_call(double spot, double strike, double rate, double dividend, double vol,
                          double maturity);
// dPrice/dSpot = e^{-qT} N(d1).
double black_scholes_delta(double spot, double strike, double rate, double dividend, double vol,
                           double maturity);

struct McResult {
    double price = 0.0;
    double standard_error = 0.0;
};

// Classical least-square Monte Carlo, cashflow-timing formulation: realized
// discounted cashflows are the regression targets, decisions follow the
// holder/issuer comparison rule. European contracts reduce to plain
// discounted-payoff MC. Streams paths in chunks, keeping only the per-event
// scalar statistic, so memory is O(M x events).
McResult lsq_monte_carlo(const MarketConfig& market, const TimeGrid& grid,
                         const ContractSpec& contract, long num_paths, std::uint64_t seed);

struct PdeGrid1D {
    int num_nodes = 801;            // log-price nodes, odd so the spot is a node
    int steps_per_interval = 2;     // time substeps per grid interval
    double half_width_stds = 6.0;   // domain half-width in sigma sqrt(T)
    int rannacher_steps = 4;        // fully implicit quarter-steps after each event
};

// Crank-Nicolson in log-price for a single underlier, backward from the
// terminal payoff, applying exercise / call / coupon events pointwise.
// Rannacher substeps damp the oscillations seeded by discontinuous payoffs.
// Throws SpotOutsideGrid / ContractNotSupported on invalid setups.
double crank_nicolson_1d(const MarketConfig& market, const TimeGrid& grid,
                         const ContractSpec& contract, const PdeGrid1D& pde = {});

}  // namespace fbsde
