#pragma once

#include <Eigen/Dense>
#include <string>
#include <variant>
#include <vector>

namespace fbsde {

struct EuropeanBasketCall {
    std::vector<double> weights;
    double strike = 0.0;
};

struct BermudanBasketCall {
    std::vector<double> weights;
    double strike = 0.0;
    std::vector<int> exercise_indices;  // grid indices, strictly increasing, last == N
};

// Worst-of callable yield note. Barriers and put strike are fractions of the
// initial worst-of performance; coupons are per unit of notional.
struct CallableYieldNote {
    double notional = 1.0;
    std::vector<double> coupon_rates;     // r_i, one per schedule date
    std::vector<double> coupon_barriers;  // B_i, one per schedule date
    double knockin_barrier = 0.0;         // B, observed at expiry
    double put_strike = 0.0;              // K, fraction
    std::vector<int> schedule_indices;    // strictly increasing, last == N
    std::vector<double> initial_spots;    // X0^j used for performance
};

using ContractSpec = std::variant<EuropeanBasketCall, BermudanBasketCall, CallableYieldNote>;

enum class Optionality { holder, issuer, none };

struct EventCashflow {
    double coupon = 0.0;      // paid at the event whether or not it is called
    double call_value = 0.0;  // received on exercise/call
    Optionality holder_optionality = Optionality::none;
};

int contract_dim(const ContractSpec& contract);
std::string contract_label(const ContractSpec& contract);
// True for the contract kinds that carry an exercise/call schedule.
bool has_early_exercise(const ContractSpec& contract);
// Event indices strictly before maturity, where a call/exercise decision is
// made. At index == steps the terminal payoff already settles the contract.
std::vector<int> decision_indices(const ContractSpec& contract, int steps);
void validate_contract(const ContractSpec& contract, int dim, int steps);

// Theta(x): 1 for x >= 0, 0 otherwise. Barriers are inclusive.
inline double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

// Worst-of performance min_j levels[j] / initial_spots[j].
double performance(const Eigen::VectorXd& initial_spots, const Eigen::VectorXd& levels);

double terminal_payoff(const ContractSpec& contract, const Eigen::VectorXd& levels);

// Cashflow at an intermediate event date (event_index < N). Throws
// EventNotInSchedule if the index is not a scheduled event of the contract.
EventCashflow event_cashflow(const ContractSpec& contract, int event_index,
                             const Eigen::VectorXd& levels);

}  // namespace fbsde
