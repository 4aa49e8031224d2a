#include "fbsde/contracts.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fbsde/errors.hpp"

namespace fbsde {

namespace {

double basket_value(const std::vector<double>& weights, const Eigen::VectorXd& levels) {
    double v = 0.0;
    for (int i = 0; i < levels.size(); ++i) v += weights[i] * levels[i];
    return v;
}

const std::vector<int>* schedule_of(const ContractSpec& contract) {
    if (const auto* b = std::get_if<BermudanBasketCall>(&contract)) return &b->exercise_indices;
    if (const auto* c = std::get_if<CallableYieldNote>(&contract)) return &c->schedule_indices;
    return nullptr;
}

}  // namespace

int contract_dim(const ContractSpec& contract) {
    return std::visit(
        [](const auto& c) -> int {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, CallableYieldNote>)
                return static_cast<int>(c.initial_spots.size());
            else
                return static_cast<int>(c.weights.size());
        },
        contract);
}

std::string contract_label(const ContractSpec& contract) {
    const int d = contract_dim(contract);
    std::ostringstream out;
    if (std::holds_alternative<EuropeanBasketCall>(contract))
        out << "european_call_" << d << "d";
    else if (std::holds_alternative<BermudanBasketCall>(contract))
        out << "bermudan_call_" << d << "d";
    else
        out << "cyn_" << d << "d";
    return out.str();
}

bool has_early_exercise(const ContractSpec& contract) {
    return !std::holds_alternative<EuropeanBasketCall>(contract);
}

std::vector<int> decision_indices(const ContractSpec& contract, int steps) {
    std::vector<int> out;
    if (const auto* sched = schedule_of(contract)) {
        for (int idx : *sched)
            if (idx < steps) out.push_back(idx);
    }
    return out;
}

void validate_contract(const ContractSpec& contract, int dim, int steps) {
    if (contract_dim(contract) != dim)
        throw ConfigError("contract: dimension does not match market.assets");
    const auto check_weights = [](const std::vector<double>& w) {
        double sum = 0.0;
        for (double x : w) sum += x;
        if (std::abs(sum - 1.0) > 1e-9)
            throw ConfigError("contract.weights: must sum to 1");
    };
    const auto check_schedule = [steps](const std::vector<int>& sched, const char* field) {
        if (sched.empty()) return;
        int prev = 0;
        for (int idx : sched) {
            if (idx <= 0 || idx > steps)
                throw ConfigError(std::string(field) + ": indices must lie in (0, steps]");
            if (idx <= prev) throw ConfigError(std::string(field) + ": must be strictly increasing");
            prev = idx;
        }
    };
    if (const auto* e = std::get_if<EuropeanBasketCall>(&contract)) {
        check_weights(e->weights);
        if (!(e->strike > 0.0)) throw ConfigError("contract.strike: must be > 0");
    } else if (const auto* b = std::get_if<BermudanBasketCall>(&contract)) {
        check_weights(b->weights);
        if (!(b->strike > 0.0)) throw ConfigError("contract.strike: must be > 0");
        check_schedule(b->exercise_indices, "contract.exercise_indices");
    } else {
        const auto& c = std::get<CallableYieldNote>(contract);
        if (!(c.notional > 0.0)) throw ConfigError("contract.notional: must be > 0");
        if (c.schedule_indices.empty())
            throw ConfigError("contract.schedule_indices: at least the maturity date required");
        check_schedule(c.schedule_indices, "contract.schedule_indices");
        if (c.schedule_indices.back() != steps)
            throw ConfigError("contract.schedule_indices: last index must equal grid.steps");
        if (c.coupon_rates.size() != c.schedule_indices.size())
            throw ConfigError("contract.coupon_rates: one entry per schedule date required");
        if (c.coupon_barriers.size() != c.schedule_indices.size())
            throw ConfigError("contract.coupon_barriers: one entry per schedule date required");
        for (double b : c.coupon_barriers)
            if (!(b > 0.0 && b <= 1.0))
                throw ConfigError("contract.coupon_barriers: entries must lie in (0, 1]");
        if (!(c.knockin_barrier > 0.0 && c.knockin_barrier < 1.0))
            throw ConfigError("contract.knockin_barrier: must lie in (0, 1)");
        if (!(c.put_strike > 0.0 && c.put_strike <= 1.0))
            throw ConfigError("contract.put_strike: must lie in (0, 1]");
        for (double s : c.initial_spots)
            if (!(s > 0.0)) throw ConfigError("contract.initial_spots: must be > 0");
    }
}

double performance(const Eigen::VectorXd& initial_spots, const Eigen::VectorXd& levels) {
    double p = levels[0] / initial_spots[0];
    for (int j = 1; j < levels.size(); ++j) p = std::min(p, levels[j] / initial_spots[j]);
    return p;
}

double terminal_payoff(const ContractSpec& contract, const Eigen::VectorXd& levels) {
    if (const auto* e = std::get_if<EuropeanBasketCall>(&contract))
        return std::max(basket_value(e->weights, levels) - e->strike, 0.0);
    if (const auto* b = std::get_if<BermudanBasketCall>(&contract))
        return std::max(basket_value(b->weights, levels) - b->strike, 0.0);

    const auto& c = std::get<CallableYieldNote>(contract);
    Eigen::VectorXd init = Eigen::Map<const Eigen::VectorXd>(c.initial_spots.data(),
                                                             static_cast<long>(c.initial_spots.size()));
    const double p = performance(init, levels);
    const double coupon = c.coupon_rates.back() * heaviside(p - c.coupon_barriers.back());
    const double knockin = heaviside(c.knockin_barrier - p) * std::max(c.put_strike - p, 0.0);
    return c.notional * (1.0 + coupon - knockin);
}

EventCashflow event_cashflow(const ContractSpec& contract, int event_index,
                             const Eigen::VectorXd& levels) {
    EventCashflow flow;
    if (const auto* b = std::get_if<BermudanBasketCall>(&contract)) {
        const auto& sched = b->exercise_indices;
        if (std::find(sched.begin(), sched.end(), event_index) == sched.end())
            throw EventNotInSchedule("event index is not an exercise date");
        flow.coupon = 0.0;
        flow.call_value = std::max(basket_value(b->weights, levels) - b->strike, 0.0);
        flow.holder_optionality = Optionality::holder;
        return flow;
    }
    if (const auto* c = std::get_if<CallableYieldNote>(&contract)) {
        const auto& sched = c->schedule_indices;
        const auto it = std::find(sched.begin(), sched.end(), event_index);
        if (it == sched.end()) throw EventNotInSchedule("event index is not a schedule date");
        const auto k = static_cast<std::size_t>(it - sched.begin());
        Eigen::VectorXd init = Eigen::Map<const Eigen::VectorXd>(
            c->initial_spots.data(), static_cast<long>(c->initial_spots.size()));
        const double p = performance(init, levels);
        flow.coupon = c->notional * c->coupon_rates[k] * heaviside(p - c->coupon_barriers[k]);
        flow.call_value = c->notional;
        flow.holder_optionality = Optionality::issuer;
        return flow;
    }
    throw EventNotInSchedule("European contracts have no intermediate events");
}

}  // namespace fbsde
