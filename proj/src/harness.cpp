#include "fbsde/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fbsde/errors.hpp"
#include "fbsde/neural.hpp"
#include "fbsde/regression.hpp"
#include "fbsde/rng.hpp"

namespace fbsde {

using nlohmann::json;

std::string method_name(Method m) {
    switch (m) {
        case Method::black_scholes: return "black_scholes";
        case Method::pde_1d: return "pde_1d";
        case Method::lsq_mc: return "lsq_mc";
        case Method::forward_dnn: return "forward_dnn";
        case Method::lsq_backward_dnn: return "lsq_backward_dnn";
    }
    throw ConfigError("method: unknown enum value");
}

Method method_from_name(const std::string& name) {
    if (name == "black_scholes") return Method::black_scholes;
    if (name == "pde_1d") return Method::pde_1d;
    if (name == "lsq_mc") return Method::lsq_mc;
    if (name == "forward_dnn") return Method::forward_dnn;
    if (name == "lsq_backward_dnn") return Method::lsq_backward_dnn;
    throw ConfigError("method: unknown method '" + name + "'");
}

namespace {

// json access with field-path error messages
template <typename T>
T require(const json& j, const std::string& path, const std::string& key) {
    if (!j.contains(key)) throw ConfigError(path + key + ": missing required field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + key + ": wrong type");
    }
}

template <typename T>
T optional_field(const json& j, const std::string& path, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + key + ": wrong type");
    }
}

std::vector<int> indices_from_times(const std::vector<double>& times, const TimeGrid& grid,
                                    const std::string& field) {
    std::vector<int> indices;
    for (double t : times) {
        const double exact = t / grid.maturity * grid.steps;
        const int idx = static_cast<int>(std::lround(exact));
        if (std::abs(exact - idx) > 1e-9)
            throw ConfigError(field + ": time " + std::to_string(t) +
                              " does not fall on the grid");
        indices.push_back(idx);
    }
    return indices;
}

MarketConfig parse_market(const json& j) {
    MarketConfig market;
    market.rate = require<double>(j, "market.", "rate");
    const json assets = require<json>(j, "market.", "assets");
    if (!assets.is_array() || assets.empty())
        throw ConfigError("market.assets: must be a non-empty array");
    for (std::size_t i = 0; i < assets.size(); ++i) {
        const std::string path = "market.assets[" + std::to_string(i) + "].";
        Asset a;
        a.spot = require<double>(assets[i], path, "spot");
        a.dividend = optional_field<double>(assets[i], path, "dividend", 0.0);
        a.vol = require<double>(assets[i], path, "vol");
        market.assets.push_back(a);
    }
    const int d = market.dim();
    const json corr = j.contains("correlation") ? j.at("correlation") : json(0.0);
    if (corr.is_number()) {
        const double rho = corr.get<double>();
        market.correlation = Eigen::MatrixXd::Constant(d, d, rho);
        market.correlation.diagonal().setOnes();
    } else if (corr.is_array()) {
        market.correlation.resize(d, d);
        if (static_cast<int>(corr.size()) != d)
            throw ConfigError("market.correlation: must be d x d");
        for (int r = 0; r < d; ++r) {
            if (static_cast<int>(corr[r].size()) != d)
                throw ConfigError("market.correlation: must be d x d");
            for (int c = 0; c < d; ++c) market.correlation(r, c) = corr[r][c].get<double>();
        }
    } else {
        throw ConfigError("market.correlation: must be a number or a matrix");
    }
    return market;
}

ContractSpec parse_contract(const json& j, const MarketConfig& market, TimeGrid& grid) {
    const std::string type = require<std::string>(j, "contract.", "type");
    const int d = market.dim();

    std::vector<double> weights =
        optional_field<std::vector<double>>(j, "contract.", "weights",
                                            std::vector<double>(d, 1.0 / d));
    if (static_cast<int>(weights.size()) != d)
        throw ConfigError("contract.weights: length must match market.assets");

    double atm_strike = 0.0;
    for (int a = 0; a < d; ++a) atm_strike += weights[a] * market.assets[a].spot;

    const auto schedule = [&](const char* times_key, const char* idx_key,
                              const std::string& field) {
        if (j.contains(idx_key)) return require<std::vector<int>>(j, "contract.", idx_key);
        if (j.contains(times_key))
            return indices_from_times(require<std::vector<double>>(j, "contract.", times_key),
                                      grid, field);
        throw ConfigError(field + ": required (as times or grid indices)");
    };

    ContractSpec contract;
    if (type == "european_basket_call") {
        EuropeanBasketCall c;
        c.weights = weights;
        c.strike = optional_field<double>(j, "contract.", "strike", atm_strike);
        contract = c;
    } else if (type == "bermudan_basket_call") {
        BermudanBasketCall c;
        c.weights = weights;
        c.strike = optional_field<double>(j, "contract.", "strike", atm_strike);
        c.exercise_indices =
            schedule("exercise_times", "exercise_indices", "contract.exercise_times");
        contract = c;
    } else if (type == "cyn") {
        CallableYieldNote c;
        c.notional = optional_field<double>(j, "contract.", "notional", 1.0);
        c.schedule_indices = schedule("schedule_times", "schedule_indices",
                                      "contract.schedule_times");
        const auto n_dates = c.schedule_indices.size();
        if (j.contains("coupon_rates"))
            c.coupon_rates = require<std::vector<double>>(j, "contract.", "coupon_rates");
        else
            c.coupon_rates.assign(n_dates, require<double>(j, "contract.", "coupon_rate"));
        if (j.contains("coupon_barriers"))
            c.coupon_barriers = require<std::vector<double>>(j, "contract.", "coupon_barriers");
        else
            c.coupon_barriers.assign(n_dates, require<double>(j, "contract.", "coupon_barrier"));
        c.knockin_barrier = require<double>(j, "contract.", "knockin_barrier");
        c.put_strike = require<double>(j, "contract.", "put_strike");
        c.initial_spots = optional_field<std::vector<double>>(j, "contract.", "initial_spots", {});
        if (c.initial_spots.empty())
            for (const auto& a : market.assets) c.initial_spots.push_back(a.spot);
        contract = c;
    } else {
        throw ConfigError("contract.type: unknown type '" + type + "'");
    }

    // Grid event indices mirror the contract schedule plus maturity.
    grid.event_indices.clear();
    for (int idx : decision_indices(contract, grid.steps)) grid.event_indices.push_back(idx);
    grid.event_indices.push_back(grid.steps);
    return contract;
}

TrainingProtocol parse_protocol(const json& root, std::uint64_t seed) {
    const json j = root.contains("protocol") ? root.at("protocol") : json::object();
    const std::string preset = optional_field<std::string>(j, "protocol.", "preset", "full");
    TrainingProtocol p;
    if (preset == "full")
        p = full_protocol(seed);
    else if (preset == "efficiency")
        p = efficiency_protocol(seed);
    else
        throw ConfigError("protocol.preset: must be 'full' or 'efficiency'");
    p.iterations = optional_field<int>(j, "protocol.", "iterations", p.iterations);
    p.validate_every = optional_field<int>(j, "protocol.", "validate_every", p.validate_every);
    p.select_count = optional_field<int>(j, "protocol.", "select_count", p.select_count);
    p.batch_size = optional_field<int>(j, "protocol.", "batch_size", p.batch_size);
    p.learning_rate = optional_field<double>(j, "protocol.", "learning_rate", p.learning_rate);
    const std::string act = optional_field<std::string>(j, "protocol.", "activation", "tanh");
    if (act == "tanh")
        p.activation = Activation::tanh;
    else if (act == "relu")
        p.activation = Activation::relu;
    else
        throw ConfigError("protocol.activation: must be 'tanh' or 'relu'");
    return p;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig config;
    config.market = parse_market(require<json>(j, "", "market"));

    const json grid_json = require<json>(j, "", "grid");
    config.grid.maturity = require<double>(grid_json, "grid.", "maturity");
    config.grid.steps = require<int>(grid_json, "grid.", "steps");

    config.contract = parse_contract(require<json>(j, "", "contract"), config.market, config.grid);
    config.method = method_from_name(require<std::string>(j, "", "method"));
    config.seed = optional_field<std::uint64_t>(j, "", "seed", 1);
    config.protocol = parse_protocol(j, config.seed);
    config.mc_paths = optional_field<long>(j, "", "mc_paths", 1000000L);

    if (j.contains("pde")) {
        const json& p = j.at("pde");
        config.pde.num_nodes = optional_field<int>(p, "pde.", "num_nodes", config.pde.num_nodes);
        config.pde.steps_per_interval =
            optional_field<int>(p, "pde.", "steps_per_interval", config.pde.steps_per_interval);
        config.pde.half_width_stds =
            optional_field<double>(p, "pde.", "half_width_stds", config.pde.half_width_stds);
        config.pde.rannacher_steps =
            optional_field<int>(p, "pde.", "rannacher_steps", config.pde.rannacher_steps);
    }

    if (j.contains("output")) {
        const json& o = j.at("output");
        config.output_dir = optional_field<std::string>(o, "output.", "dir", "out");
        config.run_id = optional_field<std::string>(o, "output.", "run_id", "");
    }
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

void ExperimentConfig::validate() const {
    market.validate();
    grid.validate();
    validate_contract(contract, market.dim(), grid.steps);

    if (method == Method::forward_dnn && has_early_exercise(contract))
        throw ContractNotSupported(
            "method: forward_dnn cannot price early-exercise contracts; use lsq_backward_dnn");
    if (method == Method::pde_1d && market.dim() != 1)
        throw ConfigError("method: pde_1d supports a single underlier only");
    if (method == Method::black_scholes &&
        (market.dim() != 1 || !std::holds_alternative<EuropeanBasketCall>(contract)))
        throw ConfigError("method: black_scholes supports only the 1D European call");

    if (method == Method::forward_dnn || method == Method::lsq_backward_dnn) {
        if (protocol.iterations <= 0 || protocol.validate_every <= 0)
            throw ConfigError("protocol: iterations and validate_every must be > 0");
        if (protocol.iterations % protocol.validate_every != 0)
            throw ConfigError("protocol.validate_every: must divide iterations");
        const int snapshots = protocol.iterations / protocol.validate_every;
        if (protocol.select_count <= 0 || protocol.select_count > snapshots)
            throw ConfigError("protocol.select_count: must lie in [1, iterations/validate_every]");
        if (protocol.batch_size < 2) throw ConfigError("protocol.batch_size: must be >= 2");
    }
    if (method == Method::lsq_mc && mc_paths < 2)
        throw ConfigError("mc_paths: must be >= 2");
}

namespace {

json config_to_json(const ExperimentConfig& config) {
    json j;
    j["method"] = method_name(config.method);
    j["seed"] = config.seed;
    j["mc_paths"] = config.mc_paths;
    j["market"]["rate"] = config.market.rate;
    for (const auto& a : config.market.assets)
        j["market"]["assets"].push_back({{"spot", a.spot}, {"dividend", a.dividend}, {"vol", a.vol}});
    for (int r = 0; r < config.market.dim(); ++r) {
        std::vector<double> row(config.market.dim());
        for (int c = 0; c < config.market.dim(); ++c) row[c] = config.market.correlation(r, c);
        j["market"]["correlation"].push_back(row);
    }
    j["grid"] = {{"maturity", config.grid.maturity}, {"steps", config.grid.steps}};
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, EuropeanBasketCall>) {
                j["contract"] = {{"type", "european_basket_call"},
                                 {"weights", c.weights},
                                 {"strike", c.strike}};
            } else if constexpr (std::is_same_v<T, BermudanBasketCall>) {
                j["contract"] = {{"type", "bermudan_basket_call"},
                                 {"weights", c.weights},
                                 {"strike", c.strike},
                                 {"exercise_indices", c.exercise_indices}};
            } else {
                j["contract"] = {{"type", "cyn"},
                                 {"notional", c.notional},
                                 {"coupon_rates", c.coupon_rates},
                                 {"coupon_barriers", c.coupon_barriers},
                                 {"knockin_barrier", c.knockin_barrier},
                                 {"put_strike", c.put_strike},
                                 {"schedule_indices", c.schedule_indices},
                                 {"initial_spots", c.initial_spots}};
            }
        },
        config.contract);
    j["protocol"] = {{"iterations", config.protocol.iterations},
                     {"validate_every", config.protocol.validate_every},
                     {"select_count", config.protocol.select_count},
                     {"batch_size", config.protocol.batch_size},
                     {"learning_rate", config.protocol.learning_rate},
                     {"activation", config.protocol.activation == Activation::tanh ? "tanh" : "relu"}};
    j["pde"] = {{"num_nodes", config.pde.num_nodes},
                {"steps_per_interval", config.pde.steps_per_interval},
                {"half_width_stds", config.pde.half_width_stds},
                {"rannacher_steps", config.pde.rannacher_steps}};
    return j;
}

std::string default_run_id(const ExperimentConfig& config) {
    std::ostringstream id;
    id << method_name(config.method) << "-" << contract_label(config.contract) << "-s"
       << config.seed;
    return id.str();
}

void write_convergence_csv(const std::string& path, const SolverReport& report,
                           int validate_every) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write convergence file: " + path);
    out << "iteration,training_loss,validation_loss,validation_price\n";
    std::size_t v = 0;
    for (std::size_t it = 1; it <= report.loss_history.size(); ++it) {
        out << it << "," << report.loss_history[it - 1];
        if (v < report.validation_history.size() &&
            report.validation_history[v].iteration == static_cast<int>(it)) {
            out << "," << report.validation_history[v].loss << ","
                << report.validation_history[v].price;
            ++v;
        } else {
            out << ",,";
        }
        out << "\n";
    }
    (void)validate_every;
}

}  // namespace

std::string config_hash(const json& canonical) {
    // FNV-1a over the canonical (sorted-key) dump
    const std::string dump = canonical.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

ReportRecord run_price(const ExperimentConfig& config) {
    config.validate();

    ReportRecord record;
    record.method = method_name(config.method);
    record.contract = contract_label(config.contract);
    record.dims = config.market.dim();
    record.seed = config.seed;
    record.config_hash = config_hash(config_to_json(config));

    const auto start = std::chrono::steady_clock::now();
    switch (config.method) {
        case Method::black_scholes: {
            const auto& c = std::get<EuropeanBasketCall>(config.contract);
            const Asset& a = config.market.assets[0];
            record.price = black_scholes_call(c.weights[0] * a.spot, c.strike, config.market.rate,
                                              a.dividend, a.vol, config.grid.maturity);
            break;
        }
        case Method::pde_1d:
            record.price =
                crank_nicolson_1d(config.market, config.grid, config.contract, config.pde);
            break;
        case Method::lsq_mc: {
            const McResult mc = lsq_monte_carlo(config.market, config.grid, config.contract,
                                                config.mc_paths, config.seed);
            record.price = mc.price;
            record.dispersion = mc.standard_error;
            break;
        }
        case Method::forward_dnn:
        case Method::lsq_backward_dnn: {
            TrainingProtocol protocol = config.protocol;
            protocol.seed = config.seed;
            const SolverReport report =
                config.method == Method::forward_dnn
                    ? forward_dnn_solve(config.market, config.grid, config.contract, protocol)
                    : lsq_backward_dnn_solve(config.market, config.grid, config.contract,
                                             protocol);
            record.price = report.price;
            record.dispersion = report.dispersion;

            std::filesystem::create_directories(config.output_dir);
            const std::string run_id =
                config.run_id.empty() ? default_run_id(config) : config.run_id;
            record.history_path =
                (std::filesystem::path(config.output_dir) / (run_id + "-convergence.csv"))
                    .string();
            write_convergence_csv(record.history_path, report, protocol.validate_every);
            break;
        }
    }
    record.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!std::isfinite(record.price))
        throw NumericalError("run_price: non-finite price for " + record.method);
    return record;
}

namespace {

std::string csv_field(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream out;
    out << *v;
    return out.str();
}

}  // namespace

void emit_report(const std::vector<ReportRecord>& records, ReportFormat format,
                 const std::string& path) {
    if (records.empty()) throw ConfigError("emit_report: empty record set");
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
    std::ofstream out(path);
    if (!out) throw ConfigError("emit_report: cannot write " + path);
    out.precision(10);

    if (format == ReportFormat::csv) {
        out << "method,contract,dims,price,dispersion,rel_diff_vs_reference,wall_clock_s,seed\n";
        for (const auto& r : records)
            out << r.method << "," << r.contract << "," << r.dims << "," << r.price << ","
                << r.dispersion << "," << csv_field(r.rel_diff_vs_reference) << ","
                << r.wall_clock_s << "," << r.seed << "\n";
    } else {
        for (const auto& r : records) {
            json j = {{"method", r.method},
                      {"contract", r.contract},
                      {"dims", r.dims},
                      {"price", r.price},
                      {"dispersion", r.dispersion},
                      {"wall_clock_s", r.wall_clock_s},
                      {"seed", r.seed},
                      {"config_hash", r.config_hash},
                      {"reference_only", r.reference_only}};
            if (r.rel_diff_vs_reference) j["rel_diff_vs_reference"] = *r.rel_diff_vs_reference;
            if (!r.history_path.empty()) j["history"] = r.history_path;
            out << j.dump() << "\n";
        }
    }
}

std::string render_comparison_table(const std::vector<ReportRecord>& records) {
    std::ostringstream out;
    out << "method                contract            dims      price  dispersion   rel_diff\n";
    for (const auto& r : records) {
        char line[160];
        std::string rel = r.rel_diff_vs_reference
                              ? [&] {
                                    char b[32];
                                    std::snprintf(b, sizeof(b), "%+.2f%%",
                                                  *r.rel_diff_vs_reference * 100.0);
                                    return std::string(b);
                                }()
                              : std::string("-");
        std::snprintf(line, sizeof(line), "%-21s %-19s %4d %10.4f %11.5f %10s%s\n",
                      r.method.c_str(), r.contract.c_str(), r.dims, r.price, r.dispersion,
                      rel.c_str(), r.reference_only ? "  (reference)" : "");
        out << line;
    }
    return out.str();
}

}  // namespace fbsde
