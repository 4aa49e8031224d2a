#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fbsde/benchmarks.hpp"
#include "fbsde/contracts.hpp"
#include "fbsde/market.hpp"
#include "fbsde/solvers.hpp"

namespace fbsde {

enum class Method { black_scholes, pde_1d, lsq_mc, forward_dnn, lsq_backward_dnn };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct ExperimentConfig {
    MarketConfig market;
    TimeGrid grid;
    ContractSpec contract;
    Method method = Method::lsq_backward_dnn;
    TrainingProtocol protocol;
    long mc_paths = 1000000;
    PdeGrid1D pde;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    std::string run_id;

    // Throws ConfigError with a field-level message (e.g. forward solver
    // paired with an early-exercise contract, PDE with d > 1).
    void validate() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

struct ReportRecord {
    std::string method;
    std::string contract;
    int dims = 0;
    double price = 0.0;
    double dispersion = 0.0;  // std dev for DNN methods, standard error for MC
    std::optional<double> rel_diff_vs_reference;
    double wall_clock_s = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string history_path;  // convergence CSV for DNN methods, else empty
    bool reference_only = false;  // row quoted from the comparison source, not computed
};

// Prices one configuration; writes the convergence CSV for DNN methods.
ReportRecord run_price(const ExperimentConfig& config);

struct ExperimentOverrides {
    std::vector<int> dims;              // empty = experiment defaults
    std::string preset;                 // "full" | "efficiency" | ""
    int jobs = 1;
    std::optional<long> mc_paths;
    std::optional<std::uint64_t> seed;
    std::string output_dir = "out";
};

// Reproduces one of the published comparison tables; emits one record per
// table cell that is computable here plus reference-only rows for the rest.
std::vector<ReportRecord> run_experiment(const std::string& name,
                                         const ExperimentOverrides& overrides = {});

enum class ReportFormat { csv, json_lines };

// CSV columns: method, contract, dims, price, dispersion,
// rel_diff_vs_reference, wall_clock_s, seed. Throws ConfigError on an empty
// record set (no file written).
void emit_report(const std::vector<ReportRecord>& records, ReportFormat format,
                 const std::string& path);

std::string render_comparison_table(const std::vector<ReportRecord>& records);

// Quick property suite (exit code 0 on success). Prints one line per check.
int run_selftest();

// --- published reference data used for the rel-diff columns -----------------

// Market of Table-style test assets; dims beyond 10 repeat the first ten.
MarketConfig reference_market(int dims);
ContractSpec reference_european(int dims);
ContractSpec reference_bermudan(int dims, const TimeGrid& grid);
ContractSpec reference_cyn(int dims, const TimeGrid& grid);
TimeGrid reference_grid(const ContractSpec* contract = nullptr);

// Reference value from the comparison tables for (table, method, dims).
std::optional<double> paper_reference(const std::string& table, Method method, int dims);

std::string config_hash(const nlohmann::json& canonical);

}  // namespace fbsde
