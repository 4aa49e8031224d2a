#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbsde/errors.hpp"
#include "fbsde/harness.hpp"

namespace {

int dispatch(int argc, char** argv) {
    CLI::App app{"FBSDE derivative pricing: forward/backward DNN solvers with PDE and "
                 "least-square Monte Carlo benchmarks"};
    app.require_subcommand(1);

    // price
    std::string config_path, method_override, out_override;
    std::uint64_t seed_override = 0;
    bool has_seed = false;
    auto* price = app.add_subcommand("price", "Price one contract from a config file");
    price->add_option("--config", config_path, "JSON config file")->required();
    price->add_option("--method", method_override,
                      "Override: black_scholes|pde_1d|lsq_mc|forward_dnn|lsq_backward_dnn");
    price->add_option("--seed", seed_override, "Override the RNG seed")
        ->each([&](const std::string&) { has_seed = true; });
    price->add_option("--out", out_override, "Override the output directory");

    // experiment
    std::string experiment_name, preset = "";
    std::vector<int> dims;
    int jobs = 1;
    long mc_paths = 0;
    std::uint64_t exp_seed = 0;
    bool has_exp_seed = false;
    std::string exp_out = "out";
    auto* experiment =
        app.add_subcommand("experiment", "Reproduce a published comparison table");
    experiment->add_option("name", experiment_name, "table2|table3|table5|table6|table7|table8")
        ->required();
    experiment->add_option("--dims", dims, "Restrict to these dimensions");
    experiment->add_option("--preset", preset, "Training preset: full|efficiency");
    experiment->add_option("--jobs", jobs, "Independent cells to run concurrently");
    experiment->add_option("--mc-paths", mc_paths, "Monte Carlo paths per benchmark cell");
    experiment->add_option("--seed", exp_seed, "Base seed")
        ->each([&](const std::string&) { has_exp_seed = true; });
    experiment->add_option("--out", exp_out, "Output directory");

    auto* selftest = app.add_subcommand("selftest", "Run the built-in property suite");

    CLI11_PARSE(app, argc, argv);

    if (price->parsed()) {
        fbsde::ExperimentConfig config = fbsde::load_config(config_path);
        if (!method_override.empty()) config.method = fbsde::method_from_name(method_override);
        if (has_seed) {
            config.seed = seed_override;
            config.protocol.seed = seed_override;
        }
        if (!out_override.empty()) config.output_dir = out_override;
        const fbsde::ReportRecord record = fbsde::run_price(config);
        std::cout << fbsde::render_comparison_table({record});
        std::filesystem::create_directories(config.output_dir);
        const std::string stem =
            config.run_id.empty() ? record.method + "-" + record.contract : config.run_id;
        fbsde::emit_report({record}, fbsde::ReportFormat::csv,
                           config.output_dir + "/" + stem + "-report.csv");
        fbsde::emit_report({record}, fbsde::ReportFormat::json_lines,
                           config.output_dir + "/" + stem + "-report.jsonl");
        return 0;
    }

    if (experiment->parsed()) {
        fbsde::ExperimentOverrides overrides;
        overrides.dims = dims;
        overrides.preset = preset;
        overrides.jobs = jobs;
        overrides.output_dir = exp_out;
        if (mc_paths > 0) overrides.mc_paths = mc_paths;
        if (has_exp_seed) overrides.seed = exp_seed;
        const auto records = fbsde::run_experiment(experiment_name, overrides);
        std::cout << fbsde::render_comparison_table(records);
        fbsde::emit_report(records, fbsde::ReportFormat::csv,
                           exp_out + "/" + experiment_name + "-report.csv");
        fbsde::emit_report(records, fbsde::ReportFormat::json_lines,
                           exp_out + "/" + experiment_name + "-report.jsonl");
        return 0;
    }

    if (selftest->parsed()) return fbsde::run_selftest();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const fbsde::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fbsde::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
