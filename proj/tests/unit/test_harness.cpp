#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fbsde/errors.hpp"
#include "fbsde/harness.hpp"

using namespace fbsde;
using nlohmann::json;

namespace {

json base_config() {
    return json::parse(R"({
        "market": {
            "rate": 0.01,
            "assets": [{"spot": 100.0, "dividend": 0.03, "vol": 0.2}],
            "correlation": 0.3
        },
        "grid": {"maturity": 1.0, "steps": 100},
        "contract": {"type": "european_basket_call", "strike": 100.0},
        "method": "black_scholes",
        "seed": 7
    })");
}

std::string temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "fbsde-harness-test";
    std::filesystem::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("config parses and black-scholes run matches the reference") {
    const ExperimentConfig config = parse_config(base_config());
    CHECK(config.market.dim() == 1);
    CHECK(config.grid.steps == 100);
    const ReportRecord record = run_price(config);
    CHECK(std::abs(record.price - 6.8669) < 1e-4);
    CHECK(record.method == "black_scholes");
    CHECK(record.dims == 1);
    CHECK(!record.config_hash.empty());
}

TEST_CASE("field-level messages on missing or bad config entries") {
    json j = base_config();
    j["market"].erase("rate");
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("market.rate"), ConfigError);

    j = base_config();
    j["contract"]["type"] = "swaption";
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("contract.type"), ConfigError);

    j = base_config();
    j["method"] = "pde_2d";
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["grid"]["steps"] = "many";
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("grid.steps"), ConfigError);
}

TEST_CASE("exercise times must fall on the grid") {
    json j = base_config();
    j["contract"]["type"] = "bermudan_basket_call";
    j["contract"]["exercise_times"] = {0.25, 0.5, 0.75, 1.0};
    j["method"] = "lsq_mc";
    const ExperimentConfig config = parse_config(j);
    CHECK(std::get<BermudanBasketCall>(config.contract).exercise_indices ==
          std::vector<int>{25, 50, 75, 100});

    j["contract"]["exercise_times"] = {0.333, 1.0};
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("does not fall on the grid"),
                         ConfigError);
}

TEST_CASE("method/contract compatibility is enforced") {
    json j = base_config();
    j["contract"]["type"] = "bermudan_basket_call";
    j["contract"]["exercise_indices"] = {25, 50, 75, 100};
    j["method"] = "forward_dnn";
    const ExperimentConfig config = parse_config(j);
    CHECK_THROWS_AS(config.validate(), ContractNotSupported);

    json j2 = base_config();
    j2["market"]["assets"].push_back({{"spot", 150.0}, {"dividend", 0.02}, {"vol", 0.3}});
    j2["method"] = "pde_1d";
    CHECK_THROWS_AS(parse_config(j2).validate(), ConfigError);
}

TEST_CASE("protocol invariants are validated") {
    json j = base_config();
    j["method"] = "lsq_backward_dnn";
    j["protocol"] = {{"iterations", 500}, {"validate_every", 300}, {"select_count", 10}};
    CHECK_THROWS_AS(parse_config(j).validate(), ConfigError);
    j["protocol"] = {{"iterations", 500}, {"validate_every", 10}, {"select_count", 100}};
    CHECK_THROWS_AS(parse_config(j).validate(), ConfigError);
    j["protocol"] = {{"preset", "efficiency"}};
    CHECK_NOTHROW(parse_config(j).validate());
}

TEST_CASE("config hash is canonical") {
    const json a = base_config();
    json b = base_config();
    CHECK(config_hash(a) == config_hash(b));
    b["seed"] = 8;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("cyn config expands scalar coupon terms") {
    json j = base_config();
    j["contract"] = {{"type", "cyn"},         {"coupon_rate", 0.05},
                     {"coupon_barrier", 0.7}, {"knockin_barrier", 0.5},
                     {"put_strike", 1.0},     {"schedule_times", {0.25, 0.5, 0.75, 1.0}}};
    j["method"] = "lsq_mc";
    const ExperimentConfig config = parse_config(j);
    const auto& note = std::get<CallableYieldNote>(config.contract);
    CHECK(note.coupon_rates == std::vector<double>(4, 0.05));
    CHECK(note.coupon_barriers == std::vector<double>(4, 0.7));
    CHECK(note.initial_spots == std::vector<double>{100.0});
    CHECK(note.schedule_indices == std::vector<int>{25, 50, 75, 100});
}

TEST_CASE("emit_report writes the documented csv columns and round-trips") {
    ReportRecord r;
    r.method = "lsq_mc";
    r.contract = "bermudan_call_2d";
    r.dims = 2;
    r.price = 9.9535;
    r.dispersion = 0.0123;
    r.rel_diff_vs_reference = 0.0021;
    r.wall_clock_s = 12.5;
    r.seed = 99;
    const std::string dir = temp_dir();
    const std::string csv_path = dir + "/report.csv";
    emit_report({r}, ReportFormat::csv, csv_path);

    std::ifstream in(csv_path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header ==
          "method,contract,dims,price,dispersion,rel_diff_vs_reference,wall_clock_s,seed");
    std::stringstream ss(row);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() == 8);
    CHECK(fields[0] == "lsq_mc");
    CHECK(fields[1] == "bermudan_call_2d");
    CHECK(std::stoi(fields[2]) == 2);
    CHECK(std::stod(fields[3]) == doctest::Approx(9.9535).epsilon(1e-12));
    CHECK(std::stod(fields[4]) == doctest::Approx(0.0123).epsilon(1e-12));
    CHECK(std::stod(fields[5]) == doctest::Approx(0.0021).epsilon(1e-12));
    CHECK(std::stoull(fields[7]) == 99);

    const std::string jsonl_path = dir + "/report.jsonl";
    emit_report({r}, ReportFormat::json_lines, jsonl_path);
    std::ifstream jin(jsonl_path);
    std::string line;
    std::getline(jin, line);
    const json parsed = json::parse(line);
    CHECK(parsed["price"].get<double>() == doctest::Approx(9.9535));
    CHECK(parsed["method"] == "lsq_mc");
    CHECK(parsed["rel_diff_vs_reference"].get<double>() == doctest::Approx(0.0021));
}

TEST_CASE("emit_report refuses an empty record set") {
    const std::string path = temp_dir() + "/empty.csv";
    std::filesystem::remove(path);
    CHECK_THROWS_AS(emit_report({}, ReportFormat::csv, path), ConfigError);
    CHECK(!std::filesystem::exists(path));
}

TEST_CASE("unknown experiment name raises") {
    CHECK_THROWS_AS(run_experiment("table9"), UnknownExperiment);
}

TEST_CASE("dnn run_price writes a convergence csv") {
    json j = base_config();
    j["method"] = "lsq_backward_dnn";
    j["grid"]["steps"] = 10;
    j["protocol"] = {{"iterations", 20},
                     {"validate_every", 10},
                     {"select_count", 2},
                     {"batch_size", 64}};
    j["output"] = {{"dir", temp_dir()}, {"run_id", "tiny-bdnn"}};
    const ReportRecord record = run_price(parse_config(j));
    CHECK(!record.history_path.empty());
    REQUIRE(std::filesystem::exists(record.history_path));
    std::ifstream in(record.history_path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,training_loss,validation_loss,validation_price");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 20);
}

TEST_CASE("paper reference lookup covers the published cells") {
    CHECK(paper_reference("table2", Method::black_scholes, 1) == doctest::Approx(6.8669));
    CHECK(paper_reference("table3", Method::pde_1d, 2) == doctest::Approx(9.9514));
    CHECK(paper_reference("table7", Method::lsq_backward_dnn, 50) == doctest::Approx(6.7100));
    CHECK(paper_reference("table8", Method::lsq_mc, 50) == doctest::Approx(0.9778));
    CHECK(!paper_reference("table3", Method::pde_1d, 5).has_value());
    CHECK(!paper_reference("table1", Method::lsq_mc, 1).has_value());
}

TEST_CASE("reference market repeats the ten-asset block") {
    const MarketConfig m = reference_market(20);
    CHECK(m.assets[0].spot == 100.0);
    CHECK(m.assets[10].spot == 100.0);
    CHECK(m.assets[4].vol == doctest::Approx(0.15));
    CHECK(m.assets[14].vol == doctest::Approx(0.15));
    CHECK(m.correlation(3, 17) == doctest::Approx(0.3));
    CHECK_NOTHROW(m.validate());
}

TEST_SUITE_END();
